#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace thermopipe::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

struct GlobalOptions {
  std::optional<fs::path> config;  // pipeline config document (correct)
  std::optional<fs::path> out;     // report destination; stdout when absent
  std::optional<fs::path> csv;     // optional CSV row destination
  std::uint64_t seed = 0;
  int verbosity = 0;
};

struct SynthArgs {
  fs::path out_dir;
  std::size_t width = 640;
  std::size_t height = 480;
  std::size_t images = 20;
  std::size_t ref_frames = 25;
  double noise = 20.0;
  std::size_t bad_pixels = 0;
  double t_cold = 20.0;
  double t_hot = 40.0;
  double t_check = 30.0;
  double background = 20.0;
  int max_objects = 3;
};

struct CalibrateArgs {
  fs::path cold;
  fs::path hot;
  std::optional<fs::path> check;
  double t_cold = 20.0;
  double t_hot = 40.0;
  std::optional<std::size_t> select;
  fs::path output;
  double dead_response = 2.0;
  double gain_min = 0.2;
  double gain_max = 5.0;
  double max_bad_fraction = 0.05;
};

struct CorrectArgs {
  std::optional<fs::path> calibration;
  fs::path input;
  fs::path output;
  bool write_corrected = false;  // also store 16-bit corrected frames
};

struct DetectorArgs {
  std::vector<std::string> commands;  // external adapters
  std::vector<std::string> stubs;     // stub specs
  std::string strategy = "na";
  double fusion_iou = 0.5;
  long timeout_ms = 30000;
};

struct EvaluateArgs {
  fs::path dataset;
  DetectorArgs detector;
  double conf = 0.25;
  double iou = 0.5;
  bool threshold_grid = false;
  bool eleven_point = false;
};

struct BenchArgs {
  fs::path frames;
  DetectorArgs detector;
  double conf = 0.25;
  std::size_t warmup = 5;
  std::optional<fs::path> thermal;
  std::optional<fs::path> baseline;
  double warn_celsius = 70.0;
  double critical_celsius = 89.0;
};

struct DatasetStatsArgs {
  fs::path dataset;
  std::vector<std::string> classes;
};

using Args = std::variant<SynthArgs, CalibrateArgs, CorrectArgs, EvaluateArgs, BenchArgs, DatasetStatsArgs>;

struct Command {
  std::string name;
  GlobalOptions global;
  Args args;
};

/// Raised by parse_args. exit_code is 0 for --help, 2 for usage errors.
class UsageError : public std::runtime_error {
 public:
  UsageError(const std::string& message, int exit_code) : std::runtime_error(message), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

/// `argv` excludes the program name. Paths come back absolute.
Command parse_args(const std::vector<std::string>& argv);

/// Runs a parsed command; reports go to --out (or `out`), diagnostics to `err`.
int execute(const Command& cmd, std::ostream& out, std::ostream& err);

/// parse_args + execute with exit-code mapping; the body of main().
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace thermopipe::cli
