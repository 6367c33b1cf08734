#pragma once

// Detector contract plus the inference strategies: plain (NA), test-time
// augmentation (TTA) and model ensembling, all fused with per-class NMS.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermopipe/boxes.hpp"
#include "thermopipe/frame.hpp"

namespace thermopipe {

class DetectorError : public std::runtime_error {
 public:
  enum class Kind { spawn, timeout, protocol, validation, input, member };

  DetectorError(Kind kind, const std::string& what, std::string diagnostics = {});

  Kind kind() const { return kind_; }
  /// Captured standard error of an external adapter, if any.
  const std::string& diagnostics() const { return diagnostics_; }

 private:
  Kind kind_;
  std::string diagnostics_;
};

const char* to_string(DetectorError::Kind kind);

/// A view of the input image the detector is asked to process. Scale factors
/// zoom about the top-left corner on a fixed canvas, so box coordinates scale
/// by the same factor and are clipped to the image.
struct Augmentation {
  enum class Kind { identity, hflip, scale };
  Kind kind = Kind::identity;
  double factor = 1.0;

  static Augmentation identity() { return {}; }
  static Augmentation hflip() { return {Kind::hflip, 1.0}; }
  static Augmentation scale(double factor) { return {Kind::scale, factor}; }

  /// Rejects non-invertible views (scale factor <= 0 or non-finite).
  void validate() const;
  std::string name() const;
  bool operator==(const Augmentation&) const = default;
};

/// Maps a box seen in the original image into the augmented view. Returns false
/// when the box falls entirely outside the view.
bool forward_map(const Augmentation& aug, Detection& det);
/// Maps a box found in the augmented view back into original coordinates.
bool inverse_map(const Augmentation& aug, Detection& det);

/// Applies the view to pixels (zero padding outside the source).
RawFrame augment_frame(const Augmentation& aug, const RawFrame& frame);

struct ImageInput {
  std::string id;
  std::filesystem::path path;
  std::vector<GroundTruthBox> truths;  // consumed by the stub detector only
};

class Detector {
 public:
  virtual ~Detector() = default;

  std::vector<Detection> detect(const ImageInput& image, const Augmentation& view, double conf_threshold) {
    ++calls_;
    return do_detect(image, view, conf_threshold);
  }
  std::uint64_t calls() const { return calls_; }
  virtual std::string name() const = 0;

 protected:
  virtual std::vector<Detection> do_detect(const ImageInput& image, const Augmentation& view,
                                           double conf_threshold) = 0;

 private:
  std::uint64_t calls_ = 0;
};

/// Uniform confidence in [low, high].
struct ConfidenceModel {
  double low = 0.9;
  double high = 0.9;
};

struct StubSpec {
  /// When non-empty, detections are looked up by image id instead of derived
  /// from the truths.
  std::map<std::string, std::vector<Detection>> canned;
  double drop_rate = 0.0;
  double jitter = 0.0;  // relative to box size
  ConfidenceModel confidence;
  int max_false_positives = 0;  // per image, uniform in [0, max]
  ConfidenceModel false_positive_confidence{0.05, 0.5};
  int class_count = 6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parses "drop=0.3,jitter=0.05,conf=0.4:0.95,fp=2,fpconf=0.05:0.5,seed=7".
StubSpec parse_stub_spec(const std::string& text);

/// Deterministic test double. Output depends only on (seed, image id, truths,
/// view); the noise does not depend on the view, so a view followed by its
/// inverse reproduces the plain output.
class StubDetector : public Detector {
 public:
  explicit StubDetector(StubSpec spec);
  std::string name() const override { return "stub"; }
  const StubSpec& spec() const { return spec_; }

 protected:
  std::vector<Detection> do_detect(const ImageInput& image, const Augmentation& view,
                                   double conf_threshold) override;

 private:
  StubSpec spec_;
};

std::vector<Detection> stub_detect(const StubSpec& spec, const std::string& image_id,
                                   const std::vector<GroundTruthBox>& truths, double conf_threshold);

struct ExternalSpec {
  std::string command;  // run through /bin/sh -c
  std::filesystem::path working_directory;
  std::chrono::milliseconds timeout{30000};
  int class_count = 6;

  void validate() const;
};

/// Talks to an adapter process over line-delimited JSON on its stdin/stdout:
///   request  {"id": str, "image": abs path, "conf_threshold": num}
///   response {"id": str, "detections": [{"class_id", "cx", "cy", "w", "h", "confidence"}]}
/// One request is in flight at a time. The process is started lazily and
/// restarted after a timeout or crash.
class ExternalDetector : public Detector {
 public:
  explicit ExternalDetector(ExternalSpec spec);
  ~ExternalDetector() override;
  ExternalDetector(const ExternalDetector&) = delete;
  ExternalDetector& operator=(const ExternalDetector&) = delete;

  std::string name() const override { return "external:" + spec_.command; }

  /// Sends one request for the file at `image` as-is.
  std::vector<Detection> detect_path(const std::filesystem::path& image, double conf_threshold);

 protected:
  std::vector<Detection> do_detect(const ImageInput& image, const Augmentation& view,
                                   double conf_threshold) override;

 private:
  class Process;
  ExternalSpec spec_;
  std::unique_ptr<Process> process_;
  std::uint64_t next_id_ = 1;
};

std::vector<Detection> external_detect(ExternalDetector& detector, const std::filesystem::path& image,
                                       double conf_threshold);

/// Per-class greedy NMS: keep the best remaining box, drop same-class boxes with
/// IoU above the threshold. Ties: confidence desc, then smaller cx, then smaller
/// cy. Output is in that order.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold);

inline constexpr double kDefaultFusionIou = 0.5;

std::vector<Detection> infer_na(Detector& detector, const ImageInput& image, double conf_threshold,
                                double fusion_iou = kDefaultFusionIou);

struct TtaConfig {
  /// Identity is always run; it is prepended when missing.
  std::vector<Augmentation> augmentations{Augmentation::identity(), Augmentation::hflip(),
                                          Augmentation::scale(0.83), Augmentation::scale(1.2)};
  double fusion_iou = kDefaultFusionIou;

  /// Validates and returns the augmentation list with identity first.
  std::vector<Augmentation> normalized() const;
};

std::vector<Detection> infer_tta(Detector& detector, const ImageInput& image, double conf_threshold,
                                 const TtaConfig& cfg = {});

struct EnsembleConfig {
  double fusion_iou = kDefaultFusionIou;
};

std::vector<Detection> infer_ensemble(const std::vector<Detector*>& members, const ImageInput& image,
                                      double conf_threshold, const EnsembleConfig& cfg = {});

enum class Strategy { na, tta, ensemble };
Strategy parse_strategy(const std::string& name);
const char* to_string(Strategy strategy);

/// Dispatches one of the strategies. NA and TTA use the first member only.
std::vector<Detection> run_strategy(Strategy strategy, const std::vector<Detector*>& members,
                                    const ImageInput& image, double conf_threshold, double fusion_iou);

}  // namespace thermopipe
