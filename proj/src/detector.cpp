#include "thermopipe/detector.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <sstream>

#include "json.hpp"
#include "thermopipe/eval.hpp"
#include "thermopipe/rng.hpp"

namespace thermopipe {

namespace {

/// Rebuilds centre/size from clipped corners; false when nothing is left.
bool set_from_corners(Detection& det, Corners c) {
  c.x0 = std::clamp(c.x0, 0.0, 1.0);
  c.x1 = std::clamp(c.x1, 0.0, 1.0);
  c.y0 = std::clamp(c.y0, 0.0, 1.0);
  c.y1 = std::clamp(c.y1, 0.0, 1.0);
  if (c.x1 - c.x0 <= 1e-9 || c.y1 - c.y0 <= 1e-9) return false;
  det.cx = (c.x0 + c.x1) / 2;
  det.cy = (c.y0 + c.y1) / 2;
  det.w = c.x1 - c.x0;
  det.h = c.y1 - c.y0;
  return true;
}

bool scale_box(Detection& det, double s) {
  const Corners c = to_corners(det);
  return set_from_corners(det, {c.x0 * s, c.y0 * s, c.x1 * s, c.y1 * s});
}

bool nms_before(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.cx != b.cx) return a.cx < b.cx;
  if (a.cy != b.cy) return a.cy < b.cy;
  if (a.w != b.w) return a.w < b.w;
  if (a.h != b.h) return a.h < b.h;
  return a.class_id < b.class_id;
}

std::pair<double, double> parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const double v = std::stod(text);
    return {v, v};
  }
  return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
}

void check_confidence_model(const ConfidenceModel& m, const char* what) {
  if (!(m.low >= 0 && m.low <= m.high && m.high <= 1)) {
    throw std::invalid_argument(std::string(what) + " range must satisfy 0 <= low <= high <= 1");
  }
}

}  // namespace

DetectorError::DetectorError(Kind kind, const std::string& what, std::string diagnostics)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind),
      diagnostics_(std::move(diagnostics)) {}

const char* to_string(DetectorError::Kind kind) {
  switch (kind) {
    case DetectorError::Kind::spawn: return "spawn";
    case DetectorError::Kind::timeout: return "timeout";
    case DetectorError::Kind::protocol: return "protocol";
    case DetectorError::Kind::validation: return "validation";
    case DetectorError::Kind::input: return "input";
    case DetectorError::Kind::member: return "member";
  }
  return "detector";
}

// ---------------------------------------------------------------------------
// Augmentations

void Augmentation::validate() const {
  if (kind == Kind::scale && !(std::isfinite(factor) && factor > 0)) {
    throw std::invalid_argument("scale augmentation factor must be positive and finite");
  }
}

std::string Augmentation::name() const {
  switch (kind) {
    case Kind::identity: return "identity";
    case Kind::hflip: return "hflip";
    case Kind::scale: {
      std::ostringstream os;
      os << "scale" << factor;
      return os.str();
    }
  }
  return "?";
}

bool forward_map(const Augmentation& aug, Detection& det) {
  switch (aug.kind) {
    case Augmentation::Kind::identity: return true;
    case Augmentation::Kind::hflip: det.cx = 1.0 - det.cx; return true;
    case Augmentation::Kind::scale: return scale_box(det, aug.factor);
  }
  return false;
}

bool inverse_map(const Augmentation& aug, Detection& det) {
  switch (aug.kind) {
    case Augmentation::Kind::identity: return true;
    case Augmentation::Kind::hflip: det.cx = 1.0 - det.cx; return true;
    case Augmentation::Kind::scale: return scale_box(det, 1.0 / aug.factor);
  }
  return false;
}

RawFrame augment_frame(const Augmentation& aug, const RawFrame& frame) {
  aug.validate();
  const std::size_t w = frame.width();
  const std::size_t h = frame.height();
  RawFrame out(w, h, std::uint16_t{0}, frame.frame_index());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      switch (aug.kind) {
        case Augmentation::Kind::identity: out.at(x, y) = frame.at(x, y); break;
        case Augmentation::Kind::hflip: out.at(x, y) = frame.at(w - 1 - x, y); break;
        case Augmentation::Kind::scale: {
          const auto sx = static_cast<std::size_t>(std::floor((static_cast<double>(x) + 0.5) / aug.factor));
          const auto sy = static_cast<std::size_t>(std::floor((static_cast<double>(y) + 0.5) / aug.factor));
          if (sx < w && sy < h) out.at(x, y) = frame.at(sx, sy);
          break;
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stub detector

void StubSpec::validate() const {
  if (!(drop_rate >= 0 && drop_rate <= 1)) throw std::invalid_argument("stub drop rate must lie in [0,1]");
  if (!(jitter >= 0)) throw std::invalid_argument("stub jitter must be non-negative");
  if (max_false_positives < 0) throw std::invalid_argument("stub false-positive count must be non-negative");
  if (class_count <= 0) throw std::invalid_argument("stub class count must be positive");
  check_confidence_model(confidence, "stub confidence");
  check_confidence_model(false_positive_confidence, "stub false-positive confidence");
}

StubSpec parse_stub_spec(const std::string& text) {
  StubSpec spec;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("stub option '" + item + "' is not key=value");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    auto invalid = [&] { return std::invalid_argument("stub option '" + key + "' has an invalid value '" + value + "'"); };
    auto real = [&] {
      try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw invalid();
        return v;
      } catch (const std::logic_error&) {
        throw invalid();
      }
    };
    auto range = [&]() -> ConfidenceModel {
      try {
        const auto [lo, hi] = parse_range(value);
        return {lo, hi};
      } catch (const std::logic_error&) {
        throw invalid();
      }
    };
    if (key == "drop") {
      spec.drop_rate = real();
    } else if (key == "jitter") {
      spec.jitter = real();
    } else if (key == "conf") {
      spec.confidence = range();
    } else if (key == "fp") {
      const double v = real();
      if (v != std::floor(v)) throw invalid();
      spec.max_false_positives = static_cast<int>(v);
    } else if (key == "fpconf") {
      spec.false_positive_confidence = range();
    } else if (key == "seed") {
      const double v = real();
      if (v < 0 || v != std::floor(v)) throw invalid();
      spec.seed = std::stoull(value);
    } else {
      throw std::invalid_argument("unknown stub option '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

std::vector<Detection> stub_detect(const StubSpec& spec, const std::string& image_id,
                                   const std::vector<GroundTruthBox>& truths, double conf_threshold) {
  std::vector<Detection> out;
  if (!spec.canned.empty()) {
    if (auto it = spec.canned.find(image_id); it != spec.canned.end()) {
      for (const Detection& d : it->second) {
        if (d.confidence >= conf_threshold) out.push_back(d);
      }
    }
    return out;
  }

  CounterRng rng(spec.seed, fnv1a64(image_id));
  for (const GroundTruthBox& t : truths) {
    // Fixed number of draws per truth keeps later boxes independent of earlier outcomes.
    const double keep = rng.uniform();
    const double gx = rng.gaussian();
    const double gy = rng.gaussian();
    const double gw = rng.gaussian();
    const double gh = rng.gaussian();
    const double conf = rng.uniform(spec.confidence.low, spec.confidence.high);
    if (keep < spec.drop_rate) continue;
    Detection d{t.class_id, t.cx, t.cy, t.w, t.h, conf};
    if (spec.jitter > 0) {
      d.cx += spec.jitter * t.w * gx;
      d.cy += spec.jitter * t.h * gy;
      d.w *= std::exp(spec.jitter * gw);
      d.h *= std::exp(spec.jitter * gh);
      if (!set_from_corners(d, to_corners(d))) continue;
    }
    if (d.confidence >= conf_threshold) out.push_back(d);
  }

  const auto fp_count = rng.below(static_cast<std::uint64_t>(spec.max_false_positives) + 1);
  for (std::uint64_t k = 0; k < fp_count; ++k) {
    Detection d;
    d.class_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.class_count)));
    d.w = rng.uniform(0.05, 0.3);
    d.h = rng.uniform(0.05, 0.3);
    d.cx = rng.uniform(d.w / 2, 1 - d.w / 2);
    d.cy = rng.uniform(d.h / 2, 1 - d.h / 2);
    d.confidence = rng.uniform(spec.false_positive_confidence.low, spec.false_positive_confidence.high);
    if (d.confidence >= conf_threshold) out.push_back(d);
  }
  return out;
}

StubDetector::StubDetector(StubSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

std::vector<Detection> StubDetector::do_detect(const ImageInput& image, const Augmentation& view,
                                               double conf_threshold) {
  view.validate();
  std::vector<Detection> base = stub_detect(spec_, image.id, image.truths, conf_threshold);
  std::vector<Detection> out;
  out.reserve(base.size());
  for (Detection d : base) {
    if (forward_map(view, d)) out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// External adapter process

void ExternalSpec::validate() const {
  if (command.empty()) throw std::invalid_argument("external detector command is empty");
  if (timeout.count() <= 0) throw std::invalid_argument("external detector timeout must be positive");
}

class ExternalDetector::Process {
 public:
  Process(const ExternalSpec& spec) {
    int in_pipe[2];
    int out_pipe[2];
    int err_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0 || pipe2(out_pipe, O_CLOEXEC) != 0 || pipe2(err_pipe, O_CLOEXEC) != 0) {
      throw DetectorError(DetectorError::Kind::spawn, std::string("pipe: ") + std::strerror(errno));
    }
    const std::string shell_cmd = "exec " + spec.command;
    const std::string workdir = spec.working_directory.string();
    pid_ = fork();
    if (pid_ < 0) {
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
      throw DetectorError(DetectorError::Kind::spawn, std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      ::dup2(err_pipe[1], STDERR_FILENO);
      if (!workdir.empty() && ::chdir(workdir.c_str()) != 0) _exit(126);
      ::execl("/bin/sh", "sh", "-c", shell_cmd.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    stdin_fd_ = in_pipe[1];
    stdout_fd_ = out_pipe[0];
    stderr_fd_ = err_pipe[0];
    ::fcntl(stdout_fd_, F_SETFL, O_NONBLOCK);
    ::fcntl(stderr_fd_, F_SETFL, O_NONBLOCK);
  }

  ~Process() { terminate(); }

  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;

  /// Sends one line and waits for one line back.
  std::string round_trip(const std::string& line, std::chrono::milliseconds timeout) {
    write_all(line + "\n");
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (const auto nl = stdout_buf_.find('\n'); nl != std::string::npos) {
        std::string response = stdout_buf_.substr(0, nl);
        stdout_buf_.erase(0, nl + 1);
        return response;
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) {
        drain_stderr();
        terminate();
        throw DetectorError(DetectorError::Kind::timeout,
                            "adapter gave no response within " + std::to_string(timeout.count()) + " ms", stderr_);
      }
      pollfd fds[2] = {{stdout_fd_, POLLIN, 0}, {stderr_fd_, POLLIN, 0}};
      const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
      const int rc = ::poll(fds, stderr_fd_ >= 0 ? 2 : 1, static_cast<int>(std::max<long long>(1, wait_ms)));
      if (rc < 0 && errno != EINTR) {
        throw DetectorError(DetectorError::Kind::protocol, std::string("poll: ") + std::strerror(errno), stderr_);
      }
      drain_stderr();
      if (rc > 0 && (fds[0].revents & (POLLIN | POLLHUP)) != 0) {
        char buf[4096];
        const ssize_t n = ::read(stdout_fd_, buf, sizeof buf);
        if (n > 0) {
          stdout_buf_.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0) {
          on_exit_before_response();
        }
      }
    }
  }

  bool alive() const { return pid_ > 0; }
  const std::string& captured_stderr() const { return stderr_; }

 private:
  void write_all(const std::string& data) {
    std::size_t off = 0;
    while (off < data.size()) {
      const ssize_t n = ::write(stdin_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EPIPE) on_exit_before_response();
        throw DetectorError(DetectorError::Kind::protocol, std::string("write: ") + std::strerror(errno), stderr_);
      }
      off += static_cast<std::size_t>(n);
    }
  }

  void drain_stderr() {
    if (stderr_fd_ < 0) return;
    char buf[4096];
    while (true) {
      const ssize_t n = ::read(stderr_fd_, buf, sizeof buf);
      if (n <= 0) break;
      stderr_.append(buf, static_cast<std::size_t>(n));
      if (stderr_.size() > 8192) stderr_.erase(0, stderr_.size() - 8192);
    }
  }

  [[noreturn]] void on_exit_before_response() {
    int status = 0;
    drain_stderr();
    ::close(stdin_fd_);
    stdin_fd_ = -1;
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
    drain_stderr();
    if (WIFEXITED(status) && (WEXITSTATUS(status) == 126 || WEXITSTATUS(status) == 127)) {
      throw DetectorError(DetectorError::Kind::spawn,
                          "adapter command could not be started (exit " + std::to_string(WEXITSTATUS(status)) + ")",
                          stderr_);
    }
    const std::string how = WIFEXITED(status) ? "exit status " + std::to_string(WEXITSTATUS(status))
                                              : "signal " + std::to_string(WTERMSIG(status));
    throw DetectorError(DetectorError::Kind::protocol, "adapter exited before responding (" + how + ")", stderr_);
  }

  void terminate() {
    if (stdin_fd_ >= 0) ::close(stdin_fd_);
    stdin_fd_ = -1;
    if (pid_ > 0) {
      // Closing stdin asks a well-behaved adapter to exit; give it a moment first.
      int status = 0;
      bool exited = false;
      for (int i = 0; i < 20 && !exited; ++i) {
        exited = ::waitpid(pid_, &status, WNOHANG) == pid_;
        if (!exited) ::usleep(5000);
      }
      if (!exited) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
      }
      pid_ = -1;
    }
    for (int* fd : {&stdout_fd_, &stderr_fd_}) {
      if (*fd >= 0) ::close(*fd);
      *fd = -1;
    }
  }

  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  int stderr_fd_ = -1;
  std::string stdout_buf_;
  std::string stderr_;
};

ExternalDetector::ExternalDetector(ExternalSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  // A dead adapter must surface as EPIPE, not kill the host process.
  ::signal(SIGPIPE, SIG_IGN);
}

ExternalDetector::~ExternalDetector() = default;

std::vector<Detection> ExternalDetector::detect_path(const std::filesystem::path& image, double conf_threshold) {
  if (!process_ || !process_->alive()) process_ = std::make_unique<Process>(spec_);

  const std::string id = std::to_string(next_id_++);
  const nlohmann::json request = {
      {"id", id}, {"image", std::filesystem::absolute(image).string()}, {"conf_threshold", conf_threshold}};
  std::string line;
  try {
    line = process_->round_trip(request.dump(), spec_.timeout);
  } catch (const DetectorError&) {
    process_.reset();
    throw;
  }

  const auto response = nlohmann::json::parse(line, nullptr, false);
  const std::string& diag = process_->captured_stderr();
  if (response.is_discarded() || !response.is_object()) {
    throw DetectorError(DetectorError::Kind::protocol, "malformed response line: " + line.substr(0, 200), diag);
  }
  if (!response.contains("id") || !response["id"].is_string() || response["id"].get<std::string>() != id) {
    throw DetectorError(DetectorError::Kind::protocol, "response id does not match request id " + id, diag);
  }
  if (response.contains("error")) {
    throw DetectorError(DetectorError::Kind::protocol, "adapter reported: " + response["error"].dump(), diag);
  }
  if (!response.contains("detections") || !response["detections"].is_array()) {
    throw DetectorError(DetectorError::Kind::protocol, "response lacks a detections array", diag);
  }
  std::vector<Detection> out;
  for (const auto& item : response["detections"]) {
    Detection d;
    try {
      d.class_id = item.at("class_id").get<int>();
      d.cx = item.at("cx").get<double>();
      d.cy = item.at("cy").get<double>();
      d.w = item.at("w").get<double>();
      d.h = item.at("h").get<double>();
      d.confidence = item.at("confidence").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DetectorError(DetectorError::Kind::protocol, std::string("malformed detection: ") + e.what(), diag);
    }
    try {
      validate_detection(d, spec_.class_count);
    } catch (const BoxError& e) {
      throw DetectorError(DetectorError::Kind::validation, e.what(), diag);
    }
    if (d.confidence >= conf_threshold) out.push_back(d);
  }
  return out;
}

std::vector<Detection> ExternalDetector::do_detect(const ImageInput& image, const Augmentation& view,
                                                   double conf_threshold) {
  view.validate();
  if (view.kind == Augmentation::Kind::identity) return detect_path(image.path, conf_threshold);

  RawFrame frame;
  try {
    frame = load_frame_16(image.path);
  } catch (const FrameError& e) {
    throw DetectorError(DetectorError::Kind::input, std::string("cannot build augmented view: ") + e.what());
  }
  static std::atomic<std::uint64_t> counter{0};
  const auto tmp = std::filesystem::temp_directory_path() /
                   ("thermopipe-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".pgm");
  store_frame_16(augment_frame(view, frame), tmp);
  struct Cleanup {
    std::filesystem::path path;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove(path, ec);
    }
  } cleanup{tmp};
  return detect_path(tmp, conf_threshold);
}

std::vector<Detection> external_detect(ExternalDetector& detector, const std::filesystem::path& image,
                                       double conf_threshold) {
  return detector.detect_path(image, conf_threshold);
}

// ---------------------------------------------------------------------------
// Fusion and strategies

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), nms_before);
  std::vector<Detection> kept;
  for (const Detection& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k, d) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> infer_na(Detector& detector, const ImageInput& image, double conf_threshold,
                                double fusion_iou) {
  return nms(detector.detect(image, Augmentation::identity(), conf_threshold), fusion_iou);
}

std::vector<Augmentation> TtaConfig::normalized() const {
  std::vector<Augmentation> out{Augmentation::identity()};
  for (const Augmentation& a : augmentations) {
    a.validate();
    if (a.kind != Augmentation::Kind::identity) out.push_back(a);
  }
  return out;
}

std::vector<Detection> infer_tta(Detector& detector, const ImageInput& image, double conf_threshold,
                                 const TtaConfig& cfg) {
  std::vector<Detection> pooled;
  for (const Augmentation& aug : cfg.normalized()) {
    for (Detection d : detector.detect(image, aug, conf_threshold)) {
      if (inverse_map(aug, d)) pooled.push_back(d);
    }
  }
  return nms(std::move(pooled), cfg.fusion_iou);
}

std::vector<Detection> infer_ensemble(const std::vector<Detector*>& members, const ImageInput& image,
                                      double conf_threshold, const EnsembleConfig& cfg) {
  if (members.empty()) throw std::invalid_argument("ensemble needs at least one member");
  std::vector<Detection> pooled;
  for (std::size_t m = 0; m < members.size(); ++m) {
    try {
      auto dets = members[m]->detect(image, Augmentation::identity(), conf_threshold);
      pooled.insert(pooled.end(), dets.begin(), dets.end());
    } catch (const DetectorError& e) {
      throw DetectorError(DetectorError::Kind::member,
                          "ensemble member " + std::to_string(m) + " (" + members[m]->name() + "): " + e.what(),
                          e.diagnostics());
    }
  }
  return nms(std::move(pooled), cfg.fusion_iou);
}

Strategy parse_strategy(const std::string& name) {
  if (name == "na") return Strategy::na;
  if (name == "tta") return Strategy::tta;
  if (name == "ensemble") return Strategy::ensemble;
  throw std::invalid_argument("unknown strategy '" + name + "' (expected na, tta or ensemble)");
}

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::na: return "na";
    case Strategy::tta: return "tta";
    case Strategy::ensemble: return "ensemble";
  }
  return "?";
}

std::vector<Detection> run_strategy(Strategy strategy, const std::vector<Detector*>& members,
                                    const ImageInput& image, double conf_threshold, double fusion_iou) {
  if (members.empty()) throw std::invalid_argument("no detector configured");
  switch (strategy) {
    case Strategy::na: return infer_na(*members.front(), image, conf_threshold, fusion_iou);
    case Strategy::tta: {
      TtaConfig cfg;
      cfg.fusion_iou = fusion_iou;
      return infer_tta(*members.front(), image, conf_threshold, cfg);
    }
    case Strategy::ensemble: return infer_ensemble(members, image, conf_threshold, {fusion_iou});
  }
  return {};
}

}  // namespace thermopipe
