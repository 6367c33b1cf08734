#pragma once

// Detection-quality metrics: IoU, greedy matching, all-point AP and the
// dataset-level evaluation behind the P / R / mAP table columns.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thermopipe/boxes.hpp"
#include "thermopipe/dataset.hpp"

namespace thermopipe {

double iou(const Corners& a, const Corners& b);

template <typename A, typename B>
double iou(const A& a, const B& b) {
  return iou(to_corners(a), to_corners(b));
}

enum class ApConvention { all_point, eleven_point };

struct EvalConfig {
  double conf_threshold = 0.25;
  double iou_threshold = 0.5;
  ApConvention ap_convention = ApConvention::all_point;

  void validate() const;
};

/// The three (confidence, IoU) pairs of the published threshold sweep.
inline constexpr std::pair<double, double> kThresholdGrid[3] = {{0.4, 0.6}, {0.2, 0.4}, {0.1, 0.2}};

struct MatchResult {
  std::vector<Detection> detections;  // confidence descending
  std::vector<bool> true_positive;    // parallel to detections
  std::vector<int> matched_truth;     // truth index or -1
  std::size_t false_negatives = 0;

  std::size_t tp_count() const;
  std::size_t fp_count() const { return detections.size() - tp_count(); }
};

/// Orders detections by confidence (desc), then cx, then cy (asc); each claims
/// the unmatched same-class truth of highest IoU (lowest index on ties) if that
/// IoU reaches `iou_threshold`.
MatchResult match_greedy(std::span<const Detection> dets, std::span<const GroundTruthBox> truths,
                         double iou_threshold);

/// AP from TP/FP flags already in descending-confidence order. Returns nullopt
/// when n_truth == 0 (the class is then left out of mAP).
std::optional<double> average_precision(std::span<const bool> true_positive, std::size_t n_truth,
                                        ApConvention convention = ApConvention::all_point);

struct ClassReport {
  int class_id = 0;
  std::string name;
  std::size_t truths = 0;
  std::size_t detections = 0;
  std::size_t true_positives = 0;
  std::optional<double> ap;
};

struct EvalReport {
  EvalConfig config;
  std::size_t frame_count = 0;
  std::vector<ClassReport> classes;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
  double precision = 0.0;
  double recall = 0.0;
  double map = 0.0;
  bool precision_undefined = false;  // no detections survived the cutoff
};

/// `detections[k]` belongs to `ds.samples[k]`. Detections below
/// cfg.conf_threshold are dropped first; matching is per image and per class,
/// AP is pooled per class over the whole dataset, and mAP averages the classes
/// that have at least one ground-truth box.
EvalReport evaluate(const std::vector<std::vector<Detection>>& detections, const Dataset& ds,
                    const EvalConfig& cfg);

/// "P%,R%,mAP%,FPS" with two decimals; FPS left empty when absent.
std::string csv_row(const EvalReport& report, std::optional<double> fps = std::nullopt);
inline constexpr const char* kCsvHeader = "P%,R%,mAP%,FPS";

}  // namespace thermopipe
