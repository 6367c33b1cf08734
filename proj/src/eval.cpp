#include "thermopipe/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace thermopipe {

namespace {

bool detection_before(const Detection& a, const Detection& b) {
  return std::tie(b.confidence, a.cx, a.cy, a.w, a.h, a.class_id) <
         std::tie(a.confidence, b.cx, b.cy, b.w, b.h, b.class_id);
}

}  // namespace

double iou(const Corners& a, const Corners& b) {
  const double ix = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double iy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = ix * iy;
  const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0);
  const double area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

void EvalConfig::validate() const {
  if (!(conf_threshold >= 0 && conf_threshold <= 1)) throw std::invalid_argument("confidence threshold must lie in [0,1]");
  if (!(iou_threshold >= 0 && iou_threshold <= 1)) throw std::invalid_argument("IoU threshold must lie in [0,1]");
}

std::size_t MatchResult::tp_count() const {
  return static_cast<std::size_t>(std::count(true_positive.begin(), true_positive.end(), true));
}

MatchResult match_greedy(std::span<const Detection> dets, std::span<const GroundTruthBox> truths,
                         double iou_threshold) {
  MatchResult result;
  result.detections.assign(dets.begin(), dets.end());
  std::stable_sort(result.detections.begin(), result.detections.end(), detection_before);
  result.true_positive.assign(result.detections.size(), false);
  result.matched_truth.assign(result.detections.size(), -1);

  std::vector<bool> claimed(truths.size(), false);
  for (std::size_t d = 0; d < result.detections.size(); ++d) {
    const Detection& det = result.detections[d];
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (claimed[t] || truths[t].class_id != det.class_id) continue;
      const double o = iou(det, truths[t]);
      if (o > best_iou) {
        best_iou = o;
        best = static_cast<int>(t);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      claimed[static_cast<std::size_t>(best)] = true;
      result.true_positive[d] = true;
      result.matched_truth[d] = best;
    }
  }
  result.false_negatives = static_cast<std::size_t>(std::count(claimed.begin(), claimed.end(), false));
  return result;
}

std::optional<double> average_precision(std::span<const bool> true_positive, std::size_t n_truth,
                                        ApConvention convention) {
  const auto tp_total = static_cast<std::size_t>(std::count(true_positive.begin(), true_positive.end(), true));
  if (tp_total > n_truth) {
    throw std::invalid_argument("average_precision: " + std::to_string(tp_total) + " true positives for " +
                                std::to_string(n_truth) + " ground-truth boxes");
  }
  if (n_truth == 0) return std::nullopt;

  const std::size_t n = true_positive.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (true_positive[k]) ++tp;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(n_truth);
  }
  // Envelope: precision at recall r is the best precision at any recall >= r.
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);

  if (convention == ApConvention::eleven_point) {
    double sum = 0.0;
    for (int step = 0; step <= 10; ++step) {
      const double r = step / 10.0;
      const auto it = std::find_if(recall.begin(), recall.end(), [r](double v) { return v >= r - 1e-12; });
      if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    return sum / 11.0;
  }

  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& detections, const Dataset& ds,
                    const EvalConfig& cfg) {
  cfg.validate();
  if (detections.size() != ds.samples.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(detections.size()) + " detection lists for " +
                                std::to_string(ds.samples.size()) + " images");
  }
  const int classes = ds.scheme.size();

  struct Scored {
    Detection det;
    std::size_t image;
    bool tp;
  };
  std::vector<std::vector<Scored>> pooled(static_cast<std::size_t>(classes));
  std::vector<std::size_t> truth_counts(static_cast<std::size_t>(classes), 0);

  EvalReport report;
  report.config = cfg;
  report.frame_count = ds.samples.size();

  for (std::size_t img = 0; img < ds.samples.size(); ++img) {
    const auto& truths = ds.samples[img].truths;
    std::vector<Detection> kept;
    for (const Detection& d : detections[img]) {
      if (d.class_id < 0 || d.class_id >= classes) {
        throw std::invalid_argument("detection class_id " + std::to_string(d.class_id) +
                                    " is outside the dataset's class scheme");
      }
      if (d.confidence >= cfg.conf_threshold) kept.push_back(d);
    }
    for (const GroundTruthBox& t : truths) {
      if (t.class_id < 0 || t.class_id >= classes) throw std::invalid_argument("truth class outside scheme");
      ++truth_counts[static_cast<std::size_t>(t.class_id)];
    }
    const MatchResult m = match_greedy(kept, truths, cfg.iou_threshold);
    for (std::size_t k = 0; k < m.detections.size(); ++k) {
      pooled[static_cast<std::size_t>(m.detections[k].class_id)].push_back({m.detections[k], img, m.true_positive[k]});
    }
    report.true_positives += m.tp_count();
    report.false_positives += m.fp_count();
    report.false_negatives += m.false_negatives;
  }

  double ap_sum = 0.0;
  std::size_t ap_classes = 0;
  for (int c = 0; c < classes; ++c) {
    auto& entries = pooled[static_cast<std::size_t>(c)];
    std::sort(entries.begin(), entries.end(), [](const Scored& a, const Scored& b) {
      if (detection_before(a.det, b.det)) return true;
      if (detection_before(b.det, a.det)) return false;
      return std::tie(a.image, a.tp) < std::tie(b.image, b.tp);
    });
    // std::vector<bool> cannot back a span, so the flags go into a plain array.
    const auto flags = std::make_unique<bool[]>(entries.size());
    for (std::size_t k = 0; k < entries.size(); ++k) flags[k] = entries[k].tp;
    const std::span<const bool> flag_span(flags.get(), entries.size());

    ClassReport cr;
    cr.class_id = c;
    cr.name = ds.scheme.name(c);
    cr.truths = truth_counts[static_cast<std::size_t>(c)];
    cr.detections = entries.size();
    cr.true_positives = static_cast<std::size_t>(std::count(flag_span.begin(), flag_span.end(), true));
    cr.ap = average_precision(flag_span, cr.truths, cfg.ap_convention);
    if (cr.ap) {
      ap_sum += *cr.ap;
      ++ap_classes;
    }
    report.classes.push_back(std::move(cr));
  }

  const std::size_t predicted = report.true_positives + report.false_positives;
  report.precision_undefined = predicted == 0;
  report.precision = predicted == 0 ? 0.0 : static_cast<double>(report.true_positives) / static_cast<double>(predicted);
  const std::size_t actual = report.true_positives + report.false_negatives;
  report.recall = actual == 0 ? 0.0 : static_cast<double>(report.true_positives) / static_cast<double>(actual);
  report.map = ap_classes == 0 ? 0.0 : ap_sum / static_cast<double>(ap_classes);
  return report;
}

std::string csv_row(const EvalReport& report, std::optional<double> fps) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f,%.2f,%.2f,", report.precision * 100, report.recall * 100, report.map * 100);
  std::string row = buf;
  if (fps) {
    std::snprintf(buf, sizeof buf, "%.2f", *fps);
    row += buf;
  }
  return row;
}

}  // namespace thermopipe
