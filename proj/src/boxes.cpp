#include "thermopipe/boxes.hpp"

#include <cmath>

namespace thermopipe {

namespace {

void validate_geometry(int class_id, double cx, double cy, double w, double h, int class_count) {
  if (class_id < 0 || class_id >= class_count) {
    throw BoxError("class_id " + std::to_string(class_id) + " out of range (" +
                   std::to_string(class_count) + " classes)");
  }
  for (double v : {cx, cy, w, h}) {
    if (!std::isfinite(v)) throw BoxError("non-finite box coordinate");
  }
  if (cx < 0 || cx > 1 || cy < 0 || cy > 1) {
    throw BoxError("box centre outside [0,1]");
  }
  if (w <= 0 || h <= 0) throw BoxError("box width and height must be positive");
  if (w > 1 || h > 1) throw BoxError("box size outside [0,1]");
}

}  // namespace

void validate_box(const GroundTruthBox& box, int class_count) {
  validate_geometry(box.class_id, box.cx, box.cy, box.w, box.h, class_count);
}

void validate_detection(const Detection& det, int class_count) {
  validate_geometry(det.class_id, det.cx, det.cy, det.w, det.h, class_count);
  if (!(det.confidence >= 0 && det.confidence <= 1)) {
    throw BoxError("confidence " + std::to_string(det.confidence) + " outside [0,1]");
  }
}

}  // namespace thermopipe
