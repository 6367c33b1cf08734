#pragma once

#include <stdexcept>
#include <string>

namespace thermopipe {

class BoxError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Normalised YOLO box: centre and size as fractions of the image.
struct GroundTruthBox {
  int class_id = 0;
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const GroundTruthBox&) const = default;
};

struct Detection {
  int class_id = 0;
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;
  double confidence = 0.0;

  GroundTruthBox box() const { return {class_id, cx, cy, w, h}; }
  bool operator==(const Detection&) const = default;
};

/// Corner form, used for overlap arithmetic.
struct Corners {
  double x0, y0, x1, y1;
};

inline Corners to_corners(double cx, double cy, double w, double h) {
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

template <typename B>
Corners to_corners(const B& b) {
  return to_corners(b.cx, b.cy, b.w, b.h);
}

/// Throws BoxError unless 0 <= cx,cy <= 1, 0 < w,h <= 1 and class_id in [0, class_count).
void validate_box(const GroundTruthBox& box, int class_count);
/// As validate_box, plus 0 <= confidence <= 1.
void validate_detection(const Detection& det, int class_count);

}  // namespace thermopipe
