#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace hardmine {

// Axis-aligned rectangle in image coordinates. Corners are continuous reals;
// area is (x_max - x_min) * (y_max - y_min), no pixel "+1" convention.
// Zero-area boxes are legal; negative extents are rejected at construction.
struct Box {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    Box() = default;
    Box(double x0, double y0, double x1, double y1);

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
};

// Rotated ellipse, the FDDB-style face annotation. `angle` is the rotation of
// the major axis from the x-axis and is normalized to [-pi/2, pi/2) at
// construction (an ellipse is invariant under angle -> angle + pi).
struct Ellipse {
    double center_x = 0.0;
    double center_y = 0.0;
    double major_radius = 0.0;
    double minor_radius = 0.0;
    double angle = 0.0;

    Ellipse() = default;
    Ellipse(double cx, double cy, double ra, double rb, double theta);

    bool contains(double x, double y) const;
};

// A scored box attributed to some image (the image id is carried by whoever
// groups detections, see annotations::DetectionRecord).
struct Detection {
    Box box;
    double score = 0.0;
};

// Intersection-over-union of two boxes, in [0, 1]. A union of zero area
// yields 0 rather than NaN, which keeps downstream sampling branch-free.
double iou(const Box& a, const Box& b);

// Maximum IoU of `query` over `references` together with the argmax index.
// Empty list gives (0, nullopt). Ties resolve to the lowest index; hard
// negative attribution depends on that, so don't change it casually.
std::pair<double, std::optional<std::size_t>> max_iou(const Box& query,
                                                      const std::vector<Box>& references);

// Tightest axis-aligned box containing the rotated ellipse.
Box ellipse_bounding_box(const Ellipse& e);

inline constexpr int kDefaultOverlapResolution = 512;
inline constexpr int kMinOverlapResolution = 64;

// Region IoU between a box and an ellipse, estimated by midpoint-grid
// rasterization over the bounding box of their union, `resolution` samples
// per axis. Deterministic for fixed inputs. Throws std::invalid_argument for
// resolution < kMinOverlapResolution.
double box_ellipse_overlap(const Box& b, const Ellipse& e,
                           int resolution = kDefaultOverlapResolution);

}  // namespace hardmine
