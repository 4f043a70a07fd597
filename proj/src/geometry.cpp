#include "hardmine/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>

namespace hardmine {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool all_finite(std::initializer_list<double> vs) {
    for (double v : vs)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

Box::Box(double x0, double y0, double x1, double y1) : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
    if (!all_finite({x0, y0, x1, y1})) throw std::invalid_argument("Box: coordinates must be finite");
    if (x_max < x_min || y_max < y_min) throw std::invalid_argument("Box: negative extent");
}

Ellipse::Ellipse(double cx, double cy, double ra, double rb, double theta)
    : center_x(cx), center_y(cy), major_radius(ra), minor_radius(rb) {
    if (!all_finite({cx, cy, ra, rb, theta}))
        throw std::invalid_argument("Ellipse: parameters must be finite");
    if (!(rb > 0.0) || ra < rb)
        throw std::invalid_argument("Ellipse: requires major_radius >= minor_radius > 0");
    // fold into [-pi/2, pi/2)
    double t = std::fmod(theta + kPi / 2.0, kPi);
    if (t < 0.0) t += kPi;
    angle = t - kPi / 2.0;
}

bool Ellipse::contains(double x, double y) const {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double dx = x - center_x;
    const double dy = y - center_y;
    const double u = (dx * c + dy * s) / major_radius;
    const double v = (-dx * s + dy * c) / minor_radius;
    return u * u + v * v <= 1.0;
}

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

std::pair<double, std::optional<std::size_t>> max_iou(const Box& query,
                                                      const std::vector<Box>& references) {
    double best = 0.0;
    std::optional<std::size_t> best_idx;
    for (std::size_t i = 0; i < references.size(); ++i) {
        const double v = iou(query, references[i]);
        if (!best_idx.has_value() || v > best) {
            best = v;
            best_idx = i;
        }
    }
    return {best, best_idx};
}

Box ellipse_bounding_box(const Ellipse& e) {
    const double c = std::cos(e.angle);
    const double s = std::sin(e.angle);
    const double ra = e.major_radius;
    const double rb = e.minor_radius;
    const double hx = std::sqrt(ra * ra * c * c + rb * rb * s * s);
    const double hy = std::sqrt(ra * ra * s * s + rb * rb * c * c);
    return Box(e.center_x - hx, e.center_y - hy, e.center_x + hx, e.center_y + hy);
}

double box_ellipse_overlap(const Box& b, const Ellipse& e, int resolution) {
    if (resolution < kMinOverlapResolution)
        throw std::invalid_argument("box_ellipse_overlap: resolution below minimum");
    if (b.area() <= 0.0) return 0.0;

    const Box eb = ellipse_bounding_box(e);
    // disjoint bounding regions: the intersection is exactly empty
    if (std::min(b.x_max, eb.x_max) <= std::max(b.x_min, eb.x_min) ||
        std::min(b.y_max, eb.y_max) <= std::max(b.y_min, eb.y_min))
        return 0.0;

    const double x0 = std::min(b.x_min, eb.x_min);
    const double y0 = std::min(b.y_min, eb.y_min);
    const double x1 = std::max(b.x_max, eb.x_max);
    const double y1 = std::max(b.y_max, eb.y_max);
    const double dx = (x1 - x0) / resolution;
    const double dy = (y1 - y0) / resolution;

    const double c = std::cos(e.angle);
    const double s = std::sin(e.angle);
    const double inv_ra = 1.0 / e.major_radius;
    const double inv_rb = 1.0 / e.minor_radius;

    long long inter = 0;
    long long uni = 0;
    for (int iy = 0; iy < resolution; ++iy) {
        const double y = y0 + (iy + 0.5) * dy;
        const bool row_in_box = y >= b.y_min && y <= b.y_max;
        for (int ix = 0; ix < resolution; ++ix) {
            const double x = x0 + (ix + 0.5) * dx;
            const double ddx = x - e.center_x;
            const double ddy = y - e.center_y;
            const double u = (ddx * c + ddy * s) * inv_ra;
            const double v = (-ddx * s + ddy * c) * inv_rb;
            const bool in_ell = u * u + v * v <= 1.0;
            const bool in_box = row_in_box && x >= b.x_min && x <= b.x_max;
            inter += (in_box && in_ell) ? 1 : 0;
            uni += (in_box || in_ell) ? 1 : 0;
        }
    }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace hardmine
