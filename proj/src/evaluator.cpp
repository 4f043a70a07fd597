#include "hardmine/evaluator.hpp"

#include "hardmine/detail/parallel.hpp"
#include "hardmine/detail/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace hardmine {

namespace {

// Overlap matrix with a cheap disjointness shortcut: the ellipse lives inside
// its bounding box, so disjoint boxes mean exactly zero overlap.
std::vector<std::vector<double>> overlap_matrix(const std::vector<Detection>& dets,
                                                const std::vector<Ellipse>& faces,
                                                int resolution) {
    std::vector<Box> face_bbs;
    face_bbs.reserve(faces.size());
    for (const auto& f : faces) face_bbs.push_back(ellipse_bounding_box(f));

    std::vector<std::vector<double>> w(dets.size(), std::vector<double>(faces.size(), 0.0));
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const Box& b = dets[i].box;
        for (std::size_t j = 0; j < faces.size(); ++j) {
            const Box& fb = face_bbs[j];
            if (std::min(b.x_max, fb.x_max) <= std::max(b.x_min, fb.x_min) ||
                std::min(b.y_max, fb.y_max) <= std::max(b.y_min, fb.y_min))
                continue;
            w[i][j] = box_ellipse_overlap(b, faces[j], resolution);
        }
    }
    return w;
}

// Hungarian algorithm (potentials formulation), square cost matrix,
// minimization. Returns row -> column.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);
    std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
        std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
        do {
            used[static_cast<std::size_t>(j0)] = 1;
            const int i0 = p[static_cast<std::size_t>(j0)];
            int j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) continue;
                const double cur = cost[static_cast<std::size_t>(i0 - 1)][static_cast<std::size_t>(j - 1)] -
                                   u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
                if (cur < minv[static_cast<std::size_t>(j)]) {
                    minv[static_cast<std::size_t>(j)] = cur;
                    way[static_cast<std::size_t>(j)] = j0;
                }
                if (minv[static_cast<std::size_t>(j)] < delta) {
                    delta = minv[static_cast<std::size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<std::size_t>(j)]) {
                    u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
                    v[static_cast<std::size_t>(j)] -= delta;
                } else {
                    minv[static_cast<std::size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<std::size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<std::size_t>(j0)];
            p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= n; ++j)
        if (p[static_cast<std::size_t>(j)] > 0)
            row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

}  // namespace

std::vector<DetectionMatch> match_image(const std::string& image_id, std::vector<Detection> dets,
                                        const std::vector<Ellipse>& faces, MatchPolicy policy,
                                        int overlap_resolution) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });

    const auto w = overlap_matrix(dets, faces, overlap_resolution);
    std::vector<DetectionMatch> entries(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
        entries[i].image_id = image_id;
        entries[i].score = dets[i].score;
    }

    if (policy == MatchPolicy::GreedyByScore) {
        std::vector<char> face_taken(faces.size(), 0);
        for (std::size_t i = 0; i < dets.size(); ++i) {
            double best = 0.0;
            std::optional<std::size_t> best_j;
            for (std::size_t j = 0; j < faces.size(); ++j) {
                if (face_taken[j]) continue;
                if (!best_j.has_value() || w[i][j] > best) {
                    best = w[i][j];
                    best_j = j;
                }
            }
            if (best_j.has_value() && best >= kMatchOverlapThreshold) {
                face_taken[*best_j] = 1;
                entries[i].matched = true;
                entries[i].overlap = best;
                entries[i].annotation = *best_j;
            }
        }
        return entries;
    }

    // OptimalAssignment: pad to a square matrix; a forbidden or dummy pairing
    // costs exactly 1, so minimizing total cost maximizes total matched
    // overlap (cost of an allowed pair is 1 - overlap <= 0.5).
    const std::size_t n = std::max(dets.size(), faces.size());
    if (n == 0 || dets.empty() || faces.empty()) return entries;
    std::vector<std::vector<double>> cost(n, std::vector<double>(n, 1.0));
    for (std::size_t i = 0; i < dets.size(); ++i)
        for (std::size_t j = 0; j < faces.size(); ++j)
            if (w[i][j] >= kMatchOverlapThreshold) cost[i][j] = 1.0 - w[i][j];
    const auto assignment = solve_assignment(cost);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const int j = assignment[i];
        if (j < 0 || static_cast<std::size_t>(j) >= faces.size()) continue;
        if (w[i][static_cast<std::size_t>(j)] < kMatchOverlapThreshold) continue;
        entries[i].matched = true;
        entries[i].overlap = w[i][static_cast<std::size_t>(j)];
        entries[i].annotation = static_cast<std::size_t>(j);
    }
    return entries;
}

MatchResult match_records(const std::vector<DetectionRecord>& detections,
                          const std::vector<ImageRecord>& records, MatchPolicy policy,
                          int overlap_resolution, int workers) {
    std::map<std::string, const DetectionRecord*> dets_by_image;
    for (const auto& d : detections) {
        if (!dets_by_image.emplace(d.image_id, &d).second)
            throw std::runtime_error("duplicate detection record for image " + d.image_id);
    }

    std::map<std::string, const ImageRecord*> record_ids;
    for (const auto& r : records) record_ids.emplace(r.image_id, &r);
    for (const auto& [id, rec] : dets_by_image) {
        (void)rec;
        if (record_ids.find(id) == record_ids.end())
            throw std::runtime_error("detections for unknown image " + id);
    }

    // deterministic reduce over sorted image ids
    std::vector<const ImageRecord*> ordered;
    ordered.reserve(record_ids.size());
    for (const auto& [id, rec] : record_ids) {
        (void)id;
        ordered.push_back(rec);
    }

    std::vector<std::vector<DetectionMatch>> per_image(ordered.size());
    detail::parallel_for(ordered.size(), workers, [&](std::size_t i) {
        const ImageRecord& rec = *ordered[i];
        const auto it = dets_by_image.find(rec.image_id);
        if (it == dets_by_image.end()) return;
        per_image[i] =
            match_image(rec.image_id, it->second->detections, rec.faces, policy, overlap_resolution);
    });

    MatchResult result;
    result.total_images = ordered.size();
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        result.total_faces += ordered[i]->faces.size();
        result.entries.insert(result.entries.end(), per_image[i].begin(), per_image[i].end());
    }
    return result;
}

RocCurve build_roc(const MatchResult& matches, RocFlavor flavor) {
    RocCurve curve;
    curve.flavor = flavor;
    if (matches.entries.empty()) {
        curve.points.push_back({0, 0.0});
        return curve;
    }

    std::vector<std::size_t> order(matches.entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return matches.entries[a].score > matches.entries[b].score;
    });

    const double denom = matches.total_faces > 0 ? static_cast<double>(matches.total_faces) : 0.0;
    long long false_positives = 0;
    double matched_count = 0.0;
    double overlap_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double score = matches.entries[order[i]].score;
        // absorb every entry tied at this threshold before emitting a point
        while (i < order.size() && matches.entries[order[i]].score == score) {
            const auto& e = matches.entries[order[i]];
            if (e.matched) {
                matched_count += 1.0;
                overlap_sum += e.overlap;
            } else {
                ++false_positives;
            }
            ++i;
        }
        const double measure = flavor == RocFlavor::Discrete ? matched_count : overlap_sum;
        curve.points.push_back({false_positives, denom > 0.0 ? measure / denom : 0.0});
    }
    return curve;
}

std::pair<RocCurve, RocCurve> aggregate_folds(const std::vector<MatchResult>& per_fold) {
    if (per_fold.empty()) throw std::invalid_argument("aggregate_folds: no folds");
    MatchResult pooled;
    for (const auto& fold : per_fold) {
        pooled.entries.insert(pooled.entries.end(), fold.entries.begin(), fold.entries.end());
        pooled.total_faces += fold.total_faces;
        pooled.total_images += fold.total_images;
    }
    return {build_roc(pooled, RocFlavor::Discrete), build_roc(pooled, RocFlavor::Continuous)};
}

double tp_at_fp(const RocCurve& curve, long long fp) {
    double value = 0.0;
    for (const auto& p : curve.points) {
        if (p.false_positives > fp) break;
        value = p.tp_measure;  // points are fp-sorted; ties keep the later (higher) measure
    }
    return value;
}

double area_under_curve(const RocCurve& curve, long long max_fp) {
    if (max_fp <= 0) return 0.0;
    double area = 0.0;
    double value = 0.0;
    long long x = 0;
    for (const auto& p : curve.points) {
        if (p.false_positives > max_fp) break;
        if (p.false_positives > x) {
            area += value * static_cast<double>(p.false_positives - x);
            x = p.false_positives;
        }
        value = p.tp_measure;
    }
    area += value * static_cast<double>(max_fp - x);
    return area / static_cast<double>(max_fp);
}

std::string write_roc_csv(const RocCurve& curve) {
    std::string out = "false_positives,tp_measure\n";
    for (const auto& p : curve.points)
        out += std::to_string(p.false_positives) + "," + detail::format_fixed(p.tp_measure) + "\n";
    return out;
}

std::string write_summary_json(const MatchResult& matches, const RocCurve& discrete,
                               const RocCurve& continuous, MatchPolicy policy,
                               int overlap_resolution) {
    std::size_t matched = 0;
    for (const auto& e : matches.entries) matched += e.matched ? 1 : 0;

    nlohmann::json j;
    j["total_faces"] = matches.total_faces;
    j["total_images"] = matches.total_images;
    j["total_detections"] = matches.entries.size();
    j["matched_detections"] = matched;
    j["policy"] = policy == MatchPolicy::GreedyByScore ? "greedy" : "optimal";
    j["overlap"] = {{"kind", "box_ellipse_region_iou"}, {"resolution", overlap_resolution}};
    j["continuous_measure"] = "matched_detections_only";
    j["discrete"] = {{"auc_2000", area_under_curve(discrete, 2000)},
                     {"final_tp_measure",
                      discrete.points.empty() ? 0.0 : discrete.points.back().tp_measure},
                     {"points", discrete.points.size()}};
    j["continuous"] = {{"auc_2000", area_under_curve(continuous, 2000)},
                       {"final_tp_measure",
                        continuous.points.empty() ? 0.0 : continuous.points.back().tp_measure},
                       {"points", continuous.points.size()}};
    return j.dump(2) + "\n";
}

}  // namespace hardmine
