#include "hardmine/annotations.hpp"

#include "hardmine/detail/random.hpp"
#include "hardmine/detail/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace hardmine {

using detail::LineReader;
using detail::format_fixed;
using detail::split_ws;
using detail::to_double;
using detail::to_int;
using detail::trim;

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

namespace {

double parse_field(const std::string& token, std::size_t line_no, const char* what) {
    double v = 0.0;
    if (!to_double(token, v)) throw ParseError(line_no, std::string("non-numeric ") + what);
    return v;
}

long long parse_count(const std::string& line, std::size_t line_no, const char* what) {
    long long n = 0;
    if (!to_int(trim(line), n) || n < 0)
        throw ParseError(line_no, std::string("malformed ") + what);
    return n;
}

}  // namespace

std::vector<ImageRecord> parse_annotation_file(const std::string& content) {
    LineReader reader(content);
    std::vector<ImageRecord> out;
    std::string line;
    while (reader.next(line)) {
        const std::string id = trim(line);
        if (id.empty()) continue;  // blank lines between blocks are tolerated

        ImageRecord rec;
        rec.image_id = id;
        if (!reader.next(line))
            throw ParseError(reader.line_number() + 1, "missing face count");
        const long long count = parse_count(line, reader.line_number(), "face count");
        for (long long i = 0; i < count; ++i) {
            if (!reader.next(line))
                throw ParseError(reader.line_number() + 1, "truncated annotation block");
            const auto fields = split_ws(line);
            if (fields.size() != 6)
                throw ParseError(reader.line_number(), "expected 6 fields per face line");
            const std::size_t ln = reader.line_number();
            const double ra = parse_field(fields[0], ln, "major radius");
            const double rb = parse_field(fields[1], ln, "minor radius");
            const double theta = parse_field(fields[2], ln, "angle");
            const double cx = parse_field(fields[3], ln, "center x");
            const double cy = parse_field(fields[4], ln, "center y");
            parse_field(fields[5], ln, "trailing field");
            try {
                rec.faces.emplace_back(cx, cy, ra, rb, theta);
            } catch (const std::invalid_argument& e) {
                throw ParseError(ln, e.what());
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::string write_annotation_file(const std::vector<ImageRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        out += rec.image_id;
        out += '\n';
        out += std::to_string(rec.faces.size());
        out += '\n';
        for (const auto& f : rec.faces) {
            out += format_fixed(f.major_radius) + " " + format_fixed(f.minor_radius) + " " +
                   format_fixed(f.angle) + " " + format_fixed(f.center_x) + " " +
                   format_fixed(f.center_y) + " 1\n";
        }
    }
    return out;
}

std::vector<DetectionRecord> parse_detection_file(const std::string& content) {
    LineReader reader(content);
    std::vector<DetectionRecord> out;
    std::string line;
    while (reader.next(line)) {
        const std::string id = trim(line);
        if (id.empty()) continue;

        DetectionRecord rec;
        rec.image_id = id;
        if (!reader.next(line))
            throw ParseError(reader.line_number() + 1, "missing detection count");
        const long long count = parse_count(line, reader.line_number(), "detection count");
        for (long long i = 0; i < count; ++i) {
            if (!reader.next(line))
                throw ParseError(reader.line_number() + 1, "truncated detection block");
            const auto fields = split_ws(line);
            if (fields.size() != 5)
                throw ParseError(reader.line_number(), "expected 5 fields per detection line");
            const std::size_t ln = reader.line_number();
            const double x = parse_field(fields[0], ln, "x");
            const double y = parse_field(fields[1], ln, "y");
            const double w = parse_field(fields[2], ln, "width");
            const double h = parse_field(fields[3], ln, "height");
            const double score = parse_field(fields[4], ln, "score");
            try {
                rec.detections.push_back({Box(x, y, x + w, y + h), score});
            } catch (const std::invalid_argument& e) {
                throw ParseError(ln, e.what());
            }
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::string write_detection_file(std::vector<DetectionRecord> records) {
    std::string out;
    for (auto& rec : records) {
        std::stable_sort(rec.detections.begin(), rec.detections.end(),
                         [](const Detection& a, const Detection& b) { return a.score > b.score; });
        out += rec.image_id;
        out += '\n';
        out += std::to_string(rec.detections.size());
        out += '\n';
        for (const auto& d : rec.detections) {
            out += format_fixed(d.box.x_min) + " " + format_fixed(d.box.y_min) + " " +
                   format_fixed(d.box.width()) + " " + format_fixed(d.box.height()) + " " +
                   format_fixed(d.score) + "\n";
        }
    }
    return out;
}

std::vector<ManifestEntry> parse_manifest(const std::string& content) {
    LineReader reader(content);
    std::vector<ManifestEntry> out;
    std::string line;
    while (reader.next(line)) {
        if (trim(line).empty()) continue;
        const auto fields = split_ws(line);
        if (fields.size() != 3)
            throw ParseError(reader.line_number(), "expected 'image_id width height'");
        long long w = 0, h = 0;
        if (!to_int(fields[1], w) || !to_int(fields[2], h) || w <= 0 || h <= 0)
            throw ParseError(reader.line_number(), "width and height must be positive integers");
        out.push_back({fields[0], static_cast<int>(w), static_cast<int>(h)});
    }
    return out;
}

std::string write_manifest(const std::vector<ManifestEntry>& entries) {
    std::string out;
    for (const auto& e : entries)
        out += e.image_id + " " + std::to_string(e.width) + " " + std::to_string(e.height) + "\n";
    return out;
}

std::vector<std::string> parse_fold_list(const std::string& content) {
    LineReader reader(content);
    std::vector<std::string> ids;
    std::string line;
    while (reader.next(line)) {
        const std::string id = trim(line);
        if (!id.empty()) ids.push_back(id);
    }
    return ids;
}

std::string write_fold_list(const std::vector<std::string>& image_ids) {
    std::string out;
    for (const auto& id : image_ids) out += id + "\n";
    return out;
}

std::vector<ImageRecord> merge_manifest(std::vector<ImageRecord> records,
                                        const std::vector<ManifestEntry>& manifest) {
    std::map<std::string, std::pair<int, int>> dims;
    for (const auto& e : manifest) dims[e.image_id] = {e.width, e.height};
    for (auto& rec : records) {
        const auto it = dims.find(rec.image_id);
        if (it == dims.end())
            throw std::runtime_error("manifest has no entry for image " + rec.image_id);
        rec.width = it->second.first;
        rec.height = it->second.second;
        // annotations may poke past the borders a little, but not wildly
        for (const auto& f : rec.faces) {
            if (f.center_x < -rec.width || f.center_x > 2.0 * rec.width ||
                f.center_y < -rec.height || f.center_y > 2.0 * rec.height)
                throw std::runtime_error("annotation far outside image " + rec.image_id);
        }
    }
    return records;
}

std::pair<ImageRecord, double> rescale_record(const ImageRecord& r, double target_shorter_side) {
    if (r.width <= 0 || r.height <= 0)
        throw std::invalid_argument("rescale_record: record has no dimensions");
    if (!(target_shorter_side > 0.0))
        throw std::invalid_argument("rescale_record: target must be positive");
    const double scale = target_shorter_side / std::min(r.width, r.height);
    ImageRecord out = r;
    out.width = static_cast<int>(std::llround(r.width * scale));
    out.height = static_cast<int>(std::llround(r.height * scale));
    for (auto& f : out.faces)
        f = Ellipse(f.center_x * scale, f.center_y * scale, f.major_radius * scale,
                    f.minor_radius * scale, f.angle);
    return {std::move(out), scale};
}

std::vector<Fold> split_folds(const std::vector<ImageRecord>& records, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("split_folds: k must be at least 2");
    if (records.empty()) throw std::invalid_argument("split_folds: no records");
    if (static_cast<std::size_t>(k) > records.size())
        throw std::invalid_argument("split_folds: k exceeds record count");

    std::set<std::string> seen;
    for (const auto& r : records)
        if (!seen.insert(r.image_id).second)
            throw std::invalid_argument("split_folds: duplicate image_id " + r.image_id);

    std::vector<Fold> folds(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) folds[static_cast<std::size_t>(i)].fold_index = i + 1;

    const std::size_t with_preset = static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(),
                      [](const ImageRecord& r) { return r.preset_fold.has_value(); }));
    if (with_preset == records.size()) {
        for (const auto& r : records) {
            const int f = *r.preset_fold;
            if (f < 1 || f > k)
                throw std::invalid_argument("split_folds: preset fold out of range for " +
                                            r.image_id);
            folds[static_cast<std::size_t>(f - 1)].records.push_back(r);
        }
        return folds;
    }
    if (with_preset != 0)
        throw std::invalid_argument("split_folds: records mix preset and unset folds");

    std::vector<std::size_t> perm(records.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    detail::SplitMix64 rng(seed);
    detail::shuffle(perm, rng);
    for (std::size_t i = 0; i < perm.size(); ++i)
        folds[i % static_cast<std::size_t>(k)].records.push_back(records[perm[i]]);
    return folds;
}

std::vector<Box> face_boxes(const ImageRecord& r) {
    std::vector<Box> out;
    out.reserve(r.faces.size());
    for (const auto& f : r.faces) out.push_back(ellipse_bounding_box(f));
    return out;
}

}  // namespace hardmine
