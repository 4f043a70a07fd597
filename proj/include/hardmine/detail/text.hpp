#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

namespace hardmine::detail {

// fixed-point text formatting used by all bulk file formats
inline std::string format_fixed(double v, int decimals = 6) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

// shortest representation that round-trips exactly (snapshots)
inline std::string format_full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool to_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

inline bool to_int(const std::string& s, long long& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return end == s.c_str() + s.size();
}

// Iterates "\n"-separated lines, tolerating "\r\n"; tracks 1-based numbers
// so parse errors can point at the offending line.
class LineReader {
public:
    explicit LineReader(const std::string& content) : text_(&content) {}

    bool next(std::string& line) {
        if (pos_ >= text_->size()) return false;
        const std::size_t nl = text_->find('\n', pos_);
        std::size_t end = (nl == std::string::npos) ? text_->size() : nl;
        std::size_t len = end - pos_;
        if (len > 0 && (*text_)[pos_ + len - 1] == '\r') --len;
        line.assign(*text_, pos_, len);
        pos_ = (nl == std::string::npos) ? text_->size() : nl + 1;
        ++line_no_;
        return true;
    }

    // number of the line most recently returned by next()
    std::size_t line_number() const { return line_no_; }

private:
    const std::string* text_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

}  // namespace hardmine::detail
