#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace comwin {

/// Row-major 2D grid (H x W).
template <typename T>
struct Image {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Image() = default;
    Image(int h_, int w_, T fill = T{}) : h(h_), w(w_), v(static_cast<size_t>(h_) * w_, fill) {}

    T&       at(int y, int x)       { return v[static_cast<size_t>(y) * w + x]; }
    const T& at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
    size_t   size() const           { return v.size(); }

    bool same_shape(const Image& o) const { return h == o.h && w == o.w; }
    bool operator==(const Image& o) const { return h == o.h && w == o.w && v == o.v; }
};

/// Row-major 3D map (C x H x W), channel-major.
template <typename T>
struct ChwMap {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<T> v;

    ChwMap() = default;
    ChwMap(int c_, int h_, int w_, T fill = T{})
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

    T&       at(int ch, int y, int x)       { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
    const T& at(int ch, int y, int x) const { return v[(static_cast<size_t>(ch) * h + y) * w + x]; }
    size_t   plane() const                  { return static_cast<size_t>(h) * w; }
    size_t   size() const                   { return v.size(); }

    bool same_shape(const ChwMap& o) const { return c == o.c && h == o.h && w == o.w; }
};

using LabelMap = Image<uint8_t>;
using ProbMap  = ChwMap<float>;

/// Scale tags used by the two supervision heads.
enum class Scale { half, full };

inline const char* scale_name(Scale s) { return s == Scale::half ? "half" : "full"; }

}  // namespace comwin
