#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mvpl/tensorlab/tensor.hpp"

namespace mvpl::views {

using tensorlab::Shape;
using tensorlab::Tensor;

inline constexpr double kMaxPixel = 255.0;

/// T x H x W x C frames with values in [0, 255].
struct VideoClip {
    Tensor frames;
    std::uint64_t id = 0;
    std::uint32_t stride = 1;

    std::size_t frames_count() const { return frames.dim(0); }
    std::size_t height() const { return frames.dim(1); }
    std::size_t width() const { return frames.dim(2); }
    std::size_t channels() const { return frames.dim(3); }

    double at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
        return frames[((t * height() + y) * width() + x) * channels() + c];
    }
    double& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
        return frames[((t * height() + y) * width() + x) * channels() + c];
    }
};

/// (T-1) x H x W x 2 displacements in pixels per frame step; channel 0 is
/// horizontal (+x to the right), channel 1 vertical (+y downwards).
struct FlowField {
    Tensor displacements;
};

/// Raw frame differences V_{t+1} - V_t in [-255, 255]; the last frame is zero.
struct TemporalGradientClip {
    Tensor raw;
};

enum class ViewKind { rgb = 0, flow = 1, tg = 2 };
inline constexpr std::array<ViewKind, 3> kAllViews{ViewKind::rgb, ViewKind::flow, ViewKind::tg};

inline std::string_view view_name(ViewKind v) {
    switch (v) {
        case ViewKind::rgb: return "rgb";
        case ViewKind::flow: return "flow";
        case ViewKind::tg: return "tg";
    }
    return "?";
}

inline ViewKind parse_view(std::string_view name) {
    for (ViewKind v : kAllViews)
        if (view_name(v) == name) return v;
    throw std::invalid_argument("unknown view '" + std::string(name) + "' (expected rgb, flow or tg)");
}

/// The three aligned views of one clip, each T x H x W x 3 in [0, 255].
struct ViewSet {
    VideoClip rgb;
    VideoClip flow;
    VideoClip tg;

    const VideoClip& view(ViewKind v) const {
        switch (v) {
            case ViewKind::rgb: return rgb;
            case ViewKind::flow: return flow;
            case ViewKind::tg: return tg;
        }
        throw std::logic_error("bad view kind");
    }
    VideoClip& view(ViewKind v) { return const_cast<VideoClip&>(std::as_const(*this).view(v)); }
};

struct FlowParams {
    double alpha = 15.0;
    std::size_t iterations = 100;
    std::size_t levels = 3;
    std::size_t min_level_side = 8;
};

inline void check_clip(const VideoClip& clip, std::string_view op, std::size_t min_frames) {
    const Tensor& f = clip.frames;
    if (f.rank() != 4) throw std::invalid_argument(std::string(op) + ": clip must be T x H x W x C");
    if (f.dim(0) < min_frames) {
        throw std::invalid_argument(std::string(op) + ": needs at least " + std::to_string(min_frames) +
                                    " frames, got " + std::to_string(f.dim(0)));
    }
    for (double v : f.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite pixel value");
        if (v < 0.0 || v > kMaxPixel) throw std::invalid_argument(std::string(op) + ": pixel value outside [0, 255]");
    }
}

inline bool in_pixel_range(const VideoClip& clip) {
    return std::all_of(clip.frames.values().begin(), clip.frames.values().end(),
                       [](double v) { return v >= 0.0 && v <= kMaxPixel; });
}

// ---------------------------------------------------------------------------
// Horn-Schunck optical flow, coarse to fine.

namespace detail {

struct Plane {
    std::size_t h = 0, w = 0;
    std::vector<double> v;

    Plane() = default;
    Plane(std::size_t h_, std::size_t w_, double fill = 0.0) : h(h_), w(w_), v(h_ * w_, fill) {}

    double& operator()(std::size_t y, std::size_t x) { return v[y * w + x]; }
    double operator()(std::size_t y, std::size_t x) const { return v[y * w + x]; }

    double clamped(std::ptrdiff_t y, std::ptrdiff_t x) const {
        y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(h) - 1);
        x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(w) - 1);
        return v[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
    }

    // Bilinear sample at (y, x) with edge replication.
    double sample(double y, double x) const {
        y = std::clamp(y, 0.0, static_cast<double>(h - 1));
        x = std::clamp(x, 0.0, static_cast<double>(w - 1));
        const auto y0 = static_cast<std::ptrdiff_t>(std::floor(y));
        const auto x0 = static_cast<std::ptrdiff_t>(std::floor(x));
        const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
        return (1 - fy) * ((1 - fx) * clamped(y0, x0) + fx * clamped(y0, x0 + 1)) +
               fy * ((1 - fx) * clamped(y0 + 1, x0) + fx * clamped(y0 + 1, x0 + 1));
    }
};

inline Plane luma(const VideoClip& clip, std::size_t t) {
    Plane p(clip.height(), clip.width());
    for (std::size_t y = 0; y < p.h; ++y)
        for (std::size_t x = 0; x < p.w; ++x)
            p(y, x) = 0.299 * clip.at(t, y, x, 0) + 0.587 * clip.at(t, y, x, 1) + 0.114 * clip.at(t, y, x, 2);
    return p;
}

inline Plane downsample(const Plane& src) {
    Plane dst(src.h / 2, src.w / 2);
    for (std::size_t y = 0; y < dst.h; ++y)
        for (std::size_t x = 0; x < dst.w; ++x)
            dst(y, x) = 0.25 * (src(2 * y, 2 * x) + src(2 * y + 1, 2 * x) + src(2 * y, 2 * x + 1) +
                                src(2 * y + 1, 2 * x + 1));
    return dst;
}

// Resamples a flow component onto an (h, w) grid (pixel centers aligned)
// and rescales it by `gain` so displacements stay in target pixel units.
inline Plane resize_flow(const Plane& src, std::size_t h, std::size_t w, double gain) {
    Plane dst(h, w);
    const double sy = static_cast<double>(src.h) / static_cast<double>(h);
    const double sx = static_cast<double>(src.w) / static_cast<double>(w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            dst(y, x) = gain * src.sample((static_cast<double>(y) + 0.5) * sy - 0.5,
                                          (static_cast<double>(x) + 0.5) * sx - 0.5);
    return dst;
}

inline void refine_level(const Plane& i1, const Plane& i2, Plane& u, Plane& v, const FlowParams& p) {
    const std::size_t h = i1.h, w = i1.w;
    Plane warped(h, w), ix(h, w), iy(h, w), it(h, w), inside(h, w, 1.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double sy = static_cast<double>(y) + v(y, x), sx = static_cast<double>(x) + u(y, x);
            warped(y, x) = i2.sample(sy, sx);
            // no brightness evidence where the warp leaves the frame
            if (sy < 0.0 || sx < 0.0 || sy > static_cast<double>(h - 1) || sx > static_cast<double>(w - 1))
                inside(y, x) = 0.0;
        }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const auto sy = static_cast<std::ptrdiff_t>(y), sx = static_cast<std::ptrdiff_t>(x);
            ix(y, x) = 0.25 * (i1.clamped(sy, sx + 1) - i1.clamped(sy, sx - 1) + warped.clamped(sy, sx + 1) -
                               warped.clamped(sy, sx - 1));
            iy(y, x) = 0.25 * (i1.clamped(sy + 1, sx) - i1.clamped(sy - 1, sx) + warped.clamped(sy + 1, sx) -
                               warped.clamped(sy - 1, sx));
            it(y, x) = warped(y, x) - i1(y, x);
            ix(y, x) *= inside(y, x);
            iy(y, x) *= inside(y, x);
            it(y, x) *= inside(y, x);
        }

    const double a2 = p.alpha * p.alpha;
    const Plane u0 = u, v0 = v;
    Plane un(h, w), vn(h, w);
    for (std::size_t k = 0; k < p.iterations; ++k) {
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const auto sy = static_cast<std::ptrdiff_t>(y), sx = static_cast<std::ptrdiff_t>(x);
                const double ub = 0.25 * (u.clamped(sy - 1, sx) + u.clamped(sy + 1, sx) + u.clamped(sy, sx - 1) +
                                          u.clamped(sy, sx + 1));
                const double vb = 0.25 * (v.clamped(sy - 1, sx) + v.clamped(sy + 1, sx) + v.clamped(sy, sx - 1) +
                                          v.clamped(sy, sx + 1));
                const double gx = ix(y, x), gy = iy(y, x);
                const double r = gx * (ub - u0(y, x)) + gy * (vb - v0(y, x)) + it(y, x);
                const double d = a2 + gx * gx + gy * gy;
                un(y, x) = ub - gx * r / d;
                vn(y, x) = vb - gy * r / d;
            }
        std::swap(u.v, un.v);
        std::swap(v.v, vn.v);
    }
}

}  // namespace detail

/// Dense flow between consecutive frames. Minimizes the Horn-Schunck energy
/// (brightness-constancy residual plus alpha^2 * smoothness) with Jacobi
/// sweeps on a pyramid, warping the second frame by the upsampled coarse
/// estimate at each finer level. Works on luma.
inline FlowField estimate_flow(const VideoClip& clip, const FlowParams& params = {}) {
    check_clip(clip, "estimate_flow", 2);
    if (clip.channels() != 3) throw std::invalid_argument("estimate_flow: expected 3 channels");
    if (!(params.alpha > 0.0) || params.levels == 0) throw std::invalid_argument("estimate_flow: bad parameters");
    const std::size_t t_count = clip.frames_count(), h = clip.height(), w = clip.width();
    const double bound = static_cast<double>(std::max(h, w));

    std::size_t levels = 1;
    while (levels < params.levels && std::min(h, w) >> levels >= params.min_level_side) ++levels;

    FlowField out{Tensor({t_count - 1, h, w, 2})};
    detail::Plane next = detail::luma(clip, 0);
    for (std::size_t t = 0; t + 1 < t_count; ++t) {
        std::vector<detail::Plane> pyr1{next}, pyr2{detail::luma(clip, t + 1)};
        next = pyr2.front();
        for (std::size_t l = 1; l < levels; ++l) {
            pyr1.push_back(detail::downsample(pyr1.back()));
            pyr2.push_back(detail::downsample(pyr2.back()));
        }
        detail::Plane u(pyr1.back().h, pyr1.back().w), v(pyr1.back().h, pyr1.back().w);
        for (std::size_t l = levels; l-- > 0;) {
            const detail::Plane& a = pyr1[l];
            if (u.h != a.h || u.w != a.w) {
                const double gy = static_cast<double>(a.h) / static_cast<double>(u.h);
                const double gx = static_cast<double>(a.w) / static_cast<double>(u.w);
                u = detail::resize_flow(u, a.h, a.w, gx);
                v = detail::resize_flow(v, a.h, a.w, gy);
            }
            detail::refine_level(a, pyr2[l], u, v, params);
        }
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t o = ((t * h + y) * w + x) * 2;
                out.displacements[o] = std::clamp(u(y, x), -bound, bound);
                out.displacements[o + 1] = std::clamp(v(y, x), -bound, bound);
            }
    }
    if (!out.displacements.all_finite()) throw std::runtime_error("estimate_flow: solver diverged");
    return out;
}

/// Converts flow to a 3-channel clip in [0, 255]: channels 0/1 map each
/// component d to (d / D + 1) * 127.5 with D the clip-wide max |component|,
/// channel 2 maps the magnitude m to m / M * 255 with M the clip-wide max
/// magnitude (both floored at 1e-6). The last flow frame is repeated so the
/// view has as many frames as the source clip.
inline VideoClip flow_to_view(const FlowField& flow, std::uint64_t id = 0) {
    const Tensor& d = flow.displacements;
    if (d.rank() != 4 || d.dim(3) != 2) throw std::invalid_argument("flow_to_view: flow must be (T-1) x H x W x 2");
    if (!d.all_finite()) throw std::invalid_argument("flow_to_view: non-finite flow");
    const std::size_t pairs = d.dim(0), h = d.dim(1), w = d.dim(2);
    double max_comp = 1e-6, max_mag = 1e-6;
    for (std::size_t i = 0; i < d.size(); i += 2) {
        max_comp = std::max({max_comp, std::abs(d[i]), std::abs(d[i + 1])});
        max_mag = std::max(max_mag, std::hypot(d[i], d[i + 1]));
    }
    VideoClip out{Tensor({pairs + 1, h, w, 3}), id, 1};
    for (std::size_t t = 0; t <= pairs; ++t) {
        const std::size_t src_t = std::min(t, pairs - 1);
        for (std::size_t p = 0; p < h * w; ++p) {
            const double du = d[(src_t * h * w + p) * 2], dv = d[(src_t * h * w + p) * 2 + 1];
            double* px = out.frames.data() + (t * h * w + p) * 3;
            px[0] = std::clamp((du / max_comp + 1.0) * 127.5, 0.0, kMaxPixel);
            px[1] = std::clamp((dv / max_comp + 1.0) * 127.5, 0.0, kMaxPixel);
            px[2] = std::clamp(std::hypot(du, dv) / max_mag * kMaxPixel, 0.0, kMaxPixel);
        }
    }
    return out;
}

inline TemporalGradientClip temporal_gradients(const VideoClip& clip) {
    check_clip(clip, "temporal_gradients", 2);
    const std::size_t t_count = clip.frames_count();
    const std::size_t frame = clip.frames.size() / t_count;
    TemporalGradientClip g{Tensor(clip.frames.shape(), 0.0)};
    for (std::size_t t = 0; t + 1 < t_count; ++t)
        for (std::size_t i = 0; i < frame; ++i)
            g.raw[t * frame + i] = clip.frames[(t + 1) * frame + i] - clip.frames[t * frame + i];
    return g;
}

/// (g + 255) / 2, so raw = 2 * view - 255.
inline VideoClip tg_to_view(const TemporalGradientClip& tg, std::uint64_t id = 0) {
    VideoClip out{tg.raw, id, 1};
    for (double& v : out.frames.values()) v = (v + kMaxPixel) / 2.0;
    return out;
}

inline ViewSet build_viewset(const VideoClip& clip, const FlowParams& flow_params = {}) {
    check_clip(clip, "build_viewset", 2);
    ViewSet vs{clip, flow_to_view(estimate_flow(clip, flow_params), clip.id), tg_to_view(temporal_gradients(clip), clip.id)};
    vs.flow.stride = vs.tg.stride = clip.stride;
    return vs;
}

}  // namespace mvpl::views
