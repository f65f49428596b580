#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mvpl/rng.hpp"
#include "mvpl/views.hpp"

namespace mvpl::augment {

using tensorlab::Shape;
using tensorlab::Tensor;
using views::VideoClip;
using views::ViewSet;

inline constexpr double kFill = 127.5;

enum class AugmentKind { none, weak, strong };

inline std::string_view kind_name(AugmentKind k) {
    switch (k) {
        case AugmentKind::none: return "none";
        case AugmentKind::weak: return "weak";
        case AugmentKind::strong: return "strong";
    }
    return "?";
}

inline AugmentKind parse_kind(std::string_view s) {
    for (AugmentKind k : {AugmentKind::none, AugmentKind::weak, AugmentKind::strong})
        if (kind_name(k) == s) return k;
    throw std::invalid_argument("unknown augmentation kind '" + std::string(s) + "'");
}

struct AugmentationPolicy {
    AugmentKind kind = AugmentKind::weak;
    std::uint64_t seed = 0;
    std::size_t crop_h = 0;  // 0 keeps the input extent
    std::size_t crop_w = 0;
    double scale_min = 1.14;
    double scale_max = 1.43;
    double flip_prob = 0.5;
    int ops_per_sample = 2;
    int magnitude_min = 1;
    int magnitude_max = 10;
    double cutout_ratio = 0.57;
};

enum class StrongOp {
    rotate,
    translate_x,
    translate_y,
    shear_x,
    shear_y,
    contrast,
    brightness,
    sharpness,
    posterize,
    solarize
};

inline constexpr std::array<StrongOp, 10> kStrongOps{
    StrongOp::rotate,   StrongOp::translate_x, StrongOp::translate_y, StrongOp::shear_x,   StrongOp::shear_y,
    StrongOp::contrast, StrongOp::brightness,  StrongOp::sharpness,   StrongOp::posterize, StrongOp::solarize};

inline std::string_view op_name(StrongOp op) {
    switch (op) {
        case StrongOp::rotate: return "rotate";
        case StrongOp::translate_x: return "translate_x";
        case StrongOp::translate_y: return "translate_y";
        case StrongOp::shear_x: return "shear_x";
        case StrongOp::shear_y: return "shear_y";
        case StrongOp::contrast: return "contrast";
        case StrongOp::brightness: return "brightness";
        case StrongOp::sharpness: return "sharpness";
        case StrongOp::posterize: return "posterize";
        case StrongOp::solarize: return "solarize";
    }
    return "?";
}

inline bool is_geometric(StrongOp op) {
    return op == StrongOp::rotate || op == StrongOp::translate_x || op == StrongOp::translate_y ||
           op == StrongOp::shear_x || op == StrongOp::shear_y;
}

/// One drawn op. `value` is in the op's own unit: degrees, pixels, shear
/// coefficient, enhancement factor, kept bits or solarize threshold.
struct OpParams {
    StrongOp op = StrongOp::rotate;
    int magnitude = 0;
    double value = 0.0;
    bool operator==(const OpParams&) const = default;
};

/// Signed magnitude map, linear in magnitude / 10.
inline double op_value(StrongOp op, int magnitude, bool negate, std::size_t side) {
    const double m = static_cast<double>(magnitude) / 10.0;
    const double sign = negate ? -1.0 : 1.0;
    switch (op) {
        case StrongOp::rotate: return sign * 30.0 * m;
        case StrongOp::translate_x:
        case StrongOp::translate_y: return sign * 0.3 * static_cast<double>(side) * m;
        case StrongOp::shear_x:
        case StrongOp::shear_y: return sign * 0.3 * m;
        case StrongOp::contrast:
        case StrongOp::brightness:
        case StrongOp::sharpness: return 1.0 + sign * 0.9 * m;
        case StrongOp::posterize: return 8.0 - std::round(4.0 * m);
        case StrongOp::solarize: return 255.0 * (1.0 - m);
    }
    return 0.0;
}

struct GeometryParams {
    bool flip = false;
    double scale = 1.0;  // resized shorter side / crop shorter side
    std::size_t resized_h = 0, resized_w = 0;
    std::size_t top = 0, left = 0;
    std::size_t out_h = 0, out_w = 0;
    bool operator==(const GeometryParams&) const = default;
};

struct CutoutParams {
    std::size_t top = 0, left = 0, side = 0;
    bool operator==(const CutoutParams&) const = default;
};

/// Everything applied to one frame.
struct FrameTransform {
    std::optional<GeometryParams> geometry;
    std::vector<OpParams> ops;
    std::optional<CutoutParams> cutout;
    bool operator==(const FrameTransform&) const = default;
};

/// Per-frame record of what was applied; every entry is equal for a
/// temporally consistent transform.
struct AugmentRecord {
    std::vector<FrameTransform> frames;

    bool temporally_consistent() const {
        return std::all_of(frames.begin(), frames.end(), [&](const FrameTransform& f) { return f == frames.front(); });
    }
};

struct Augmented {
    VideoClip clip;
    AugmentRecord record;
};

namespace detail {

inline void check_target(const AugmentationPolicy& p, std::size_t h, std::size_t w) {
    const std::size_t ch = p.crop_h ? p.crop_h : h, cw = p.crop_w ? p.crop_w : w;
    if (ch > h || cw > w) {
        throw std::invalid_argument("augment: crop target " + std::to_string(ch) + "x" + std::to_string(cw) +
                                    " larger than input " + std::to_string(h) + "x" + std::to_string(w));
    }
    if (!(p.scale_min >= 1.0 && p.scale_max >= p.scale_min))
        throw std::invalid_argument("augment: scale range must satisfy 1 <= min <= max");
    if (p.ops_per_sample < 0 || p.magnitude_min < 0 || p.magnitude_max > 10 || p.magnitude_min > p.magnitude_max)
        throw std::invalid_argument("augment: ops per sample must be >= 0 and magnitudes within [0, 10]");
    if (!(p.cutout_ratio >= 0.0 && p.cutout_ratio <= 1.0))
        throw std::invalid_argument("augment: cutout ratio must lie in [0, 1]");
}

// A single H x W x C frame with bilinear reads; reads outside the frame give `kFill`.
struct Frame {
    std::size_t h, w, c;
    std::vector<double> v;

    double at(std::size_t y, std::size_t x, std::size_t k) const { return v[(y * w + x) * c + k]; }

    double clamped(long y, long x, std::size_t k) const {
        y = std::clamp<long>(y, 0, static_cast<long>(h) - 1);
        x = std::clamp<long>(x, 0, static_cast<long>(w) - 1);
        return at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), k);
    }

    double bilinear(double y, double x, std::size_t k) const {
        const double y0 = std::floor(y), x0 = std::floor(x);
        const double fy = y - y0, fx = x - x0;
        const long iy = static_cast<long>(y0), ix = static_cast<long>(x0);
        const double top = (1.0 - fx) * clamped(iy, ix, k) + fx * clamped(iy, ix + 1, k);
        const double bottom = (1.0 - fx) * clamped(iy + 1, ix, k) + fx * clamped(iy + 1, ix + 1, k);
        return (1.0 - fy) * top + fy * bottom;
    }

    double sample_or_fill(double y, double x, std::size_t k) const {
        constexpr double slack = 1e-9;
        if (y < -slack || x < -slack || y > static_cast<double>(h - 1) + slack ||
            x > static_cast<double>(w - 1) + slack)
            return kFill;
        return bilinear(std::clamp(y, 0.0, static_cast<double>(h - 1)),
                        std::clamp(x, 0.0, static_cast<double>(w - 1)), k);
    }
};

inline Frame extract(const VideoClip& clip, std::size_t t) {
    const std::size_t n = clip.height() * clip.width() * clip.channels();
    Frame f{clip.height(), clip.width(), clip.channels(), {}};
    f.v.assign(clip.frames.data() + t * n, clip.frames.data() + (t + 1) * n);
    return f;
}

inline Frame apply_geometry(const Frame& in, const GeometryParams& g) {
    Frame out{g.out_h, g.out_w, in.c, std::vector<double>(g.out_h * g.out_w * in.c)};
    const double ry = static_cast<double>(in.h) / static_cast<double>(g.resized_h);
    const double rx = static_cast<double>(in.w) / static_cast<double>(g.resized_w);
    for (std::size_t y = 0; y < g.out_h; ++y) {
        const double sy = std::clamp((static_cast<double>(y + g.top) + 0.5) * ry - 0.5, 0.0,
                                     static_cast<double>(in.h - 1));
        for (std::size_t x = 0; x < g.out_w; ++x) {
            double sx = std::clamp((static_cast<double>(x + g.left) + 0.5) * rx - 0.5, 0.0,
                                   static_cast<double>(in.w - 1));
            if (g.flip) sx = static_cast<double>(in.w - 1) - sx;
            for (std::size_t k = 0; k < in.c; ++k) out.v[(y * g.out_w + x) * in.c + k] = in.bilinear(sy, sx, k);
        }
    }
    return out;
}

// Inverse-mapped affine op about the frame centre.
inline Frame apply_affine(const Frame& in, const OpParams& p) {
    Frame out{in.h, in.w, in.c, std::vector<double>(in.v.size())};
    const double cy = 0.5 * static_cast<double>(in.h - 1), cx = 0.5 * static_cast<double>(in.w - 1);
    const double rad = p.value * std::numbers::pi / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    for (std::size_t y = 0; y < in.h; ++y)
        for (std::size_t x = 0; x < in.w; ++x) {
            const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
            double sy = dy, sx = dx;
            switch (p.op) {
                case StrongOp::rotate:  // counter-clockwise on screen
                    sx = cs * dx - sn * dy;
                    sy = sn * dx + cs * dy;
                    break;
                case StrongOp::translate_x: sx = dx - p.value; break;
                case StrongOp::translate_y: sy = dy - p.value; break;
                case StrongOp::shear_x: sx = dx - p.value * dy; break;
                case StrongOp::shear_y: sy = dy - p.value * dx; break;
                default: break;
            }
            for (std::size_t k = 0; k < in.c; ++k)
                out.v[(y * in.w + x) * in.c + k] = in.sample_or_fill(sy + cy, sx + cx, k);
        }
    return out;
}

inline double clip_pixel(double v) { return std::clamp(v, 0.0, 255.0); }

// `reference` is the clip-wide mean luma, so contrast is identical on every frame.
inline Frame apply_photometric(const Frame& in, const OpParams& p, double reference) {
    Frame out = in;
    switch (p.op) {
        case StrongOp::contrast:
            for (double& v : out.v) v = clip_pixel(reference + p.value * (v - reference));
            break;
        case StrongOp::brightness:
            for (double& v : out.v) v = clip_pixel(p.value * v);
            break;
        case StrongOp::sharpness: {
            // 3x3 smoothing kernel (centre weight 5, total 13); the border row/column keeps its value
            for (std::size_t y = 1; y + 1 < in.h; ++y)
                for (std::size_t x = 1; x + 1 < in.w; ++x)
                    for (std::size_t k = 0; k < in.c; ++k) {
                        double s = 4.0 * in.at(y, x, k);
                        for (int oy = -1; oy <= 1; ++oy)
                            for (int ox = -1; ox <= 1; ++ox) s += in.at(y + oy, x + ox, k);
                        s /= 13.0;
                        out.v[(y * in.w + x) * in.c + k] = clip_pixel(s + p.value * (in.at(y, x, k) - s));
                    }
            break;
        }
        case StrongOp::posterize: {
            const double q = std::ldexp(1.0, 8 - static_cast<int>(p.value));
            for (double& v : out.v) v = std::min(255.0, std::floor(v / q) * q);
            break;
        }
        case StrongOp::solarize:
            for (double& v : out.v)
                if (v >= p.value) v = 255.0 - v;
            break;
        default: break;
    }
    return out;
}

inline void apply_cutout(Frame& f, const CutoutParams& c) {
    for (std::size_t y = c.top; y < c.top + c.side; ++y)
        for (std::size_t x = c.left; x < c.left + c.side; ++x)
            for (std::size_t k = 0; k < f.c; ++k) f.v[(y * f.w + x) * f.c + k] = kFill;
}

inline double mean_luma(const VideoClip& clip) {
    if (clip.channels() != 3) {
        double s = 0.0;
        for (double v : clip.frames.values()) s += v;
        return s / static_cast<double>(clip.frames.size());
    }
    double s = 0.0;
    const std::size_t n = clip.frames.size() / 3;
    for (std::size_t i = 0; i < n; ++i)
        s += 0.299 * clip.frames[3 * i] + 0.587 * clip.frames[3 * i + 1] + 0.114 * clip.frames[3 * i + 2];
    return s / static_cast<double>(n);
}

inline std::uint64_t stream_seed(const AugmentationPolicy& p, std::string_view branch, std::uint64_t clip_id,
                                 std::uint64_t step) {
    return derive_seed(p.seed, branch, {clip_id, step});
}

}  // namespace detail

/// Draws flip and resized-crop parameters for an H x W input.
inline GeometryParams draw_geometry(const AugmentationPolicy& p, Rng& rng, std::size_t h, std::size_t w) {
    detail::check_target(p, h, w);
    GeometryParams g;
    g.out_h = p.crop_h ? p.crop_h : h;
    g.out_w = p.crop_w ? p.crop_w : w;
    g.flip = rng.bernoulli(p.flip_prob);
    g.scale = rng.uniform(p.scale_min, p.scale_max);
    const double r = g.scale * static_cast<double>(std::min(g.out_h, g.out_w)) / static_cast<double>(std::min(h, w));
    g.resized_h = std::max(g.out_h, static_cast<std::size_t>(std::lround(static_cast<double>(h) * r)));
    g.resized_w = std::max(g.out_w, static_cast<std::size_t>(std::lround(static_cast<double>(w) * r)));
    g.top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(g.resized_h - g.out_h)));
    g.left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(g.resized_w - g.out_w)));
    return g;
}

/// Geometry for a fixed scale and a centred crop; used by evaluation and tests.
inline GeometryParams centered_geometry(std::size_t h, std::size_t w, std::size_t out_h, std::size_t out_w,
                                        double scale, bool flip = false) {
    AugmentationPolicy p;
    p.crop_h = out_h;
    p.crop_w = out_w;
    detail::check_target(p, h, w);
    GeometryParams g;
    g.flip = flip;
    g.scale = scale;
    g.out_h = out_h;
    g.out_w = out_w;
    const double r = scale * static_cast<double>(std::min(out_h, out_w)) / static_cast<double>(std::min(h, w));
    g.resized_h = std::max(out_h, static_cast<std::size_t>(std::lround(static_cast<double>(h) * r)));
    g.resized_w = std::max(out_w, static_cast<std::size_t>(std::lround(static_cast<double>(w) * r)));
    g.top = (g.resized_h - out_h) / 2;
    g.left = (g.resized_w - out_w) / 2;
    return g;
}

inline std::vector<OpParams> draw_ops(const AugmentationPolicy& p, Rng& rng, std::size_t side) {
    std::vector<OpParams> ops;
    for (int i = 0; i < p.ops_per_sample; ++i) {
        const StrongOp op = kStrongOps[static_cast<std::size_t>(rng.uniform_int(0, kStrongOps.size() - 1))];
        const int m = static_cast<int>(rng.uniform_int(p.magnitude_min, p.magnitude_max));
        const bool negate = rng.bernoulli(0.5);
        ops.push_back({op, m, op_value(op, m, negate, side)});
    }
    return ops;
}

inline CutoutParams draw_cutout(const AugmentationPolicy& p, Rng& rng, std::size_t h, std::size_t w) {
    CutoutParams c;
    c.side = std::min<std::size_t>(std::min(h, w),
                                   static_cast<std::size_t>(std::ceil(p.cutout_ratio * static_cast<double>(std::min(h, w)))));
    c.top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(h - c.side)));
    c.left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(w - c.side)));
    return c;
}

/// Draws the complete transform for a policy; the same transform may be
/// applied to several aligned views.
inline FrameTransform draw_transform(const AugmentationPolicy& p, Rng& rng, std::size_t h, std::size_t w) {
    FrameTransform t;
    if (p.kind == AugmentKind::none) return t;
    t.geometry = draw_geometry(p, rng, h, w);
    if (p.kind == AugmentKind::strong) {
        t.ops = draw_ops(p, rng, std::min(t.geometry->out_h, t.geometry->out_w));
        if (p.cutout_ratio > 0.0) t.cutout = draw_cutout(p, rng, t.geometry->out_h, t.geometry->out_w);
    }
    return t;
}

/// Applies one transform to every frame and records what each frame received.
inline Augmented apply_transform(const VideoClip& clip, const FrameTransform& t) {
    views::check_clip(clip, "augment", 1);
    const double reference = detail::mean_luma(clip);
    Augmented out;
    const std::size_t frames = clip.frames_count();
    std::vector<double> values;
    std::size_t h = clip.height(), w = clip.width();
    for (std::size_t f = 0; f < frames; ++f) {
        detail::Frame frame = detail::extract(clip, f);
        FrameTransform applied;
        if (t.geometry) {
            frame = detail::apply_geometry(frame, *t.geometry);
            applied.geometry = t.geometry;
        }
        for (const OpParams& op : t.ops) {
            frame = is_geometric(op.op) ? detail::apply_affine(frame, op)
                                        : detail::apply_photometric(frame, op, reference);
            applied.ops.push_back(op);
        }
        if (t.cutout) {
            detail::apply_cutout(frame, *t.cutout);
            applied.cutout = t.cutout;
        }
        h = frame.h;
        w = frame.w;
        values.insert(values.end(), frame.v.begin(), frame.v.end());
        out.record.frames.push_back(std::move(applied));
    }
    out.clip = VideoClip{Tensor({frames, h, w, clip.channels()}, std::move(values)), clip.id, clip.stride};
    return out;
}

inline Augmented augment_with_record(const VideoClip& clip, const AugmentationPolicy& p, std::uint64_t step = 0) {
    Rng rng(detail::stream_seed(p, kind_name(p.kind), clip.id, step));
    return apply_transform(clip, draw_transform(p, rng, clip.height(), clip.width()));
}

/// Flip with probability flip_prob, then random resized crop.
inline VideoClip weak_augment(const VideoClip& clip, const AugmentationPolicy& p, std::uint64_t step = 0) {
    AugmentationPolicy q = p;
    if (q.kind == AugmentKind::strong) q.kind = AugmentKind::weak;
    return augment_with_record(clip, q, step).clip;
}

/// Weak geometry, then ops_per_sample RandAugment ops, then one cutout square.
inline Augmented strong_augment(const VideoClip& clip, const AugmentationPolicy& p, std::uint64_t step = 0) {
    AugmentationPolicy q = p;
    q.kind = AugmentKind::strong;
    return augment_with_record(clip, q, step);
}

struct AugmentedViewSet {
    ViewSet views;
    FrameTransform transform;
};

/// One transform drawn per ViewSet and applied to each of its views; views
/// that were never computed (empty tensors) stay empty.
inline AugmentedViewSet augment_viewset(const ViewSet& vs, const AugmentationPolicy& p, std::string_view branch,
                                        std::uint64_t step = 0) {
    Rng rng(detail::stream_seed(p, branch, vs.rgb.id, step));
    AugmentedViewSet out;
    out.transform = draw_transform(p, rng, vs.rgb.height(), vs.rgb.width());
    auto run = [&](const VideoClip& v) { return v.frames.empty() ? v : apply_transform(v, out.transform).clip; };
    out.views.rgb = run(vs.rgb);
    out.views.flow = run(vs.flow);
    out.views.tg = run(vs.tg);
    return out;
}

struct PairedViewSets {
    AugmentedViewSet weak;
    AugmentedViewSet strong;
};

inline PairedViewSets paired_augment(const ViewSet& vs, const AugmentationPolicy& weak,
                                     const AugmentationPolicy& strong, std::uint64_t step = 0) {
    return {augment_viewset(vs, weak, "augment.pair.weak", step),
            augment_viewset(vs, strong, "augment.pair.strong", step)};
}

}  // namespace mvpl::augment
