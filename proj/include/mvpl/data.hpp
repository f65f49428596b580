#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvpl/container.hpp"
#include "mvpl/rng.hpp"
#include "mvpl/views.hpp"

namespace mvpl::data {

using json = nlohmann::json;
using tensorlab::Shape;
using tensorlab::Tensor;
using views::VideoClip;
using views::ViewKind;
using views::ViewSet;

enum class Motion { left, right, up, down, clockwise, counterclockwise, expand, contract };

inline constexpr std::size_t kClasses = 8;
inline constexpr std::array<std::string_view, kClasses> kClassNames{
    "left", "right", "up", "down", "clockwise", "counterclockwise", "expand", "contract"};

struct MotionShapesSpec {
    std::size_t frames = 8, height = 32, width = 32;
    std::size_t min_shapes = 1, max_shapes = 2;
    double noise_sigma = 4.0;
    double speed_min = 0.75, speed_max = 1.5;      // px / frame
    double angular_min = 8.0, angular_max = 15.0;  // degrees / frame
    double growth_min = 0.04, growth_max = 0.07;   // relative size change / frame
    double size_min = 0.18, size_max = 0.3;        // half extent, fraction of the shorter side
    std::size_t eval_per_class = 10;

    void validate() const {
        auto fail = [](const std::string& m) { throw std::invalid_argument("motion shapes spec: " + m); };
        if (frames < 2 || height < 4 || width < 4) fail("need >= 2 frames and >= 4x4 pixels");
        if (min_shapes < 1 || max_shapes < min_shapes) fail("shape count range must satisfy 1 <= min <= max");
        if (!(noise_sigma >= 0.0)) fail("noise sigma must be >= 0");
        if (!(speed_min > 0.0 && speed_max >= speed_min)) fail("speed range must be positive and ordered");
        if (!(angular_min > 0.0 && angular_max >= angular_min)) fail("angular range must be positive and ordered");
        if (!(growth_min > 0.0 && growth_max >= growth_min && growth_max < 1.0))
            fail("growth range must be positive, ordered and below 1");
        if (!(size_min > 0.0 && size_max >= size_min && size_max <= 0.5)) fail("size range must lie in (0, 0.5]");
    }
};

inline void to_json(json& j, const MotionShapesSpec& s) {
    j = {{"frames", s.frames},         {"height", s.height},           {"width", s.width},
         {"min_shapes", s.min_shapes}, {"max_shapes", s.max_shapes},   {"noise_sigma", s.noise_sigma},
         {"speed_min", s.speed_min},   {"speed_max", s.speed_max},     {"angular_min", s.angular_min},
         {"angular_max", s.angular_max}, {"growth_min", s.growth_min}, {"growth_max", s.growth_max},
         {"size_min", s.size_min},     {"size_max", s.size_max},       {"eval_per_class", s.eval_per_class}};
}

inline void from_json(const json& j, MotionShapesSpec& s) {
    j.at("frames").get_to(s.frames);
    j.at("height").get_to(s.height);
    j.at("width").get_to(s.width);
    j.at("min_shapes").get_to(s.min_shapes);
    j.at("max_shapes").get_to(s.max_shapes);
    j.at("noise_sigma").get_to(s.noise_sigma);
    j.at("speed_min").get_to(s.speed_min);
    j.at("speed_max").get_to(s.speed_max);
    j.at("angular_min").get_to(s.angular_min);
    j.at("angular_max").get_to(s.angular_max);
    j.at("growth_min").get_to(s.growth_min);
    j.at("growth_max").get_to(s.growth_max);
    j.at("size_min").get_to(s.size_min);
    j.at("size_max").get_to(s.size_max);
    j.at("eval_per_class").get_to(s.eval_per_class);
}

enum class Split { train, eval };

struct ShapeInstance {
    int type = 0;  // 0 rectangle, 1 ellipse, 2 triangle
    double cx = 0, cy = 0, size = 1, aspect = 1, angle = 0;
    std::array<double, 3> color_a{}, color_b{};
};

struct ClipMotion {
    Motion motion = Motion::left;
    double u = 0, v = 0;  // translation, px / frame
    double omega = 0;     // rotation, degrees / frame, positive clockwise on screen
    double growth = 0;    // per-frame size factor minus one
    double background = 0;
    std::vector<ShapeInstance> shapes;
};

struct ClipRecord {
    std::uint64_t id = 0;
    std::size_t label = 0;
    Split split = Split::train;
    bool labeled = false;
    ClipMotion motion;
};

struct Dataset {
    MotionShapesSpec spec;
    std::uint64_t seed = 0;
    double labeled_fraction = 1.0;
    std::uint64_t split_seed = 0;
    std::vector<ClipRecord> clips;
    std::vector<Tensor> frames;                  // [T, H, W, 3] per clip
    std::map<std::uint64_t, Tensor> gt_flow;     // translation classes only, [T-1, H, W, 2]
    std::map<ViewKind, std::vector<Tensor>> views;  // precomputed flow / tg views, one per clip

    std::vector<std::size_t> indices(Split s) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < clips.size(); ++i)
            if (clips[i].split == s) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> labeled_indices() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < clips.size(); ++i)
            if (clips[i].split == Split::train && clips[i].labeled) out.push_back(i);
        return out;
    }
    bool has_view(ViewKind k) const { return k == ViewKind::rgb || views.contains(k); }
    VideoClip clip(std::size_t i) const { return VideoClip{frames.at(i), clips.at(i).id, 1}; }
};

namespace detail {

inline double wrap(double d, double period) {
    d = std::fmod(d, period);
    if (d < -0.5 * period) d += period;
    if (d >= 0.5 * period) d -= period;
    return d;
}

inline bool inside_unit(int type, double x, double y, double aspect) {
    switch (type) {
        case 0: return std::abs(x) <= 1.0 && std::abs(y) <= aspect;
        case 1: return x * x + (y / aspect) * (y / aspect) <= 1.0;
        default: return y >= -aspect && y <= aspect && std::abs(x) <= (aspect - y) / (2.0 * aspect);
    }
}

struct ShapePose {
    double cx, cy, angle, size;
};

inline ShapePose pose_at(const ShapeInstance& s, const ClipMotion& m, double t) {
    return {s.cx + m.u * t, s.cy + m.v * t, s.angle + m.omega * t, s.size * std::pow(1.0 + m.growth, t)};
}

// Colour of the last shape covering (px, py), if any. The frame is a torus.
inline const std::array<double, 3>* shade(const ClipMotion& m, const std::vector<ShapePose>& poses, double px,
                                          double py, double h, double w) {
    const std::array<double, 3>* out = nullptr;
    for (std::size_t k = 0; k < m.shapes.size(); ++k) {
        const ShapePose& p = poses[k];
        const double dx = wrap(px - p.cx, w), dy = wrap(py - p.cy, h);
        const double rad = p.angle * std::numbers::pi / 180.0;
        const double lx = (std::cos(rad) * dx + std::sin(rad) * dy) / p.size;
        const double ly = (-std::sin(rad) * dx + std::cos(rad) * dy) / p.size;
        const ShapeInstance& s = m.shapes[k];
        if (inside_unit(s.type, lx, ly, s.aspect)) out = lx < 0.0 ? &s.color_a : &s.color_b;
    }
    return out;
}

inline ClipMotion draw_motion(const MotionShapesSpec& spec, std::size_t label, Rng& rng) {
    ClipMotion m;
    m.motion = static_cast<Motion>(label);
    // appearance first, from the same distribution for every class
    m.background = rng.uniform(40.0, 215.0);
    const auto count = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(spec.min_shapes), static_cast<std::int64_t>(spec.max_shapes)));
    const double side = static_cast<double>(std::min(spec.height, spec.width));
    for (std::size_t k = 0; k < count; ++k) {
        ShapeInstance s;
        s.type = static_cast<int>(rng.uniform_int(0, 2));
        s.cx = rng.uniform(0.0, static_cast<double>(spec.width));
        s.cy = rng.uniform(0.0, static_cast<double>(spec.height));
        s.size = rng.uniform(spec.size_min, spec.size_max) * side;
        s.aspect = rng.uniform(0.5, 0.8);
        s.angle = rng.uniform(0.0, 360.0);
        for (double& c : s.color_a) c = rng.uniform(0.0, 255.0);
        for (double& c : s.color_b) c = rng.uniform(0.0, 255.0);
        m.shapes.push_back(s);
    }
    const double speed = rng.uniform(spec.speed_min, spec.speed_max);
    const double omega = rng.uniform(spec.angular_min, spec.angular_max);
    const double growth = rng.uniform(spec.growth_min, spec.growth_max);
    switch (m.motion) {
        case Motion::left: m.u = -speed; break;
        case Motion::right: m.u = speed; break;
        case Motion::up: m.v = -speed; break;
        case Motion::down: m.v = speed; break;
        case Motion::clockwise: m.omega = omega; break;
        case Motion::counterclockwise: m.omega = -omega; break;
        case Motion::expand: m.growth = growth; break;
        case Motion::contract: m.growth = 1.0 / (1.0 + growth) - 1.0; break;
    }
    return m;
}

inline Tensor render(const MotionShapesSpec& spec, const ClipMotion& m, Rng& noise) {
    const std::size_t T = spec.frames, H = spec.height, W = spec.width;
    Tensor out({T, H, W, 3});
    constexpr int ss = 3;  // supersampling per axis
    for (std::size_t t = 0; t < T; ++t) {
        std::vector<ShapePose> poses;
        for (const ShapeInstance& s : m.shapes) poses.push_back(pose_at(s, m, static_cast<double>(t)));
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                std::array<double, 3> acc{};
                for (int sy = 0; sy < ss; ++sy)
                    for (int sx = 0; sx < ss; ++sx) {
                        const double px = static_cast<double>(x) + (sx + 0.5) / ss - 0.5;
                        const double py = static_cast<double>(y) + (sy + 0.5) / ss - 0.5;
                        const auto* c = shade(m, poses, px, py, static_cast<double>(H), static_cast<double>(W));
                        for (int k = 0; k < 3; ++k) acc[k] += c ? (*c)[k] : m.background;
                    }
                for (std::size_t k = 0; k < 3; ++k) {
                    const double v = acc[k] / (ss * ss) + spec.noise_sigma * noise.normal();
                    out[((t * H + y) * W + x) * 3 + k] = std::round(std::clamp(v, 0.0, 255.0));
                }
            }
    }
    return out;
}

// (u, v) wherever a shape covers the pixel centre at frame t.
inline Tensor translation_flow(const MotionShapesSpec& spec, const ClipMotion& m) {
    const std::size_t T = spec.frames, H = spec.height, W = spec.width;
    Tensor out({T - 1, H, W, 2}, 0.0);
    for (std::size_t t = 0; t + 1 < T; ++t) {
        std::vector<ShapePose> poses;
        for (const ShapeInstance& s : m.shapes) poses.push_back(pose_at(s, m, static_cast<double>(t)));
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                if (shade(m, poses, static_cast<double>(x), static_cast<double>(y), static_cast<double>(H),
                          static_cast<double>(W))) {
                    out[((t * H + y) * W + x) * 2] = m.u;
                    out[((t * H + y) * W + x) * 2 + 1] = m.v;
                }
    }
    return out;
}

inline bool is_translation(Motion m) {
    return m == Motion::left || m == Motion::right || m == Motion::up || m == Motion::down;
}

}  // namespace detail

/// n_per_class training clips and spec.eval_per_class evaluation clips per
/// class. Clip i has label i mod 8; every clip is drawn from its own stream.
inline Dataset generate(const MotionShapesSpec& spec, std::size_t n_per_class, std::uint64_t seed) {
    spec.validate();
    if (n_per_class < 1) throw std::invalid_argument("generate: n_per_class must be >= 1");
    Dataset d;
    d.spec = spec;
    d.seed = seed;
    const std::size_t n_train = n_per_class * kClasses, n_eval = spec.eval_per_class * kClasses;
    for (std::size_t i = 0; i < n_train + n_eval; ++i) {
        ClipRecord r;
        r.id = i;
        r.label = i % kClasses;
        r.split = i < n_train ? Split::train : Split::eval;
        r.labeled = r.split == Split::train;
        Rng rng(derive_seed(seed, "data.clip", {i}));
        r.motion = detail::draw_motion(spec, r.label, rng);
        Rng noise(derive_seed(seed, "data.noise", {i}));
        d.frames.push_back(detail::render(spec, r.motion, noise));
        if (detail::is_translation(r.motion.motion)) d.gt_flow.emplace(i, detail::translation_flow(spec, r.motion));
        d.clips.push_back(std::move(r));
    }
    return d;
}

/// Class-balanced labeled subset of ceil(p * n) training clips per class;
/// every training clip stays in the unlabeled pool.
inline void make_splits(Dataset& d, double p, std::uint64_t seed) {
    if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("make_splits: labeled fraction must lie in (0, 1]");
    std::array<std::vector<std::size_t>, kClasses> by_class;
    for (std::size_t i = 0; i < d.clips.size(); ++i)
        if (d.clips[i].split == Split::train) by_class[d.clips[i].label].push_back(i);
    for (std::size_t c = 0; c < kClasses; ++c) {
        auto& members = by_class[c];
        const double want = p * static_cast<double>(members.size());
        if (want < 1.0 - 1e-9)
            throw std::invalid_argument("make_splits: fraction " + std::to_string(p) + " of " +
                                        std::to_string(members.size()) + " clips in class " +
                                        std::string(kClassNames[c]) + " is below one clip");
        const auto keep = static_cast<std::size_t>(std::ceil(want - 1e-9));
        Rng rng(derive_seed(seed, "data.split", {c}));
        rng.shuffle(std::span<std::size_t>(members));
        for (std::size_t k = 0; k < members.size(); ++k) d.clips[members[k]].labeled = k < keep;
    }
    d.labeled_fraction = p;
    d.split_seed = seed;
}

/// Computes the flow and tg views of every clip and stores them in `d`.
inline void extract_views(Dataset& d, const views::FlowParams& params = {}) {
    std::vector<Tensor> flow, tg;
    for (std::size_t i = 0; i < d.clips.size(); ++i) {
        ViewSet vs = views::build_viewset(d.clip(i), params);
        flow.push_back(std::move(vs.flow.frames));
        tg.push_back(std::move(vs.tg.frames));
    }
    d.views[ViewKind::flow] = std::move(flow);
    d.views[ViewKind::tg] = std::move(tg);
}

/// The requested views of clip i, read from `d` when precomputed and derived
/// otherwise. Views not requested are left empty.
inline ViewSet viewset(const Dataset& d, std::size_t i, const std::vector<ViewKind>& wanted,
                       const views::FlowParams& params = {}) {
    ViewSet vs;
    vs.rgb = d.clip(i);
    for (ViewKind k : wanted) {
        if (k == ViewKind::rgb) continue;
        VideoClip& dst = k == ViewKind::flow ? vs.flow : vs.tg;
        if (auto it = d.views.find(k); it != d.views.end()) {
            dst = VideoClip{it->second.at(i), vs.rgb.id, 1};
        } else if (k == ViewKind::flow) {
            dst = views::flow_to_view(views::estimate_flow(vs.rgb, params), vs.rgb.id);
        } else {
            dst = views::tg_to_view(views::temporal_gradients(vs.rgb), vs.rgb.id);
        }
    }
    return vs;
}

inline json motion_json(const ClipMotion& m) {
    json shapes = json::array();
    for (const ShapeInstance& s : m.shapes)
        shapes.push_back({{"type", s.type},
                          {"cx", s.cx},
                          {"cy", s.cy},
                          {"size", s.size},
                          {"aspect", s.aspect},
                          {"angle", s.angle},
                          {"color_a", s.color_a},
                          {"color_b", s.color_b}});
    return {{"u", m.u},         {"v", m.v},          {"omega", m.omega}, {"growth", m.growth},
            {"background", m.background}, {"shapes", shapes}};
}

inline ClipMotion motion_from_json(const json& j, std::size_t label) {
    ClipMotion m;
    m.motion = static_cast<Motion>(label);
    j.at("u").get_to(m.u);
    j.at("v").get_to(m.v);
    j.at("omega").get_to(m.omega);
    j.at("growth").get_to(m.growth);
    j.at("background").get_to(m.background);
    for (const json& s : j.at("shapes")) {
        ShapeInstance k;
        s.at("type").get_to(k.type);
        s.at("cx").get_to(k.cx);
        s.at("cy").get_to(k.cy);
        s.at("size").get_to(k.size);
        s.at("aspect").get_to(k.aspect);
        s.at("angle").get_to(k.angle);
        s.at("color_a").get_to(k.color_a);
        s.at("color_b").get_to(k.color_b);
        m.shapes.push_back(k);
    }
    return m;
}

inline std::string block_name(std::uint64_t id, std::string_view what) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "clip/%06llu/", static_cast<unsigned long long>(id));
    return buf + std::string(what);
}

inline container::Container to_container(const Dataset& d) {
    container::Container c;
    json clips = json::array();
    for (std::size_t i = 0; i < d.clips.size(); ++i) {
        const ClipRecord& r = d.clips[i];
        clips.push_back({{"id", r.id},
                         {"label", r.label},
                         {"class", kClassNames[r.label]},
                         {"split", r.split == Split::train ? "train" : "eval"},
                         {"labeled", r.labeled},
                         {"motion", motion_json(r.motion)}});
        c.blocks.emplace(block_name(r.id, "rgb"), d.frames[i]);
        if (auto it = d.gt_flow.find(r.id); it != d.gt_flow.end()) c.blocks.emplace(block_name(r.id, "gt_flow"), it->second);
        for (const auto& [kind, tensors] : d.views)
            c.blocks.emplace(block_name(r.id, "view/" + std::string(views::view_name(kind))), tensors[i]);
    }
    json view_names = json::array();
    for (const auto& [kind, tensors] : d.views) view_names.push_back(views::view_name(kind));
    c.header = {{"kind", "motion_shapes"},
                {"spec", d.spec},
                {"seed", d.seed},
                {"labeled_fraction", d.labeled_fraction},
                {"split_seed", d.split_seed},
                {"views", view_names},
                {"clips", clips}};
    return c;
}

inline Dataset from_container(const container::Container& c) {
    using container::ContainerError;
    using container::ErrorCode;
    Dataset d;
    try {
        if (c.header.at("kind") != "motion_shapes") throw ContainerError(ErrorCode::bad_header, "not a dataset");
        d.spec = c.header.at("spec").get<MotionShapesSpec>();
        c.header.at("seed").get_to(d.seed);
        c.header.at("labeled_fraction").get_to(d.labeled_fraction);
        c.header.at("split_seed").get_to(d.split_seed);
        std::vector<ViewKind> kinds;
        for (const json& v : c.header.at("views")) kinds.push_back(views::parse_view(v.get<std::string>()));
        for (const json& j : c.header.at("clips")) {
            ClipRecord r;
            j.at("id").get_to(r.id);
            j.at("label").get_to(r.label);
            if (r.label >= kClasses) throw ContainerError(ErrorCode::bad_header, "label out of range");
            r.split = j.at("split") == "train" ? Split::train : Split::eval;
            j.at("labeled").get_to(r.labeled);
            r.motion = motion_from_json(j.at("motion"), r.label);
            d.frames.push_back(c.blocks.at(block_name(r.id, "rgb")));
            if (auto it = c.blocks.find(block_name(r.id, "gt_flow")); it != c.blocks.end()) d.gt_flow.emplace(r.id, it->second);
            for (ViewKind k : kinds)
                d.views[k].push_back(c.blocks.at(block_name(r.id, "view/" + std::string(views::view_name(k)))));
            d.clips.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ContainerError(ErrorCode::bad_header, e.what());
    } catch (const std::out_of_range& e) {
        throw ContainerError(ErrorCode::bad_header, std::string("missing block: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ContainerError(ErrorCode::bad_header, e.what());
    }
    return d;
}

inline void save(const std::string& path, const Dataset& d) { container::write_file(path, to_container(d)); }
inline Dataset load(const std::string& path) { return from_container(container::read_file(path)); }

/// The manifest alone: header plus the block index with byte offsets.
inline json manifest(const Dataset& d) {
    const std::string bytes = container::serialize(to_container(d));
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    return json::parse(bytes.substr(16, len));
}

}  // namespace mvpl::data
