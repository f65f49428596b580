#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvpl/container.hpp"
#include "mvpl/rng.hpp"
#include "mvpl/tensorlab.hpp"
#include "mvpl/views.hpp"

namespace mvpl::model {

using tensorlab::BatchNormStats;
using tensorlab::Mode;
using tensorlab::Shape;
using tensorlab::Tape;
using tensorlab::Tensor;
using tensorlab::Var;

struct ModelConfig {
    std::size_t frames = 8, height = 32, width = 32, channels = 3;
    std::vector<std::size_t> widths{16, 32, 64};
    std::size_t kernel = 3;
    std::size_t classes = 8;
    double dropout = 0.5;

    Shape clip_shape() const { return {frames, height, width, channels}; }
};

struct ParamInfo {
    std::string name;
    bool decay = false;  // conv and linear weights only
};

struct ModelState {
    ModelConfig config;
    std::vector<Tensor> params;
    std::vector<ParamInfo> info;
    std::vector<BatchNormStats> bn;  // inference statistics (RGB)
    std::vector<std::vector<BatchNormStats>> view_bn;  // other views' statistics; empty until trained on
    std::uint64_t step = 0;
    std::uint64_t seed = 0;

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Tensor& p : params) n += p.size();
        return n;
    }
};

/// Parameter shapes in storage order: per block kernel, gamma, beta; then the
/// classifier weight [width, classes] and bias [classes].
inline std::vector<std::pair<ParamInfo, Shape>> parameter_layout(const ModelConfig& c) {
    if (c.widths.empty() || c.classes < 2 || c.kernel == 0 || c.kernel % 2 == 0)
        throw std::invalid_argument("model: need >= 1 block, >= 2 classes and an odd kernel");
    std::vector<std::pair<ParamInfo, Shape>> out;
    std::size_t cin = c.channels;
    for (std::size_t b = 0; b < c.widths.size(); ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        out.push_back({{p + "conv", true}, {c.kernel, c.kernel, c.kernel, cin, c.widths[b]}});
        out.push_back({{p + "gamma", false}, {c.widths[b]}});
        out.push_back({{p + "beta", false}, {c.widths[b]}});
        cin = c.widths[b];
    }
    out.push_back({{"fc.weight", true}, {cin, c.classes}});
    out.push_back({{"fc.bias", false}, {c.classes}});
    return out;
}

/// He-normal conv/linear weights (std sqrt(2 / fan_in)), gamma 1, beta and bias 0.
inline ModelState init_parameters(const ModelConfig& config, std::uint64_t seed) {
    ModelState s;
    s.config = config;
    s.seed = seed;
    Rng rng(derive_seed(seed, "model.init"));
    for (auto& [info, shape] : parameter_layout(config)) {
        Tensor t(shape, 0.0);
        if (info.decay) {
            std::size_t fan_in = 1;
            for (std::size_t a = 0; a + 1 < shape.size(); ++a) fan_in *= shape[a];
            const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& v : t.values()) v = rng.normal(0.0, sd);
        } else if (info.name.ends_with("gamma")) {
            t.fill(1.0);
        }
        s.params.push_back(std::move(t));
        s.info.push_back(std::move(info));
    }
    for (std::size_t w : config.widths) s.bn.emplace_back(w);
    return s;
}

/// Stacks equally shaped clips into one [N, T, H, W, C] batch.
inline Tensor stack_clips(std::span<const views::VideoClip* const> clips) {
    if (clips.empty()) throw std::invalid_argument("stack_clips: empty batch");
    const Shape& s = clips.front()->frames.shape();
    Shape shape{clips.size()};
    shape.insert(shape.end(), s.begin(), s.end());
    std::vector<double> v;
    v.reserve(tensorlab::element_count(shape));
    for (const views::VideoClip* c : clips) {
        if (c->frames.shape() != s)
            throw std::invalid_argument("stack_clips: clip " + tensorlab::to_string(c->frames.shape()) + " vs " +
                                        tensorlab::to_string(s));
        v.insert(v.end(), c->frames.values().begin(), c->frames.values().end());
    }
    return Tensor(std::move(shape), std::move(v));
}

/// Maps pixel values in [0, 255] to [-1, 1].
inline Tensor normalize_input(const Tensor& batch) {
    Tensor x = batch;
    for (double& v : x.values()) v = v / 127.5 - 1.0;
    return x;
}

inline void check_input(const ModelConfig& c, const Tensor& batch) {
    Shape want{batch.rank() ? batch.dim(0) : 0, c.frames, c.height, c.width, c.channels};
    if (batch.rank() != 5 || batch.shape() != want) {
        throw std::invalid_argument("model: input " + tensorlab::to_string(batch.shape()) + " does not match [N, " +
                                    std::to_string(c.frames) + ", " + std::to_string(c.height) + ", " +
                                    std::to_string(c.width) + ", " + std::to_string(c.channels) + "]");
    }
}

/// Places the parameters on `tape` as leaves.
inline std::vector<Var> bind(Tape& tape, const ModelState& s, bool requires_grad) {
    std::vector<Var> out;
    out.reserve(s.params.size());
    for (const Tensor& p : s.params) out.push_back(tape.leaf(p, requires_grad));
    return out;
}

/// conv -> BN -> relu -> 1x2x2 avg-pool per block, global average pool,
/// dropout, linear. `batch` holds raw pixel values. Train mode updates the
/// running statistics in `bn`; eval mode leaves them untouched.
inline Var forward(Tape& tape, std::span<const Var> params, std::vector<BatchNormStats>& bn, const ModelConfig& c,
                   const Tensor& batch, Mode mode, tensorlab::DropoutKey key = {}) {
    check_input(c, batch);
    const std::size_t pad = c.kernel / 2;
    Var x = tape.constant(normalize_input(batch));
    std::size_t p = 0;
    for (std::size_t b = 0; b < c.widths.size(); ++b) {
        x = tensorlab::conv3d(x, params[p], {{1, 1, 1}, {pad, pad, pad}});
        x = tensorlab::batchnorm(x, params[p + 1], params[p + 2], bn[b], mode);
        x = tensorlab::relu(x);
        const Shape& sh = x.value().shape();
        if (sh[2] >= 2 && sh[3] >= 2) x = tensorlab::avgpool3d(x, {1, 2, 2});
        p += 3;
    }
    x = tensorlab::global_avg_pool(x);
    key.layer = (key.layer << 8) | c.widths.size();  // callers pass a stream id in `layer`
    x = tensorlab::dropout(x, c.dropout, key, mode);
    return tensorlab::linear(x, params[p], params[p + 1]);
}

/// Eval-mode logits without gradient bookkeeping, using `bn` (default: s.bn).
inline Tensor eval_logits(const ModelState& s, const Tensor& batch, const std::vector<BatchNormStats>* bn = nullptr) {
    Tape tape;
    std::vector<Var> params = bind(tape, s, false);
    std::vector<BatchNormStats> stats = bn ? *bn : s.bn;
    return forward(tape, params, stats, s.config, batch, Mode::eval).value();
}

/// Softmax of eval-mode logits, one row per clip.
inline Tensor predict_distribution(const ModelState& s, const Tensor& batch,
                                   const std::vector<BatchNormStats>* bn = nullptr) {
    return tensorlab::softmax_rows(eval_logits(s, batch, bn));
}

/// Checks the gradient of a train-mode cross-entropy loss with respect to every
/// parameter tensor. The batch statistics are re-derived on every evaluation,
/// so the running statistics are copied per call.
inline tensorlab::GradCheckReport model_gradcheck(const ModelConfig& c, std::uint64_t seed, double eps = 1e-5,
                                                  double tol = 1e-4) {
    ModelState s = init_parameters(c, seed);
    Rng rng(derive_seed(seed, "model.gradcheck"));
    Tensor batch({2, c.frames, c.height, c.width, c.channels});
    for (double& v : batch.values()) v = rng.uniform(0.0, 255.0);
    std::vector<std::size_t> labels{static_cast<std::size_t>(rng.uniform_int(0, c.classes - 1)),
                                    static_cast<std::size_t>(rng.uniform_int(0, c.classes - 1))};
    for (std::size_t i = 0; i < s.params.size(); ++i)
        if (!s.info[i].decay)
            for (double& v : s.params[i].values()) v += rng.uniform(-0.2, 0.2);
    const std::vector<BatchNormStats> bn0 = s.bn;
    auto fn = [&](Tape&, std::span<const Var> p) {
        std::vector<BatchNormStats> bn = bn0;
        Var logits = forward(*p[0].tape, p, bn, c, batch, Mode::train, {seed, 0, 0});
        return tensorlab::softmax_cross_entropy(logits, labels);
    };
    return tensorlab::grad_check(fn, s.params, eps, tol, "model");
}

inline nlohmann::json config_json(const ModelConfig& c) {
    return {{"frames", c.frames}, {"height", c.height},   {"width", c.width},     {"channels", c.channels},
            {"widths", c.widths}, {"kernel", c.kernel},   {"classes", c.classes}, {"dropout", c.dropout}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    j.at("frames").get_to(c.frames);
    j.at("height").get_to(c.height);
    j.at("width").get_to(c.width);
    j.at("channels").get_to(c.channels);
    j.at("widths").get_to(c.widths);
    j.at("kernel").get_to(c.kernel);
    j.at("classes").get_to(c.classes);
    j.at("dropout").get_to(c.dropout);
    return c;
}

namespace detail {

inline void put_stats(container::Container& c, const std::string& prefix, const std::vector<BatchNormStats>& bn) {
    for (std::size_t b = 0; b < bn.size(); ++b) {
        c.blocks.emplace(prefix + std::to_string(b) + "/mean", bn[b].running_mean);
        c.blocks.emplace(prefix + std::to_string(b) + "/var", bn[b].running_var);
    }
}

inline std::vector<BatchNormStats> get_stats(const container::Container& c, const std::string& prefix,
                                             std::size_t blocks) {
    std::vector<BatchNormStats> bn(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        bn[b].running_mean = c.blocks.at(prefix + std::to_string(b) + "/mean");
        bn[b].running_var = c.blocks.at(prefix + std::to_string(b) + "/var");
    }
    return bn;
}

}  // namespace detail

/// Checkpoint: parameters, running statistics and step in the container format.
/// `extra` is stored under the header key "extra".
inline container::Container to_container(const ModelState& s, const nlohmann::json& extra = nlohmann::json::object()) {
    container::Container c;
    nlohmann::json names = nlohmann::json::array();
    for (std::size_t i = 0; i < s.params.size(); ++i) {
        names.push_back(s.info[i].name);
        c.blocks.emplace("param/" + s.info[i].name, s.params[i]);
    }
    c.header = {{"kind", "checkpoint"}, {"model", config_json(s.config)}, {"params", names},
                {"step", s.step},       {"seed", s.seed},                 {"view_bn", s.view_bn.size()},
                {"extra", extra}};
    detail::put_stats(c, "bn/", s.bn);
    for (std::size_t v = 0; v < s.view_bn.size(); ++v) detail::put_stats(c, "view_bn/" + std::to_string(v) + "/", s.view_bn[v]);
    return c;
}

inline ModelState state_from_container(const container::Container& c) {
    using container::ContainerError;
    using container::ErrorCode;
    try {
        if (c.header.at("kind") != "checkpoint") throw ContainerError(ErrorCode::bad_header, "not a checkpoint");
        ModelState s = init_parameters(config_from_json(c.header.at("model")), c.header.at("seed").get<std::uint64_t>());
        s.step = c.header.at("step").get<std::uint64_t>();
        for (std::size_t i = 0; i < s.params.size(); ++i) {
            const Tensor& t = c.blocks.at("param/" + s.info[i].name);
            if (t.shape() != s.params[i].shape())
                throw ContainerError(ErrorCode::bad_header, "parameter '" + s.info[i].name + "' has the wrong shape");
            s.params[i] = t;
        }
        const std::size_t blocks = s.config.widths.size();
        s.bn = detail::get_stats(c, "bn/", blocks);
        for (std::size_t v = 0; v < c.header.at("view_bn").get<std::size_t>(); ++v)
            s.view_bn.push_back(detail::get_stats(c, "view_bn/" + std::to_string(v) + "/", blocks));
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ContainerError(ErrorCode::bad_header, e.what());
    } catch (const std::out_of_range& e) {
        throw ContainerError(ErrorCode::bad_header, std::string("checkpoint block missing: ") + e.what());
    }
}

}  // namespace mvpl::model
