#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mvpl/augment.hpp"
#include "mvpl/rng.hpp"
#include "mvpl/tensorlab/tensor.hpp"

namespace mvpl::ssl {

using tensorlab::Tensor;

inline constexpr double kRowSumTolerance = 1e-9;

enum class Strategy { self, random, cross, aggregated };

inline std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::self: return "self";
        case Strategy::random: return "random";
        case Strategy::cross: return "cross";
        case Strategy::aggregated: return "aggregated";
    }
    return "?";
}

inline Strategy parse_strategy(std::string_view s) {
    for (Strategy v : {Strategy::self, Strategy::random, Strategy::cross, Strategy::aggregated})
        if (strategy_name(v) == s) return v;
    throw std::invalid_argument("unknown strategy '" + std::string(s) + "' (expected self, random, cross or aggregated)");
}

struct StrategyConfig {
    Strategy strategy = Strategy::aggregated;
    std::vector<std::size_t> bijection;  // view m learns from view bijection[m]; empty: m -> m + 1 mod M
    std::vector<double> weights;         // empty: equal weights
    bool exclusion = false;
    std::uint64_t seed = 0;
};

/// The cross bijection m -> m + shift mod M; shift 1 and 2 give the two
/// derangements of three views.
inline std::vector<std::size_t> cyclic_bijection(std::size_t views, std::size_t shift) {
    std::vector<std::size_t> b(views);
    for (std::size_t m = 0; m < views; ++m) b[m] = (m + shift) % views;
    return b;
}

enum class Method { pseudo_label, uda, fixmatch };

inline std::string_view method_name(Method m) {
    switch (m) {
        case Method::pseudo_label: return "pseudo_label";
        case Method::uda: return "uda";
        case Method::fixmatch: return "fixmatch";
    }
    return "?";
}

inline Method parse_method(std::string_view s) {
    for (Method m : {Method::pseudo_label, Method::uda, Method::fixmatch})
        if (method_name(m) == s) return m;
    throw std::invalid_argument("unknown instantiation '" + std::string(s) +
                                "' (expected pseudo_label, uda or fixmatch)");
}

struct InstantiationConfig {
    Method method = Method::fixmatch;
    double tau = 0.3;
    double t_sharp = 0.5;
    bool mask_pseudo_label = true;  // apply the tau mask in the pseudo_label method too

    void validate() const {
        if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("instantiation: tau must lie in [0, 1]");
        if (!(t_sharp > 0.0 && t_sharp <= 1.0)) throw std::invalid_argument("instantiation: T_sharp must lie in (0, 1]");
    }
};

/// Augmentation family of the learner branch.
inline augment::AugmentKind learner_augmentation(Method m) {
    return m == Method::pseudo_label ? augment::AugmentKind::weak : augment::AugmentKind::strong;
}

struct PseudoLabelOutcome {
    std::vector<std::vector<double>> distributions;  // s_m
    std::vector<std::size_t> hard;                   // argmax of s_m, lowest index on ties
    std::vector<bool> mask;                          // max s_m >= tau
};

inline std::size_t argmax_lowest(std::span<const double> p) {
    return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

namespace detail {

inline void check_rows(const Tensor& q) {
    if (q.rank() != 2 || q.dim(0) == 0 || q.dim(1) == 0)
        throw std::invalid_argument("pseudo-labels: predictions must be an [M, C] matrix");
    const std::size_t m = q.dim(0), c = q.dim(1);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double v = q[i * c + k];
            if (!(v >= 0.0) || !std::isfinite(v))
                throw std::invalid_argument("pseudo-labels: view " + std::to_string(i) + " has an invalid probability");
            s += v;
        }
        if (std::abs(s - 1.0) > kRowSumTolerance)
            throw std::invalid_argument("pseudo-labels: view " + std::to_string(i) + " sums to " + std::to_string(s));
    }
}

inline std::vector<double> row(const Tensor& q, std::size_t m) {
    const std::size_t c = q.dim(1);
    return {q.data() + m * c, q.data() + (m + 1) * c};
}

inline std::vector<double> weighted_mean(const Tensor& q, const std::vector<double>& w, std::size_t skip) {
    const std::size_t views = q.dim(0), c = q.dim(1);
    std::vector<double> out(c, 0.0);
    double total = 0.0;
    for (std::size_t k = 0; k < views; ++k) {
        if (k == skip) continue;
        total += w[k];
        for (std::size_t j = 0; j < c; ++j) out[j] += w[k] * q[k * c + j];
    }
    if (!(total > 0.0)) throw std::invalid_argument("pseudo-labels: aggregation weights sum to zero");
    for (double& v : out) v /= total;
    return out;
}

}  // namespace detail

/// Checks that `b` is a permutation of 0..M-1 with no fixed point.
inline void check_derangement(std::span<const std::size_t> b, std::size_t views) {
    if (b.size() != views)
        throw std::invalid_argument("cross: bijection has " + std::to_string(b.size()) + " entries for " +
                                    std::to_string(views) + " views");
    std::vector<bool> seen(views, false);
    for (std::size_t m = 0; m < views; ++m) {
        if (b[m] >= views || seen[b[m]]) throw std::invalid_argument("cross: bijection is not a permutation");
        if (b[m] == m) throw std::invalid_argument("cross: view " + std::to_string(m) + " maps to itself");
        seen[b[m]] = true;
    }
}

/// Per-view pseudo-label distributions from per-view predictions `q` [M, C].
/// `key` selects the draw of the random strategy (e.g. clip id and step).
inline PseudoLabelOutcome generate_pseudolabels(const Tensor& q, const StrategyConfig& cfg, double tau,
                                                std::uint64_t key = 0) {
    detail::check_rows(q);
    const std::size_t views = q.dim(0);
    PseudoLabelOutcome out;
    switch (cfg.strategy) {
        case Strategy::self:
            for (std::size_t m = 0; m < views; ++m) out.distributions.push_back(detail::row(q, m));
            break;
        case Strategy::random: {
            Rng rng(derive_seed(cfg.seed, "ssl.random", {key}));
            for (std::size_t m = 0; m < views; ++m) {
                std::size_t n = m;
                if (views > 1) {
                    n = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(views) - 2));
                    if (n >= m) ++n;
                }
                out.distributions.push_back(detail::row(q, n));
            }
            break;
        }
        case Strategy::cross: {
            const std::vector<std::size_t> b = cfg.bijection.empty() ? cyclic_bijection(views, 1) : cfg.bijection;
            check_derangement(b, views);
            for (std::size_t m = 0; m < views; ++m) out.distributions.push_back(detail::row(q, b[m]));
            break;
        }
        case Strategy::aggregated: {
            std::vector<double> w = cfg.weights.empty() ? std::vector<double>(views, 1.0) : cfg.weights;
            if (w.size() != views) throw std::invalid_argument("aggregated: one weight per view required");
            for (double v : w)
                if (!(v >= 0.0)) throw std::invalid_argument("aggregated: weights must be non-negative");
            if (cfg.exclusion && views < 2) throw std::invalid_argument("aggregated: exclusion needs >= 2 views");
            if (cfg.exclusion) {
                for (std::size_t m = 0; m < views; ++m) out.distributions.push_back(detail::weighted_mean(q, w, m));
            } else {
                out.distributions.assign(views, detail::weighted_mean(q, w, views));
            }
            break;
        }
    }
    for (const auto& s : out.distributions) {
        out.hard.push_back(argmax_lowest(s));
        out.mask.push_back(*std::max_element(s.begin(), s.end()) >= tau);
    }
    return out;
}

/// p^(1/T) renormalized.
inline std::vector<double> sharpen(std::span<const double> p, double t_sharp) {
    if (!(t_sharp > 0.0 && t_sharp <= 1.0)) throw std::invalid_argument("sharpen: temperature must lie in (0, 1]");
    std::vector<double> out(p.size());
    double total = 0.0;
    // scaled by the largest entry so small temperatures do not underflow
    const double top = *std::max_element(p.begin(), p.end());
    for (std::size_t k = 0; k < p.size(); ++k) total += (out[k] = std::pow(p[k] / top, 1.0 / t_sharp));
    for (double& v : out) v /= total;
    return out;
}

enum class TargetKind { hard, soft };

struct UnlabeledTarget {
    std::vector<double> target;  // one-hot for hard targets
    std::size_t label = 0;
    bool include = false;
    TargetKind kind = TargetKind::hard;
};

inline std::vector<UnlabeledTarget> unlabeled_targets(const PseudoLabelOutcome& o, const InstantiationConfig& inst) {
    inst.validate();
    std::vector<UnlabeledTarget> out;
    for (std::size_t m = 0; m < o.distributions.size(); ++m) {
        UnlabeledTarget t;
        t.label = o.hard[m];
        t.include = o.mask[m] || (inst.method == Method::pseudo_label && !inst.mask_pseudo_label);
        if (inst.method == Method::uda) {
            t.kind = TargetKind::soft;
            t.target = sharpen(o.distributions[m], inst.t_sharp);
        } else {
            t.target.assign(o.distributions[m].size(), 0.0);
            t.target[t.label] = 1.0;
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace mvpl::ssl
