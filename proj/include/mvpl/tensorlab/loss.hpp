#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvpl/tensorlab/ops.hpp"

namespace mvpl::tensorlab {

inline constexpr double kTargetSumTolerance = 1e-9;

/// Row-wise log-softmax of an [N, C] matrix, computed via the max shift.
inline Tensor log_softmax_rows(const Tensor& logits) {
    detail::require_rank("log_softmax", logits, 2);
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    Tensor out(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double* z = logits.data() + i * c;
        const double zmax = *std::max_element(z, z + c);
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += std::exp(z[k] - zmax);
        const double lse = zmax + std::log(s);
        for (std::size_t k = 0; k < c; ++k) out[i * c + k] = z[k] - lse;
    }
    return out;
}

inline Tensor softmax_rows(const Tensor& logits) {
    Tensor p = log_softmax_rows(logits);
    for (double& v : p.values()) v = std::exp(v);
    return p;
}

inline Tensor one_hot(std::span<const std::size_t> labels, std::size_t classes) {
    Tensor t({labels.size(), classes}, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= classes) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                                        std::to_string(classes) + ")");
        }
        t[i * classes + labels[i]] = 1.0;
    }
    return t;
}

inline void check_distribution_rows(const Tensor& targets) {
    detail::require_rank("cross_entropy targets", targets, 2);
    const std::size_t n = targets.dim(0), c = targets.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            const double v = targets[i * c + k];
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw std::invalid_argument("cross_entropy: target row " + std::to_string(i) +
                                            " has a negative or non-finite entry");
            }
            s += v;
        }
        if (std::abs(s - 1.0) > kTargetSumTolerance) {
            throw std::invalid_argument("cross_entropy: target row " + std::to_string(i) + " sums to " +
                                        std::to_string(s) + ", not 1");
        }
    }
}

/// sum_i w_i * H(t_i, softmax(z_i)) / normalizer, with H(t, p) = -sum_c t_c log p_c.
/// Rows with w_i = 0 contribute nothing to value or gradient.
inline Var weighted_cross_entropy(Var logits, Tensor targets, std::vector<double> weights, double normalizer) {
    const Tensor& z = logits.value();
    detail::require_rank("cross_entropy", z, 2);
    if (targets.shape() != z.shape()) {
        throw std::invalid_argument("cross_entropy: targets " + to_string(targets.shape()) + " vs logits " +
                                    to_string(z.shape()));
    }
    if (weights.size() != z.dim(0)) throw std::invalid_argument("cross_entropy: one weight per row required");
    if (!(normalizer > 0.0)) throw std::invalid_argument("cross_entropy: normalizer must be positive");
    check_distribution_rows(targets);
    const std::size_t n = z.dim(0), c = z.dim(1);
    const Tensor logp = log_softmax_rows(z);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] == 0.0) continue;
        double h = 0.0;
        for (std::size_t k = 0; k < c; ++k)
            if (targets[i * c + k] != 0.0) h -= targets[i * c + k] * logp[i * c + k];
        total += weights[i] * h;
    }
    auto saved_t = std::make_shared<Tensor>(std::move(targets));
    auto saved_w = std::make_shared<std::vector<double>>(std::move(weights));
    auto saved_p = std::make_shared<Tensor>(logp);
    for (double& v : saved_p->values()) v = std::exp(v);
    return logits.tape->record(
        "cross_entropy", Tensor::scalar(total / normalizer), {logits},
        [logits, saved_t, saved_w, saved_p, normalizer, n, c](Tape& tape, const Tensor& g) {
            if (!tape.requires_grad(logits)) return;
            Tensor& dz = tape.grad_buffer(logits);
            for (std::size_t i = 0; i < n; ++i) {
                const double wi = (*saved_w)[i];
                if (wi == 0.0) continue;
                double tsum = 0.0;
                for (std::size_t k = 0; k < c; ++k) tsum += (*saved_t)[i * c + k];
                const double s = g[0] * wi / normalizer;
                for (std::size_t k = 0; k < c; ++k)
                    dz[i * c + k] += s * ((*saved_p)[i * c + k] * tsum - (*saved_t)[i * c + k]);
            }
        });
}

/// Batch mean of H(target_i, softmax(logits_i)) for soft targets.
inline Var softmax_cross_entropy(Var logits, Tensor targets) {
    const std::size_t n = logits.value().dim(0);
    return weighted_cross_entropy(logits, std::move(targets), std::vector<double>(n, 1.0), static_cast<double>(n));
}

/// Batch mean of -log softmax(logits_i)[label_i].
inline Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
    detail::require_rank("cross_entropy", logits.value(), 2);
    if (labels.size() != logits.value().dim(0)) throw std::invalid_argument("cross_entropy: one label per row");
    return softmax_cross_entropy(logits, one_hot(labels, logits.value().dim(1)));
}

}  // namespace mvpl::tensorlab
