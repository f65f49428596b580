#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvpl/rng.hpp"
#include "mvpl/tensorlab/batchnorm.hpp"
#include "mvpl/tensorlab/conv.hpp"
#include "mvpl/tensorlab/loss.hpp"
#include "mvpl/tensorlab/ops.hpp"

namespace mvpl::tensorlab {

/// Builds a graph on `tape` from leaves holding the check inputs.
using GraphFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckReport {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_input = 0;
    bool passed = false;
};

/// Per input tensor, the error is ||tape - central||_inf / max(||tape||_inf, ||central||_inf);
/// the report keeps the worst input. A non-scalar graph output is reduced by
/// a fixed random projection so every output component is exercised.
inline GradCheckReport grad_check(const GraphFn& fn, const std::vector<Tensor>& inputs, double eps = 1e-5,
                                  double tol = 1e-4, std::string name = {}) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw std::invalid_argument("grad_check: eps must lie in (0, 1e-2]");
    for (const Tensor& t : inputs)
        if (!t.all_finite()) throw std::invalid_argument("grad_check: inputs must be finite");

    Tensor projection;
    auto evaluate = [&](const std::vector<Tensor>& xs, bool want_grads, std::vector<Tensor>* grads) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(xs.size());
        for (const Tensor& t : xs) leaves.push_back(tape.leaf(t, want_grads));
        Var out = fn(tape, leaves);
        if (out.value().size() != 1) {
            if (projection.empty()) {
                Rng rng(derive_seed(0x9c4d, "grad_check.projection"));
                projection = Tensor(out.value().shape());
                for (double& v : projection.values()) v = rng.uniform(0.5, 1.5);
            }
            out = weighted_sum(out, projection);
        }
        const double value = out.value().item();
        if (want_grads) {
            tape.backward(out);
            for (Var v : leaves) grads->push_back(tape.grad(v));
        }
        return value;
    };

    std::vector<Tensor> analytic;
    evaluate(inputs, true, &analytic);

    GradCheckReport report{std::move(name), 0.0, 0, true};
    std::vector<Tensor> probe = inputs;
    for (std::size_t a = 0; a < inputs.size(); ++a) {
        double diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < inputs[a].size(); ++i) {
            const double x0 = inputs[a][i];
            probe[a][i] = x0 + eps;
            const double fp = evaluate(probe, false, nullptr);
            probe[a][i] = x0 - eps;
            const double fm = evaluate(probe, false, nullptr);
            probe[a][i] = x0;
            const double numeric = (fp - fm) / (2.0 * eps);
            diff = std::max(diff, std::abs(numeric - analytic[a][i]));
            scale = std::max({scale, std::abs(numeric), std::abs(analytic[a][i])});
        }
        const double rel = scale > 0.0 ? diff / scale : 0.0;
        if (rel > report.max_rel_error || !std::isfinite(rel)) {
            report.max_rel_error = rel;
            report.worst_input = a;
        }
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

namespace detail {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

// Values whose pairwise gaps are far larger than any finite-difference step.
inline Tensor separated_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    std::vector<double> levels(t.size());
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = -1.0 + 0.01 * static_cast<double>(i);
    rng.shuffle(std::span<double>(levels));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = levels[i];
    return t;
}

inline Tensor random_distribution_rows(std::size_t n, std::size_t c, Rng& rng) {
    Tensor t({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s += (t[i * c + k] = rng.uniform(0.05, 1.0));
        for (std::size_t k = 0; k < c; ++k) t[i * c + k] /= s;
    }
    return t;
}

}  // namespace detail

/// Finite-difference checks over every differentiable tensorlab op.
inline std::vector<GradCheckReport> run_op_gradcheck_suite(double eps = 1e-5, double tol = 1e-4,
                                                           std::uint64_t seed = 7) {
    Rng rng(derive_seed(seed, "gradcheck.ops"));
    using detail::random_tensor;
    std::vector<GradCheckReport> out;
    auto check = [&](std::string name, const GraphFn& fn, std::vector<Tensor> inputs) {
        out.push_back(grad_check(fn, inputs, eps, tol, std::move(name)));
    };

    check("conv3d/same", [](Tape&, std::span<const Var> v) { return conv3d(v[0], v[1], {{1, 1, 1}, {1, 1, 1}}); },
          {random_tensor({2, 3, 4, 4, 2}, rng), random_tensor({3, 3, 3, 2, 3}, rng)});
    check("conv3d/strided",
          [](Tape&, std::span<const Var> v) { return conv3d(v[0], v[1], {{1, 2, 2}, {0, 1, 0}}); },
          {random_tensor({2, 3, 5, 5, 2}, rng), random_tensor({2, 3, 3, 2, 2}, rng)});

    check("batchnorm/train",
          [](Tape&, std::span<const Var> v) {
              BatchNormStats stats(3);
              return batchnorm(v[0], v[1], v[2], stats, Mode::train);
          },
          {random_tensor({3, 2, 2, 2, 3}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)});
    {
        BatchNormStats fixed(3);
        for (std::size_t k = 0; k < 3; ++k) {
            fixed.running_mean[k] = rng.uniform(-0.5, 0.5);
            fixed.running_var[k] = rng.uniform(0.5, 2.0);
        }
        check("batchnorm/eval",
              [fixed](Tape&, std::span<const Var> v) mutable {
                  return batchnorm(v[0], v[1], v[2], fixed, Mode::eval);
              },
              {random_tensor({2, 2, 2, 2, 3}, rng), random_tensor({3}, rng, 0.5, 1.5), random_tensor({3}, rng)});
    }

    const std::vector<std::size_t> labels{2, 0, 3};
    check("softmax_cross_entropy/hard",
          [labels](Tape&, std::span<const Var> v) { return softmax_cross_entropy(v[0], labels); },
          {random_tensor({3, 4}, rng, -2.0, 2.0)});
    {
        Tensor soft = detail::random_distribution_rows(3, 4, rng);
        check("softmax_cross_entropy/soft",
              [soft](Tape&, std::span<const Var> v) { return softmax_cross_entropy(v[0], soft); },
              {random_tensor({3, 4}, rng, -2.0, 2.0)});
        check("weighted_cross_entropy",
              [soft](Tape&, std::span<const Var> v) {
                  return weighted_cross_entropy(v[0], soft, {1.0, 0.0, 1.0}, 3.0);
              },
              {random_tensor({3, 4}, rng, -2.0, 2.0)});
    }

    {
        Tensor x({2, 3, 4});
        for (double& v : x.values()) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * rng.uniform(0.1, 1.0);
        check("relu", [](Tape&, std::span<const Var> v) { return relu(v[0]); }, {x});
    }
    check("avgpool3d", [](Tape&, std::span<const Var> v) { return avgpool3d(v[0], {1, 2, 2}); },
          {random_tensor({2, 2, 4, 4, 3}, rng)});
    check("maxpool3d", [](Tape&, std::span<const Var> v) { return maxpool3d(v[0], {2, 2, 2}); },
          {detail::separated_tensor({2, 2, 4, 4, 2}, rng)});
    check("global_avg_pool", [](Tape&, std::span<const Var> v) { return global_avg_pool(v[0]); },
          {random_tensor({2, 2, 3, 3, 4}, rng)});
    check("linear", [](Tape&, std::span<const Var> v) { return linear(v[0], v[1], v[2]); },
          {random_tensor({3, 5}, rng), random_tensor({5, 4}, rng), random_tensor({4}, rng)});
    check("dropout",
          [](Tape&, std::span<const Var> v) { return dropout(v[0], 0.5, DropoutKey{11, 3, 1}, Mode::train); },
          {random_tensor({4, 6}, rng)});
    check("scale", [](Tape&, std::span<const Var> v) { return scale(v[0], -2.5); }, {random_tensor({3, 3}, rng)});
    check("add", [](Tape&, std::span<const Var> v) { return add(v[0], v[1]); },
          {random_tensor({2, 4}, rng), random_tensor({2, 4}, rng)});
    check("reshape", [](Tape&, std::span<const Var> v) { return reshape(v[0], {6, 2}); },
          {random_tensor({3, 4}, rng)});
    return out;
}

}  // namespace mvpl::tensorlab
