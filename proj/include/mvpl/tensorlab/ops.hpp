#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include "mvpl/rng.hpp"
#include "mvpl/tensorlab/tape.hpp"

namespace mvpl::tensorlab {

enum class Mode { train, eval };

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstRowVec = Eigen::Map<const Eigen::RowVectorXd>;

namespace detail {

inline void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
    }
}

inline void require_rank(std::string_view op, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank) {
        throw std::invalid_argument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                    to_string(t.shape()));
    }
}

inline void accumulate(Tape& tape, Var v, const Tensor& g) {
    if (!tape.requires_grad(v)) return;
    Tensor& dst = tape.grad_buffer(v);
    double* d = dst.data();
    const double* s = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

}  // namespace detail

inline Var add(Var a, Var b) {
    detail::require_same_shape("add", a.value(), b.value());
    Tensor out = a.value();
    const double* pb = b.value().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
    return a.tape->record("add", std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
        detail::accumulate(tape, a, g);
        detail::accumulate(tape, b, g);
    });
}

inline Var scale(Var a, double s) {
    Tensor out = a.value();
    for (double& v : out.values()) v *= s;
    return a.tape->record("scale", std::move(out), {a}, [a, s](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(a)) return;
        Tensor& dst = tape.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += s * g[i];
    });
}

// Subgradient at exactly 0 is 0.
inline Var relu(Var a) {
    Tensor out = a.value();
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return a.tape->record("relu", std::move(out), {a}, [a](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(a)) return;
        Tensor& dst = tape.grad_buffer(a);
        const Tensor& x = a.value();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) dst[i] += g[i];
    });
}

inline Var reshape(Var a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return a.tape->record("reshape", std::move(out), {a}, [a](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(a)) return;
        Tensor& dst = tape.grad_buffer(a);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    });
}

/// x[N, in] * weight[in, out] + bias[out]
inline Var linear(Var x, Var weight, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const Tensor& bv = bias.value();
    detail::require_rank("linear", xv, 2);
    detail::require_rank("linear", wv, 2);
    detail::require_rank("linear", bv, 1);
    const std::size_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(1);
    if (wv.dim(0) != in || bv.dim(0) != out) {
        throw std::invalid_argument("linear: input " + to_string(xv.shape()) + ", weight " + to_string(wv.shape()) +
                                    ", bias " + to_string(bv.shape()) + " are incompatible");
    }
    Tensor y({n, out});
    MatMap ym(y.data(), n, out);
    ym.noalias() = ConstMatMap(xv.data(), n, in) * ConstMatMap(wv.data(), in, out);
    ym.rowwise() += ConstRowVec(bv.data(), out);
    return x.tape->record("linear", std::move(y), {x, weight, bias},
                          [x, weight, bias, n, in, out](Tape& tape, const Tensor& g) {
                              ConstMatMap gm(g.data(), n, out);
                              if (tape.requires_grad(x)) {
                                  MatMap(tape.grad_buffer(x).data(), n, in).noalias() +=
                                      gm * ConstMatMap(weight.value().data(), in, out).transpose();
                              }
                              if (tape.requires_grad(weight)) {
                                  MatMap(tape.grad_buffer(weight).data(), in, out).noalias() +=
                                      ConstMatMap(x.value().data(), n, in).transpose() * gm;
                              }
                              if (tape.requires_grad(bias)) {
                                  Eigen::Map<Eigen::RowVectorXd>(tape.grad_buffer(bias).data(), out) +=
                                      gm.colwise().sum();
                              }
                          });
}

/// Mean over the T, H, W axes of an [N, T, H, W, C] tensor -> [N, C].
inline Var global_avg_pool(Var x) {
    const Tensor& xv = x.value();
    detail::require_rank("global_avg_pool", xv, 5);
    const std::size_t n = xv.dim(0), c = xv.dim(4);
    const std::size_t cells = xv.dim(1) * xv.dim(2) * xv.dim(3);
    Tensor y({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        const double* src = xv.data() + i * cells * c;
        double* dst = y.data() + i * c;
        for (std::size_t p = 0; p < cells; ++p)
            for (std::size_t k = 0; k < c; ++k) dst[k] += src[p * c + k];
        for (std::size_t k = 0; k < c; ++k) dst[k] /= static_cast<double>(cells);
    }
    return x.tape->record("global_avg_pool", std::move(y), {x}, [x, n, c, cells](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(x)) return;
        Tensor& dst = tape.grad_buffer(x);
        const double inv = 1.0 / static_cast<double>(cells);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < cells; ++p)
                for (std::size_t k = 0; k < c; ++k) dst[(i * cells + p) * c + k] += g[i * c + k] * inv;
    });
}

using Window3 = std::array<std::size_t, 3>;

namespace detail {

struct PoolGeometry {
    std::size_t n, t, h, w, c, ot, oh, ow;
    Window3 win, stride;
};

inline PoolGeometry pool_geometry(std::string_view op, const Tensor& x, Window3 win, Window3 stride) {
    require_rank(op, x, 5);
    PoolGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.dim(4), 0, 0, 0, win, stride};
    const std::array<std::size_t, 3> in{g.t, g.h, g.w};
    std::array<std::size_t, 3> out{};
    for (int a = 0; a < 3; ++a) {
        if (win[a] == 0 || stride[a] == 0 || in[a] < win[a]) {
            throw std::invalid_argument(std::string(op) + ": window " + std::to_string(win[a]) + " on axis " +
                                        std::to_string(a + 1) + " does not fit input " + to_string(x.shape()));
        }
        out[a] = (in[a] - win[a]) / stride[a] + 1;
    }
    g.ot = out[0];
    g.oh = out[1];
    g.ow = out[2];
    return g;
}

// Calls f(out_index, in_index) for every (output cell, window tap, channel).
template <typename F>
void for_each_pool_tap(const PoolGeometry& g, F&& f) {
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t a = 0; a < g.ot; ++a)
            for (std::size_t b = 0; b < g.oh; ++b)
                for (std::size_t d = 0; d < g.ow; ++d) {
                    const std::size_t o = (((i * g.ot + a) * g.oh + b) * g.ow + d) * g.c;
                    for (std::size_t ka = 0; ka < g.win[0]; ++ka)
                        for (std::size_t kb = 0; kb < g.win[1]; ++kb)
                            for (std::size_t kd = 0; kd < g.win[2]; ++kd) {
                                const std::size_t tt = a * g.stride[0] + ka;
                                const std::size_t hh = b * g.stride[1] + kb;
                                const std::size_t ww = d * g.stride[2] + kd;
                                const std::size_t s = (((i * g.t + tt) * g.h + hh) * g.w + ww) * g.c;
                                for (std::size_t k = 0; k < g.c; ++k) f(o + k, s + k);
                            }
                }
}

}  // namespace detail

inline Var avgpool3d(Var x, Window3 window, Window3 stride) {
    const auto geo = detail::pool_geometry("avgpool3d", x.value(), window, stride);
    const double inv = 1.0 / static_cast<double>(window[0] * window[1] * window[2]);
    const Tensor& xv = x.value();
    Tensor y({geo.n, geo.ot, geo.oh, geo.ow, geo.c});
    detail::for_each_pool_tap(geo, [&](std::size_t o, std::size_t s) { y[o] += xv[s] * inv; });
    return x.tape->record("avgpool3d", std::move(y), {x}, [x, geo, inv](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(x)) return;
        Tensor& dst = tape.grad_buffer(x);
        detail::for_each_pool_tap(geo, [&](std::size_t o, std::size_t s) { dst[s] += g[o] * inv; });
    });
}

inline Var avgpool3d(Var x, Window3 window) { return avgpool3d(x, window, window); }

// Ties route the gradient to the first maximal tap.
inline Var maxpool3d(Var x, Window3 window, Window3 stride) {
    const auto geo = detail::pool_geometry("maxpool3d", x.value(), window, stride);
    const Tensor& xv = x.value();
    const std::size_t count = geo.n * geo.ot * geo.oh * geo.ow * geo.c;
    Tensor y({geo.n, geo.ot, geo.oh, geo.ow, geo.c}, -std::numeric_limits<double>::infinity());
    auto argmax = std::make_shared<std::vector<std::size_t>>(count, 0);
    detail::for_each_pool_tap(geo, [&](std::size_t o, std::size_t s) {
        if (xv[s] > y[o]) {
            y[o] = xv[s];
            (*argmax)[o] = s;
        }
    });
    return x.tape->record("maxpool3d", std::move(y), {x}, [x, argmax](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(x)) return;
        Tensor& dst = tape.grad_buffer(x);
        for (std::size_t o = 0; o < g.size(); ++o) dst[(*argmax)[o]] += g[o];
    });
}

inline Var maxpool3d(Var x, Window3 window) { return maxpool3d(x, window, window); }

/// Identifies one dropout application: the mask is a pure function of
/// (seed, step, layer, element index), independent of evaluation order.
struct DropoutKey {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::uint64_t layer = 0;
};

inline bool dropout_keeps(const DropoutKey& key, double rate, std::size_t index) {
    const std::uint64_t base = derive_seed(key.seed, "dropout", {key.step, key.layer});
    return unit_from_bits(mix64(base ^ mix64(index))) >= rate;
}

/// Inverted dropout; identity in eval mode.
inline Var dropout(Var x, double rate, const DropoutKey& key, Mode mode) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must lie in [0, 1)");
    if (mode == Mode::eval || rate == 0.0) {
        return reshape(x, x.value().shape());
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(x.value().size());
    Tensor y = x.value();
    for (std::size_t i = 0; i < y.size(); ++i) {
        (*mask)[i] = dropout_keeps(key, rate, i) ? keep_scale : 0.0;
        y[i] *= (*mask)[i];
    }
    return x.tape->record("dropout", std::move(y), {x}, [x, mask](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(x)) return;
        Tensor& dst = tape.grad_buffer(x);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * (*mask)[i];
    });
}

/// Scalar sum_i w_i x_i with constant weights. Reduces any tensor to a
/// scalar loss, e.g. for gradient checks.
inline Var weighted_sum(Var x, Tensor weights) {
    detail::require_same_shape("weighted_sum", x.value(), weights);
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) acc += weights[i] * x.value()[i];
    auto w = std::make_shared<Tensor>(std::move(weights));
    return x.tape->record("weighted_sum", Tensor::scalar(acc), {x}, [x, w](Tape& tape, const Tensor& g) {
        if (!tape.requires_grad(x)) return;
        Tensor& dst = tape.grad_buffer(x);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * (*w)[i];
    });
}

}  // namespace mvpl::tensorlab
