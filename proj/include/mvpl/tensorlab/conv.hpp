#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>

#include "mvpl/tensorlab/ops.hpp"

namespace mvpl::tensorlab {

struct Conv3dParams {
    Window3 stride{1, 1, 1};
    Window3 padding{0, 0, 0};
};

namespace detail {

struct ConvGeometry {
    std::size_t n, t, h, w, cin;
    std::size_t kt, kh, kw, cout;
    std::size_t ot, oh, ow;
    Conv3dParams p;

    std::size_t rows() const { return n * ot * oh * ow; }
    std::size_t patch() const { return kt * kh * kw * cin; }
};

inline ConvGeometry conv_geometry(const Tensor& x, const Tensor& k, const Conv3dParams& p) {
    if (x.rank() != 5 || k.rank() != 5) {
        throw std::invalid_argument("conv3d: input " + to_string(x.shape()) + " must be [N,T,H,W,Cin] and kernel " +
                                    to_string(k.shape()) + " must be [kT,kH,kW,Cin,Cout]");
    }
    ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.dim(4), k.dim(0), k.dim(1), k.dim(2), k.dim(4),
                   0,        0,        0,        p};
    if (k.dim(3) != g.cin) {
        throw std::invalid_argument("conv3d: input has " + std::to_string(g.cin) + " channels but kernel expects " +
                                    std::to_string(k.dim(3)) + " (input " + to_string(x.shape()) + ", kernel " +
                                    to_string(k.shape()) + ")");
    }
    const std::array<std::size_t, 3> in{g.t, g.h, g.w};
    const std::array<std::size_t, 3> ker{g.kt, g.kh, g.kw};
    const char* axis[] = {"T", "H", "W"};
    std::array<std::size_t, 3> out{};
    for (int a = 0; a < 3; ++a) {
        const std::size_t padded = in[a] + 2 * p.padding[a];
        if (p.stride[a] == 0) throw std::invalid_argument("conv3d: zero stride");
        if (padded < ker[a]) {
            throw std::invalid_argument(std::string("conv3d: padded ") + axis[a] + " extent " +
                                        std::to_string(padded) + " is smaller than kernel extent " +
                                        std::to_string(ker[a]));
        }
        out[a] = (padded - ker[a]) / p.stride[a] + 1;
    }
    g.ot = out[0];
    g.oh = out[1];
    g.ow = out[2];
    return g;
}

// Visits every (row, tap) pair of the patch matrix whose source lies inside
// the unpadded input: f(dst offset into a patch row, src offset into x).
template <typename F>
void for_each_patch_run(const ConvGeometry& g, F&& f) {
    const std::size_t patch = g.patch();
    std::size_t row = 0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t a = 0; a < g.ot; ++a)
            for (std::size_t b = 0; b < g.oh; ++b)
                for (std::size_t d = 0; d < g.ow; ++d, ++row) {
                    const std::size_t base = row * patch;
                    for (std::size_t ka = 0; ka < g.kt; ++ka) {
                        const auto tt = static_cast<std::ptrdiff_t>(a * g.p.stride[0] + ka) -
                                        static_cast<std::ptrdiff_t>(g.p.padding[0]);
                        if (tt < 0 || tt >= static_cast<std::ptrdiff_t>(g.t)) continue;
                        for (std::size_t kb = 0; kb < g.kh; ++kb) {
                            const auto hh = static_cast<std::ptrdiff_t>(b * g.p.stride[1] + kb) -
                                            static_cast<std::ptrdiff_t>(g.p.padding[1]);
                            if (hh < 0 || hh >= static_cast<std::ptrdiff_t>(g.h)) continue;
                            for (std::size_t kd = 0; kd < g.kw; ++kd) {
                                const auto ww = static_cast<std::ptrdiff_t>(d * g.p.stride[2] + kd) -
                                                static_cast<std::ptrdiff_t>(g.p.padding[2]);
                                if (ww < 0 || ww >= static_cast<std::ptrdiff_t>(g.w)) continue;
                                const std::size_t dst = base + ((ka * g.kh + kb) * g.kw + kd) * g.cin;
                                const std::size_t src =
                                    (((i * g.t + static_cast<std::size_t>(tt)) * g.h + static_cast<std::size_t>(hh)) *
                                         g.w +
                                     static_cast<std::size_t>(ww)) *
                                    g.cin;
                                f(dst, src);
                            }
                        }
                    }
                }
}

}  // namespace detail

/// 3D cross-correlation. input [N,T,H,W,Cin], kernel [kT,kH,kW,Cin,Cout].
/// Lowered to a patch matrix times the kernel viewed as (kT*kH*kW*Cin) x Cout.
inline Var conv3d(Var input, Var kernel, const Conv3dParams& params = {}) {
    const Tensor& xv = input.value();
    const Tensor& kv = kernel.value();
    const auto geo = detail::conv_geometry(xv, kv, params);
    const std::size_t rows = geo.rows(), patch = geo.patch(), cin = geo.cin;

    auto cols = std::make_shared<std::vector<double>>(rows * patch, 0.0);
    {
        double* c = cols->data();
        const double* x = xv.data();
        detail::for_each_patch_run(geo, [&](std::size_t dst, std::size_t src) {
            for (std::size_t k = 0; k < cin; ++k) c[dst + k] = x[src + k];
        });
    }
    Tensor y({geo.n, geo.ot, geo.oh, geo.ow, geo.cout});
    MatMap(y.data(), rows, geo.cout).noalias() =
        ConstMatMap(cols->data(), rows, patch) * ConstMatMap(kv.data(), patch, geo.cout);

    return input.tape->record("conv3d", std::move(y), {input, kernel},
                              [input, kernel, geo, cols](Tape& tape, const Tensor& g) {
                                  const std::size_t rows = geo.rows(), patch = geo.patch();
                                  ConstMatMap gm(g.data(), rows, geo.cout);
                                  if (tape.requires_grad(kernel)) {
                                      MatMap(tape.grad_buffer(kernel).data(), patch, geo.cout).noalias() +=
                                          ConstMatMap(cols->data(), rows, patch).transpose() * gm;
                                  }
                                  if (tape.requires_grad(input)) {
                                      RowMatrix dcols =
                                          gm * ConstMatMap(kernel.value().data(), patch, geo.cout).transpose();
                                      double* dx = tape.grad_buffer(input).data();
                                      const double* dc = dcols.data();
                                      detail::for_each_patch_run(geo, [&](std::size_t dst, std::size_t src) {
                                          for (std::size_t k = 0; k < geo.cin; ++k) dx[src + k] += dc[dst + k];
                                      });
                                  }
                              });
}

}  // namespace mvpl::tensorlab
