#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvpl/tensorlab/ops.hpp"

namespace mvpl::tensorlab {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;

    explicit BatchNormStats(std::size_t channels = 1)
        : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}
};

/// Channel-last batch normalization: statistics are taken over every axis
/// except the last. Train mode normalizes with the batch statistics and
/// folds them into `stats` as running = momentum * running + (1 - momentum) * batch
/// (the running variance uses the unbiased estimate). Eval mode reads `stats` only.
inline Var batchnorm(Var x, Var gamma, Var beta, BatchNormStats& stats, Mode mode,
                     double momentum = kBatchNormMomentum) {
    const Tensor& xv = x.value();
    if (xv.rank() < 2) throw std::invalid_argument("batchnorm: input must have a batch and a channel axis");
    const std::size_t c = xv.shape().back();
    const std::size_t rows = xv.size() / c;
    if (gamma.value().shape() != Shape{c} || beta.value().shape() != Shape{c} ||
        stats.running_mean.shape() != Shape{c} || stats.running_var.shape() != Shape{c}) {
        throw std::invalid_argument("batchnorm: parameters must have shape [" + std::to_string(c) + "] for input " +
                                    to_string(xv.shape()));
    }
    const double* gv = gamma.value().data();
    const double* bv = beta.value().data();

    if (mode == Mode::eval) {
        auto inv_std = std::make_shared<std::vector<double>>(c);
        for (std::size_t k = 0; k < c; ++k) (*inv_std)[k] = 1.0 / std::sqrt(stats.running_var[k] + kBatchNormEps);
        auto xhat = std::make_shared<Tensor>(xv);
        Tensor y(xv.shape());
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = 0; k < c; ++k) {
                const std::size_t i = r * c + k;
                (*xhat)[i] = (xv[i] - stats.running_mean[k]) * (*inv_std)[k];
                y[i] = gv[k] * (*xhat)[i] + bv[k];
            }
        return x.tape->record("batchnorm", std::move(y), {x, gamma, beta},
                              [x, gamma, beta, xhat, inv_std, rows, c](Tape& tape, const Tensor& g) {
                                  const double* gam = gamma.value().data();
                                  if (tape.requires_grad(x)) {
                                      Tensor& dx = tape.grad_buffer(x);
                                      for (std::size_t i = 0; i < g.size(); ++i)
                                          dx[i] += g[i] * gam[i % c] * (*inv_std)[i % c];
                                  }
                                  if (tape.requires_grad(gamma) || tape.requires_grad(beta)) {
                                      std::vector<double> dg(c, 0.0), db(c, 0.0);
                                      for (std::size_t r = 0; r < rows; ++r)
                                          for (std::size_t k = 0; k < c; ++k) {
                                              dg[k] += g[r * c + k] * (*xhat)[r * c + k];
                                              db[k] += g[r * c + k];
                                          }
                                      if (tape.requires_grad(gamma)) {
                                          Tensor& d = tape.grad_buffer(gamma);
                                          for (std::size_t k = 0; k < c; ++k) d[k] += dg[k];
                                      }
                                      if (tape.requires_grad(beta)) {
                                          Tensor& d = tape.grad_buffer(beta);
                                          for (std::size_t k = 0; k < c; ++k) d[k] += db[k];
                                      }
                                  }
                              });
    }

    if (xv.dim(0) < 2) {
        throw std::invalid_argument("batchnorm: train mode needs a batch of at least 2, got " +
                                    to_string(xv.shape()));
    }
    std::vector<double> mean(c, 0.0), var(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) mean[k] += xv[r * c + k];
    for (double& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) {
            const double d = xv[r * c + k] - mean[k];
            var[k] += d * d;
        }
    for (double& v : var) v /= static_cast<double>(rows);

    auto inv_std = std::make_shared<std::vector<double>>(c);
    for (std::size_t k = 0; k < c; ++k) (*inv_std)[k] = 1.0 / std::sqrt(var[k] + kBatchNormEps);
    auto xhat = std::make_shared<Tensor>(xv.shape());
    Tensor y(xv.shape());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < c; ++k) {
            const std::size_t i = r * c + k;
            (*xhat)[i] = (xv[i] - mean[k]) * (*inv_std)[k];
            y[i] = gv[k] * (*xhat)[i] + bv[k];
        }

    const double unbias = static_cast<double>(rows) / static_cast<double>(rows - 1);
    for (std::size_t k = 0; k < c; ++k) {
        stats.running_mean[k] = momentum * stats.running_mean[k] + (1.0 - momentum) * mean[k];
        stats.running_var[k] = momentum * stats.running_var[k] + (1.0 - momentum) * var[k] * unbias;
    }

    return x.tape->record(
        "batchnorm", std::move(y), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std, rows, c](Tape& tape, const Tensor& g) {
            std::vector<double> dg(c, 0.0), db(c, 0.0);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t k = 0; k < c; ++k) {
                    dg[k] += g[r * c + k] * (*xhat)[r * c + k];
                    db[k] += g[r * c + k];
                }
            if (tape.requires_grad(x)) {
                // dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat))
                const double* gam = gamma.value().data();
                const double inv_rows = 1.0 / static_cast<double>(rows);
                Tensor& dx = tape.grad_buffer(x);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t k = 0; k < c; ++k) {
                        const std::size_t i = r * c + k;
                        dx[i] += gam[k] * (*inv_std)[k] *
                                 (g[i] - db[k] * inv_rows - (*xhat)[i] * dg[k] * inv_rows);
                    }
            }
            if (tape.requires_grad(gamma)) {
                Tensor& d = tape.grad_buffer(gamma);
                for (std::size_t k = 0; k < c; ++k) d[k] += dg[k];
            }
            if (tape.requires_grad(beta)) {
                Tensor& d = tape.grad_buffer(beta);
                for (std::size_t k = 0; k < c; ++k) d[k] += db[k];
            }
        });
}

}  // namespace mvpl::tensorlab
