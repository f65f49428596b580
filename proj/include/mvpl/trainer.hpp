#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvpl/augment.hpp"
#include "mvpl/data.hpp"
#include "mvpl/model.hpp"
#include "mvpl/rng.hpp"
#include "mvpl/ssl.hpp"
#include "mvpl/tensorlab.hpp"
#include "mvpl/views.hpp"

namespace mvpl::trainer {

using model::ModelState;
using tensorlab::Mode;
using tensorlab::Tape;
using tensorlab::Tensor;
using tensorlab::Var;
using views::VideoClip;
using views::ViewKind;
using views::ViewSet;

struct TrainConfig {
    std::size_t mu = 3;
    double lambda_u = 1.0;
    ssl::StrategyConfig strategy;
    ssl::InstantiationConfig inst;  // holds tau
    std::size_t epochs = 60;
    std::size_t warmup_epochs = 0;
    double eta = 0.8;
    double ramp_epochs = 3.4;  // 34 of 600 epochs, scaled to 60
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch = 8;  // N_l
    std::uint64_t seed = 0;
    std::vector<ViewKind> views{ViewKind::rgb, ViewKind::flow, ViewKind::tg};
    std::size_t clip_frames = 0;  // 0: whole video
    std::size_t crop = 0;         // 0: no spatial crop
    augment::AugmentationPolicy weak{};
    augment::AugmentationPolicy strong{augment::AugmentKind::strong};
    std::size_t eval_clips = 2, eval_crops = 1;
    std::size_t eval_every = 1;  // 0: only after the last epoch
    model::ModelConfig model;

    void validate() const {
        auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
        if (!(lambda_u >= 0.0)) fail("lambda_u must be >= 0");
        if (epochs == 0 || warmup_epochs >= epochs) fail("need W < epochs");
        if (views.empty() || std::find(views.begin(), views.end(), ViewKind::rgb) == views.end())
            fail("views must be non-empty and contain rgb");
        for (std::size_t i = 0; i < views.size(); ++i)
            if (std::find(views.begin(), views.begin() + static_cast<long>(i), views[i]) != views.begin() + static_cast<long>(i))
                fail("views listed twice");
        if (batch < 2) fail("batch (N_l) must be >= 2 for batch statistics");
        if (!(eta > 0.0) || !(ramp_epochs >= 0.0)) fail("eta must be > 0 and ramp_epochs >= 0");
        if (!(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) fail("momentum in [0, 1), decay >= 0");
        if (eval_clips < 1 || eval_clips > 10 || eval_crops < 1 || eval_crops > 3) fail("eval protocol up to 10 x 3");
        inst.validate();
    }
};

/// A clip and its views, labelled for the losses and the diagnostics.
struct Sample {
    ViewSet views;
    std::size_t label = 0;
};

struct TrainingData {
    std::vector<Sample> labeled;
    std::vector<Sample> unlabeled;  // labels kept only for pseudo-label diagnostics
    std::vector<Sample> eval;       // rgb only
};

/// Splits a dataset for training: the labeled subset, the whole training set as
/// the unlabeled pool, and the evaluation clips. `views_computed` receives the
/// views that were not stored in the dataset and had to be derived.
inline TrainingData prepare(const data::Dataset& d, const std::vector<ViewKind>& wanted,
                            std::vector<ViewKind>* views_computed = nullptr) {
    if (views_computed) {
        views_computed->clear();
        for (ViewKind k : wanted)
            if (!d.has_view(k)) views_computed->push_back(k);
    }
    TrainingData out;
    std::vector<std::size_t> train = d.indices(data::Split::train);
    for (std::size_t i : train) {
        Sample s{data::viewset(d, i, wanted), d.clips[i].label};
        if (d.clips[i].labeled) out.labeled.push_back(s);
        out.unlabeled.push_back(std::move(s));
    }
    for (std::size_t i : d.indices(data::Split::eval))
        out.eval.push_back(Sample{data::viewset(d, i, {ViewKind::rgb}), d.clips[i].label});
    return out;
}

inline VideoClip slice_frames(const VideoClip& v, std::size_t start, std::size_t len) {
    if (v.frames.empty()) return v;
    if (start + len > v.frames_count()) throw std::invalid_argument("slice_frames: range past the end of the clip");
    const std::size_t per = v.height() * v.width() * v.channels();
    std::vector<double> vals(v.frames.data() + start * per, v.frames.data() + (start + len) * per);
    return VideoClip{Tensor({len, v.height(), v.width(), v.channels()}, std::move(vals)), v.id, v.stride};
}

inline ViewSet slice_views(const ViewSet& vs, std::size_t start, std::size_t len) {
    return {slice_frames(vs.rgb, start, len), slice_frames(vs.flow, start, len), slice_frames(vs.tg, start, len)};
}

/// Learning rate at iteration n of n_max: linear ramp eta (n + 1) / n_ramp for
/// n < n_ramp, then the half-period cosine eta / 2 (cos(pi n / n_max) + 1).
inline double lr_at(std::size_t n, std::size_t n_max, std::size_t n_ramp, double eta) {
    if (n > n_max) throw std::invalid_argument("lr_at: iteration past the end of the schedule");
    if (n < n_ramp) return eta * static_cast<double>(n + 1) / static_cast<double>(n_ramp);
    return eta * 0.5 * (std::cos(std::numbers::pi * static_cast<double>(n) / static_cast<double>(n_max)) + 1.0);
}

inline std::size_t iterations_per_epoch(std::size_t labeled, std::size_t batch) { return (labeled + batch - 1) / batch; }

inline std::size_t ramp_iterations(const TrainConfig& c, std::size_t per_epoch) {
    return static_cast<std::size_t>(std::llround(c.ramp_epochs * static_cast<double>(per_epoch)));
}

namespace detail {

inline augment::AugmentationPolicy with_crop(augment::AugmentationPolicy p, const TrainConfig& c,
                                             std::string_view label) {
    p.crop_h = p.crop_w = c.crop;
    p.seed = derive_seed(c.seed, label);
    return p;
}

inline std::size_t view_slot(ViewKind k) { return static_cast<std::size_t>(k); }

// Running statistics of view k: s.bn for rgb, otherwise a set kept per view.
inline std::vector<tensorlab::BatchNormStats>& view_stats(ModelState& s, ViewKind k) {
    if (k == ViewKind::rgb) return s.bn;
    if (s.view_bn.empty()) {
        std::vector<tensorlab::BatchNormStats> fresh;
        for (std::size_t w : s.config.widths) fresh.emplace_back(w);
        s.view_bn.assign(views::kAllViews.size() - 1, fresh);
    }
    return s.view_bn[view_slot(k) - 1];
}

inline Tensor stack_view(std::span<const ViewSet> batch, ViewKind k) {
    std::vector<const VideoClip*> clips;
    for (const ViewSet& vs : batch) clips.push_back(&vs.view(k));
    return model::stack_clips(clips);
}

// Dropout stream per (branch, view) within one step.
inline tensorlab::DropoutKey dropout_key(const TrainConfig& c, std::uint64_t step, std::uint64_t branch, ViewKind k) {
    return {derive_seed(c.seed, "train.dropout"), step, branch * 4 + view_slot(k)};
}

}  // namespace detail

/// The weak policy of a run with its crop and seed applied.
inline augment::AugmentationPolicy weak_policy(const TrainConfig& c) {
    return detail::with_crop(c.weak, c, "augment.weak");
}

/// Policy of the learner branch on unlabeled data: weak for pseudo_label, strong otherwise.
inline augment::AugmentationPolicy learner_policy(const TrainConfig& c) {
    if (ssl::learner_augmentation(c.inst.method) == augment::AugmentKind::weak)
        return detail::with_crop(c.weak, c, "augment.learner.weak");
    augment::AugmentationPolicy p = c.strong;
    p.kind = augment::AugmentKind::strong;
    return detail::with_crop(p, c, "augment.strong");
}

inline model::ModelConfig model_config(const TrainConfig& c, const VideoClip& sample) {
    model::ModelConfig m = c.model;
    m.frames = c.clip_frames ? c.clip_frames : sample.frames_count();
    m.height = c.crop ? c.crop : sample.height();
    m.width = c.crop ? c.crop : sample.width();
    m.channels = sample.channels();
    return m;
}

/// Weak augmentation of each labelled ViewSet.
inline std::vector<ViewSet> augment_labeled(std::span<const ViewSet> batch, const TrainConfig& c, std::uint64_t step) {
    const augment::AugmentationPolicy p = weak_policy(c);
    std::vector<ViewSet> out;
    for (const ViewSet& vs : batch) out.push_back(augment::augment_viewset(vs, p, "train.labeled", step).views);
    return out;
}

/// (1 / (N M)) sum_i sum_m H(y_i, f(x_i^m)) over the enabled views of already
/// augmented inputs, one train-mode forward per view.
inline Var supervised_loss(Tape& tape, std::span<const Var> params, ModelState& s, std::span<const ViewSet> batch,
                           std::span<const std::size_t> labels, const TrainConfig& c, std::uint64_t step) {
    if (batch.empty() || labels.size() != batch.size())
        throw std::invalid_argument("supervised_loss: need one label per clip in a non-empty batch");
    const double norm = static_cast<double>(batch.size() * c.views.size());
    const Tensor targets = tensorlab::one_hot(labels, s.config.classes);
    std::optional<Var> total;
    for (ViewKind k : c.views) {
        Var logits = model::forward(tape, params, detail::view_stats(s, k), s.config, detail::stack_view(batch, k),
                                    Mode::train, detail::dropout_key(c, step, 0, k));
        Var l = tensorlab::weighted_cross_entropy(logits, targets, std::vector<double>(batch.size(), 1.0), norm);
        total = total ? tensorlab::add(*total, l) : l;
    }
    return *total;
}

struct UnsupervisedStats {
    std::size_t included = 0, considered = 0;
    std::vector<std::size_t> correct, counted;  // per enabled view, pseudo-label vs ground truth
};

/// Pseudo-labels for every clip and enabled view from eval-mode predictions
/// on the weakly augmented inputs.
inline std::vector<std::vector<ssl::UnlabeledTarget>> pseudo_targets(ModelState& s,
                                                                     std::span<const ViewSet> weak,
                                                                     std::span<const std::uint64_t> keys,
                                                                     const TrainConfig& c) {
    const std::size_t n = weak.size(), views = c.views.size(), classes = s.config.classes;
    std::vector<Tensor> q;
    for (ViewKind k : c.views)
        q.push_back(model::predict_distribution(s, detail::stack_view(weak, k), &detail::view_stats(s, k)));
    std::vector<std::vector<ssl::UnlabeledTarget>> out;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor rows({views, classes});
        for (std::size_t m = 0; m < views; ++m)
            for (std::size_t j = 0; j < classes; ++j) rows[m * classes + j] = q[m][i * classes + j];
        ssl::PseudoLabelOutcome o = ssl::generate_pseudolabels(rows, c.strategy, c.inst.tau, keys[i]);
        out.push_back(ssl::unlabeled_targets(o, c.inst));
    }
    return out;
}

/// (1 / (N M)) sum_i sum_m 1[mask] H(target_i^m, f(learner_i^m)); `weak` feeds the
/// prediction pass (no gradients), `learner` the train-mode forward.
inline std::optional<Var> unsupervised_loss(Tape& tape, std::span<const Var> params, ModelState& s,
                                            std::span<const ViewSet> weak, std::span<const ViewSet> learner,
                                            std::span<const std::uint64_t> keys, const TrainConfig& c,
                                            std::uint64_t step, UnsupervisedStats* stats = nullptr,
                                            std::span<const std::size_t> truth = {}) {
    const std::size_t n = weak.size(), views = c.views.size(), classes = s.config.classes;
    if (n == 0 || learner.size() != n || keys.size() != n)
        throw std::invalid_argument("unsupervised_loss: weak, learner and key batches must match");
    const auto targets = pseudo_targets(s, weak, keys, c);
    if (stats) {
        stats->correct.assign(views, 0);
        stats->counted.assign(views, 0);
        stats->included = 0;
        stats->considered = n * views;
    }
    const double norm = static_cast<double>(n * views);
    std::optional<Var> total;
    for (std::size_t m = 0; m < views; ++m) {
        Tensor t({n, classes});
        std::vector<double> w(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const ssl::UnlabeledTarget& u = targets[i][m];
            std::copy(u.target.begin(), u.target.end(), t.data() + i * classes);
            w[i] = u.include ? 1.0 : 0.0;
            if (stats) {
                stats->included += u.include;
                if (!truth.empty()) {
                    ++stats->counted[m];
                    stats->correct[m] += u.label == truth[i];
                }
            }
        }
        if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) continue;
        Var logits = model::forward(tape, params, detail::view_stats(s, c.views[m]), s.config,
                                    detail::stack_view(learner, c.views[m]), Mode::train,
                                    detail::dropout_key(c, step, 1, c.views[m]));
        Var l = tensorlab::weighted_cross_entropy(logits, std::move(t), std::move(w), norm);
        total = total ? tensorlab::add(*total, l) : l;
    }
    return total;
}

/// Momentum buffers, one per parameter tensor.
struct Optimizer {
    std::vector<Tensor> velocity;
};

/// v = momentum v + g; w -= lr v; then decoupled decay w -= lr wd w_old on conv
/// and linear weights.
inline void sgd_step(ModelState& s, Optimizer& opt, const std::vector<Tensor>& grads, double lr,
                     const TrainConfig& c) {
    if (opt.velocity.empty())
        for (const Tensor& p : s.params) opt.velocity.emplace_back(p.shape(), 0.0);
    for (std::size_t i = 0; i < s.params.size(); ++i) {
        Tensor& w = s.params[i];
        Tensor& v = opt.velocity[i];
        const double decay = s.info[i].decay ? c.weight_decay : 0.0;
        for (std::size_t j = 0; j < w.size(); ++j) {
            v[j] = c.momentum * v[j] + grads[i][j];
            w[j] -= lr * v[j] + lr * decay * w[j];
        }
    }
}

struct LossReport {
    std::size_t epoch = 0, iteration = 0;
    double lr = 0.0;
    double loss_s = 0.0, loss_u = 0.0, loss_total = 0.0;
    double mask_rate = 0.0;
    std::vector<double> pl_accuracy;  // per enabled view; NaN when no unlabeled batch was used
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double lr = 0.0, loss_s = 0.0, loss_u = 0.0, mask_rate = 0.0;
    std::vector<double> pl_accuracy;
    double top1 = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(p));
    return p;
}

inline ViewSet temporal_crop(const Sample& s, const TrainConfig& c, std::uint64_t seed) {
    const std::size_t len = s.views.rgb.frames_count();
    const std::size_t t = c.clip_frames ? c.clip_frames : len;
    if (t > len) throw std::invalid_argument("clip_frames exceeds the video length");
    Rng rng(seed);
    const auto start = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(len - t)));
    return slice_views(s.views, start, t);
}

}  // namespace detail

/// One optimization step on labelled batch `lab` and unlabeled batch `unl`
/// (empty during warm-up). Returns the step's report.
inline LossReport train_step(ModelState& s, Optimizer& opt, std::span<const Sample* const> lab,
                             std::span<const Sample* const> unl, const TrainConfig& c, std::size_t epoch,
                             std::size_t n, std::size_t n_max, std::size_t n_ramp) {
    const std::uint64_t step = n;
    s.step = step;
    std::vector<ViewSet> lab_clips;
    std::vector<std::size_t> labels;
    for (const Sample* x : lab) {
        lab_clips.push_back(detail::temporal_crop(*x, c, derive_seed(c.seed, "train.temporal.labeled",
                                                                     {step, x->views.rgb.id})));
        labels.push_back(x->label);
    }
    Tape tape;
    std::vector<Var> params = model::bind(tape, s, true);
    const std::vector<ViewSet> lab_aug = augment_labeled(lab_clips, c, step);
    Var ls = supervised_loss(tape, params, s, lab_aug, labels, c, step);
    LossReport r;
    r.epoch = epoch;
    r.iteration = n;
    r.loss_s = ls.value().item();
    r.pl_accuracy.assign(c.views.size(), std::numeric_limits<double>::quiet_NaN());
    Var total = ls;
    if (!unl.empty()) {
        const augment::AugmentationPolicy wp = weak_policy(c), lp = learner_policy(c);
        std::vector<ViewSet> weak, learner;
        std::vector<std::uint64_t> keys;
        std::vector<std::size_t> truth;
        for (const Sample* x : unl) {
            ViewSet clip = detail::temporal_crop(*x, c, derive_seed(c.seed, "train.temporal.unlabeled",
                                                                    {step, x->views.rgb.id}));
            weak.push_back(augment::augment_viewset(clip, wp, "train.unlabeled.weak", step).views);
            learner.push_back(augment::augment_viewset(clip, lp, "train.unlabeled.learner", step).views);
            keys.push_back(derive_seed(step, "train.pseudo", {x->views.rgb.id}));
            truth.push_back(x->label);
        }
        UnsupervisedStats st;
        std::optional<Var> lu = unsupervised_loss(tape, params, s, weak, learner, keys, c, step, &st, truth);
        r.mask_rate = static_cast<double>(st.included) / static_cast<double>(st.considered);
        for (std::size_t m = 0; m < c.views.size(); ++m)
            r.pl_accuracy[m] = static_cast<double>(st.correct[m]) / static_cast<double>(st.counted[m]);
        if (lu) {
            r.loss_u = lu->value().item();
            total = tensorlab::add(ls, tensorlab::scale(*lu, c.lambda_u));
        }
    }
    r.loss_total = total.value().item();
    tape.backward(total);
    std::vector<Tensor> grads;
    for (Var p : params) grads.push_back(tape.grad(p));
    r.lr = lr_at(n, n_max, n_ramp, c.eta);
    sgd_step(s, opt, grads, r.lr, c);
    return r;
}

/// One epoch over the labelled set: ceil(N_labeled / N_l) steps with N_l labelled
/// clips (the epoch permutation wraps to fill the last batch) and mu N_l clips from
/// the unlabeled pool, which is consumed as a stream of permutations. Epochs below
/// warmup_epochs do not touch the unlabeled pool.
inline std::vector<LossReport> train_epoch(ModelState& s, Optimizer& opt, const TrainingData& d,
                                           const TrainConfig& c, std::size_t epoch) {
    if (d.labeled.empty()) throw std::invalid_argument("train_epoch: labeled set is empty");
    const std::size_t per_epoch = iterations_per_epoch(d.labeled.size(), c.batch);
    const std::size_t n_max = per_epoch * c.epochs, n_ramp = ramp_iterations(c, per_epoch);
    const std::vector<std::size_t> order =
        detail::permutation(d.labeled.size(), derive_seed(c.seed, "train.order.labeled", {epoch}));
    const bool semi = epoch >= c.warmup_epochs && c.mu > 0 && !d.unlabeled.empty();
    const std::size_t nu = c.mu * c.batch;
    std::vector<LossReport> out;
    std::vector<std::size_t> pool_perm;
    std::size_t pool_round = std::numeric_limits<std::size_t>::max();
    for (std::size_t b = 0; b < per_epoch; ++b) {
        const std::size_t n = epoch * per_epoch + b;
        std::vector<const Sample*> lab, unl;
        for (std::size_t j = 0; j < c.batch; ++j) lab.push_back(&d.labeled[order[(b * c.batch + j) % order.size()]]);
        if (semi) {
            for (std::size_t j = 0; j < nu; ++j) {
                const std::size_t pos = n * nu + j;
                const std::size_t round = pos / d.unlabeled.size();
                if (round != pool_round) {
                    pool_perm = detail::permutation(d.unlabeled.size(),
                                                    derive_seed(c.seed, "train.order.unlabeled", {round}));
                    pool_round = round;
                }
                unl.push_back(&d.unlabeled[pool_perm[pos % d.unlabeled.size()]]);
            }
        }
        out.push_back(train_step(s, opt, lab, unl, c, epoch, n, n_max, n_ramp));
    }
    return out;
}

/// Maps a batch of clips to probability rows.
using Predictor = std::function<Tensor(const Tensor&)>;

struct EvalProtocol {
    std::size_t clips = 2, crops = 1;
    std::size_t clip_frames = 0;  // 0: whole video
    std::size_t crop = 0;         // 0: whole frame
    double crop_scale = 1.14;
};

/// Spatial crop `index` of `count`: shorter side scaled to crop_scale x crop,
/// then crops at the start, centre and end of the longer axis (width on ties).
inline augment::GeometryParams eval_geometry(std::size_t h, std::size_t w, const EvalProtocol& p,
                                             std::size_t index, std::size_t count) {
    augment::GeometryParams g = augment::centered_geometry(h, w, p.crop, p.crop, p.crop_scale);
    if (count == 1) return g;
    const std::size_t pos = count == 2 ? index * 2 : index;  // 0 start, 1 centre, 2 end
    if (g.resized_h > g.resized_w) {
        g.top = pos == 0 ? 0 : pos == 1 ? (g.resized_h - p.crop) / 2 : g.resized_h - p.crop;
    } else {
        g.left = pos == 0 ? 0 : pos == 1 ? (g.resized_w - p.crop) / 2 : g.resized_w - p.crop;
    }
    return g;
}

/// The k x c views of one video used at test time.
inline std::vector<VideoClip> eval_views(const VideoClip& video, const EvalProtocol& p) {
    const std::size_t len = video.frames_count();
    const std::size_t t = p.clip_frames ? p.clip_frames : len;
    if (t > len) throw std::invalid_argument("evaluate: clip longer than the video");
    std::vector<VideoClip> out;
    for (std::size_t j = 0; j < p.clips; ++j) {
        const std::size_t start =
            p.clips == 1 ? (len - t) / 2
                         : static_cast<std::size_t>(std::llround(static_cast<double>(j * (len - t)) /
                                                                 static_cast<double>(p.clips - 1)));
        VideoClip clip = slice_frames(video, start, t);
        for (std::size_t k = 0; k < p.crops; ++k) {
            if (p.crop == 0) {
                out.push_back(clip);
            } else {
                augment::FrameTransform tr;
                tr.geometry = eval_geometry(clip.height(), clip.width(), p, k, p.crops);
                out.push_back(augment::apply_transform(clip, tr).clip);
            }
        }
    }
    return out;
}

/// Mean of the predicted distributions over the k x c views of each video,
/// argmax with ties to the lowest class; returns top-1 accuracy.
inline double evaluate_with(const Predictor& predict, std::span<const Sample> videos, const EvalProtocol& p,
                            std::size_t chunk = 64) {
    if (videos.empty()) throw std::invalid_argument("evaluate: empty evaluation set");
    std::size_t correct = 0;
    std::vector<VideoClip> pending;
    std::vector<std::size_t> owner;
    std::vector<std::vector<double>> sums(videos.size());
    auto flush = [&] {
        if (pending.empty()) return;
        std::vector<const VideoClip*> ptrs;
        for (const VideoClip& v : pending) ptrs.push_back(&v);
        const Tensor probs = predict(model::stack_clips(ptrs));
        const std::size_t classes = probs.dim(1);
        for (std::size_t r = 0; r < pending.size(); ++r) {
            auto& acc = sums[owner[r]];
            if (acc.empty()) acc.assign(classes, 0.0);
            for (std::size_t k = 0; k < classes; ++k) acc[k] += probs[r * classes + k];
        }
        pending.clear();
        owner.clear();
    };
    for (std::size_t i = 0; i < videos.size(); ++i) {
        for (VideoClip& v : eval_views(videos[i].views.rgb, p)) {
            pending.push_back(std::move(v));
            owner.push_back(i);
            if (pending.size() >= chunk) flush();
        }
    }
    flush();
    for (std::size_t i = 0; i < videos.size(); ++i) correct += ssl::argmax_lowest(sums[i]) == videos[i].label;
    return static_cast<double>(correct) / static_cast<double>(videos.size());
}

inline EvalProtocol eval_protocol(const TrainConfig& c) {
    return {c.eval_clips, c.eval_crops, c.clip_frames, c.crop, 1.14};
}

inline double evaluate(const ModelState& s, std::span<const Sample> videos, const EvalProtocol& p) {
    return evaluate_with([&](const Tensor& b) { return model::predict_distribution(s, b); }, videos, p);
}

/// Per-epoch metrics CSV; views that are not enabled and evaluations that did
/// not run are left empty.
inline std::string metrics_header() {
    return "epoch,lr,loss_s,loss_u,mask_rate,pl_acc_rgb,pl_acc_flow,pl_acc_tg,top1\n";
}

inline std::string format_number(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string metrics_row(const EpochMetrics& m, const std::vector<ViewKind>& views) {
    std::string row = std::to_string(m.epoch) + "," + format_number(m.lr) + "," + format_number(m.loss_s) + "," +
                      format_number(m.loss_u) + "," + format_number(m.mask_rate);
    for (ViewKind k : views::kAllViews) {
        row += ",";
        for (std::size_t i = 0; i < views.size(); ++i)
            if (views[i] == k && i < m.pl_accuracy.size()) row += format_number(m.pl_accuracy[i]);
    }
    return row + "," + format_number(m.top1) + "\n";
}

inline EpochMetrics summarize(std::size_t epoch, const std::vector<LossReport>& reports, std::size_t views) {
    EpochMetrics m;
    m.epoch = epoch;
    m.pl_accuracy.assign(views, std::numeric_limits<double>::quiet_NaN());
    if (reports.empty()) return m;
    m.lr = reports.back().lr;
    std::vector<double> acc(views, 0.0);
    std::size_t semi = 0;
    for (const LossReport& r : reports) {
        m.loss_s += r.loss_s;
        m.loss_u += r.loss_u;
        m.mask_rate += r.mask_rate;
        if (!r.pl_accuracy.empty() && !std::isnan(r.pl_accuracy[0])) {
            ++semi;
            for (std::size_t v = 0; v < views; ++v) acc[v] += r.pl_accuracy[v];
        }
    }
    const double n = static_cast<double>(reports.size());
    m.loss_s /= n;
    m.loss_u /= n;
    m.mask_rate /= n;
    if (semi)
        for (std::size_t v = 0; v < views; ++v) m.pl_accuracy[v] = acc[v] / static_cast<double>(semi);
    return m;
}

struct RunResult {
    ModelState state;
    std::vector<EpochMetrics> epochs;
    std::vector<LossReport> reports;
    double top1 = std::numeric_limits<double>::quiet_NaN();
};

/// Full run from a fresh initialisation.
inline RunResult train(const TrainingData& d, const TrainConfig& c,
                       const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
    c.validate();
    if (d.labeled.empty()) throw std::invalid_argument("train: labeled set is empty");
    for (ViewKind k : c.views)
        if (d.labeled.front().views.view(k).frames.empty())
            throw std::invalid_argument("train: view '" + std::string(views::view_name(k)) + "' is missing");
    RunResult out{model::init_parameters(model_config(c, d.labeled.front().views.rgb), derive_seed(c.seed, "init")),
                  {}, {}, std::numeric_limits<double>::quiet_NaN()};
    Optimizer opt;
    const EvalProtocol protocol = eval_protocol(c);
    for (std::size_t e = 0; e < c.epochs; ++e) {
        std::vector<LossReport> reports = train_epoch(out.state, opt, d, c, e);
        EpochMetrics m = summarize(e, reports, c.views.size());
        const bool last = e + 1 == c.epochs;
        if (!d.eval.empty() && (last || (c.eval_every && (e + 1) % c.eval_every == 0)))
            m.top1 = evaluate(out.state, d.eval, protocol);
        if (last) out.top1 = m.top1;
        out.reports.insert(out.reports.end(), reports.begin(), reports.end());
        out.epochs.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    return out;
}

}  // namespace mvpl::trainer
