#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvpl/data.hpp"
#include "mvpl/trainer.hpp"

namespace mvpl::experiments {

using trainer::TrainConfig;
using views::ViewKind;

/// Dataset and training recipe shared by the scaled ablations.
struct DeskSetup {
    data::MotionShapesSpec spec;
    std::size_t n_per_class = 100;
    double labeled_fraction = 0.1;
    std::size_t reference_epochs = 600;  // warm-up lengths are given on this scale
    TrainConfig train;
};

inline DeskSetup desk_setup() {
    DeskSetup d;
    d.spec.frames = 10;
    d.spec.height = d.spec.width = 16;
    d.spec.eval_per_class = 25;
    TrainConfig& c = d.train;
    c.epochs = 60;
    c.ramp_epochs = 3.4;
    c.eta = 0.1;
    c.batch = 8;
    c.mu = 3;
    c.clip_frames = 8;
    c.crop = 12;
    c.model.widths = {8, 16, 32};
    c.model.dropout = 0.5;
    // horizontal flips swap left/right and the rotation senses
    c.weak.flip_prob = 0.0;
    c.strong.flip_prob = 0.0;
    c.eval_every = 0;
    return d;
}

struct Variant {
    std::string name;
    TrainConfig config;
};

inline std::vector<Variant> table_variants(const std::string& table, const DeskSetup& setup,
                                           const std::vector<double>& warmups = {0, 20, 40, 80}) {
    const TrainConfig base = setup.train;
    const std::vector<ViewKind> all{ViewKind::rgb, ViewKind::flow, ViewKind::tg};
    std::vector<Variant> out;
    if (table == "1a") {
        for (ssl::Method m : {ssl::Method::pseudo_label, ssl::Method::uda, ssl::Method::fixmatch}) {
            TrainConfig single = base, multi = base;
            single.inst.method = multi.inst.method = m;
            single.views = {ViewKind::rgb};
            single.strategy.strategy = ssl::Strategy::self;
            multi.views = all;
            out.push_back({std::string(ssl::method_name(m)) + "/base", single});
            out.push_back({std::string(ssl::method_name(m)) + "/mvpl", multi});
        }
    } else if (table == "1b") {
        const std::vector<std::pair<std::string, std::vector<ViewKind>>> subsets{
            {"rgb", {ViewKind::rgb}},
            {"rgb+flow", {ViewKind::rgb, ViewKind::flow}},
            {"rgb+tg", {ViewKind::rgb, ViewKind::tg}},
            {"rgb+flow+tg", all}};
        for (const auto& [name, v] : subsets) {
            TrainConfig c = base;
            c.views = v;
            out.push_back({name, c});
        }
    } else if (table == "1c") {
        for (ssl::Strategy s : {ssl::Strategy::self, ssl::Strategy::random, ssl::Strategy::cross,
                                ssl::Strategy::aggregated}) {
            TrainConfig c = base;
            c.views = all;
            c.strategy.strategy = s;
            out.push_back({std::string(ssl::strategy_name(s)) + (s == ssl::Strategy::aggregated ? "(all)" : ""), c});
        }
        TrainConfig c = base;
        c.views = all;
        c.strategy.exclusion = true;
        out.push_back({"aggregated(exclusion)", c});
    } else if (table == "a1") {
        for (double w : warmups) {
            TrainConfig c = base;
            c.views = all;
            c.warmup_epochs = static_cast<std::size_t>(
                std::llround(w * static_cast<double>(base.epochs) / static_cast<double>(setup.reference_epochs)));
            if (c.warmup_epochs >= c.epochs) throw std::invalid_argument("a1: warm-up covers every epoch");
            char name[48];
            std::snprintf(name, sizeof name, "W=%g (%zu desk epochs)", w, c.warmup_epochs);
            out.push_back({name, c});
        }
    } else {
        throw std::invalid_argument("unknown table '" + table + "' (expected 1a, 1b, 1c or a1)");
    }
    return out;
}

/// Dataset for one seed, with its labelled split and all views extracted.
inline data::Dataset desk_dataset(const DeskSetup& setup, std::uint64_t seed) {
    data::Dataset d = data::generate(setup.spec, setup.n_per_class, derive_seed(seed, "desk.data"));
    data::make_splits(d, setup.labeled_fraction, derive_seed(seed, "desk.split"));
    data::extract_views(d);
    return d;
}

struct VariantResult {
    std::string name;
    std::vector<double> top1;  // one per seed

    double mean() const { return std::accumulate(top1.begin(), top1.end(), 0.0) / static_cast<double>(top1.size()); }
};

/// A variant's recipe with every random stream tied to `seed`.
inline TrainConfig seeded(TrainConfig c, std::uint64_t seed) {
    c.seed = seed;
    c.strategy.seed = derive_seed(seed, "desk.strategy");
    return c;
}

using Progress = std::function<void(const std::string& variant, std::uint64_t seed, double top1)>;

/// Runs every variant on every seed's dataset.
inline std::vector<VariantResult> run_table(const std::vector<Variant>& variants, const DeskSetup& setup,
                                            const std::vector<std::uint64_t>& seeds, const Progress& progress = {}) {
    std::vector<VariantResult> out;
    for (const Variant& v : variants) out.push_back({v.name, {}});
    for (std::uint64_t seed : seeds) {
        const data::Dataset d = desk_dataset(setup, seed);
        const trainer::TrainingData td = trainer::prepare(d, {ViewKind::rgb, ViewKind::flow, ViewKind::tg});
        for (std::size_t i = 0; i < variants.size(); ++i) {
            const double top1 = trainer::train(td, seeded(variants[i].config, seed)).top1;
            out[i].top1.push_back(top1);
            if (progress) progress(variants[i].name, seed, top1);
        }
    }
    return out;
}

inline std::string summary_csv(const std::vector<VariantResult>& rows, const std::vector<std::uint64_t>& seeds) {
    std::string s = "variant,top1";
    for (std::uint64_t seed : seeds) s += ",seed" + std::to_string(seed);
    s += "\n";
    for (const VariantResult& r : rows) {
        s += r.name + "," + trainer::format_number(r.mean());
        for (double v : r.top1) s += "," + trainer::format_number(v);
        s += "\n";
    }
    return s;
}

}  // namespace mvpl::experiments
