#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "mvpl/cli.hpp"

namespace cli = mvpl::cli;

int main(int argc, char** argv) {
    CLI::App app{"Multiview pseudo-labeling for semi-supervised video classification"};
    app.require_subcommand(1);
    int code = cli::kOk;

    cli::GenDataOptions gen;
    auto* g = app.add_subcommand("gen-data", "Generate a synthetic motion-shapes dataset");
    g->add_option("--out", gen.out, "Container to write")->required();
    g->add_option("--manifest", gen.manifest, "Also write the manifest as JSON");
    g->add_option("--n-per-class", gen.n_per_class, "Training clips per class")->capture_default_str();
    g->add_option("--labeled-fraction", gen.labeled_fraction, "Labeled fraction per class")->capture_default_str();
    g->add_option("--seed", gen.seed, "Generator and split seed")->capture_default_str();
    g->add_option("--frames", gen.spec.frames, "Frames per video")->capture_default_str();
    g->add_option("--size", gen.spec.height, "Frame side in pixels")->capture_default_str();
    g->add_option("--eval-per-class", gen.spec.eval_per_class, "Evaluation clips per class")->capture_default_str();
    g->add_option("--noise", gen.spec.noise_sigma, "Noise sigma in gray levels")->capture_default_str();
    g->add_flag("--force", gen.force, "Replace existing files");
    g->callback([&] {
        gen.spec.width = gen.spec.height;
        code = cli::gen_data(gen, std::cout, std::cerr);
    });

    std::string ev_data, ev_out;
    bool ev_force = false;
    auto* x = app.add_subcommand("extract-views", "Store flow and temporal-gradient views in a container");
    x->add_option("--data", ev_data, "Dataset container")->required();
    x->add_option("--out", ev_out, "Write here instead of updating --data");
    x->add_flag("--force", ev_force, "Replace an existing --out");
    x->callback([&] { code = cli::extract_views(ev_data, ev_out, ev_force, std::cout, std::cerr); });

    cli::TrainOptions tr;
    auto* t = app.add_subcommand("train", "Train one model");
    t->add_option("--config", tr.config, "key = value config file");
    t->add_option("--set", tr.overrides, "key=value override (repeatable)");
    t->add_option("--out", tr.out, "Run directory")->required();
    t->add_flag("--force", tr.force, "Replace an existing run directory");
    t->callback([&] { code = cli::train(tr, std::cout, std::cerr); });

    cli::EvalOptions ev;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on the evaluation split");
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint written by train")->required();
    e->add_option("--data", ev.data, "Dataset container")->required();
    e->add_option("--clips", ev.clips, "Temporal clips per video (default: as trained)");
    e->add_option("--crops", ev.crops, "Spatial crops per clip (default: as trained)");
    e->callback([&] { code = cli::eval(ev, std::cout, std::cerr); });

    double eps = 1e-5, tol = 1e-4;
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every op and the model");
    gc->add_option("--eps", eps, "Central-difference step")->capture_default_str();
    gc->add_option("--tol", tol, "Relative error tolerance")->capture_default_str();
    gc->callback([&] { code = cli::gradcheck(eps, tol, std::cout, std::cerr); });

    cli::AblateOptions ab;
    auto* a = app.add_subcommand("ablate", "Run an ablation table at desk scale");
    a->add_option("--table", ab.table, "1a, 1b, 1c or a1")->required();
    a->add_option("--out", ab.out, "Output directory")->required();
    a->add_option("--config", ab.config, "key = value overrides of the desk recipe");
    a->add_option("--set", ab.overrides, "key=value override (repeatable)");
    a->add_option("--warmups", ab.warmups, "Warm-up epochs on the 600-epoch scale (table a1)")->delimiter(',');
    a->add_option("--seeds", ab.seeds, "Seeds to average over")->delimiter(',');
    a->add_option("--n-per-class", ab.n_per_class, "Training clips per class")->capture_default_str();
    a->add_option("--eval-per-class", ab.eval_per_class, "Evaluation clips per class")->capture_default_str();
    a->add_option("--labeled-fraction", ab.labeled_fraction, "Labeled fraction per class")->capture_default_str();
    a->add_flag("--force", ab.force, "Replace an existing output directory");
    a->callback([&] { code = cli::ablate(ab, std::cout, std::cerr); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? cli::kOk : cli::kConfigError;
    }
    return code;
}
