#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mvpl/container.hpp"
#include "mvpl/data.hpp"
#include "mvpl/experiments.hpp"
#include "mvpl/model.hpp"
#include "mvpl/tensorlab.hpp"
#include "mvpl/trainer.hpp"

namespace mvpl::cli {

namespace fs = std::filesystem;
using trainer::TrainConfig;
using views::ViewKind;

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeError = 2 };

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Everything a training run needs: the dataset, the output directory and the
/// training recipe.
struct RunConfig {
    std::string data;
    TrainConfig train;
};

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) return out;
        start = pos + 1;
    }
}

inline double to_double(const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ConfigError("'" + v + "' is not a number");
    return d;
}

inline std::uint64_t to_uint(const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("'" + v + "' is not a non-negative integer");
    try {
        return std::stoull(v);
    } catch (const std::out_of_range&) {
        throw ConfigError("'" + v + "' is out of range");
    }
}

inline bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("'" + v + "' is not a boolean (true or false)");
}

inline std::string from_bool(bool b) { return b ? "true" : "false"; }

template <class T, class F>
std::string join(const std::vector<T>& xs, F f) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + f(xs[i]);
    return s;
}

inline std::string num(double v) { return trainer::format_number(v); }

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

// Typed field on the run config.
template <class T>
Field field(std::string key, T TrainConfig::*member) {
    Field f;
    f.key = std::move(key);
    if constexpr (std::is_same_v<T, double>) {
        f.set = [member](RunConfig& r, const std::string& v) { r.train.*member = to_double(v); };
        f.get = [member](const RunConfig& r) { return num(r.train.*member); };
    } else if constexpr (std::is_same_v<T, bool>) {
        f.set = [member](RunConfig& r, const std::string& v) { r.train.*member = to_bool(v); };
        f.get = [member](const RunConfig& r) { return from_bool(r.train.*member); };
    } else {
        f.set = [member](RunConfig& r, const std::string& v) { r.train.*member = static_cast<T>(to_uint(v)); };
        f.get = [member](const RunConfig& r) { return std::to_string(r.train.*member); };
    }
    return f;
}

// A field of both augmentation policies.
template <class T>
Field policy_field(std::string key, T augment::AugmentationPolicy::*member) {
    Field f;
    f.key = std::move(key);
    f.set = [member](RunConfig& r, const std::string& v) {
        T value;
        if constexpr (std::is_same_v<T, double>)
            value = to_double(v);
        else
            value = static_cast<T>(to_uint(v));
        r.train.weak.*member = value;
        r.train.strong.*member = value;
    };
    f.get = [member](const RunConfig& r) {
        if constexpr (std::is_same_v<T, double>)
            return num(r.train.weak.*member);
        else
            return std::to_string(r.train.weak.*member);
    };
    return f;
}

inline const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"data", [](RunConfig& r, const std::string& v) { r.data = v; },
                     [](const RunConfig& r) { return r.data; }});
        f.push_back(field("seed", &TrainConfig::seed));
        f.push_back({"views_enabled",
                     [](RunConfig& r, const std::string& v) {
                         r.train.views.clear();
                         for (const std::string& x : split(v, ',')) {
                             try {
                                 r.train.views.push_back(views::parse_view(x));
                             } catch (const std::invalid_argument& e) {
                                 throw ConfigError(e.what());
                             }
                         }
                     },
                     [](const RunConfig& r) {
                         return join(r.train.views, [](ViewKind k) { return std::string(views::view_name(k)); });
                     }});
        f.push_back({"strategy",
                     [](RunConfig& r, const std::string& v) {
                         try {
                             r.train.strategy.strategy = ssl::parse_strategy(v);
                         } catch (const std::invalid_argument& e) {
                             throw ConfigError(e.what());
                         }
                     },
                     [](const RunConfig& r) { return std::string(ssl::strategy_name(r.train.strategy.strategy)); }});
        f.push_back({"exclusion", [](RunConfig& r, const std::string& v) { r.train.strategy.exclusion = to_bool(v); },
                     [](const RunConfig& r) { return from_bool(r.train.strategy.exclusion); }});
        f.push_back({"bijection",
                     [](RunConfig& r, const std::string& v) {
                         r.train.strategy.bijection.clear();
                         for (const std::string& x : split(v, ','))
                             r.train.strategy.bijection.push_back(static_cast<std::size_t>(to_uint(x)));
                     },
                     [](const RunConfig& r) {
                         return join(r.train.strategy.bijection, [](std::size_t x) { return std::to_string(x); });
                     }});
        f.push_back({"view_weights",
                     [](RunConfig& r, const std::string& v) {
                         r.train.strategy.weights.clear();
                         for (const std::string& x : split(v, ',')) r.train.strategy.weights.push_back(to_double(x));
                     },
                     [](const RunConfig& r) { return join(r.train.strategy.weights, num); }});
        f.push_back({"instantiation",
                     [](RunConfig& r, const std::string& v) {
                         try {
                             r.train.inst.method = ssl::parse_method(v);
                         } catch (const std::invalid_argument& e) {
                             throw ConfigError(e.what());
                         }
                     },
                     [](const RunConfig& r) { return std::string(ssl::method_name(r.train.inst.method)); }});
        f.push_back({"tau", [](RunConfig& r, const std::string& v) { r.train.inst.tau = to_double(v); },
                     [](const RunConfig& r) { return num(r.train.inst.tau); }});
        f.push_back({"t_sharp", [](RunConfig& r, const std::string& v) { r.train.inst.t_sharp = to_double(v); },
                     [](const RunConfig& r) { return num(r.train.inst.t_sharp); }});
        f.push_back({"mask_pseudo_label",
                     [](RunConfig& r, const std::string& v) { r.train.inst.mask_pseudo_label = to_bool(v); },
                     [](const RunConfig& r) { return from_bool(r.train.inst.mask_pseudo_label); }});
        f.push_back(field("mu", &TrainConfig::mu));
        f.push_back(field("lambda_u", &TrainConfig::lambda_u));
        f.push_back(field("eta", &TrainConfig::eta));
        f.push_back(field("W", &TrainConfig::warmup_epochs));
        f.push_back(field("epochs", &TrainConfig::epochs));
        f.push_back(field("ramp_epochs", &TrainConfig::ramp_epochs));
        f.push_back(field("momentum", &TrainConfig::momentum));
        f.push_back(field("weight_decay", &TrainConfig::weight_decay));
        f.push_back(field("batch", &TrainConfig::batch));
        f.push_back(field("clip_frames", &TrainConfig::clip_frames));
        f.push_back(field("crop", &TrainConfig::crop));
        f.push_back(policy_field("flip_prob", &augment::AugmentationPolicy::flip_prob));
        f.push_back(policy_field("scale_min", &augment::AugmentationPolicy::scale_min));
        f.push_back(policy_field("scale_max", &augment::AugmentationPolicy::scale_max));
        f.push_back({"strong_ops",
                     [](RunConfig& r, const std::string& v) { r.train.strong.ops_per_sample = static_cast<int>(to_uint(v)); },
                     [](const RunConfig& r) { return std::to_string(r.train.strong.ops_per_sample); }});
        f.push_back({"magnitude_min",
                     [](RunConfig& r, const std::string& v) { r.train.strong.magnitude_min = static_cast<int>(to_uint(v)); },
                     [](const RunConfig& r) { return std::to_string(r.train.strong.magnitude_min); }});
        f.push_back({"magnitude_max",
                     [](RunConfig& r, const std::string& v) { r.train.strong.magnitude_max = static_cast<int>(to_uint(v)); },
                     [](const RunConfig& r) { return std::to_string(r.train.strong.magnitude_max); }});
        f.push_back({"cutout_ratio", [](RunConfig& r, const std::string& v) { r.train.strong.cutout_ratio = to_double(v); },
                     [](const RunConfig& r) { return num(r.train.strong.cutout_ratio); }});
        f.push_back(field("eval_clips", &TrainConfig::eval_clips));
        f.push_back(field("eval_crops", &TrainConfig::eval_crops));
        f.push_back(field("eval_every", &TrainConfig::eval_every));
        f.push_back({"widths",
                     [](RunConfig& r, const std::string& v) {
                         r.train.model.widths.clear();
                         for (const std::string& x : split(v, ','))
                             r.train.model.widths.push_back(static_cast<std::size_t>(to_uint(x)));
                     },
                     [](const RunConfig& r) {
                         return join(r.train.model.widths, [](std::size_t x) { return std::to_string(x); });
                     }});
        f.push_back({"kernel",
                     [](RunConfig& r, const std::string& v) { r.train.model.kernel = static_cast<std::size_t>(to_uint(v)); },
                     [](const RunConfig& r) { return std::to_string(r.train.model.kernel); }});
        f.push_back({"dropout", [](RunConfig& r, const std::string& v) { r.train.model.dropout = to_double(v); },
                     [](const RunConfig& r) { return num(r.train.model.dropout); }});
        return f;
    }();
    return table;
}

inline const Field& find_field(const std::string& key) {
    for (const Field& f : fields())
        if (f.key == key) return f;
    throw ConfigError("unknown key '" + key + "'");
}

}  // namespace detail

using detail::num;

/// Sets one `key=value` pair.
inline void apply_override(RunConfig& r, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
    const std::string key = detail::trim(assignment.substr(0, eq));
    const std::string value = detail::trim(assignment.substr(eq + 1));
    try {
        detail::find_field(key).set(r, value);
    } catch (const ConfigError& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

/// Flat `key = value` lines; `#` starts a comment. Keys may appear once.
inline void parse_config(RunConfig& r, std::string_view text, const std::string& origin = "config") {
    std::istringstream in{std::string(text)};
    std::string line;
    std::vector<std::string> seen;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (detail::trim(line).empty()) continue;
        const std::string key = detail::trim(line.substr(0, line.find('=')));
        if (std::find(seen.begin(), seen.end(), key) != seen.end())
            throw ConfigError(origin + ":" + std::to_string(n) + ": key '" + key + "' given twice");
        seen.push_back(key);
        try {
            apply_override(r, line);
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(n) + ": " + e.what());
        }
    }
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

/// Every key with its resolved value, one per line, readable by parse_config.
inline std::string render_config(const RunConfig& r) {
    std::string out;
    for (const detail::Field& f : detail::fields()) out += f.key + " = " + f.get(r) + "\n";
    return out;
}

/// Defaults, then the file (if any), then the overrides in order.
inline RunConfig resolve_config(const RunConfig& defaults, const std::string& path,
                                const std::vector<std::string>& overrides) {
    RunConfig r = defaults;
    if (!path.empty()) parse_config(r, read_text(path), path);
    for (const std::string& o : overrides) apply_override(r, o);
    try {
        r.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return r;
}

/// Output written to `<dir>.partial` and moved into place on commit, so a failed
/// run never leaves a half-written directory behind.
class OutputDir {
   public:
    OutputDir(const std::string& dir, bool force) : final_(dir), staging_(dir + ".partial") {
        if (dir.empty()) throw ConfigError("no output directory given");
        if (fs::exists(final_) && !force)
            throw ConfigError("'" + dir + "' already exists (pass --force to replace it)");
        fs::remove_all(staging_);
        fs::create_directories(staging_);
    }
    OutputDir(const OutputDir&) = delete;
    OutputDir& operator=(const OutputDir&) = delete;
    ~OutputDir() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(staging_, ec);
        }
    }

    fs::path path(const std::string& name) const { return staging_ / name; }

    void write(const std::string& name, const std::string& text) const {
        fs::create_directories(path(name).parent_path());
        std::ofstream out(path(name), std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw std::runtime_error("cannot write '" + path(name).string() + "'");
    }

    void commit() {
        if (fs::exists(final_)) fs::remove_all(final_);
        fs::rename(staging_, final_);
        committed_ = true;
    }

   private:
    fs::path final_, staging_;
    bool committed_ = false;
};

/// Writes `bytes` to a sibling temporary and renames it over `path`.
inline void write_atomically(const std::string& path, const container::Container& c) {
    const std::string tmp = path + ".partial";
    container::write_file(tmp, c);
    fs::rename(tmp, path);
}

// Runs `resolve` (config errors -> 1) then `run` (anything else -> 2).
template <class Resolve, class Run>
int guarded(std::ostream& err, Resolve resolve, Run run) {
    try {
        resolve();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    }
    try {
        return run();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
}

struct GenDataOptions {
    std::string out, manifest;
    std::size_t n_per_class = 100;
    double labeled_fraction = 0.1;
    std::uint64_t seed = 0;
    data::MotionShapesSpec spec;
    bool force = false;
};

inline int gen_data(const GenDataOptions& o, std::ostream& log, std::ostream& err) {
    return guarded(
        err,
        [&] {
            o.spec.validate();
            if (o.out.empty()) throw ConfigError("gen-data needs --out");
            if (!o.force && fs::exists(o.out)) throw ConfigError("'" + o.out + "' exists (pass --force to replace it)");
            if (!o.manifest.empty() && !o.force && fs::exists(o.manifest))
                throw ConfigError("'" + o.manifest + "' exists (pass --force to replace it)");
        },
        [&] {
            data::Dataset d = data::generate(o.spec, o.n_per_class, o.seed);
            data::make_splits(d, o.labeled_fraction, o.seed);
            write_atomically(o.out, data::to_container(d));
            if (!o.manifest.empty()) {
                std::ofstream m(o.manifest, std::ios::trunc);
                m << data::manifest(d).dump(2) << "\n";
                if (!m) throw std::runtime_error("cannot write '" + o.manifest + "'");
            }
            log << "wrote " << d.clips.size() << " clips (" << d.labeled_indices().size() << " labeled) to " << o.out
                << "\n";
            return kOk;
        });
}

/// Adds flow and temporal-gradient blocks; `out` empty rewrites `path` in place.
inline int extract_views(const std::string& path, const std::string& out, bool force, std::ostream& log,
                         std::ostream& err) {
    const std::string target = out.empty() ? path : out;
    return guarded(
        err,
        [&] {
            if (path.empty()) throw ConfigError("extract-views needs --data");
            if (!out.empty() && out != path && fs::exists(out) && !force)
                throw ConfigError("'" + out + "' exists (pass --force to replace it)");
        },
        [&] {
            data::Dataset d = data::load(path);
            data::extract_views(d);
            write_atomically(target, data::to_container(d));
            log << "stored flow and tg views for " << d.clips.size() << " clips in " << target << "\n";
            return kOk;
        });
}

namespace detail {

inline nlohmann::json eval_settings(const TrainConfig& c) {
    return {{"clip_frames", c.clip_frames}, {"crop", c.crop}, {"eval_clips", c.eval_clips}, {"eval_crops", c.eval_crops}};
}

// Training and artifacts of one run in `dir` (relative to the staging root).
inline void run_and_record(const trainer::TrainingData& td, const RunConfig& r, const OutputDir& out,
                           const std::string& dir, std::ostream& log, trainer::RunResult* result = nullptr) {
    const std::string prefix = dir.empty() ? "" : dir + "/";
    out.write(prefix + "config.txt", render_config(r));
    std::string csv = trainer::metrics_header();
    trainer::RunResult res = trainer::train(td, r.train, [&](const trainer::EpochMetrics& m) {
        csv += trainer::metrics_row(m, r.train.views);
        log << (dir.empty() ? "" : dir + " ") << "epoch " << m.epoch << " loss_s " << num(m.loss_s) << " loss_u "
            << num(m.loss_u) << " mask " << num(m.mask_rate)
            << (std::isnan(m.top1) ? std::string() : " top1 " + num(m.top1)) << "\n";
    });
    out.write(prefix + "metrics.csv", csv);
    container::write_file(out.path(prefix + "checkpoint.mvpl").string(),
                          model::to_container(res.state, {{"eval", eval_settings(r.train)},
                                                          {"config", render_config(r)}}));
    if (result) *result = std::move(res);
}

}  // namespace detail

/// Default recipe of a single training run: the desk recipe.
inline RunConfig default_run_config() { return {"", experiments::desk_setup().train}; }

struct TrainOptions {
    std::string config, out;
    std::vector<std::string> overrides;
    bool force = false;
};

inline int train(const TrainOptions& o, std::ostream& log, std::ostream& err) {
    RunConfig r;
    std::unique_ptr<OutputDir> out;
    return guarded(
        err,
        [&] {
            r = resolve_config(default_run_config(), o.config, o.overrides);
            if (r.data.empty()) throw ConfigError("no dataset given (set data = <path>)");
            if (!fs::exists(r.data)) throw ConfigError("dataset '" + r.data + "' does not exist");
            out = std::make_unique<OutputDir>(o.out, o.force);
        },
        [&] {
            const data::Dataset d = data::load(r.data);
            std::vector<ViewKind> computed;
            const trainer::TrainingData td = trainer::prepare(d, r.train.views, &computed);
            if (!computed.empty())
                log << "warning: " << detail::join(computed, [](ViewKind k) { return std::string(views::view_name(k)); })
                    << " not stored in " << r.data << "; computing on the fly (run extract-views to store them)\n";
            trainer::RunResult res;
            detail::run_and_record(td, r, *out, "", log, &res);
            out->commit();
            log << "top1 " << num(res.top1) << "\n";
            return kOk;
        });
}

struct EvalOptions {
    std::string checkpoint, data;
    std::size_t clips = 0, crops = 0;  // 0: as trained
};

inline int eval(const EvalOptions& o, std::ostream& log, std::ostream& err) {
    return guarded(
        err,
        [&] {
            if (o.checkpoint.empty() || o.data.empty()) throw ConfigError("eval needs --checkpoint and --data");
            if (o.clips > 10 || o.crops > 3) throw ConfigError("eval protocol is at most 10 clips x 3 crops");
        },
        [&] {
            const container::Container c = container::read_file(o.checkpoint);
            const model::ModelState s = model::state_from_container(c);
            const nlohmann::json& e = c.header.at("extra").at("eval");
            trainer::EvalProtocol p{o.clips ? o.clips : e.at("eval_clips").get<std::size_t>(),
                                    o.crops ? o.crops : e.at("eval_crops").get<std::size_t>(),
                                    e.at("clip_frames").get<std::size_t>(), e.at("crop").get<std::size_t>(), 1.14};
            const data::Dataset d = data::load(o.data);
            const trainer::TrainingData td = trainer::prepare(d, {ViewKind::rgb});
            const double top1 = trainer::evaluate(s, td.eval, p);
            log << "top1 " << num(top1) << " (" << td.eval.size() << " videos, " << p.clips << " clips x " << p.crops
                << " crops)\n";
            return kOk;
        });
}

inline int gradcheck(double eps, double tol, std::ostream& log, std::ostream& err) {
    return guarded(
        err,
        [&] {
            if (!(eps > 0.0) || !(tol > 0.0)) throw ConfigError("eps and tol must be positive");
        },
        [&] {
            std::vector<tensorlab::GradCheckReport> reports = tensorlab::run_op_gradcheck_suite(eps, tol);
            model::ModelConfig tiny;
            tiny.frames = tiny.height = tiny.width = 4;
            tiny.widths = {4, 6, 8};
            tiny.dropout = 0.0;
            reports.push_back(model::model_gradcheck(tiny, 3, eps, tol));
            bool ok = true;
            for (const auto& r : reports) {
                log << (r.passed ? "pass " : "FAIL ") << r.name << " max_rel_error " << num(r.max_rel_error) << "\n";
                ok = ok && r.passed;
            }
            return ok ? kOk : kRuntimeError;
        });
}

struct AblateOptions {
    std::string table, out, config;
    std::vector<std::string> overrides;
    std::vector<double> warmups{0, 20, 40, 80};
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t n_per_class = 100, eval_per_class = 25;
    double labeled_fraction = 0.1;
    bool force = false;
};

inline std::string slug(const std::string& name) {
    std::string s;
    for (char ch : name) s += std::isalnum(static_cast<unsigned char>(ch)) || ch == '+' ? ch : '_';
    return s;
}

/// Runs one ablation table over freshly generated datasets, one per seed.
/// Writes per-run metrics under <out>/<variant>/seed<k>/ and summary.csv.
inline int ablate(const AblateOptions& o, std::ostream& log, std::ostream& err) {
    experiments::DeskSetup setup = experiments::desk_setup();
    std::vector<experiments::Variant> variants;
    std::unique_ptr<OutputDir> out;
    return guarded(
        err,
        [&] {
            if (o.seeds.empty()) throw ConfigError("ablate needs at least one seed");
            const RunConfig r = resolve_config({"", setup.train}, o.config, o.overrides);
            if (!r.data.empty()) throw ConfigError("ablate generates its own datasets; remove 'data'");
            setup.train = r.train;
            setup.n_per_class = o.n_per_class;
            setup.labeled_fraction = o.labeled_fraction;
            setup.spec.eval_per_class = o.eval_per_class;
            setup.spec.validate();
            variants = experiments::table_variants(o.table, setup, o.warmups);
            for (const auto& v : variants) v.config.validate();
            out = std::make_unique<OutputDir>(o.out, o.force);
        },
        [&] {
            std::vector<experiments::VariantResult> rows;
            for (const auto& v : variants) rows.push_back({v.name, {}});
            for (std::uint64_t seed : o.seeds) {
                const data::Dataset d = experiments::desk_dataset(setup, seed);
                const trainer::TrainingData td =
                    trainer::prepare(d, {ViewKind::rgb, ViewKind::flow, ViewKind::tg});
                for (std::size_t i = 0; i < variants.size(); ++i) {
                    RunConfig r{"", experiments::seeded(variants[i].config, seed)};
                    trainer::RunResult res;
                    detail::run_and_record(td, r, *out, slug(variants[i].name) + "/seed" + std::to_string(seed),
                                           log, &res);
                    rows[i].top1.push_back(res.top1);
                    log << variants[i].name << " seed " << seed << " top1 " << num(res.top1) << "\n";
                }
            }
            const std::string summary = experiments::summary_csv(rows, o.seeds);
            out->write("summary.csv", summary);
            out->commit();
            log << summary;
            return kOk;
        });
}

}  // namespace mvpl::cli
