#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tined/analysis.hpp"
#include "tined/checkpoint.hpp"
#include "tined/config.hpp"
#include "tined/dataset.hpp"
#include "tined/distill.hpp"
#include "tined/errors.hpp"
#include "tined/graph.hpp"
#include "tined/models.hpp"
#include "tined/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;
    std::int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "TOML run configuration");
    cmd->add_option("--data", opts.data_dir, "dataset directory (overrides [data] source)");
    cmd->add_option("--out", opts.out_dir, "output directory (default from config, else 'out')");
    cmd->add_option("--seed", opts.seed, "seed override")->check(CLI::NonNegativeNumber);
}

tined::RunConfig resolve_config(const CommonOpts& opts) {
    std::vector<std::string> warnings;
    tined::RunConfig cfg;
    if (!opts.config_path.empty()) cfg = tined::load_run_config(opts.config_path, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
    if (!opts.data_dir.empty()) cfg.source = opts.data_dir;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (opts.seed >= 0) cfg.seed = static_cast<std::uint64_t>(opts.seed);
    return cfg;
}

struct LoadedBundle {
    tined::DatasetBundle data;
    tined::SplitSpec split;  // original node ids
};

LoadedBundle load_bundle(const tined::RunConfig& cfg, std::uint64_t seed) {
    LoadedBundle b;
    bool have_split = false;
    if (cfg.source == "sbm") {
        b.data = tined::generate_sbm(cfg.sbm_n, cfg.sbm_blocks, cfg.sbm_p_in, cfg.sbm_p_out,
                                     cfg.sbm_dim, cfg.sbm_shift, seed);
    } else {
        b.data = tined::ingest_dataset(cfg.source);
        have_split = tined::load_split_json(cfg.source, b.data.graph.n, &b.split);
    }
    if (!have_split) {
        b.split = tined::make_transductive_split(b.data.graph.n, cfg.labels_per_class,
                                                 cfg.val_per_class, b.data.labels, seed);
    }
    if (cfg.mode == "production" && !b.split.is_production())
        b.split = tined::make_production_split(b.split, seed);
    if (cfg.mode == "transductive" && b.split.is_production())
        throw tined::ConfigError("dataset ships a production split but mode is transductive");
    return b;
}

tined::TrainView make_view(const tined::RunConfig& cfg, const LoadedBundle& b,
                           tined::AccessAudit* audit) {
    if (cfg.mode == "production") return tined::restrict_to_observed(b.data, b.split, audit);
    return tined::full_view(b.data, b.split);
}

void write_text(const fs::path& path, const std::string& text) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw tined::DataError("cannot write " + path.string());
    out << text;
    if (!out) throw tined::DataError("short write to " + path.string());
}

json metrics_json(const tined::EpochMetrics& m) {
    return json{{"epoch", m.epoch},         {"total", m.total}, {"ce", m.ce},
                {"kl", m.kl},               {"ded", m.ded},     {"train_acc", m.train_acc},
                {"val_acc", m.val_acc}};
}

std::string history_jsonl(const std::vector<tined::EpochMetrics>& history) {
    std::string out;
    for (const tined::EpochMetrics& m : history) out += metrics_json(m).dump() + "\n";
    return out;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::uint32_t> all_nodes(std::size_t n) {
    std::vector<std::uint32_t> ids(n);
    for (std::size_t v = 0; v < n; ++v) ids[v] = static_cast<std::uint32_t>(v);
    return ids;
}

std::vector<std::uint32_t> nodes_for_set(const tined::SplitSpec& split, const std::string& set,
                                         std::size_t n) {
    if (set == "train") return split.labeled;
    if (set == "val") return split.validation;
    if (set == "test") return split.unlabeled;
    if (set == "all") return all_nodes(n);
    if (set == "tran" || set == "ind") {
        if (!split.is_production())
            throw tined::ConfigError("set '" + set + "' needs a production split");
        return set == "tran" ? split.observed : split.inductive;
    }
    throw tined::ConfigError("unknown node set '" + set + "'");
}

json summary_header(const char* command, const tined::RunConfig& cfg, std::uint64_t seed) {
    return json{{"command", command}, {"mode", cfg.mode}, {"seed", seed},
                {"source", cfg.source}};
}

void emit_summary(const fs::path& out_dir, const std::string& filename, const json& summary) {
    const std::string text = summary.dump(2) + "\n";
    write_text(out_dir / filename, text);
    std::cout << text;
}

// ---------------------------------------------------------------------------
// train-teacher

struct TrainTeacherOpts {
    CommonOpts common;
};

int cmd_train_teacher(const TrainTeacherOpts& opts) {
    tined::RunConfig cfg = resolve_config(opts.common);
    const std::uint64_t seed = cfg.seed;
    LoadedBundle b = load_bundle(cfg, seed);
    tined::AccessAudit audit(b.data.graph.n);
    tined::TrainView view = make_view(cfg, b, &audit);

    tined::TrainConfig tc;
    tc.lr = cfg.teacher_lr;
    tc.weight_decay = cfg.teacher_wd;
    tc.max_epochs = cfg.teacher_epochs;
    tc.dropout = cfg.teacher.dropout;

    tined::TrainResult log;
    tined::TeacherModel teacher = tined::train_teacher(cfg.teacher, view, tc, seed, &log);

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    tined::save_teacher(teacher, (out / "teacher.ckpt").string());
    write_text(out / "teacher_metrics.jsonl", history_jsonl(log.history));

    json summary = summary_header("train-teacher", cfg, seed);
    summary["teacher"] = tined::to_string(cfg.teacher.kind);
    summary["epochs_run"] = log.history.size();
    summary["best_epoch"] = log.best_epoch;
    summary["best_val_acc"] = log.best_val_acc;
    summary["train_acc"] = tined::evaluate(teacher, b.data.graph, b.data.features, b.data.labels,
                                           b.split.labeled);
    summary["val_acc"] = tined::evaluate(teacher, b.data.graph, b.data.features, b.data.labels,
                                         b.split.validation);
    summary["test_acc"] = tined::evaluate(teacher, b.data.graph, b.data.features, b.data.labels,
                                          b.split.unlabeled);
    if (cfg.mode == "production") {
        summary["acc_tran"] = tined::evaluate(teacher, b.data.graph, b.data.features,
                                              b.data.labels, b.split.observed);
        summary["acc_ind"] = tined::evaluate(teacher, b.data.graph, b.data.features,
                                             b.data.labels, b.split.inductive);
    }
    emit_summary(out, "teacher_summary.json", summary);
    return tined::kExitOk;
}

// ---------------------------------------------------------------------------
// distill

struct DistillOpts {
    CommonOpts common;
    std::string teacher_path;
    std::optional<double> lambda;
    std::optional<double> beta;
    std::optional<double> eta;
    std::optional<double> zeta;
    std::optional<double> temperature;
    std::string mu;
    bool no_inject = false;
};

std::string profile_csv(const tined::DERatioProfile& teacher,
                        const tined::DERatioProfile& student) {
    if (teacher.entries.size() != student.entries.size())
        throw tined::ShapeError("teacher and student DE profiles differ in length");
    std::string out = "op,layer,teacher_ratio,teacher_target,student_ratio,student_value\n";
    for (std::size_t i = 0; i < teacher.entries.size(); ++i) {
        const auto& t = teacher.entries[i];
        const auto& s = student.entries[i];
        out += std::string(t.is_ft ? "FT" : "GP") + "," + std::to_string(t.layer + 1) + "," +
               format_double(t.ratio) + "," + format_double(t.transformed) + "," +
               format_double(s.ratio) + "," + format_double(s.transformed) + "\n";
    }
    return out;
}

int cmd_distill(const DistillOpts& opts) {
    tined::RunConfig cfg = resolve_config(opts.common);
    if (opts.lambda) cfg.weights.lambda = *opts.lambda;
    if (opts.beta) cfg.weights.beta = *opts.beta;
    if (opts.eta) cfg.weights.eta = *opts.eta;
    if (opts.zeta) cfg.weights.zeta = *opts.zeta;
    if (opts.temperature) cfg.weights.temperature = *opts.temperature;
    if (!opts.mu.empty()) cfg.weights.mu = tined::parse_mu_kind(opts.mu);
    if (opts.no_inject) cfg.student.inject = false;

    const std::uint64_t seed = cfg.seed;
    LoadedBundle b = load_bundle(cfg, seed);
    tined::AccessAudit audit(b.data.graph.n);
    tined::TrainView view = make_view(cfg, b, &audit);

    const fs::path out(cfg.out_dir);
    const std::string teacher_path =
        opts.teacher_path.empty() ? (out / "teacher.ckpt").string() : opts.teacher_path;
    tined::TeacherModel teacher = tined::load_teacher(teacher_path);
    if (teacher.in_dim != view.features.cols)
        throw tined::DataError("teacher checkpoint expects " + std::to_string(teacher.in_dim) +
                               "-dim features, dataset has " +
                               std::to_string(view.features.cols));
    if (teacher.num_classes != view.num_classes)
        throw tined::DataError("teacher checkpoint has " + std::to_string(teacher.num_classes) +
                               " classes, dataset has " + std::to_string(view.num_classes));

    tined::DistillResult res;
    tined::StudentMLP student =
        tined::distill_student(teacher, view, cfg.weights, cfg.student, seed, &res);

    fs::create_directories(out);
    tined::save_student(student, (out / "student.ckpt").string());
    write_text(out / "student_metrics.jsonl", history_jsonl(res.log.history));
    write_text(out / "de_profile.csv", profile_csv(res.teacher_profile, res.student_profile));

    double ded_max_abs = 0.0;
    for (const tined::EpochMetrics& m : res.log.history)
        ded_max_abs = std::max(ded_max_abs, std::fabs(m.ded));

    json summary = summary_header("distill", cfg, seed);
    summary["teacher_checkpoint"] = teacher_path;
    summary["teacher"] = tined::to_string(teacher.cfg.kind);
    summary["weights"] = json{{"lambda", cfg.weights.lambda},
                              {"beta", cfg.weights.beta},
                              {"eta", cfg.weights.eta},
                              {"zeta", cfg.weights.zeta},
                              {"mu", tined::to_string(cfg.weights.mu)},
                              {"temperature", cfg.weights.temperature}};
    summary["inject"] = cfg.student.inject;
    summary["epochs_run"] = res.log.history.size();
    summary["best_epoch"] = res.log.best_epoch;
    summary["best_val_acc"] = res.log.best_val_acc;
    summary["ded_max_abs"] = ded_max_abs;
    summary["ded_zero_all_epochs"] = ded_max_abs == 0.0;
    summary["train_acc"] =
        tined::evaluate(student, b.data.features, b.data.labels, b.split.labeled);
    summary["val_acc"] =
        tined::evaluate(student, b.data.features, b.data.labels, b.split.validation);
    summary["test_acc"] =
        tined::evaluate(student, b.data.features, b.data.labels, b.split.unlabeled);
    if (cfg.mode == "production") {
        const tined::ProductionReport report =
            tined::production_metrics(student, b.data, b.split);
        summary["acc_ind"] = report.acc_ind;
        summary["acc_tran"] = report.acc_tran;
        summary["acc_prod"] = report.acc_prod;
        summary["n_ind"] = report.n_ind;
        summary["n_tran"] = report.n_tran;
        summary["inductive_rows_read"] = audit.touches(b.split.inductive);
    }
    emit_summary(out, "student_summary.json", summary);
    return tined::kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    CommonOpts common;
    std::string checkpoint;
    std::string set = "test";
};

int cmd_eval(const EvalOpts& opts) {
    tined::RunConfig cfg = resolve_config(opts.common);
    const std::uint64_t seed = cfg.seed;
    LoadedBundle b = load_bundle(cfg, seed);
    const std::vector<std::uint32_t> nodes = nodes_for_set(b.split, opts.set, b.data.graph.n);
    if (nodes.empty()) throw tined::ConfigError("node set '" + opts.set + "' is empty");

    const std::string type = tined::checkpoint_type(opts.checkpoint);
    double acc = 0.0;
    if (type == "teacher") {
        tined::TeacherModel t = tined::load_teacher(opts.checkpoint);
        acc = tined::evaluate(t, b.data.graph, b.data.features, b.data.labels, nodes);
    } else {
        tined::StudentMLP s = tined::load_student(opts.checkpoint);
        acc = tined::evaluate(s, b.data.features, b.data.labels, nodes);
    }

    json summary = summary_header("eval", cfg, seed);
    summary["checkpoint"] = opts.checkpoint;
    summary["checkpoint_type"] = type;
    summary["set"] = opts.set;
    summary["nodes"] = nodes.size();
    summary["accuracy"] = acc;
    emit_summary(fs::path(cfg.out_dir), "eval_" + opts.set + ".json", summary);
    return tined::kExitOk;
}

// ---------------------------------------------------------------------------
// analyze-de

struct AnalyzeDeOpts {
    CommonOpts common;
    std::string teacher_path;
    std::vector<std::uint64_t> seeds;
};

int cmd_analyze_de(const AnalyzeDeOpts& opts) {
    tined::RunConfig cfg = resolve_config(opts.common);
    const std::uint64_t seed = cfg.seed;
    LoadedBundle b = load_bundle(cfg, seed);

    std::vector<tined::DeRatioRow> rows;
    std::vector<std::uint64_t> seeds = opts.seeds;
    if (!opts.teacher_path.empty()) {
        tined::TeacherModel t = tined::load_teacher(opts.teacher_path);
        rows = tined::de_ratio_report(t, b.data.graph, b.data.features);
        seeds.clear();
    } else {
        if (seeds.empty()) seeds = cfg.seeds.empty() ? std::vector<std::uint64_t>{seed}
                                                     : cfg.seeds;
        tined::AccessAudit audit(b.data.graph.n);
        tined::TrainView view = make_view(cfg, b, &audit);
        tined::TrainConfig tc;
        tc.lr = cfg.teacher_lr;
        tc.weight_decay = cfg.teacher_wd;
        tc.max_epochs = cfg.teacher_epochs;
        tc.dropout = cfg.teacher.dropout;
        rows = tined::de_ratio_report(cfg.teacher, view, tc, seeds);
    }

    const bool per_seed_columns = !seeds.empty();
    std::string csv = "op,layer,mean_ratio";
    if (per_seed_columns) {
        for (std::uint64_t s : seeds) csv += ",seed_" + std::to_string(s);
    }
    csv += "\n";
    json rows_json = json::array();
    for (const tined::DeRatioRow& row : rows) {
        csv += std::string(row.is_ft ? "FT" : "GP") + "," + std::to_string(row.layer + 1) + "," +
               format_double(row.mean_ratio);
        if (per_seed_columns) {
            for (double r : row.per_seed) csv += "," + format_double(r);
        }
        csv += "\n";
        rows_json.push_back(json{{"op", row.is_ft ? "FT" : "GP"},
                                 {"layer", row.layer + 1},
                                 {"mean_ratio", row.mean_ratio},
                                 {"per_seed", row.per_seed}});
    }

    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    write_text(out / "de_ratios.csv", csv);

    json summary = summary_header("analyze-de", cfg, seed);
    summary["teacher"] = tined::to_string(cfg.teacher.kind);
    if (!opts.teacher_path.empty()) summary["teacher_checkpoint"] = opts.teacher_path;
    summary["seeds"] = seeds;
    summary["rows"] = rows_json;
    emit_summary(out, "de_ratios.json", summary);
    return tined::kExitOk;
}

// ---------------------------------------------------------------------------
// verify-bound

struct VerifyBoundOpts {
    CommonOpts common;
    std::size_t random = 0;
    std::size_t n = 30;
    double p = 0.2;
    std::size_t d = 8;
    std::string kind = "combinatorial";
};

int cmd_verify_bound(const VerifyBoundOpts& opts) {
    tined::RunConfig cfg = resolve_config(opts.common);
    const std::uint64_t seed = cfg.seed;
    tined::LaplacianKind kind;
    if (opts.kind == "combinatorial") {
        kind = tined::LaplacianKind::Combinatorial;
    } else if (opts.kind == "normalized") {
        kind = tined::LaplacianKind::NormalizedWithSelfLoops;
    } else {
        throw tined::ConfigError("--kind must be combinatorial or normalized, got '" +
                                 opts.kind + "'");
    }

    json instances = json::array();
    std::size_t passed = 0;
    if (opts.random > 0) {
        for (std::size_t i = 0; i < opts.random; ++i) {
            const std::uint64_t inst_seed = tined::derive_seed(seed, "bound-instance", i);
            tined::DatasetBundle er = tined::generate_er(opts.n, opts.p, opts.d, inst_seed);
            const tined::TheoremReport rep = tined::verify_theorem1(er.graph, er.features, kind);
            passed += rep.bound_holds ? 1 : 0;
            instances.push_back(json{{"instance", i},
                                     {"relative_error", rep.relative_error},
                                     {"lambda_max", rep.lambda_max},
                                     {"bound_holds", rep.bound_holds}});
        }
    } else {
        if (opts.common.data_dir.empty() && cfg.source == "sbm")
            throw tined::ConfigError("verify-bound needs --random N or --data DIR");
        LoadedBundle b = load_bundle(cfg, seed);
        const tined::TheoremReport rep =
            tined::verify_theorem1(b.data.graph, b.data.features, kind);
        passed += rep.bound_holds ? 1 : 0;
        instances.push_back(json{{"instance", 0},
                                 {"relative_error", rep.relative_error},
                                 {"lambda_max", rep.lambda_max},
                                 {"bound_holds", rep.bound_holds}});
    }

    json summary = summary_header("verify-bound", cfg, seed);
    summary["laplacian"] = opts.kind;
    summary["passed"] = passed;
    summary["total"] = instances.size();
    summary["all_hold"] = passed == instances.size();
    summary["instances"] = instances;
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    emit_summary(out, "bound_report.json", summary);
    return tined::kExitOk;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepOpts {
    CommonOpts common;
    std::string grid = "eta";
    std::vector<std::uint64_t> seeds;
};

struct SweepCell {
    std::string label;  // e.g. "eta=0.5" or "eta=0.5,beta=0.1"
    json setting;
    std::function<void(tined::RunConfig&)> apply;
};

std::vector<SweepCell> build_cells(const std::string& grid) {
    std::vector<SweepCell> cells;
    auto numeric = [&](const std::string& axis, double v,
                       void (*set)(tined::RunConfig&, double)) {
        SweepCell cell;
        cell.label = axis + "=" + format_double(v);
        cell.setting = json{{axis, v}};
        cell.apply = [set, v](tined::RunConfig& cfg) { set(cfg, v); };
        cells.push_back(std::move(cell));
    };
    if (grid == "eta") {
        for (double v : tined::eta_preset())
            numeric("eta", v, [](tined::RunConfig& c, double x) { c.weights.eta = x; });
    } else if (grid == "beta") {
        for (double v : tined::beta_preset())
            numeric("beta", v, [](tined::RunConfig& c, double x) { c.weights.beta = x; });
    } else if (grid == "eta-beta") {
        for (double e : tined::eta_preset()) {
            for (double bvalue : tined::beta_preset()) {
                SweepCell cell;
                cell.label = "eta=" + format_double(e) + ",beta=" + format_double(bvalue);
                cell.setting = json{{"eta", e}, {"beta", bvalue}};
                cell.apply = [e, bvalue](tined::RunConfig& cfg) {
                    cfg.weights.eta = e;
                    cfg.weights.beta = bvalue;
                };
                cells.push_back(std::move(cell));
            }
        }
    } else if (grid == "lr") {
        for (double v : tined::grid_for_axis("lr"))
            numeric("lr", v, [](tined::RunConfig& c, double x) { c.student.lr = x; });
    } else if (grid == "weight_decay") {
        for (double v : tined::grid_for_axis("weight_decay"))
            numeric("weight_decay", v,
                    [](tined::RunConfig& c, double x) { c.student.weight_decay = x; });
    } else if (grid == "lambda") {
        for (double v : tined::grid_for_axis("lambda"))
            numeric("lambda", v, [](tined::RunConfig& c, double x) { c.weights.lambda = x; });
    } else if (grid == "dropout") {
        for (double v : tined::grid_for_axis("dropout"))
            numeric("dropout", v, [](tined::RunConfig& c, double x) { c.student.dropout = x; });
    } else if (grid == "zeta") {
        for (double v : tined::grid_for_axis("zeta"))
            numeric("zeta", v, [](tined::RunConfig& c, double x) { c.weights.zeta = x; });
    } else if (grid == "mu") {
        for (const char* name : {"identity", "sqrt", "log"}) {
            SweepCell cell;
            cell.label = std::string("mu=") + name;
            cell.setting = json{{"mu", name}};
            const tined::MuKind mu = tined::parse_mu_kind(name);
            cell.apply = [mu](tined::RunConfig& cfg) { cfg.weights.mu = mu; };
            cells.push_back(std::move(cell));
        }
    } else {
        throw tined::ConfigError("unknown sweep grid '" + grid +
                                 "' (eta, beta, eta-beta, lr, weight_decay, lambda, dropout, "
                                 "zeta, mu)");
    }
    return cells;
}

std::size_t sweep_thread_budget(std::size_t tasks) {
    std::size_t threads = std::thread::hardware_concurrency();
    if (threads == 0) threads = 1;
    if (const char* env = std::getenv("TINED_THREADS")) {
        try {
            const long cap = std::stol(env);
            if (cap < 1) throw tined::ConfigError("TINED_THREADS must be a positive integer");
            threads = std::min<std::size_t>(threads, static_cast<std::size_t>(cap));
        } catch (const tined::ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw tined::ConfigError("TINED_THREADS must be a positive integer");
        }
    }
    return std::max<std::size_t>(1, std::min(threads, tasks));
}

int cmd_sweep(const SweepOpts& opts) {
    tined::RunConfig base = resolve_config(opts.common);
    std::vector<std::uint64_t> seeds = opts.seeds;
    if (seeds.empty()) seeds = base.seeds.empty() ? std::vector<std::uint64_t>{base.seed}
                                                  : base.seeds;
    const std::vector<SweepCell> cells = build_cells(opts.grid);

    // Teachers do not depend on the swept student axes, so pretrain one per
    // seed and hand each cell its own copy.
    struct SeedContext {
        LoadedBundle bundle;
        tined::TrainView view;
        tined::TeacherModel teacher;
    };
    std::vector<SeedContext> contexts;
    contexts.reserve(seeds.size());
    for (std::uint64_t s : seeds) {
        SeedContext ctx{load_bundle(base, s), {}, {}};
        tined::AccessAudit audit(ctx.bundle.data.graph.n);
        ctx.view = make_view(base, ctx.bundle, &audit);
        tined::TrainConfig tc;
        tc.lr = base.teacher_lr;
        tc.weight_decay = base.teacher_wd;
        tc.max_epochs = base.teacher_epochs;
        tc.dropout = base.teacher.dropout;
        tined::TrainResult log;
        ctx.teacher = tined::train_teacher(base.teacher, ctx.view, tc, s, &log);
        contexts.push_back(std::move(ctx));
    }

    struct TaskResult {
        double test_acc = 0.0;
        double best_val_acc = 0.0;
    };
    const std::size_t task_count = cells.size() * seeds.size();
    std::vector<TaskResult> results(task_count);
    std::vector<std::exception_ptr> failures(task_count);
    std::atomic<std::size_t> next{0};

    auto worker = [&]() {
        for (;;) {
            const std::size_t task = next.fetch_add(1);
            if (task >= task_count) return;
            const std::size_t cell_idx = task / seeds.size();
            const std::size_t seed_idx = task % seeds.size();
            try {
                tined::RunConfig cfg = base;
                cells[cell_idx].apply(cfg);
                const SeedContext& ctx = contexts[seed_idx];
                tined::TeacherModel teacher = ctx.teacher;  // cell-private copy
                tined::DistillResult res;
                tined::StudentMLP student = tined::distill_student(
                    teacher, ctx.view, cfg.weights, cfg.student, seeds[seed_idx], &res);
                TaskResult r;
                r.best_val_acc = res.log.best_val_acc;
                if (cfg.mode == "production") {
                    r.test_acc = tined::production_metrics(student, ctx.bundle.data,
                                                           ctx.bundle.split)
                                     .acc_prod;
                } else {
                    r.test_acc = tined::evaluate(student, ctx.bundle.data.features,
                                                 ctx.bundle.data.labels,
                                                 ctx.bundle.split.unlabeled);
                }
                results[task] = r;
            } catch (...) {
                failures[task] = std::current_exception();
            }
        }
    };

    const std::size_t threads = sweep_thread_budget(task_count);
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    for (std::size_t task = 0; task < task_count; ++task) {
        if (failures[task]) std::rethrow_exception(failures[task]);
    }

    std::string csv = "cell,mean_test_acc,std_test_acc,mean_best_val_acc,seeds\n";
    std::string jsonl;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        std::vector<double> accs, vals;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            accs.push_back(results[c * seeds.size() + s].test_acc);
            vals.push_back(results[c * seeds.size() + s].best_val_acc);
        }
        double mean = 0.0, val_mean = 0.0;
        for (std::size_t s = 0; s < accs.size(); ++s) {
            mean += accs[s];
            val_mean += vals[s];
        }
        mean /= static_cast<double>(accs.size());
        val_mean /= static_cast<double>(vals.size());
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        const double stddev = std::sqrt(var / static_cast<double>(accs.size()));

        csv += cells[c].label + "," + format_double(mean) + "," + format_double(stddev) + "," +
               format_double(val_mean) + "," + std::to_string(seeds.size()) + "\n";
        json row{{"cell", cells[c].setting},
                 {"mean_test_acc", mean},
                 {"std_test_acc", stddev},
                 {"mean_best_val_acc", val_mean},
                 {"per_seed_test_acc", accs}};
        jsonl += row.dump() + "\n";
    }

    const fs::path out(base.out_dir);
    fs::create_directories(out);
    write_text(out / "sweep.csv", csv);
    write_text(out / "sweep.jsonl", jsonl);

    json summary = summary_header("sweep", base, base.seed);
    summary["grid"] = opts.grid;
    summary["cells"] = cells.size();
    summary["seeds"] = seeds;
    emit_summary(out, "sweep_summary.json", summary);
    return tined::kExitOk;
}

// ---------------------------------------------------------------------------
// gen-sbm

struct GenSbmOpts {
    std::string out_dir = "out";
    std::size_t n = 200;
    std::size_t blocks = 2;
    double p_in = 0.1;
    double p_out = 0.01;
    std::size_t dim = 16;
    double shift = 0.625;
    std::int64_t seed = 0;
};

int cmd_gen_sbm(const GenSbmOpts& opts) {
    const tined::DatasetBundle data =
        tined::generate_sbm(opts.n, opts.blocks, opts.p_in, opts.p_out, opts.dim, opts.shift,
                            static_cast<std::uint64_t>(opts.seed));
    const fs::path out(opts.out_dir);
    fs::create_directories(out);

    std::string edges;
    for (const auto& [u, v] : data.graph.edges)
        edges += std::to_string(u) + " " + std::to_string(v) + "\n";
    write_text(out / "edges.txt", edges);

    std::string features;
    for (std::size_t v = 0; v < data.features.rows; ++v) {
        for (std::size_t j = 0; j < data.features.cols; ++j) {
            if (j > 0) features += ",";
            features += format_double(data.features.at(v, j));
        }
        features += "\n";
    }
    write_text(out / "features.csv", features);

    std::string labels;
    for (int y : data.labels) labels += std::to_string(y) + "\n";
    write_text(out / "labels.txt", labels);

    json summary{{"command", "gen-sbm"},
                 {"n", opts.n},
                 {"blocks", opts.blocks},
                 {"p_in", opts.p_in},
                 {"p_out", opts.p_out},
                 {"dim", opts.dim},
                 {"shift", opts.shift},
                 {"seed", opts.seed},
                 {"edges", data.graph.edge_count()}};
    emit_summary(out, "gen_sbm_summary.json", summary);
    return tined::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TINED: GNN teachers, injected MLP students, Dirichlet-energy analysis"};
    app.require_subcommand(1);

    TrainTeacherOpts train_opts;
    CLI::App* train = app.add_subcommand("train-teacher", "Train a GNN teacher");
    add_common(train, train_opts.common);

    DistillOpts distill_opts;
    CLI::App* distill = app.add_subcommand("distill", "Distill a teacher into an MLP student");
    add_common(distill, distill_opts.common);
    distill->add_option("--teacher", distill_opts.teacher_path,
                        "teacher checkpoint (default <out>/teacher.ckpt)");
    distill->add_option("--lambda", distill_opts.lambda, "soft-label weight override");
    distill->add_option("--beta", distill_opts.beta, "DED weight override");
    distill->add_option("--eta", distill_opts.eta, "injected-parameter multiplier override");
    distill->add_option("--zeta", distill_opts.zeta, "DE edge-sampling ratio override");
    distill->add_option("--temperature", distill_opts.temperature,
                        "soft-label temperature override");
    distill->add_option("--mu", distill_opts.mu, "DE ratio transform: identity, sqrt, log");
    distill->add_flag("--no-inject", distill_opts.no_inject,
                      "random-init FT layers instead of teacher injection");

    EvalOpts eval_opts;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a node set");
    add_common(eval, eval_opts.common);
    eval->add_option("--checkpoint", eval_opts.checkpoint, "teacher or student checkpoint")
        ->required();
    eval->add_option("--set", eval_opts.set, "train, val, test, tran, ind or all");

    AnalyzeDeOpts analyze_opts;
    CLI::App* analyze = app.add_subcommand("analyze-de", "Dirichlet-energy ratios per op");
    add_common(analyze, analyze_opts.common);
    analyze->add_option("--teacher", analyze_opts.teacher_path,
                        "analyze this checkpoint instead of training fresh teachers");
    analyze->add_option("--seeds", analyze_opts.seeds, "training seeds")->delimiter(',');

    VerifyBoundOpts bound_opts;
    CLI::App* bound = app.add_subcommand("verify-bound", "Check the propagation-emulation bound");
    add_common(bound, bound_opts.common);
    bound->add_option("--random", bound_opts.random, "number of random Erdos-Renyi instances");
    bound->add_option("--n", bound_opts.n, "nodes per random instance");
    bound->add_option("--p", bound_opts.p, "edge probability");
    bound->add_option("--d", bound_opts.d, "feature dimension");
    bound->add_option("--kind", bound_opts.kind, "laplacian: combinatorial or normalized");

    SweepOpts sweep_opts;
    CLI::App* sweep = app.add_subcommand("sweep", "Grid sweep over a hyperparameter axis");
    add_common(sweep, sweep_opts.common);
    sweep->add_option("--grid", sweep_opts.grid,
                      "eta, beta, eta-beta, lr, weight_decay, lambda, dropout, zeta or mu");
    sweep->add_option("--seeds", sweep_opts.seeds, "seeds averaged per cell")->delimiter(',');

    GenSbmOpts gen_opts;
    CLI::App* gen = app.add_subcommand("gen-sbm", "Write a synthetic SBM dataset directory");
    gen->add_option("--out", gen_opts.out_dir, "output directory");
    gen->add_option("--n", gen_opts.n, "nodes");
    gen->add_option("--blocks", gen_opts.blocks, "equal-sized blocks");
    gen->add_option("--p-in", gen_opts.p_in, "within-block edge probability");
    gen->add_option("--p-out", gen_opts.p_out, "cross-block edge probability");
    gen->add_option("--dim", gen_opts.dim, "feature dimension");
    gen->add_option("--shift", gen_opts.shift, "per-class mean shift");
    gen->add_option("--seed", gen_opts.seed, "seed")->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return tined::kExitUsage;
    }

    try {
        if (*train) return cmd_train_teacher(train_opts);
        if (*distill) return cmd_distill(distill_opts);
        if (*eval) return cmd_eval(eval_opts);
        if (*analyze) return cmd_analyze_de(analyze_opts);
        if (*bound) return cmd_verify_bound(bound_opts);
        if (*sweep) return cmd_sweep(sweep_opts);
        if (*gen) return cmd_gen_sbm(gen_opts);
        std::cerr << "error: no subcommand\n";
        return tined::kExitUsage;
    } catch (const tined::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return tined::kExitInternal;
    }
}
