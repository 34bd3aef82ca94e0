#include "tined/distill.hpp"

#include <cmath>
#include <string>

#include "tined/errors.hpp"
#include "tined/rng.hpp"

namespace tined {

namespace {

std::vector<std::uint32_t> all_rows(std::size_t n) {
    std::vector<std::uint32_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = static_cast<std::uint32_t>(i);
    return rows;
}

std::vector<std::size_t> teacher_input_dims(const TeacherModel& t) {
    std::vector<std::size_t> dims(t.cfg.layers);
    for (std::size_t l = 0; l < t.cfg.layers; ++l)
        dims[l] = (l == 0) ? t.in_dim : t.cfg.hidden;
    return dims;
}

std::vector<std::size_t> student_input_dims(StudentMLP& s) {
    std::vector<std::size_t> dims;
    dims.reserve(s.layers.size());
    for (const StudentLayer& l : s.layers) dims.push_back(l.w.value.rows);
    return dims;
}

std::vector<DenseMatrix> snapshot(const std::vector<Param*>& params) {
    std::vector<DenseMatrix> values;
    values.reserve(params.size());
    for (const Param* p : params) values.push_back(p->value);
    return values;
}

void restore(const std::vector<Param*>& params, const std::vector<DenseMatrix>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

void check_finite_loss(double loss, std::size_t epoch) {
    if (!std::isfinite(loss))
        throw TrainingError("loss diverged (non-finite value)", epoch);
}

NodeId mu_node(Tape& tape, NodeId ratio, MuKind mu) {
    switch (mu) {
        case MuKind::Identity: return ratio;
        case MuKind::Sqrt: return tape.sqrt(tape.add_const(ratio, 1e-12));
        case MuKind::Log: return tape.log(tape.add_const(ratio, 1e-12));
    }
    return ratio;
}

}  // namespace

double apply_mu(double ratio, MuKind mu) {
    switch (mu) {
        case MuKind::Identity: return ratio;
        case MuKind::Sqrt: return std::sqrt(ratio + 1e-12);
        case MuKind::Log: return std::log(ratio + 1e-12);
    }
    return ratio;
}

const char* to_string(MuKind mu) {
    switch (mu) {
        case MuKind::Identity: return "identity";
        case MuKind::Sqrt: return "sqrt";
        case MuKind::Log: return "log";
    }
    return "?";
}

MuKind parse_mu_kind(const std::string& s) {
    if (s == "identity") return MuKind::Identity;
    if (s == "sqrt") return MuKind::Sqrt;
    if (s == "log") return MuKind::Log;
    throw ConfigError("unknown mu transform '" + s + "'");
}

DERatioProfile profile_from_trace(const Tape& tape, const ForwardTrace& trace, const Graph& g,
                                  const EdgeSample* sample, MuKind mu) {
    DERatioProfile profile;
    profile.entries.reserve(trace.ops.size());
    for (const TraceEntry& op : trace.ops) {
        const double e_in = dirichlet_energy_over(tape.value(op.in), g, sample);
        const double e_out = dirichlet_energy_over(tape.value(op.out), g, sample);
        const double ratio = e_out / std::max(e_in, 1e-12);
        profile.entries.push_back({op.is_ft, op.layer, ratio, apply_mu(ratio, mu)});
    }
    return profile;
}

DERatioProfile compute_teacher_profile(TeacherModel& t, const Graph& g, const DenseMatrix& x,
                                       const LossWeights& weights, std::uint64_t seed) {
    EdgeSample sample;
    const EdgeSample* sp = nullptr;
    if (weights.zeta < 1.0) {
        sample = sample_edges(g, weights.zeta, derive_seed(seed, "de-sample"));
        sp = &sample;
    }
    Tape tape;
    ForwardTrace trace;
    const NodeId xn = tape.constant(x);
    teacher_forward(tape, t, g, xn, {}, &trace);
    return profile_from_trace(tape, trace, g, sp, weights.mu);
}

NodeId ce_loss(Tape& tape, NodeId logits, const std::vector<int>& labels,
               const std::vector<std::uint32_t>& nodes) {
    return tape.neg_mean_pick(tape.log_row_softmax(logits), labels, nodes);
}

NodeId kl_loss(Tape& tape, NodeId logits, const DenseMatrix& soft,
               const std::vector<std::uint32_t>& nodes) {
    return tape.masked_kl(tape.log_row_softmax(logits), soft, nodes);
}

NodeId ded_loss(Tape& tape, const ForwardTrace& student_trace, const DERatioProfile& profile,
                const Graph& g, MuKind mu, const EdgeSample* sample) {
    if (student_trace.ops.size() != profile.entries.size())
        throw ShapeError("ded: student trace has " + std::to_string(student_trace.ops.size()) +
                         " ops but teacher profile has " +
                         std::to_string(profile.entries.size()));
    NodeId acc = -1;
    for (std::size_t i = 0; i < student_trace.ops.size(); ++i) {
        const TraceEntry& op = student_trace.ops[i];
        const NodeId e_out = tape.dirichlet(op.out, g, sample);
        const NodeId e_in = tape.dirichlet(op.in, g, sample);
        const NodeId ratio = tape.div(e_out, tape.max_const(e_in, 1e-12));
        const NodeId transformed = mu_node(tape, ratio, mu);
        DenseMatrix target(1, 1);
        target.data[0] = profile.entries[i].transformed;
        const NodeId term = tape.square(tape.sub(transformed, tape.constant(std::move(target))));
        acc = (acc < 0) ? term : tape.add(acc, term);
    }
    return acc;
}

TotalLossParts total_loss(Tape& tape, StudentMLP& s, NodeId x, const DenseMatrix& soft_labels,
                          const std::vector<int>& labels, const SplitSpec& split,
                          const DERatioProfile& profile, const LossWeights& weights,
                          const Graph& g, const EdgeSample* sample, const ForwardOptions& opts) {
    TotalLossParts parts;
    ForwardTrace trace;
    parts.logits = student_forward(tape, s, x, opts, weights.beta > 0.0 ? &trace : nullptr);
    const NodeId ls = tape.log_row_softmax(parts.logits);
    const NodeId ce = tape.neg_mean_pick(ls, labels, split.labeled);
    parts.ce = tape.scalar_value(ce);
    NodeId total = ce;
    if (weights.lambda > 0.0) {
        const NodeId kl =
            tape.masked_kl(ls, soft_labels, all_rows(tape.value(parts.logits).rows));
        parts.kl = tape.scalar_value(kl);
        total = tape.add(total, tape.scale(kl, weights.lambda));
    }
    if (weights.beta > 0.0) {
        const NodeId ded = ded_loss(tape, trace, profile, g, weights.mu, sample);
        parts.ded = tape.scalar_value(ded);
        total = tape.add(total, tape.scale(ded, weights.beta));
    }
    parts.total = total;
    return parts;
}

TeacherModel train_teacher(const TeacherConfig& cfg, const TrainView& view,
                           const TrainConfig& tc, std::uint64_t seed, TrainResult* log) {
    TeacherModel t = make_teacher(cfg, view.features.cols, view.num_classes,
                                  derive_seed(seed, "init"));
    const std::vector<Param*> params = t.params();
    AdamState state;
    const AdamConfig adam{tc.lr, 0.9, 0.999, 1e-8, tc.weight_decay};

    TrainResult result;
    std::vector<DenseMatrix> best = snapshot(params);
    const std::vector<std::size_t> mask_dims = teacher_input_dims(t);

    for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
        std::vector<DenseMatrix> masks;
        ForwardOptions opts;
        opts.train = true;
        if (cfg.dropout > 0.0) {
            Rng rng(derive_seed(seed, "dropout", epoch));
            masks = make_dropout_masks(mask_dims, view.graph.n, cfg.dropout, rng);
            opts.dropout_masks = &masks;
        }
        Tape tape;
        const NodeId xn = tape.constant(view.features);
        const NodeId logits = teacher_forward(tape, t, view.graph, xn, opts, nullptr);
        const NodeId loss =
            tape.neg_mean_pick(tape.log_row_softmax(logits), view.labels, view.split.labeled);
        const double loss_value = tape.scalar_value(loss);
        check_finite_loss(loss_value, epoch);
        tape.backward(loss);
        adam_step(params, state, adam);

        Tape eval_tape;
        const NodeId ex = eval_tape.constant(view.features);
        const NodeId eval_logits = teacher_forward(eval_tape, t, view.graph, ex, {}, nullptr);
        const DenseMatrix& elv = eval_tape.value(eval_logits);
        EpochMetrics m;
        m.epoch = epoch;
        m.total = loss_value;
        m.ce = loss_value;
        m.train_acc = accuracy_from_logits(elv, view.labels, view.split.labeled);
        m.val_acc = accuracy_from_logits(elv, view.labels, view.split.validation);
        result.history.push_back(m);
        if (m.val_acc >= result.best_val_acc) {
            result.best_val_acc = m.val_acc;
            result.best_epoch = epoch;
            best = snapshot(params);
        }
    }
    restore(params, best);
    if (log) *log = result;
    return t;
}

StudentMLP distill_student(TeacherModel& t, const TrainView& view, const LossWeights& weights,
                           const TrainConfig& cfg, std::uint64_t seed, DistillResult* out) {
    if (!(weights.zeta > 0.0) || weights.zeta > 1.0)
        throw DomainError("zeta must lie in (0, 1], got " + std::to_string(weights.zeta));

    EdgeSample sample;
    const EdgeSample* sp = nullptr;
    if (weights.zeta < 1.0) {
        sample = sample_edges(view.graph, weights.zeta, derive_seed(seed, "de-sample"));
        sp = &sample;
    }

    // Soft labels once, from the frozen teacher on the training graph.
    DenseMatrix soft;
    {
        Tape tape;
        const NodeId xn = tape.constant(view.features);
        NodeId logits = teacher_forward(tape, t, view.graph, xn, {}, nullptr);
        if (weights.temperature != 1.0) {
            if (weights.temperature <= 0.0)
                throw DomainError("temperature must be positive");
            logits = tape.scale(logits, 1.0 / weights.temperature);
        }
        soft = tape.value(tape.row_softmax(logits));
    }

    // Teacher profile once, with the same edge sample the student will use.
    DERatioProfile profile;
    {
        Tape tape;
        ForwardTrace trace;
        const NodeId xn = tape.constant(view.features);
        teacher_forward(tape, t, view.graph, xn, {}, &trace);
        profile = profile_from_trace(tape, trace, view.graph, sp, weights.mu);
    }

    StudentMLP s = cfg.inject
                       ? inject_teacher(t, weights.eta, derive_seed(seed, "student-init"),
                                        cfg.gp_activation)
                       : make_student_skeleton(t, derive_seed(seed, "student-init"),
                                               cfg.gp_activation);
    const std::vector<Param*> params = s.params();
    AdamState state;
    const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

    TrainResult result;
    std::vector<DenseMatrix> best = snapshot(params);
    const std::vector<std::size_t> mask_dims = student_input_dims(s);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::vector<DenseMatrix> masks;
        ForwardOptions opts;
        opts.train = true;
        if (cfg.dropout > 0.0) {
            Rng rng(derive_seed(seed, "dropout", epoch));
            masks = make_dropout_masks(mask_dims, view.graph.n, cfg.dropout, rng);
            opts.dropout_masks = &masks;
        }
        Tape tape;
        const NodeId xn = tape.constant(view.features);
        const TotalLossParts parts = total_loss(tape, s, xn, soft, view.labels, view.split,
                                                profile, weights, view.graph, sp, opts);
        const double loss_value = tape.scalar_value(parts.total);
        check_finite_loss(loss_value, epoch);
        tape.backward(parts.total);
        adam_step(params, state, adam);

        Tape eval_tape;
        const NodeId ex = eval_tape.constant(view.features);
        const NodeId eval_logits = student_forward(eval_tape, s, ex, {}, nullptr);
        const DenseMatrix& elv = eval_tape.value(eval_logits);
        EpochMetrics m;
        m.epoch = epoch;
        m.total = loss_value;
        m.ce = parts.ce;
        m.kl = parts.kl;
        m.ded = parts.ded;
        m.train_acc = accuracy_from_logits(elv, view.labels, view.split.labeled);
        m.val_acc = accuracy_from_logits(elv, view.labels, view.split.validation);
        result.history.push_back(m);
        if (m.val_acc >= result.best_val_acc) {
            result.best_val_acc = m.val_acc;
            result.best_epoch = epoch;
            best = snapshot(params);
        }
    }
    restore(params, best);

    if (out) {
        out->log = result;
        out->teacher_profile = profile;
        out->soft_labels = soft;
        Tape tape;
        ForwardTrace trace;
        const NodeId xn = tape.constant(view.features);
        student_forward(tape, s, xn, {}, &trace);
        out->student_profile = profile_from_trace(tape, trace, view.graph, sp, weights.mu);
    }
    return s;
}

StudentMLP train_mlp_baseline(const TeacherModel& t, const TrainView& view,
                              const TrainConfig& cfg, std::uint64_t seed, TrainResult* log) {
    StudentMLP s = make_student_skeleton(t, derive_seed(seed, "student-init"),
                                         cfg.gp_activation);
    const std::vector<Param*> params = s.params();
    AdamState state;
    const AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};

    TrainResult result;
    std::vector<DenseMatrix> best = snapshot(params);
    const std::vector<std::size_t> mask_dims = student_input_dims(s);

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::vector<DenseMatrix> masks;
        ForwardOptions opts;
        opts.train = true;
        if (cfg.dropout > 0.0) {
            Rng rng(derive_seed(seed, "dropout", epoch));
            masks = make_dropout_masks(mask_dims, view.graph.n, cfg.dropout, rng);
            opts.dropout_masks = &masks;
        }
        Tape tape;
        const NodeId xn = tape.constant(view.features);
        const NodeId logits = student_forward(tape, s, xn, opts, nullptr);
        const NodeId loss =
            tape.neg_mean_pick(tape.log_row_softmax(logits), view.labels, view.split.labeled);
        const double loss_value = tape.scalar_value(loss);
        check_finite_loss(loss_value, epoch);
        tape.backward(loss);
        adam_step(params, state, adam);

        Tape eval_tape;
        const NodeId ex = eval_tape.constant(view.features);
        const NodeId eval_logits = student_forward(eval_tape, s, ex, {}, nullptr);
        const DenseMatrix& elv = eval_tape.value(eval_logits);
        EpochMetrics m;
        m.epoch = epoch;
        m.total = loss_value;
        m.ce = loss_value;
        m.train_acc = accuracy_from_logits(elv, view.labels, view.split.labeled);
        m.val_acc = accuracy_from_logits(elv, view.labels, view.split.validation);
        result.history.push_back(m);
        if (m.val_acc >= result.best_val_acc) {
            result.best_val_acc = m.val_acc;
            result.best_epoch = epoch;
            best = snapshot(params);
        }
    }
    restore(params, best);
    if (log) *log = result;
    return s;
}

double evaluate(TeacherModel& t, const Graph& g, const DenseMatrix& x,
                const std::vector<int>& labels, const std::vector<std::uint32_t>& nodes) {
    Tape tape;
    const NodeId xn = tape.constant(x);
    const NodeId logits = teacher_forward(tape, t, g, xn, {}, nullptr);
    return accuracy_from_logits(tape.value(logits), labels, nodes);
}

double evaluate(StudentMLP& s, const DenseMatrix& x, const std::vector<int>& labels,
                const std::vector<std::uint32_t>& nodes) {
    Tape tape;
    const NodeId xn = tape.constant(x);
    const NodeId logits = student_forward(tape, s, xn, {}, nullptr);
    return accuracy_from_logits(tape.value(logits), labels, nodes);
}

ProductionReport production_metrics(StudentMLP& s, const DatasetBundle& data,
                                    const SplitSpec& split) {
    if (!split.is_production())
        throw DataError("production metrics require a production split");
    ProductionReport r;
    r.n_ind = split.inductive.size();
    r.n_tran = split.observed.size();
    r.acc_ind = evaluate(s, data.features, data.labels, split.inductive);
    r.acc_tran = evaluate(s, data.features, data.labels, split.observed);
    r.acc_prod = (static_cast<double>(r.n_ind) * r.acc_ind +
                  static_cast<double>(r.n_tran) * r.acc_tran) /
                 static_cast<double>(r.n_ind + r.n_tran);
    return r;
}

}  // namespace tined
