#include "tined/analysis.hpp"

#include <cmath>
#include <string>

#include "tined/errors.hpp"

namespace tined {

TheoremReport verify_theorem1(const Graph& g, const DenseMatrix& h, LaplacianKind kind) {
    if (h.rows != g.n)
        throw ShapeError("theorem check: H has " + std::to_string(h.rows) + " rows for " +
                         std::to_string(g.n) + " nodes");
    const DenseMatrix lap = laplacian(g, kind);
    const DenseMatrix lh = matmul(lap, h);
    const DenseMatrix w = least_squares(h, lh);
    DenseMatrix residual = sub(lh, matmul(h, w));
    TheoremReport report;
    report.relative_error = frobenius_norm(residual) / frobenius_norm(h);
    report.lambda_max = lambda_max_symmetric(lap);
    report.bound_holds = report.relative_error <= report.lambda_max + 1e-9;
    return report;
}

std::vector<ApproximationRow> approximation_error_table(TeacherModel& t, StudentMLP& s,
                                                        const Graph& g, const DenseMatrix& x) {
    Tape tape;
    ForwardTrace trace;
    const NodeId xn = tape.constant(x);
    teacher_forward(tape, t, g, xn, {}, &trace);

    std::vector<const TraceEntry*> gp_ops;
    for (const TraceEntry& op : trace.ops)
        if (!op.is_ft) gp_ops.push_back(&op);
    std::vector<StudentLayer*> gp_layers;
    for (StudentLayer& layer : s.layers)
        if (layer.role == LayerRole::GpEmulating) gp_layers.push_back(&layer);
    if (gp_ops.size() != gp_layers.size())
        throw ShapeError("approximation table: " + std::to_string(gp_ops.size()) +
                         " teacher GP ops vs " + std::to_string(gp_layers.size()) +
                         " student GPEmulating layers");

    std::vector<ApproximationRow> rows;
    for (std::size_t k = 0; k < gp_ops.size(); ++k) {
        const DenseMatrix& h = tape.value(gp_ops[k]->in);
        const DenseMatrix& gp_out = tape.value(gp_ops[k]->out);
        Tape fc_tape;
        NodeId fc = fc_tape.linear(fc_tape.constant(h), fc_tape.param(gp_layers[k]->w),
                                   fc_tape.param(gp_layers[k]->b));
        if (gp_layers[k]->act == Activation::ReLU) fc = fc_tape.relu(fc);
        const DenseMatrix& fc_out = fc_tape.value(fc);
        if (!fc_out.same_shape(gp_out))
            throw ShapeError("approximation table: student layer output " + fc_out.shape_str() +
                             " vs teacher GP output " + gp_out.shape_str());
        DenseMatrix diff = sub(gp_out, fc_out);
        rows.push_back({gp_ops[k]->layer, frobenius_norm(diff) / frobenius_norm(h)});
    }
    return rows;
}

namespace {

std::vector<DeRatioRow> rows_from_profile(const DERatioProfile& profile) {
    std::vector<DeRatioRow> rows;
    rows.reserve(profile.entries.size());
    for (const auto& e : profile.entries) rows.push_back({e.is_ft, e.layer, e.ratio, {e.ratio}});
    return rows;
}

}  // namespace

std::vector<DeRatioRow> de_ratio_report(TeacherModel& t, const Graph& g, const DenseMatrix& x) {
    LossWeights raw;
    raw.zeta = 1.0;
    raw.mu = MuKind::Identity;
    return rows_from_profile(compute_teacher_profile(t, g, x, raw, 0));
}

std::vector<DeRatioRow> de_ratio_report(const TeacherConfig& cfg, const TrainView& view,
                                        const TrainConfig& tc,
                                        const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw ConfigError("de-ratio report needs at least one seed");
    std::vector<DeRatioRow> rows;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        TeacherModel t = train_teacher(cfg, view, tc, seeds[i], nullptr);
        const std::vector<DeRatioRow> one = de_ratio_report(t, view.graph, view.features);
        if (i == 0) {
            rows = one;
        } else {
            if (one.size() != rows.size())
                throw ShapeError("de-ratio report: op count changed across seeds");
            for (std::size_t k = 0; k < rows.size(); ++k)
                rows[k].per_seed.push_back(one[k].mean_ratio);
        }
    }
    for (DeRatioRow& row : rows) {
        double sum = 0.0;
        for (double r : row.per_seed) sum += r;
        row.mean_ratio = sum / static_cast<double>(row.per_seed.size());
    }
    return rows;
}

}  // namespace tined
