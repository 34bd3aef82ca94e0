#pragma once

#include <cstdint>
#include <vector>

#include "tined/dataset.hpp"
#include "tined/distill.hpp"
#include "tined/graph.hpp"
#include "tined/models.hpp"

namespace tined {

struct TheoremReport {
    double relative_error = 0.0;
    double lambda_max = 0.0;
    bool bound_holds = false;
};

/// Checks the propagation-emulation bound: with W* the least-squares
/// solution of H·W ≈ L·H, the relative error ‖LH − HW*‖_F/‖H‖_F never
/// exceeds λ_max(L). H must have full column rank.
TheoremReport verify_theorem1(const Graph& g, const DenseMatrix& h,
                              LaplacianKind kind = LaplacianKind::Combinatorial);

struct ApproximationRow {
    std::size_t layer = 0;
    double err = 0.0;
};

/// Relative Frobenius discrepancy between each teacher GP op and the
/// corresponding student GPEmulating layer, both applied to the teacher's
/// layer input embedding (for GraphSAGE, compared on the concatenated GP
/// output).
std::vector<ApproximationRow> approximation_error_table(TeacherModel& t, StudentMLP& s,
                                                        const Graph& g, const DenseMatrix& x);

struct DeRatioRow {
    bool is_ft = false;
    std::size_t layer = 0;
    double mean_ratio = 0.0;
    std::vector<double> per_seed;
};

/// Raw DE ratios of one trained teacher (exact DE, identity transform).
std::vector<DeRatioRow> de_ratio_report(TeacherModel& t, const Graph& g, const DenseMatrix& x);

/// Trains one teacher per seed and averages the DE ratios per op.
std::vector<DeRatioRow> de_ratio_report(const TeacherConfig& cfg, const TrainView& view,
                                        const TrainConfig& tc,
                                        const std::vector<std::uint64_t>& seeds);

}  // namespace tined
