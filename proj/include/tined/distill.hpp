#pragma once

#include <cstdint>
#include <vector>

#include "tined/autodiff.hpp"
#include "tined/dataset.hpp"
#include "tined/graph.hpp"
#include "tined/models.hpp"

namespace tined {

enum class MuKind { Identity, Sqrt, Log };

/// Distillation loss weights: L = CE + lambda·KL + beta·DED, with eta the
/// gradient multiplier for injected parameters, zeta the DE edge-sampling
/// ratio and mu the ratio transform. Losses are means over their node sets,
/// so published weights tuned against unnormalized sums do not transfer
/// directly.
struct LossWeights {
    double lambda = 0.5;
    double beta = 0.1;
    double eta = 0.5;
    double zeta = 1.0;
    MuKind mu = MuKind::Identity;
    double temperature = 1.0;  // soft-label softening; 1 = plain softmax
};

struct TrainConfig {
    double lr = 0.01;
    double weight_decay = 5e-4;
    std::size_t max_epochs = 500;
    double dropout = 0.0;
    Activation gp_activation = Activation::ReLU;
    bool inject = true;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    double total = 0.0;
    double ce = 0.0;
    double kl = 0.0;
    double ded = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    double best_val_acc = -1.0;
    std::size_t best_epoch = 0;
};

/// DE ratios of a recorded forward pass, in trace order. `ratio` is the raw
/// E(out)/max(E(in), 1e-12); `transformed` has mu applied.
struct DERatioProfile {
    struct Entry {
        bool is_ft = false;
        std::size_t layer = 0;
        double ratio = 0.0;
        double transformed = 0.0;
    };
    std::vector<Entry> entries;
};

double apply_mu(double ratio, MuKind mu);

const char* to_string(MuKind mu);
MuKind parse_mu_kind(const std::string& s);

/// Ratios of an already-evaluated trace (shared by teacher profiling and
/// student summaries). `sample` null means exact DE over all edges.
DERatioProfile profile_from_trace(const Tape& tape, const ForwardTrace& trace, const Graph& g,
                                  const EdgeSample* sample, MuKind mu);

/// Runs the teacher in eval mode and profiles every GP/FT op. The edge
/// sample is drawn here when zeta < 1 (seeded); zeta = 1 uses exact DE.
DERatioProfile compute_teacher_profile(TeacherModel& t, const Graph& g, const DenseMatrix& x,
                                       const LossWeights& weights, std::uint64_t seed);

/// Cross-entropy of mean −log softmax(logits)[v, labels[v]] over `nodes`.
NodeId ce_loss(Tape& tape, NodeId logits, const std::vector<int>& labels,
               const std::vector<std::uint32_t>& nodes);

/// Mean KL(soft ‖ softmax(logits)) over `nodes`; soft rows must be valid
/// distributions.
NodeId kl_loss(Tape& tape, NodeId logits, const DenseMatrix& soft,
               const std::vector<std::uint32_t>& nodes);

/// Σ over trace positions of (mu(teacher ratio) − mu(student ratio))², with
/// student ratios built on the tape and teacher ratios as constants. The
/// same edge sample must be the one the profile was computed with.
NodeId ded_loss(Tape& tape, const ForwardTrace& student_trace, const DERatioProfile& profile,
                const Graph& g, MuKind mu, const EdgeSample* sample);

struct TotalLossParts {
    NodeId total = -1;
    NodeId logits = -1;
    double ce = 0.0;
    double kl = 0.0;
    double ded = 0.0;
};

/// Forward + full objective on one tape. Zero-weight terms are not built at
/// all, so a lambda = beta = 0 run constructs exactly the plain-MLP tape.
TotalLossParts total_loss(Tape& tape, StudentMLP& s, NodeId x, const DenseMatrix& soft_labels,
                          const std::vector<int>& labels, const SplitSpec& split,
                          const DERatioProfile& profile, const LossWeights& weights,
                          const Graph& g, const EdgeSample* sample, const ForwardOptions& opts);

/// Full-batch Adam on cross-entropy over the labeled set, best-validation
/// checkpointing (ties keep the later epoch). Deterministic given the seed.
TeacherModel train_teacher(const TeacherConfig& cfg, const TrainView& view,
                           const TrainConfig& tc, std::uint64_t seed, TrainResult* log);

struct DistillResult {
    TrainResult log;
    DERatioProfile teacher_profile;
    DERatioProfile student_profile;
    DenseMatrix soft_labels;  // view rows
};

/// The TINED pipeline on a training view: soft labels once, teacher profile
/// once, injected student, Adam on total_loss, best-validation restore.
StudentMLP distill_student(TeacherModel& t, const TrainView& view, const LossWeights& weights,
                           const TrainConfig& cfg, std::uint64_t seed, DistillResult* out);

/// Standalone plain-MLP path: same skeleton and seed streams, CE only. The
/// lambda = beta = 0, no-injection distillation must match it bit for bit.
StudentMLP train_mlp_baseline(const TeacherModel& t, const TrainView& view,
                              const TrainConfig& cfg, std::uint64_t seed, TrainResult* log);

double evaluate(TeacherModel& t, const Graph& g, const DenseMatrix& x,
                const std::vector<int>& labels, const std::vector<std::uint32_t>& nodes);
double evaluate(StudentMLP& s, const DenseMatrix& x, const std::vector<int>& labels,
                const std::vector<std::uint32_t>& nodes);

struct ProductionReport {
    double acc_ind = 0.0;
    double acc_tran = 0.0;
    double acc_prod = 0.0;
    std::size_t n_ind = 0;
    std::size_t n_tran = 0;
};

/// Inductive / transductive / size-weighted accuracies of a student on the
/// full dataset after production-mode training.
ProductionReport production_metrics(StudentMLP& s, const DatasetBundle& data,
                                    const SplitSpec& split);

}  // namespace tined
