#pragma once

#include <cstdint>
#include <vector>

#include "tined/autodiff.hpp"
#include "tined/graph.hpp"
#include "tined/rng.hpp"

namespace tined {

enum class TeacherKind { GraphSAGE, GCN, GAT, APPNP };

enum class Activation { ReLU, Identity };

enum class NormKind { None, Layer, Batch };

struct TeacherConfig {
    TeacherKind kind = TeacherKind::GraphSAGE;
    std::size_t layers = 2;  // FT count; for APPNP this is the depth of the linear stack
    std::size_t hidden = 64;
    double dropout = 0.0;
    NormKind norm = NormKind::None;  // hidden layers only; not supported for APPNP
    double leaky_slope = 0.2;        // GAT attention activation
    std::size_t power_steps = 10;    // APPNP propagation steps
    double teleport = 0.1;           // APPNP restart weight
};

/// One teacher layer. `att` exists only for GAT; `gamma`/`beta` only when a
/// norm is configured on a hidden layer; APPNP layers have no bias.
struct TeacherLayer {
    Param w;
    Param b;
    Param att;
    Param gamma;
    Param beta;
    bool has_bias = true;
    bool has_att = false;
    bool has_norm = false;
};

struct TeacherModel {
    TeacherConfig cfg;
    std::size_t in_dim = 0;
    std::size_t num_classes = 0;
    std::vector<TeacherLayer> layers;

    /// Stable parameter order (layer-major) for the optimizer.
    std::vector<Param*> params();
};

/// Glorot-initialized teacher; deterministic given the seed.
TeacherModel make_teacher(const TeacherConfig& cfg, std::size_t in_dim, std::size_t num_classes,
                          std::uint64_t seed);

/// One recorded op during a forward pass: its input and output tape nodes.
/// Entries alternate GP/FT per layer (APPNP: all FTs, then one GP); student
/// traces list the FC layers in the same positional order.
struct TraceEntry {
    bool is_ft = false;
    std::size_t layer = 0;
    NodeId in = -1;
    NodeId out = -1;
};

struct ForwardTrace {
    std::vector<TraceEntry> ops;
};

/// Per-pass switches. Dropout masks are pre-generated by the caller (one per
/// layer, matching that layer's input shape) so the tape stays replayable.
struct ForwardOptions {
    bool train = false;
    const std::vector<DenseMatrix>* dropout_masks = nullptr;
};

/// Runs the teacher on the tape, returns the logits node. Trace entries (if
/// requested) reference pre-dropout activations.
NodeId teacher_forward(Tape& tape, TeacherModel& t, const Graph& g, NodeId x,
                       const ForwardOptions& opts, ForwardTrace* trace);

enum class LayerRole { GpEmulating, FtInjected, FtRandom };

struct StudentLayer {
    Param w;
    Param b;
    Activation act = Activation::ReLU;
    LayerRole role = LayerRole::GpEmulating;
};

struct StudentMLP {
    TeacherKind teacher_kind = TeacherKind::GraphSAGE;
    std::vector<StudentLayer> layers;

    std::vector<Param*> params();
};

NodeId student_forward(Tape& tape, StudentMLP& s, NodeId x, const ForwardOptions& opts,
                       ForwardTrace* trace);

/// Builds the student by layer-wise teacher injection: each teacher layer
/// contributes a freshly initialized GPEmulating FC followed by an FC whose
/// weights and bias are verbatim copies of the teacher FT (gradient
/// multiplier eta). FTInjected activations mirror the teacher. For APPNP the
/// order is the injected linear stack followed by one GPEmulating layer.
StudentMLP inject_teacher(const TeacherModel& t, double eta, std::uint64_t seed,
                          Activation gp_activation = Activation::ReLU);

/// Same shapes and the same GPEmulating initialization stream, but FT slots
/// are randomly initialized with multiplier 1: the plain-MLP skeleton.
StudentMLP make_student_skeleton(const TeacherModel& t, std::uint64_t seed,
                                 Activation gp_activation = Activation::ReLU);

/// Dropout masks for a stack of `dims` layer inputs; entries are 0 or
/// 1/(1-p). Consumes the rng row-major, layer by layer.
std::vector<DenseMatrix> make_dropout_masks(const std::vector<std::size_t>& dims,
                                            std::size_t rows, double p, Rng& rng);

/// Plain accuracy with ties broken toward the lowest class index.
double accuracy_from_logits(const DenseMatrix& logits, const std::vector<int>& labels,
                            const std::vector<std::uint32_t>& nodes);

const char* to_string(TeacherKind k);
const char* to_string(Activation a);
const char* to_string(NormKind n);
const char* to_string(LayerRole r);
TeacherKind parse_teacher_kind(const std::string& s);
Activation parse_activation(const std::string& s);
NormKind parse_norm_kind(const std::string& s);
LayerRole parse_layer_role(const std::string& s);

}  // namespace tined
