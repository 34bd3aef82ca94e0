#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tined/graph.hpp"
#include "tined/linalg.hpp"

namespace tined {

/// A trainable tensor. Tape::backward writes `grad` (already scaled by
/// `multiplier`, the per-parameter gradient modifier); the optimizer then
/// reads value, grad and multiplier and updates value in place.
struct Param {
    std::string name;
    DenseMatrix value;
    DenseMatrix grad;
    double multiplier = 1.0;

    Param() = default;
    Param(std::string n, DenseMatrix v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows, value.cols) {}
};

using NodeId = std::int32_t;

/// Reverse-mode autodiff tape. Forward evaluation is eager: every builder
/// returns the id of a node whose value is already computed. backward()
/// walks the nodes strictly in reverse creation order, which together with
/// fixed accumulation orders inside each op makes gradients byte-stable
/// across identical runs.
///
/// Graphs and edge samples are held by pointer; the caller keeps them alive
/// for the tape's lifetime.
class Tape {
  public:
    /// Registers a parameter leaf. Repeated calls with the same Param return
    /// the same node, so shared weights accumulate gradients correctly.
    NodeId param(Param& p);
    NodeId constant(DenseMatrix v);

    NodeId linear(NodeId x, NodeId w, NodeId b);  // x·W + 1·b (b is 1×k)
    NodeId linear_nobias(NodeId x, NodeId w);
    NodeId relu(NodeId x);
    NodeId leaky_relu(NodeId x, double negative_slope);
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId row_softmax(NodeId x);
    NodeId log_row_softmax(NodeId x);

    NodeId sparse_propagate(NodeId x, const Graph& g, PropKind kind);
    /// Per-slot attention coefficients over N(v) ∪ {v}: raw score for slot
    /// (v, u) is leaky_relu([z_v ‖ z_u]ᵀ·att), normalized by a softmax over
    /// each v's slots. Returns a slots×1 column in self_loop_adjacency order.
    NodeId gat_attention(NodeId z, NodeId att, double negative_slope, const Graph& g);
    /// y_v = Σ_slots alpha_(v,u) · x_u with the same slot order.
    NodeId attention_apply(NodeId alpha, NodeId x, const Graph& g);

    /// Dirichlet energy of x (1×1). `sample` null means all edges with
    /// divisor n; otherwise the sampled edge list with divisor n_sub.
    NodeId dirichlet(NodeId x, const Graph& g, const EdgeSample* sample);

    NodeId dropout(NodeId x, const DenseMatrix& mask);  // mask includes 1/(1-p)
    NodeId layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);

    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId div(NodeId a, NodeId b);  // entries of b must stay >= 1e-12 in magnitude
    NodeId scale(NodeId x, double c);
    NodeId add_const(NodeId x, double c);
    NodeId max_const(NodeId x, double c);
    NodeId square(NodeId x);
    NodeId sqrt(NodeId x);
    NodeId log(NodeId x);

    /// Cross-entropy tail: −(1/|rows|)·Σ_{v∈rows} log_probs[v, labels[v]].
    NodeId neg_mean_pick(NodeId log_probs, const std::vector<int>& labels,
                         const std::vector<std::uint32_t>& rows);
    /// KL(target ‖ student) averaged over rows; target rows must be valid
    /// probability vectors (sum 1 within 1e-6, entries non-negative).
    NodeId masked_kl(NodeId log_probs, DenseMatrix target_probs,
                     const std::vector<std::uint32_t>& rows);

    const DenseMatrix& value(NodeId id) const;
    double scalar_value(NodeId id) const;  // value of a 1×1 node
    std::size_t size() const { return nodes_.size(); }

    /// Reverse pass from a 1×1 loss node. Writes Param::grad for every
    /// parameter registered on this tape (zero if unreachable from the loss);
    /// the multiplier is applied once, at the parameter leaf.
    void backward(NodeId loss);

  private:
    enum class Op {
        kParam, kConstant, kLinear, kLinearNoBias, kRelu, kLeakyRelu, kConcatCols,
        kRowSoftmax, kLogRowSoftmax, kSparsePropagate, kGatAttention, kAttentionApply,
        kDirichlet, kDropout, kLayerNorm, kBatchNorm, kAdd, kSub, kMul, kDiv, kScale,
        kAddConst, kMaxConst, kSquare, kSqrt, kLog, kNegMeanPick, kMaskedKl,
    };

    struct Node {
        Op op;
        std::array<NodeId, 3> in{-1, -1, -1};
        DenseMatrix value;
        double c = 0.0;  // slope / constant / eps
        Param* owner = nullptr;
        const Graph* graph = nullptr;
        PropKind prop = PropKind::MeanNeighbors;
        bool has_sample = false;
        EdgeSample sample;
        DenseMatrix aux;    // dropout mask, KL targets, norm statistics
        std::vector<int> labels;
        std::vector<std::uint32_t> rows;
        std::size_t split_col = 0;
    };

    NodeId push(Node&& node);
    const Node& node(NodeId id) const;
    void check_same_shape(NodeId a, NodeId b, const char* what) const;

    std::vector<Node> nodes_;
    std::unordered_map<Param*, NodeId> param_nodes_;
};

/// Adam with coupled weight decay: the effective gradient is
/// grad + weight_decay·multiplier·value, so a zero multiplier freezes the
/// parameter entirely.
struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamState {
    std::vector<DenseMatrix> m;
    std::vector<DenseMatrix> v;
    std::size_t t = 0;
};

/// One optimizer step over a fixed parameter list. State slots align with
/// list positions; the list must stay stable across steps.
void adam_step(const std::vector<Param*>& params, AdamState& state, const AdamConfig& cfg);

}  // namespace tined
