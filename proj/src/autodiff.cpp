#include "tined/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tined/errors.hpp"

namespace tined {

namespace {

void add_into(DenseMatrix& dst, const DenseMatrix& src) {
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace

NodeId Tape::push(Node&& node) {
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw ShapeError("tape: invalid node id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

const DenseMatrix& Tape::value(NodeId id) const { return node(id).value; }

double Tape::scalar_value(NodeId id) const {
    const DenseMatrix& v = value(id);
    if (v.rows != 1 || v.cols != 1)
        throw ShapeError("tape: node " + std::to_string(id) + " is not scalar (" + v.shape_str() +
                         ")");
    return v.data[0];
}

void Tape::check_same_shape(NodeId a, NodeId b, const char* what) const {
    const DenseMatrix& va = value(a);
    const DenseMatrix& vb = value(b);
    if (!va.same_shape(vb))
        throw ShapeError(std::string(what) + ": shapes " + va.shape_str() + " and " +
                         vb.shape_str() + " differ");
}

NodeId Tape::param(Param& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    Node n;
    n.op = Op::kParam;
    n.value = p.value;
    n.owner = &p;
    const NodeId id = push(std::move(n));
    param_nodes_.emplace(&p, id);
    return id;
}

NodeId Tape::constant(DenseMatrix v) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(v);
    return push(std::move(n));
}

NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
    const DenseMatrix& vx = value(x);
    const DenseMatrix& vw = value(w);
    const DenseMatrix& vb = value(b);
    if (vx.cols != vw.rows)
        throw ShapeError("linear: input " + vx.shape_str() + " does not match weight " +
                         vw.shape_str());
    if (vb.rows != 1 || vb.cols != vw.cols)
        throw ShapeError("linear: bias " + vb.shape_str() + " does not match weight " +
                         vw.shape_str());
    Node n;
    n.op = Op::kLinear;
    n.in = {x, w, b};
    n.value = matmul(vx, vw);
    for (std::size_t i = 0; i < n.value.rows; ++i) {
        double* row = n.value.row(i);
        for (std::size_t j = 0; j < n.value.cols; ++j) row[j] += vb.data[j];
    }
    return push(std::move(n));
}

NodeId Tape::linear_nobias(NodeId x, NodeId w) {
    const DenseMatrix& vx = value(x);
    const DenseMatrix& vw = value(w);
    if (vx.cols != vw.rows)
        throw ShapeError("linear: input " + vx.shape_str() + " does not match weight " +
                         vw.shape_str());
    Node n;
    n.op = Op::kLinearNoBias;
    n.in = {x, w, -1};
    n.value = matmul(vx, vw);
    return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
    Node n;
    n.op = Op::kRelu;
    n.in = {x, -1, -1};
    n.value = value(x);
    for (double& e : n.value.data)
        if (e < 0.0) e = 0.0;
    return push(std::move(n));
}

NodeId Tape::leaky_relu(NodeId x, double negative_slope) {
    Node n;
    n.op = Op::kLeakyRelu;
    n.in = {x, -1, -1};
    n.c = negative_slope;
    n.value = value(x);
    for (double& e : n.value.data)
        if (e < 0.0) e *= negative_slope;
    return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
    const DenseMatrix& va = value(a);
    const DenseMatrix& vb = value(b);
    if (va.rows != vb.rows)
        throw ShapeError("concat: row counts differ (" + va.shape_str() + " vs " + vb.shape_str() +
                         ")");
    Node n;
    n.op = Op::kConcatCols;
    n.in = {a, b, -1};
    n.split_col = va.cols;
    n.value = DenseMatrix(va.rows, va.cols + vb.cols);
    for (std::size_t i = 0; i < va.rows; ++i) {
        double* out = n.value.row(i);
        const double* ra = va.row(i);
        const double* rb = vb.row(i);
        for (std::size_t j = 0; j < va.cols; ++j) out[j] = ra[j];
        for (std::size_t j = 0; j < vb.cols; ++j) out[va.cols + j] = rb[j];
    }
    return push(std::move(n));
}

NodeId Tape::row_softmax(NodeId x) {
    const DenseMatrix& vx = value(x);
    Node n;
    n.op = Op::kRowSoftmax;
    n.in = {x, -1, -1};
    n.value = DenseMatrix(vx.rows, vx.cols);
    for (std::size_t i = 0; i < vx.rows; ++i) {
        const double* in = vx.row(i);
        double* out = n.value.row(i);
        double mx = in[0];
        for (std::size_t j = 1; j < vx.cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < vx.cols; ++j) {
            out[j] = std::exp(in[j] - mx);
            sum += out[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < vx.cols; ++j) out[j] *= inv;
    }
    return push(std::move(n));
}

NodeId Tape::log_row_softmax(NodeId x) {
    const DenseMatrix& vx = value(x);
    Node n;
    n.op = Op::kLogRowSoftmax;
    n.in = {x, -1, -1};
    n.value = DenseMatrix(vx.rows, vx.cols);
    for (std::size_t i = 0; i < vx.rows; ++i) {
        const double* in = vx.row(i);
        double* out = n.value.row(i);
        double mx = in[0];
        for (std::size_t j = 1; j < vx.cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < vx.cols; ++j) sum += std::exp(in[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < vx.cols; ++j) out[j] = in[j] - lse;
    }
    return push(std::move(n));
}

NodeId Tape::sparse_propagate(NodeId x, const Graph& g, PropKind kind) {
    Node n;
    n.op = Op::kSparsePropagate;
    n.in = {x, -1, -1};
    n.graph = &g;
    n.prop = kind;
    n.value = prop_apply(g, kind, value(x));
    return push(std::move(n));
}

NodeId Tape::gat_attention(NodeId z, NodeId att, double negative_slope, const Graph& g) {
    const DenseMatrix& vz = value(z);
    const DenseMatrix& va = value(att);
    if (vz.rows != g.n)
        throw ShapeError("attention: matrix has " + std::to_string(vz.rows) +
                         " rows but graph has " + std::to_string(g.n) + " nodes");
    if (va.cols != 1 || va.rows != 2 * vz.cols)
        throw ShapeError("attention: weight vector " + va.shape_str() + " does not match 2*" +
                         std::to_string(vz.cols) + "×1");
    const std::size_t d = vz.cols;
    std::vector<double> s_self(g.n, 0.0), s_neigh(g.n, 0.0);
    for (std::size_t v = 0; v < g.n; ++v) {
        const double* row = vz.row(v);
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            a += row[k] * va.data[k];
            b += row[k] * va.data[d + k];
        }
        s_self[v] = a;
        s_neigh[v] = b;
    }
    const SelfLoopAdj adj = self_loop_adjacency(g);
    Node n;
    n.op = Op::kGatAttention;
    n.in = {z, att, -1};
    n.c = negative_slope;
    n.graph = &g;
    n.value = DenseMatrix(adj.slots(), 1);
    for (std::size_t v = 0; v < g.n; ++v) {
        const std::size_t lo = adj.offsets[v], hi = adj.offsets[v + 1];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t s = lo; s < hi; ++s) {
            const double raw = s_self[v] + s_neigh[adj.targets[s]];
            const double act = raw > 0.0 ? raw : negative_slope * raw;
            n.value.data[s] = act;
            mx = std::max(mx, act);
        }
        double sum = 0.0;
        for (std::size_t s = lo; s < hi; ++s) {
            n.value.data[s] = std::exp(n.value.data[s] - mx);
            sum += n.value.data[s];
        }
        const double inv = 1.0 / sum;
        for (std::size_t s = lo; s < hi; ++s) n.value.data[s] *= inv;
    }
    return push(std::move(n));
}

NodeId Tape::attention_apply(NodeId alpha, NodeId x, const Graph& g) {
    const DenseMatrix& va = value(alpha);
    const DenseMatrix& vx = value(x);
    const SelfLoopAdj adj = self_loop_adjacency(g);
    if (va.cols != 1 || va.rows != adj.slots())
        throw ShapeError("attention apply: coefficient column " + va.shape_str() +
                         " does not match " + std::to_string(adj.slots()) + " slots");
    if (vx.rows != g.n)
        throw ShapeError("attention apply: matrix has " + std::to_string(vx.rows) +
                         " rows but graph has " + std::to_string(g.n) + " nodes");
    Node n;
    n.op = Op::kAttentionApply;
    n.in = {alpha, x, -1};
    n.graph = &g;
    n.value = DenseMatrix(g.n, vx.cols);
    for (std::size_t v = 0; v < g.n; ++v) {
        double* out = n.value.row(v);
        for (std::size_t s = adj.offsets[v]; s < adj.offsets[v + 1]; ++s) {
            const double a = va.data[s];
            const double* in = vx.row(adj.targets[s]);
            for (std::size_t j = 0; j < vx.cols; ++j) out[j] += a * in[j];
        }
    }
    return push(std::move(n));
}

NodeId Tape::dirichlet(NodeId x, const Graph& g, const EdgeSample* sample) {
    Node n;
    n.op = Op::kDirichlet;
    n.in = {x, -1, -1};
    n.graph = &g;
    if (sample) {
        n.has_sample = true;
        n.sample = *sample;
    }
    n.value = DenseMatrix(1, 1);
    n.value.data[0] = dirichlet_energy_over(value(x), g, sample);
    return push(std::move(n));
}

NodeId Tape::dropout(NodeId x, const DenseMatrix& mask) {
    const DenseMatrix& vx = value(x);
    if (!vx.same_shape(mask))
        throw ShapeError("dropout: mask " + mask.shape_str() + " does not match input " +
                         vx.shape_str());
    Node n;
    n.op = Op::kDropout;
    n.in = {x, -1, -1};
    n.aux = mask;
    n.value = value(x);
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= mask.data[i];
    return push(std::move(n));
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const DenseMatrix& vx = value(x);
    const DenseMatrix& vg = value(gamma);
    const DenseMatrix& vb = value(beta);
    if (vg.rows != 1 || vg.cols != vx.cols || !vg.same_shape(vb))
        throw ShapeError("layer norm: scale/shift must be 1×" + std::to_string(vx.cols));
    Node n;
    n.op = Op::kLayerNorm;
    n.in = {x, gamma, beta};
    n.c = eps;
    n.aux = DenseMatrix(vx.rows, 2);  // per-row mean, inverse std
    n.value = DenseMatrix(vx.rows, vx.cols);
    for (std::size_t i = 0; i < vx.rows; ++i) {
        const double* in = vx.row(i);
        double mean = 0.0;
        for (std::size_t j = 0; j < vx.cols; ++j) mean += in[j];
        mean /= static_cast<double>(vx.cols);
        double var = 0.0;
        for (std::size_t j = 0; j < vx.cols; ++j) {
            const double d = in[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(vx.cols);
        const double istd = 1.0 / std::sqrt(var + eps);
        n.aux.at(i, 0) = mean;
        n.aux.at(i, 1) = istd;
        double* out = n.value.row(i);
        for (std::size_t j = 0; j < vx.cols; ++j)
            out[j] = (in[j] - mean) * istd * vg.data[j] + vb.data[j];
    }
    return push(std::move(n));
}

NodeId Tape::batch_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const DenseMatrix& vx = value(x);
    const DenseMatrix& vg = value(gamma);
    const DenseMatrix& vb = value(beta);
    if (vg.rows != 1 || vg.cols != vx.cols || !vg.same_shape(vb))
        throw ShapeError("batch norm: scale/shift must be 1×" + std::to_string(vx.cols));
    if (vx.rows == 0) throw ShapeError("batch norm: empty batch");
    Node n;
    n.op = Op::kBatchNorm;
    n.in = {x, gamma, beta};
    n.c = eps;
    n.aux = DenseMatrix(2, vx.cols);  // per-column mean, inverse std
    n.value = DenseMatrix(vx.rows, vx.cols);
    const double inv_n = 1.0 / static_cast<double>(vx.rows);
    for (std::size_t j = 0; j < vx.cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < vx.rows; ++i) mean += vx.at(i, j);
        mean *= inv_n;
        double var = 0.0;
        for (std::size_t i = 0; i < vx.rows; ++i) {
            const double d = vx.at(i, j) - mean;
            var += d * d;
        }
        var *= inv_n;
        const double istd = 1.0 / std::sqrt(var + eps);
        n.aux.at(0, j) = mean;
        n.aux.at(1, j) = istd;
        for (std::size_t i = 0; i < vx.rows; ++i)
            n.value.at(i, j) = (vx.at(i, j) - mean) * istd * vg.data[j] + vb.data[j];
    }
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_same_shape(a, b, "add");
    Node n;
    n.op = Op::kAdd;
    n.in = {a, b, -1};
    n.value = value(a);
    add_into(n.value, value(b));
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_same_shape(a, b, "sub");
    Node n;
    n.op = Op::kSub;
    n.in = {a, b, -1};
    n.value = value(a);
    const DenseMatrix& vb = value(b);
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= vb.data[i];
    return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
    check_same_shape(a, b, "mul");
    Node n;
    n.op = Op::kMul;
    n.in = {a, b, -1};
    n.value = value(a);
    const DenseMatrix& vb = value(b);
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] *= vb.data[i];
    return push(std::move(n));
}

NodeId Tape::div(NodeId a, NodeId b) {
    check_same_shape(a, b, "div");
    const DenseMatrix& vb = value(b);
    for (std::size_t i = 0; i < vb.data.size(); ++i) {
        if (std::abs(vb.data[i]) < 1e-12)
            throw DomainError("div: denominator entry " + std::to_string(i) + " of node " +
                              std::to_string(b) + " is below 1e-12 in magnitude");
    }
    Node n;
    n.op = Op::kDiv;
    n.in = {a, b, -1};
    n.value = value(a);
    for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] /= vb.data[i];
    return push(std::move(n));
}

NodeId Tape::scale(NodeId x, double c) {
    Node n;
    n.op = Op::kScale;
    n.in = {x, -1, -1};
    n.c = c;
    n.value = value(x);
    for (double& e : n.value.data) e *= c;
    return push(std::move(n));
}

NodeId Tape::add_const(NodeId x, double c) {
    Node n;
    n.op = Op::kAddConst;
    n.in = {x, -1, -1};
    n.c = c;
    n.value = value(x);
    for (double& e : n.value.data) e += c;
    return push(std::move(n));
}

NodeId Tape::max_const(NodeId x, double c) {
    Node n;
    n.op = Op::kMaxConst;
    n.in = {x, -1, -1};
    n.c = c;
    n.value = value(x);
    for (double& e : n.value.data) e = std::max(e, c);
    return push(std::move(n));
}

NodeId Tape::square(NodeId x) {
    Node n;
    n.op = Op::kSquare;
    n.in = {x, -1, -1};
    n.value = value(x);
    for (double& e : n.value.data) e *= e;
    return push(std::move(n));
}

NodeId Tape::sqrt(NodeId x) {
    const DenseMatrix& vx = value(x);
    for (std::size_t i = 0; i < vx.data.size(); ++i) {
        if (vx.data[i] < 0.0)
            throw DomainError("sqrt: negative input at node " + std::to_string(x) + " entry " +
                              std::to_string(i));
    }
    Node n;
    n.op = Op::kSqrt;
    n.in = {x, -1, -1};
    n.value = vx;
    for (double& e : n.value.data) e = std::sqrt(e);
    return push(std::move(n));
}

NodeId Tape::log(NodeId x) {
    const DenseMatrix& vx = value(x);
    for (std::size_t i = 0; i < vx.data.size(); ++i) {
        if (vx.data[i] <= 0.0)
            throw DomainError("log: non-positive input at node " + std::to_string(x) + " entry " +
                              std::to_string(i));
    }
    Node n;
    n.op = Op::kLog;
    n.in = {x, -1, -1};
    n.value = vx;
    for (double& e : n.value.data) e = std::log(e);
    return push(std::move(n));
}

NodeId Tape::neg_mean_pick(NodeId log_probs, const std::vector<int>& labels,
                           const std::vector<std::uint32_t>& rows) {
    const DenseMatrix& lp = value(log_probs);
    if (rows.empty()) throw DataError("cross-entropy: empty node set");
    Node n;
    n.op = Op::kNegMeanPick;
    n.in = {log_probs, -1, -1};
    n.rows = rows;
    n.labels.resize(rows.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::uint32_t r = rows[i];
        if (r >= lp.rows)
            throw ShapeError("cross-entropy: row " + std::to_string(r) + " out of range");
        if (static_cast<std::size_t>(r) >= labels.size() || labels[r] < 0 ||
            static_cast<std::size_t>(labels[r]) >= lp.cols)
            throw DataError("cross-entropy: node " + std::to_string(r) + " has no valid label");
        n.labels[i] = labels[r];
        sum += lp.at(r, static_cast<std::size_t>(labels[r]));
    }
    n.value = DenseMatrix(1, 1);
    n.value.data[0] = -sum / static_cast<double>(rows.size());
    return push(std::move(n));
}

NodeId Tape::masked_kl(NodeId log_probs, DenseMatrix target_probs,
                       const std::vector<std::uint32_t>& rows) {
    const DenseMatrix& lp = value(log_probs);
    if (rows.empty()) throw DataError("kl: empty node set");
    if (!lp.same_shape(target_probs))
        throw ShapeError("kl: target " + target_probs.shape_str() + " does not match log-probs " +
                         lp.shape_str());
    double sum = 0.0;
    for (std::uint32_t r : rows) {
        if (r >= lp.rows) throw ShapeError("kl: row " + std::to_string(r) + " out of range");
        const double* z = target_probs.row(r);
        double rowsum = 0.0;
        for (std::size_t j = 0; j < lp.cols; ++j) {
            if (z[j] < 0.0)
                throw DomainError("kl: target row " + std::to_string(r) +
                                  " has a negative entry");
            rowsum += z[j];
        }
        if (std::abs(rowsum - 1.0) > 1e-6)
            throw DomainError("kl: target row " + std::to_string(r) + " sums to " +
                              std::to_string(rowsum) + ", not 1");
        const double* l = lp.row(r);
        for (std::size_t j = 0; j < lp.cols; ++j) {
            if (z[j] > 0.0) sum += z[j] * (std::log(z[j]) - l[j]);
        }
    }
    Node n;
    n.op = Op::kMaskedKl;
    n.in = {log_probs, -1, -1};
    n.rows = rows;
    n.aux = std::move(target_probs);
    n.value = DenseMatrix(1, 1);
    n.value.data[0] = sum / static_cast<double>(rows.size());
    return push(std::move(n));
}

void Tape::backward(NodeId loss) {
    const DenseMatrix& lv = value(loss);
    if (lv.rows != 1 || lv.cols != 1)
        throw ShapeError("backward: loss node has shape " + lv.shape_str() + ", expected 1×1");

    std::vector<DenseMatrix> grads;
    grads.reserve(nodes_.size());
    for (const Node& n : nodes_) grads.emplace_back(n.value.rows, n.value.cols);
    grads[static_cast<std::size_t>(loss)].data[0] = 1.0;

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
        const Node& n = nodes_[idx];
        const DenseMatrix& g = grads[idx];
        switch (n.op) {
            case Op::kParam: {
                n.owner->grad = g;
                if (n.owner->multiplier != 1.0) {
                    for (double& e : n.owner->grad.data) e *= n.owner->multiplier;
                }
                break;
            }
            case Op::kConstant:
                break;
            case Op::kLinear:
            case Op::kLinearNoBias: {
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const DenseMatrix& vw = nodes_[static_cast<std::size_t>(n.in[1])].value;
                add_into(grads[static_cast<std::size_t>(n.in[0])], matmul(g, transpose(vw)));
                add_into(grads[static_cast<std::size_t>(n.in[1])], matmul(transpose(vx), g));
                if (n.op == Op::kLinear) {
                    DenseMatrix& gb = grads[static_cast<std::size_t>(n.in[2])];
                    for (std::size_t i = 0; i < g.rows; ++i) {
                        const double* row = g.row(i);
                        for (std::size_t j = 0; j < g.cols; ++j) gb.data[j] += row[j];
                    }
                }
                break;
            }
            case Op::kRelu: {
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (n.value.data[i] > 0.0) gx.data[i] += g.data[i];
                break;
            }
            case Op::kLeakyRelu: {
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[0])].value;
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    gx.data[i] += g.data[i] * (vx.data[i] > 0.0 ? 1.0 : n.c);
                break;
            }
            case Op::kConcatCols: {
                DenseMatrix& ga = grads[static_cast<std::size_t>(n.in[0])];
                DenseMatrix& gb = grads[static_cast<std::size_t>(n.in[1])];
                for (std::size_t i = 0; i < g.rows; ++i) {
                    const double* row = g.row(i);
                    double* ra = ga.row(i);
                    double* rb = gb.row(i);
                    for (std::size_t j = 0; j < n.split_col; ++j) ra[j] += row[j];
                    for (std::size_t j = n.split_col; j < g.cols; ++j)
                        rb[j - n.split_col] += row[j];
                }
                break;
            }
            case Op::kRowSoftmax: {
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.rows; ++i) {
                    const double* s = n.value.row(i);
                    const double* gr = g.row(i);
                    double dot = 0.0;
                    for (std::size_t j = 0; j < g.cols; ++j) dot += gr[j] * s[j];
                    double* out = gx.row(i);
                    for (std::size_t j = 0; j < g.cols; ++j) out[j] += s[j] * (gr[j] - dot);
                }
                break;
            }
            case Op::kLogRowSoftmax: {
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.rows; ++i) {
                    const double* ls = n.value.row(i);
                    const double* gr = g.row(i);
                    double rowsum = 0.0;
                    for (std::size_t j = 0; j < g.cols; ++j) rowsum += gr[j];
                    double* out = gx.row(i);
                    for (std::size_t j = 0; j < g.cols; ++j)
                        out[j] += gr[j] - std::exp(ls[j]) * rowsum;
                }
                break;
            }
            case Op::kSparsePropagate: {
                add_into(grads[static_cast<std::size_t>(n.in[0])],
                         prop_apply_transpose(*n.graph, n.prop, g));
                break;
            }
            case Op::kGatAttention: {
                const DenseMatrix& vz = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const DenseMatrix& va = nodes_[static_cast<std::size_t>(n.in[1])].value;
                const std::size_t d = vz.cols;
                const Graph& gr = *n.graph;
                std::vector<double> s_self(gr.n, 0.0), s_neigh(gr.n, 0.0);
                for (std::size_t v = 0; v < gr.n; ++v) {
                    const double* row = vz.row(v);
                    double a = 0.0, b = 0.0;
                    for (std::size_t k = 0; k < d; ++k) {
                        a += row[k] * va.data[k];
                        b += row[k] * va.data[d + k];
                    }
                    s_self[v] = a;
                    s_neigh[v] = b;
                }
                const SelfLoopAdj adj = self_loop_adjacency(gr);
                std::vector<double> g_self(gr.n, 0.0), g_neigh(gr.n, 0.0);
                for (std::size_t v = 0; v < gr.n; ++v) {
                    const std::size_t lo = adj.offsets[v], hi = adj.offsets[v + 1];
                    double dot = 0.0;
                    for (std::size_t s = lo; s < hi; ++s) dot += g.data[s] * n.value.data[s];
                    for (std::size_t s = lo; s < hi; ++s) {
                        const double gl = n.value.data[s] * (g.data[s] - dot);
                        const double raw = s_self[v] + s_neigh[adj.targets[s]];
                        const double graw = gl * (raw > 0.0 ? 1.0 : n.c);
                        g_self[v] += graw;
                        g_neigh[adj.targets[s]] += graw;
                    }
                }
                DenseMatrix& gz = grads[static_cast<std::size_t>(n.in[0])];
                DenseMatrix& ga = grads[static_cast<std::size_t>(n.in[1])];
                for (std::size_t v = 0; v < gr.n; ++v) {
                    const double* zr = vz.row(v);
                    double* gzr = gz.row(v);
                    for (std::size_t k = 0; k < d; ++k) {
                        gzr[k] += g_self[v] * va.data[k] + g_neigh[v] * va.data[d + k];
                        ga.data[k] += zr[k] * g_self[v];
                        ga.data[d + k] += zr[k] * g_neigh[v];
                    }
                }
                break;
            }
            case Op::kAttentionApply: {
                const DenseMatrix& va = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[1])].value;
                DenseMatrix& galpha = grads[static_cast<std::size_t>(n.in[0])];
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[1])];
                const SelfLoopAdj adj = self_loop_adjacency(*n.graph);
                for (std::size_t v = 0; v < n.graph->n; ++v) {
                    const double* gout = g.row(v);
                    for (std::size_t s = adj.offsets[v]; s < adj.offsets[v + 1]; ++s) {
                        const std::uint32_t u = adj.targets[s];
                        const double* xin = vx.row(u);
                        double* gxr = gx.row(u);
                        double dot = 0.0;
                        for (std::size_t j = 0; j < vx.cols; ++j) {
                            dot += gout[j] * xin[j];
                            gxr[j] += va.data[s] * gout[j];
                        }
                        galpha.data[s] += dot;
                    }
                }
                break;
            }
            case Op::kDirichlet: {
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[0])].value;
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                const Graph& gr = *n.graph;
                const std::size_t m =
                    n.has_sample ? n.sample.edge_indices.size() : gr.edge_count();
                const std::size_t divisor = n.has_sample ? n.sample.n_sub : gr.n;
                if (divisor == 0) break;
                const double coeff = 2.0 * g.data[0] / static_cast<double>(divisor);
                for (std::size_t i = 0; i < m; ++i) {
                    const std::size_t e = n.has_sample ? n.sample.edge_indices[i] : i;
                    const auto& [u, v] = gr.edges[e];
                    const double* hu = vx.row(u);
                    const double* hv = vx.row(v);
                    double* gu = gx.row(u);
                    double* gv = gx.row(v);
                    for (std::size_t j = 0; j < vx.cols; ++j) {
                        const double d = coeff * (hu[j] - hv[j]);
                        gu[j] += d;
                        gv[j] -= d;
                    }
                }
                break;
            }
            case Op::kDropout: {
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    gx.data[i] += g.data[i] * n.aux.data[i];
                break;
            }
            case Op::kLayerNorm: {
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const DenseMatrix& vg = nodes_[static_cast<std::size_t>(n.in[1])].value;
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                DenseMatrix& ggamma = grads[static_cast<std::size_t>(n.in[1])];
                DenseMatrix& gbeta = grads[static_cast<std::size_t>(n.in[2])];
                const double inv_d = 1.0 / static_cast<double>(vx.cols);
                for (std::size_t i = 0; i < vx.rows; ++i) {
                    const double mean = n.aux.at(i, 0);
                    const double istd = n.aux.at(i, 1);
                    const double* in = vx.row(i);
                    const double* gr = g.row(i);
                    double sum_gh = 0.0, sum_ghx = 0.0;
                    for (std::size_t j = 0; j < vx.cols; ++j) {
                        const double xhat = (in[j] - mean) * istd;
                        const double gh = gr[j] * vg.data[j];
                        ggamma.data[j] += gr[j] * xhat;
                        gbeta.data[j] += gr[j];
                        sum_gh += gh;
                        sum_ghx += gh * xhat;
                    }
                    double* out = gx.row(i);
                    for (std::size_t j = 0; j < vx.cols; ++j) {
                        const double xhat = (in[j] - mean) * istd;
                        const double gh = gr[j] * vg.data[j];
                        out[j] += istd * (gh - inv_d * sum_gh - xhat * inv_d * sum_ghx);
                    }
                }
                break;
            }
            case Op::kBatchNorm: {
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const DenseMatrix& vg = nodes_[static_cast<std::size_t>(n.in[1])].value;
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                DenseMatrix& ggamma = grads[static_cast<std::size_t>(n.in[1])];
                DenseMatrix& gbeta = grads[static_cast<std::size_t>(n.in[2])];
                const double inv_n = 1.0 / static_cast<double>(vx.rows);
                for (std::size_t j = 0; j < vx.cols; ++j) {
                    const double mean = n.aux.at(0, j);
                    const double istd = n.aux.at(1, j);
                    double sum_gh = 0.0, sum_ghx = 0.0;
                    for (std::size_t i = 0; i < vx.rows; ++i) {
                        const double xhat = (vx.at(i, j) - mean) * istd;
                        const double gh = g.at(i, j) * vg.data[j];
                        ggamma.data[j] += g.at(i, j) * xhat;
                        gbeta.data[j] += g.at(i, j);
                        sum_gh += gh;
                        sum_ghx += gh * xhat;
                    }
                    for (std::size_t i = 0; i < vx.rows; ++i) {
                        const double xhat = (vx.at(i, j) - mean) * istd;
                        const double gh = g.at(i, j) * vg.data[j];
                        gx.at(i, j) += istd * (gh - inv_n * sum_gh - xhat * inv_n * sum_ghx);
                    }
                }
                break;
            }
            case Op::kAdd: {
                add_into(grads[static_cast<std::size_t>(n.in[0])], g);
                add_into(grads[static_cast<std::size_t>(n.in[1])], g);
                break;
            }
            case Op::kSub: {
                add_into(grads[static_cast<std::size_t>(n.in[0])], g);
                DenseMatrix& gb = grads[static_cast<std::size_t>(n.in[1])];
                for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
                break;
            }
            case Op::kMul: {
                const DenseMatrix& va = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const DenseMatrix& vb = nodes_[static_cast<std::size_t>(n.in[1])].value;
                DenseMatrix& ga = grads[static_cast<std::size_t>(n.in[0])];
                DenseMatrix& gb = grads[static_cast<std::size_t>(n.in[1])];
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i] * vb.data[i];
                    gb.data[i] += g.data[i] * va.data[i];
                }
                break;
            }
            case Op::kDiv: {
                const DenseMatrix& va = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const DenseMatrix& vb = nodes_[static_cast<std::size_t>(n.in[1])].value;
                DenseMatrix& ga = grads[static_cast<std::size_t>(n.in[0])];
                DenseMatrix& gb = grads[static_cast<std::size_t>(n.in[1])];
                for (std::size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] += g.data[i] / vb.data[i];
                    gb.data[i] -= g.data[i] * va.data[i] / (vb.data[i] * vb.data[i]);
                }
                break;
            }
            case Op::kScale: {
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[i] += g.data[i] * n.c;
                break;
            }
            case Op::kAddConst: {
                add_into(grads[static_cast<std::size_t>(n.in[0])], g);
                break;
            }
            case Op::kMaxConst: {
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[0])].value;
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    if (vx.data[i] > n.c) gx.data[i] += g.data[i];
                break;
            }
            case Op::kSquare: {
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[0])].value;
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    gx.data[i] += 2.0 * vx.data[i] * g.data[i];
                break;
            }
            case Op::kSqrt: {
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    gx.data[i] += 0.5 * g.data[i] / n.value.data[i];
                break;
            }
            case Op::kLog: {
                const DenseMatrix& vx = nodes_[static_cast<std::size_t>(n.in[0])].value;
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                for (std::size_t i = 0; i < g.data.size(); ++i)
                    gx.data[i] += g.data[i] / vx.data[i];
                break;
            }
            case Op::kNegMeanPick: {
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                const double coeff = -g.data[0] / static_cast<double>(n.rows.size());
                for (std::size_t i = 0; i < n.rows.size(); ++i)
                    gx.at(n.rows[i], static_cast<std::size_t>(n.labels[i])) += coeff;
                break;
            }
            case Op::kMaskedKl: {
                DenseMatrix& gx = grads[static_cast<std::size_t>(n.in[0])];
                const double coeff = -g.data[0] / static_cast<double>(n.rows.size());
                for (std::uint32_t r : n.rows) {
                    const double* z = n.aux.row(r);
                    double* out = gx.row(r);
                    for (std::size_t j = 0; j < gx.cols; ++j) out[j] += coeff * z[j];
                }
                break;
            }
        }
    }
}

void adam_step(const std::vector<Param*>& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        for (const Param* p : params) {
            state.m.emplace_back(p->value.rows, p->value.cols);
            state.v.emplace_back(p->value.rows, p->value.cols);
        }
    }
    if (state.m.size() != params.size())
        throw ShapeError("adam: state holds " + std::to_string(state.m.size()) +
                         " slots for " + std::to_string(params.size()) + " parameters");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = *params[i];
        DenseMatrix& m = state.m[i];
        DenseMatrix& v = state.v[i];
        for (std::size_t e = 0; e < p.value.data.size(); ++e) {
            const double grad =
                p.grad.data[e] + cfg.weight_decay * p.multiplier * p.value.data[e];
            m.data[e] = cfg.beta1 * m.data[e] + (1.0 - cfg.beta1) * grad;
            v.data[e] = cfg.beta2 * v.data[e] + (1.0 - cfg.beta2) * grad * grad;
            const double mhat = m.data[e] / bc1;
            const double vhat = v.data[e] / bc2;
            p.value.data[e] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace tined
