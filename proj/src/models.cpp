#include "tined/models.hpp"

#include <cmath>
#include <string>

#include "tined/errors.hpp"

namespace tined {

namespace {

DenseMatrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
    DenseMatrix m(rows, cols);
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& e : m.data) e = rng.uniform(-bound, bound);
    return m;
}

}  // namespace

const char* to_string(TeacherKind k) {
    switch (k) {
        case TeacherKind::GraphSAGE: return "graphsage";
        case TeacherKind::GCN: return "gcn";
        case TeacherKind::GAT: return "gat";
        case TeacherKind::APPNP: return "appnp";
    }
    return "?";
}

const char* to_string(Activation a) {
    return a == Activation::ReLU ? "relu" : "identity";
}

const char* to_string(NormKind n) {
    switch (n) {
        case NormKind::None: return "none";
        case NormKind::Layer: return "layer";
        case NormKind::Batch: return "batch";
    }
    return "?";
}

const char* to_string(LayerRole r) {
    switch (r) {
        case LayerRole::GpEmulating: return "gp";
        case LayerRole::FtInjected: return "ft-injected";
        case LayerRole::FtRandom: return "ft-random";
    }
    return "?";
}

TeacherKind parse_teacher_kind(const std::string& s) {
    if (s == "graphsage" || s == "sage") return TeacherKind::GraphSAGE;
    if (s == "gcn") return TeacherKind::GCN;
    if (s == "gat") return TeacherKind::GAT;
    if (s == "appnp") return TeacherKind::APPNP;
    throw ConfigError("unknown teacher kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "'");
}

NormKind parse_norm_kind(const std::string& s) {
    if (s == "none") return NormKind::None;
    if (s == "layer") return NormKind::Layer;
    if (s == "batch") return NormKind::Batch;
    throw ConfigError("unknown norm kind '" + s + "'");
}

LayerRole parse_layer_role(const std::string& s) {
    if (s == "gp") return LayerRole::GpEmulating;
    if (s == "ft-injected") return LayerRole::FtInjected;
    if (s == "ft-random") return LayerRole::FtRandom;
    throw ConfigError("unknown layer role '" + s + "'");
}

std::vector<Param*> TeacherModel::params() {
    std::vector<Param*> out;
    for (TeacherLayer& l : layers) {
        out.push_back(&l.w);
        if (l.has_bias) out.push_back(&l.b);
        if (l.has_att) out.push_back(&l.att);
        if (l.has_norm) {
            out.push_back(&l.gamma);
            out.push_back(&l.beta);
        }
    }
    return out;
}

TeacherModel make_teacher(const TeacherConfig& cfg, std::size_t in_dim, std::size_t num_classes,
                          std::uint64_t seed) {
    if (cfg.layers == 0) throw ConfigError("teacher needs at least one layer");
    if (in_dim == 0 || num_classes == 0)
        throw ConfigError("teacher dimensions must be positive");
    if (cfg.kind == TeacherKind::APPNP && cfg.norm != NormKind::None)
        throw ConfigError("norm layers are not supported for the linear teacher stack");

    TeacherModel t;
    t.cfg = cfg;
    t.in_dim = in_dim;
    t.num_classes = num_classes;
    t.layers.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        TeacherLayer& layer = t.layers[l];
        const std::size_t d_in = (l == 0) ? in_dim : cfg.hidden;
        const std::size_t d_out = (l + 1 == cfg.layers) ? num_classes : cfg.hidden;
        const std::size_t w_rows = (cfg.kind == TeacherKind::GraphSAGE) ? 2 * d_in : d_in;
        Rng w_rng(derive_seed(seed, "teacher-w", l));
        layer.w = Param(std::string(to_string(cfg.kind)) + "-w" + std::to_string(l),
                        glorot(w_rows, d_out, w_rng));
        layer.has_bias = cfg.kind != TeacherKind::APPNP;
        if (layer.has_bias)
            layer.b = Param("b" + std::to_string(l), DenseMatrix(1, d_out));
        if (cfg.kind == TeacherKind::GAT) {
            layer.has_att = true;
            Rng a_rng(derive_seed(seed, "teacher-att", l));
            layer.att = Param("att" + std::to_string(l), glorot(2 * d_out, 1, a_rng));
        }
        if (cfg.norm != NormKind::None && l + 1 < cfg.layers) {
            layer.has_norm = true;
            DenseMatrix ones(1, d_out);
            for (double& e : ones.data) e = 1.0;
            layer.gamma = Param("gamma" + std::to_string(l), std::move(ones));
            layer.beta = Param("beta" + std::to_string(l), DenseMatrix(1, d_out));
        }
    }
    return t;
}

namespace {

NodeId maybe_dropout(Tape& tape, NodeId h, std::size_t layer, const ForwardOptions& opts) {
    if (!opts.train || !opts.dropout_masks) return h;
    if (layer >= opts.dropout_masks->size())
        throw ShapeError("dropout: no mask for layer " + std::to_string(layer));
    return tape.dropout(h, (*opts.dropout_masks)[layer]);
}

void record(ForwardTrace* trace, bool is_ft, std::size_t layer, NodeId in, NodeId out) {
    if (trace) trace->ops.push_back({is_ft, layer, in, out});
}

}  // namespace

NodeId teacher_forward(Tape& tape, TeacherModel& t, const Graph& g, NodeId x,
                       const ForwardOptions& opts, ForwardTrace* trace) {
    if (tape.value(x).cols != t.in_dim)
        throw ShapeError("teacher: input has " + std::to_string(tape.value(x).cols) +
                         " columns, expected " + std::to_string(t.in_dim));
    const std::size_t last = t.cfg.layers - 1;
    NodeId h = x;

    if (t.cfg.kind == TeacherKind::APPNP) {
        for (std::size_t l = 0; l <= last; ++l) {
            const NodeId pre = h;
            const NodeId h_in = maybe_dropout(tape, h, l, opts);
            h = tape.linear_nobias(h_in, tape.param(t.layers[l].w));
            record(trace, true, l, pre, h);
        }
        const NodeId p0 = h;
        for (std::size_t step = 0; step < t.cfg.power_steps; ++step) {
            const NodeId prop = tape.sparse_propagate(h, g, PropKind::NormAdjSelfLoops);
            h = tape.add(tape.scale(prop, 1.0 - t.cfg.teleport), tape.scale(p0, t.cfg.teleport));
        }
        record(trace, false, last + 1, p0, h);
        return h;
    }

    for (std::size_t l = 0; l <= last; ++l) {
        TeacherLayer& layer = t.layers[l];
        const NodeId pre = h;
        const NodeId h_in = maybe_dropout(tape, h, l, opts);

        NodeId gp = -1;
        switch (t.cfg.kind) {
            case TeacherKind::GraphSAGE: {
                const NodeId agg = tape.sparse_propagate(h_in, g, PropKind::MeanNeighbors);
                gp = tape.concat_cols(h_in, agg);
                break;
            }
            case TeacherKind::GCN: {
                gp = tape.sparse_propagate(h_in, g, PropKind::NormAdjSelfLoops);
                break;
            }
            case TeacherKind::GAT: {
                const NodeId z = tape.linear_nobias(h_in, tape.param(layer.w));
                const NodeId alpha = tape.gat_attention(z, tape.param(layer.att),
                                                        t.cfg.leaky_slope, g);
                gp = tape.attention_apply(alpha, h_in, g);
                break;
            }
            default:
                throw ConfigError("unreachable teacher kind");
        }
        record(trace, false, l, pre, gp);

        NodeId ft = tape.linear(gp, tape.param(layer.w), tape.param(layer.b));
        if (layer.has_norm) {
            ft = (t.cfg.norm == NormKind::Layer)
                     ? tape.layer_norm(ft, tape.param(layer.gamma), tape.param(layer.beta))
                     : tape.batch_norm(ft, tape.param(layer.gamma), tape.param(layer.beta));
        }
        if (l < last) ft = tape.relu(ft);
        record(trace, true, l, gp, ft);
        h = ft;
    }
    return h;
}

std::vector<Param*> StudentMLP::params() {
    std::vector<Param*> out;
    for (StudentLayer& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

NodeId student_forward(Tape& tape, StudentMLP& s, NodeId x, const ForwardOptions& opts,
                       ForwardTrace* trace) {
    NodeId h = x;
    for (std::size_t i = 0; i < s.layers.size(); ++i) {
        StudentLayer& layer = s.layers[i];
        const NodeId pre = h;
        const NodeId h_in = maybe_dropout(tape, h, i, opts);
        NodeId y = tape.linear(h_in, tape.param(layer.w), tape.param(layer.b));
        if (layer.act == Activation::ReLU) y = tape.relu(y);
        record(trace, layer.role != LayerRole::GpEmulating, i, pre, y);
        h = y;
    }
    return h;
}

namespace {

StudentMLP build_student(const TeacherModel& t, double eta, std::uint64_t seed,
                         Activation gp_activation, bool inject) {
    StudentMLP s;
    s.teacher_kind = t.cfg.kind;
    const std::size_t last = t.cfg.layers - 1;

    auto gp_layer = [&](std::size_t d_in, std::size_t d_out, std::size_t index, Activation act) {
        StudentLayer layer;
        layer.role = LayerRole::GpEmulating;
        layer.act = act;
        Rng rng(derive_seed(seed, "gp-init", index));
        layer.w = Param("fc-gp" + std::to_string(index), glorot(d_in, d_out, rng));
        layer.b = Param("fc-gp-b" + std::to_string(index), DenseMatrix(1, d_out));
        return layer;
    };
    auto ft_layer = [&](const TeacherLayer& src, std::size_t index, Activation act) {
        StudentLayer layer;
        layer.act = act;
        if (inject) {
            layer.role = LayerRole::FtInjected;
            layer.w = Param("fc-ft" + std::to_string(index), src.w.value);
            layer.b = Param("fc-ft-b" + std::to_string(index),
                            src.has_bias ? src.b.value : DenseMatrix(1, src.w.value.cols));
            layer.w.multiplier = eta;
            layer.b.multiplier = eta;
        } else {
            layer.role = LayerRole::FtRandom;
            Rng rng(derive_seed(seed, "ft-init", index));
            layer.w = Param("fc-ft" + std::to_string(index),
                            glorot(src.w.value.rows, src.w.value.cols, rng));
            layer.b = Param("fc-ft-b" + std::to_string(index), DenseMatrix(1, src.w.value.cols));
        }
        return layer;
    };

    if (t.cfg.kind == TeacherKind::APPNP) {
        for (std::size_t l = 0; l <= last; ++l)
            s.layers.push_back(ft_layer(t.layers[l], l, Activation::Identity));
        s.layers.push_back(
            gp_layer(t.num_classes, t.num_classes, last + 1, Activation::Identity));
        return s;
    }

    for (std::size_t l = 0; l <= last; ++l) {
        const std::size_t d_in = (l == 0) ? t.in_dim : t.cfg.hidden;
        const std::size_t gp_out = t.layers[l].w.value.rows;  // 2·d_in for GraphSAGE
        s.layers.push_back(gp_layer(d_in, gp_out, l, gp_activation));
        s.layers.push_back(
            ft_layer(t.layers[l], l, l < last ? Activation::ReLU : Activation::Identity));
    }
    return s;
}

}  // namespace

StudentMLP inject_teacher(const TeacherModel& t, double eta, std::uint64_t seed,
                          Activation gp_activation) {
    return build_student(t, eta, seed, gp_activation, true);
}

StudentMLP make_student_skeleton(const TeacherModel& t, std::uint64_t seed,
                                 Activation gp_activation) {
    return build_student(t, 1.0, seed, gp_activation, false);
}

std::vector<DenseMatrix> make_dropout_masks(const std::vector<std::size_t>& dims,
                                            std::size_t rows, double p, Rng& rng) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout probability must lie in [0, 1), got " + std::to_string(p));
    std::vector<DenseMatrix> masks;
    masks.reserve(dims.size());
    const double keep_scale = 1.0 / (1.0 - p);
    for (std::size_t d : dims) {
        DenseMatrix m(rows, d);
        for (double& e : m.data) e = (rng.uniform() < p) ? 0.0 : keep_scale;
        masks.push_back(std::move(m));
    }
    return masks;
}

double accuracy_from_logits(const DenseMatrix& logits, const std::vector<int>& labels,
                            const std::vector<std::uint32_t>& nodes) {
    if (nodes.empty()) throw DomainError("accuracy: empty node set");
    std::size_t correct = 0;
    for (std::uint32_t v : nodes) {
        if (v >= logits.rows)
            throw ShapeError("accuracy: node " + std::to_string(v) + " out of range");
        const double* row = logits.row(v);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols; ++j)
            if (row[j] > row[best]) best = j;
        if (labels[v] >= 0 && static_cast<std::size_t>(labels[v]) == best) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

}  // namespace tined
