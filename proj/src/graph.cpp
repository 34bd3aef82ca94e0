#include "tined/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "tined/errors.hpp"
#include "tined/rng.hpp"

namespace tined {

Graph make_graph(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& raw) {
    Graph g;
    g.n = n;
    g.edges.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        auto [u, v] = raw[i];
        if (u >= n || v >= n) {
            throw DataError("edge " + std::to_string(i) + " references node " +
                            std::to_string(std::max(u, v)) + " outside [0, " + std::to_string(n) +
                            ")");
        }
        if (u == v) {
            throw DataError("edge " + std::to_string(i) + " is a self-loop on node " +
                            std::to_string(u));
        }
        if (u > v) std::swap(u, v);
        g.edges.emplace_back(u, v);
    }
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

    g.degrees.assign(n, 0);
    for (const auto& [u, v] : g.edges) {
        ++g.degrees[u];
        ++g.degrees[v];
    }
    g.offsets.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) g.offsets[v + 1] = g.offsets[v] + g.degrees[v];
    g.neighbors.assign(g.offsets[n], 0);
    std::vector<std::size_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
    for (const auto& [u, v] : g.edges) {
        g.neighbors[cursor[u]++] = v;
        g.neighbors[cursor[v]++] = u;
    }
    for (std::size_t v = 0; v < n; ++v) {
        std::sort(g.neighbors.begin() + static_cast<std::ptrdiff_t>(g.offsets[v]),
                  g.neighbors.begin() + static_cast<std::ptrdiff_t>(g.offsets[v + 1]));
    }
    return g;
}

DenseMatrix laplacian(const Graph& g, LaplacianKind kind) {
    DenseMatrix m(g.n, g.n);
    if (kind == LaplacianKind::Combinatorial) {
        for (std::size_t v = 0; v < g.n; ++v) m.at(v, v) = static_cast<double>(g.degrees[v]);
        for (const auto& [u, v] : g.edges) {
            m.at(u, v) = -1.0;
            m.at(v, u) = -1.0;
        }
        return m;
    }
    // Normalized adjacency with self-loops: D̂^(-1/2) (A + I) D̂^(-1/2),
    // D̂ = D + I.
    std::vector<double> inv_sqrt(g.n);
    for (std::size_t v = 0; v < g.n; ++v)
        inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.degrees[v]) + 1.0);
    for (std::size_t v = 0; v < g.n; ++v) m.at(v, v) = inv_sqrt[v] * inv_sqrt[v];
    for (const auto& [u, v] : g.edges) {
        const double w = inv_sqrt[u] * inv_sqrt[v];
        m.at(u, v) = w;
        m.at(v, u) = w;
    }
    return m;
}

DenseMatrix prop_apply(const Graph& g, PropKind kind, const DenseMatrix& x) {
    if (x.rows != g.n) {
        throw ShapeError("propagate: matrix has " + std::to_string(x.rows) +
                         " rows but graph has " + std::to_string(g.n) + " nodes");
    }
    DenseMatrix y(x.rows, x.cols);
    if (kind == PropKind::MeanNeighbors) {
        for (std::size_t v = 0; v < g.n; ++v) {
            if (g.degrees[v] == 0) continue;
            double* out = y.row(v);
            for (const std::uint32_t* u = g.neigh_begin(v); u != g.neigh_end(v); ++u) {
                const double* in = x.row(*u);
                for (std::size_t j = 0; j < x.cols; ++j) out[j] += in[j];
            }
            const double inv = 1.0 / static_cast<double>(g.degrees[v]);
            for (std::size_t j = 0; j < x.cols; ++j) out[j] *= inv;
        }
        return y;
    }
    std::vector<double> inv_sqrt(g.n);
    for (std::size_t v = 0; v < g.n; ++v)
        inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.degrees[v]) + 1.0);
    const SelfLoopAdj adj = self_loop_adjacency(g);
    for (std::size_t v = 0; v < g.n; ++v) {
        double* out = y.row(v);
        for (std::size_t s = adj.offsets[v]; s < adj.offsets[v + 1]; ++s) {
            const std::uint32_t u = adj.targets[s];
            const double w = inv_sqrt[v] * inv_sqrt[u];
            const double* in = x.row(u);
            for (std::size_t j = 0; j < x.cols; ++j) out[j] += w * in[j];
        }
    }
    return y;
}

DenseMatrix prop_apply_transpose(const Graph& g, PropKind kind, const DenseMatrix& x) {
    if (kind == PropKind::NormAdjSelfLoops) return prop_apply(g, kind, x);
    if (x.rows != g.n) {
        throw ShapeError("propagate: matrix has " + std::to_string(x.rows) +
                         " rows but graph has " + std::to_string(g.n) + " nodes");
    }
    // (Pᵀx)_v = Σ_{u ∈ N(v)} x_u / deg(u); the symmetric adjacency makes the
    // column pattern of row u equal to N(u).
    DenseMatrix y(x.rows, x.cols);
    std::vector<double> inv_deg(g.n, 0.0);
    for (std::size_t v = 0; v < g.n; ++v)
        if (g.degrees[v] > 0) inv_deg[v] = 1.0 / static_cast<double>(g.degrees[v]);
    for (std::size_t v = 0; v < g.n; ++v) {
        double* out = y.row(v);
        for (const std::uint32_t* u = g.neigh_begin(v); u != g.neigh_end(v); ++u) {
            const double w = inv_deg[*u];
            const double* in = x.row(*u);
            for (std::size_t j = 0; j < x.cols; ++j) out[j] += w * in[j];
        }
    }
    return y;
}

SelfLoopAdj self_loop_adjacency(const Graph& g) {
    SelfLoopAdj adj;
    adj.offsets.assign(g.n + 1, 0);
    for (std::size_t v = 0; v < g.n; ++v) adj.offsets[v + 1] = adj.offsets[v] + g.degrees[v] + 1;
    adj.targets.resize(adj.offsets[g.n]);
    for (std::size_t v = 0; v < g.n; ++v) {
        std::size_t s = adj.offsets[v];
        bool placed = false;
        for (const std::uint32_t* u = g.neigh_begin(v); u != g.neigh_end(v); ++u) {
            if (!placed && *u > v) {
                adj.targets[s++] = static_cast<std::uint32_t>(v);
                placed = true;
            }
            adj.targets[s++] = *u;
        }
        if (!placed) adj.targets[s++] = static_cast<std::uint32_t>(v);
    }
    return adj;
}

double dirichlet_energy_over(const DenseMatrix& h, const Graph& g, const EdgeSample* sample) {
    if (h.rows != g.n) {
        throw ShapeError("dirichlet energy: matrix has " + std::to_string(h.rows) +
                         " rows but graph has " + std::to_string(g.n) + " nodes");
    }
    const std::size_t m = sample ? sample->edge_indices.size() : g.edge_count();
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t e = sample ? sample->edge_indices[i] : i;
        const auto& [u, v] = g.edges[e];
        const double* hu = h.row(u);
        const double* hv = h.row(v);
        double d2 = 0.0;
        for (std::size_t j = 0; j < h.cols; ++j) {
            const double d = hu[j] - hv[j];
            d2 += d * d;
        }
        sum += d2;
    }
    const std::size_t divisor = sample ? sample->n_sub : g.n;
    if (divisor == 0) return 0.0;
    return sum / static_cast<double>(divisor);
}

double dirichlet_energy(const DenseMatrix& h, const Graph& g) {
    return dirichlet_energy_over(h, g, nullptr);
}

EdgeSample sample_edges(const Graph& g, double zeta, std::uint64_t seed) {
    if (!(zeta > 0.0) || zeta > 1.0) {
        throw DomainError("zeta must lie in (0, 1], got " + std::to_string(zeta));
    }
    EdgeSample s;
    const std::size_t m = g.edge_count();
    if (m == 0) return s;
    auto k = static_cast<std::size_t>(std::ceil(zeta * static_cast<double>(m)));
    if (k > m) k = m;
    Rng rng(seed);
    s.edge_indices = rng.sample_without_replacement(m, k);
    std::set<std::uint32_t> endpoints;
    for (std::size_t e : s.edge_indices) {
        endpoints.insert(g.edges[e].first);
        endpoints.insert(g.edges[e].second);
    }
    s.n_sub = endpoints.size();
    return s;
}

double dirichlet_energy_sampled(const DenseMatrix& h, const Graph& g, double zeta,
                                std::uint64_t seed) {
    const EdgeSample s = sample_edges(g, zeta, seed);
    return dirichlet_energy_over(h, g, &s);
}

SplitSpec make_transductive_split(std::size_t n, std::size_t labels_per_class,
                                  std::size_t val_per_class, const std::vector<int>& labels,
                                  std::uint64_t seed) {
    if (labels.size() != n) {
        throw DataError("label vector has " + std::to_string(labels.size()) + " entries for " +
                        std::to_string(n) + " nodes");
    }
    int max_label = -1;
    for (std::size_t v = 0; v < n; ++v) {
        if (labels[v] < 0)
            throw DataError("node " + std::to_string(v) + " has negative label");
        max_label = std::max(max_label, labels[v]);
    }
    if (max_label < 0) throw DataError("empty label vector");
    const auto num_classes = static_cast<std::size_t>(max_label) + 1;

    std::vector<std::vector<std::uint32_t>> by_class(num_classes);
    for (std::size_t v = 0; v < n; ++v)
        by_class[static_cast<std::size_t>(labels[v])].push_back(static_cast<std::uint32_t>(v));

    SplitSpec split;
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto& ids = by_class[c];
        if (ids.size() < labels_per_class + val_per_class) {
            throw DataError("class " + std::to_string(c) + " has " + std::to_string(ids.size()) +
                            " nodes, fewer than labels_per_class + val_per_class = " +
                            std::to_string(labels_per_class + val_per_class));
        }
        Rng rng(derive_seed(seed, "split-class", c));
        rng.shuffle(ids);
        split.labeled.insert(split.labeled.end(), ids.begin(),
                             ids.begin() + static_cast<std::ptrdiff_t>(labels_per_class));
        split.validation.insert(
            split.validation.end(), ids.begin() + static_cast<std::ptrdiff_t>(labels_per_class),
            ids.begin() + static_cast<std::ptrdiff_t>(labels_per_class + val_per_class));
        split.unlabeled.insert(split.unlabeled.end(),
                               ids.begin() + static_cast<std::ptrdiff_t>(labels_per_class +
                                                                         val_per_class),
                               ids.end());
    }
    std::sort(split.labeled.begin(), split.labeled.end());
    std::sort(split.validation.begin(), split.validation.end());
    std::sort(split.unlabeled.begin(), split.unlabeled.end());
    return split;
}

SplitSpec make_production_split(const SplitSpec& base, std::uint64_t seed) {
    if (base.is_production()) throw DataError("split is already a production split");
    if (base.unlabeled.empty()) throw DataError("cannot hold out from an empty unlabeled set");
    SplitSpec split = base;
    const std::size_t m = base.unlabeled.size();
    std::size_t k = m / 5;
    if (k == 0) k = 1;
    Rng rng(derive_seed(seed, "production-holdout"));
    const std::vector<std::size_t> picks = rng.sample_without_replacement(m, k);
    std::vector<bool> held(m, false);
    for (std::size_t p : picks) held[p] = true;
    for (std::size_t i = 0; i < m; ++i) {
        if (held[i])
            split.inductive.push_back(base.unlabeled[i]);
        else
            split.observed.push_back(base.unlabeled[i]);
    }
    return split;
}

Graph observed_subgraph(const Graph& g, const SplitSpec& split) {
    if (split.inductive.empty()) return g;
    std::vector<bool> hidden(g.n, false);
    for (std::uint32_t v : split.inductive) hidden[v] = true;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> kept;
    kept.reserve(g.edge_count());
    for (const auto& e : g.edges) {
        if (!hidden[e.first] && !hidden[e.second]) kept.push_back(e);
    }
    return make_graph(g.n, kept);
}

}  // namespace tined
