#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tined/linalg.hpp"

namespace tined {

/// Undirected simple graph. Edges are stored once with u < v, sorted
/// lexicographically; the CSR adjacency covers both directions with sorted
/// neighbor lists, so every traversal order is deterministic.
struct Graph {
    std::size_t n = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    std::vector<std::size_t> offsets;    // n + 1 entries
    std::vector<std::uint32_t> neighbors;
    std::vector<std::uint32_t> degrees;

    std::size_t edge_count() const { return edges.size(); }
    std::uint32_t degree(std::size_t v) const { return degrees[v]; }

    const std::uint32_t* neigh_begin(std::size_t v) const { return neighbors.data() + offsets[v]; }
    const std::uint32_t* neigh_end(std::size_t v) const { return neighbors.data() + offsets[v + 1]; }
};

/// Builds a Graph from raw (possibly directed, possibly duplicated) edge
/// pairs: symmetrizes, merges duplicates, validates ids. Self-loops are
/// rejected.
Graph make_graph(std::size_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& raw);

enum class LaplacianKind {
    Combinatorial,            // L = D - A
    NormalizedWithSelfLoops,  // D̂^(-1/2) (A + I) D̂^(-1/2)
};

DenseMatrix laplacian(const Graph& g, LaplacianKind kind);

/// Dirichlet energy E(H) = (1/n)·tr(HᵀLH) with the combinatorial Laplacian,
/// computed by the edge-sum identity (1/n)·Σ_{(u,v)∈E} ‖h_u − h_v‖².
double dirichlet_energy(const DenseMatrix& h, const Graph& g);

/// A fixed edge sample for approximate Dirichlet energies: selected edge
/// indices (ascending) plus the divisor (number of distinct endpoints).
struct EdgeSample {
    std::vector<std::size_t> edge_indices;
    std::size_t n_sub = 0;
};

/// Draws ⌈zeta·m⌉ edges without replacement.
EdgeSample sample_edges(const Graph& g, double zeta, std::uint64_t seed);

/// Dirichlet energy of the subgraph spanned by a zeta-sample of the edges
/// (divisor = number of distinct endpoints). zeta = 1 reproduces the exact
/// edge sum bit for bit on the edge-spanned subgraph.
double dirichlet_energy_sampled(const DenseMatrix& h, const Graph& g, double zeta,
                                std::uint64_t seed);

/// Edge-difference sum Σ_{e∈sample}‖h_u − h_v‖² / divisor. The core shared by
/// the exact and sampled paths; `sample` null means all edges with divisor n.
double dirichlet_energy_over(const DenseMatrix& h, const Graph& g, const EdgeSample* sample);

/// Sparse propagation operators used by the teachers.
enum class PropKind {
    MeanNeighbors,      // row v: mean over N(v), zero row when isolated
    NormAdjSelfLoops,   // D̂^(-1/2) (A + I) D̂^(-1/2), symmetric
};

/// y = P·x with deterministic (ascending-neighbor) accumulation.
DenseMatrix prop_apply(const Graph& g, PropKind kind, const DenseMatrix& x);

/// y = Pᵀ·x, the adjoint used by reverse-mode differentiation.
DenseMatrix prop_apply_transpose(const Graph& g, PropKind kind, const DenseMatrix& x);

/// CSR over N(v) ∪ {v} with sorted targets; fixes the slot order shared by
/// the attention ops.
struct SelfLoopAdj {
    std::vector<std::size_t> offsets;
    std::vector<std::uint32_t> targets;
    std::size_t slots() const { return targets.size(); }
};

SelfLoopAdj self_loop_adjacency(const Graph& g);

/// Node partition used by the split protocols. All id vectors sorted.
struct SplitSpec {
    std::vector<std::uint32_t> labeled;
    std::vector<std::uint32_t> unlabeled;
    std::vector<std::uint32_t> validation;
    std::vector<std::uint32_t> observed;   // production only
    std::vector<std::uint32_t> inductive;  // production only

    bool is_production() const { return !observed.empty() || !inductive.empty(); }
};

/// Stratified per-class sampling of labeled and validation sets; the
/// remainder is unlabeled. Deterministic given the seed.
SplitSpec make_transductive_split(std::size_t n, std::size_t labels_per_class,
                                  std::size_t val_per_class, const std::vector<int>& labels,
                                  std::uint64_t seed);

/// Moves a random 20% (floor, minimum 1) of the unlabeled nodes into the
/// inductive subset; the rest become observed.
SplitSpec make_production_split(const SplitSpec& base, std::uint64_t seed);

/// Drops every edge incident to an inductive node; node indexing unchanged.
Graph observed_subgraph(const Graph& g, const SplitSpec& split);

}  // namespace tined
