#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tined/graph.hpp"
#include "tined/linalg.hpp"

namespace tined {

/// A loaded dataset: graph, node features, integer labels.
struct DatasetBundle {
    std::string name;
    Graph graph;
    DenseMatrix features;
    std::vector<int> labels;
    std::size_t num_classes = 0;
};

/// Feature noise model for the synthetic benchmark. Standard deviations are
/// relative to the class shift, so the shift is the single scale knob:
/// informative coordinates (one per class) get sigma_informative·shift noise,
/// the remaining coordinates get sigma_nuisance·shift.
struct SbmFeatureNoise {
    double sigma_informative = 0.4;
    double sigma_nuisance = 0.04;
};

/// Two-parameter stochastic block model with equal-sized blocks and Gaussian
/// class-shifted features: node v in class c has mean shift·e_{c mod dim}.
DatasetBundle generate_sbm(std::size_t n, std::size_t blocks, double p_in, double p_out,
                           std::size_t feature_dim, double class_shift, std::uint64_t seed,
                           const SbmFeatureNoise& noise = {});

/// Erdős–Rényi G(n, p) graph with standard normal features; labels all zero.
DatasetBundle generate_er(std::size_t n, double p, std::size_t feature_dim, std::uint64_t seed);

/// Reads a dataset directory: edges.txt ("u v" per line), features.csv
/// (comma-separated doubles, one row per node), labels.txt (one integer per
/// node). Errors carry line numbers.
DatasetBundle ingest_dataset(const std::string& dir);

/// Reads split.json from a dataset directory when present: integer arrays
/// "labeled" and "validation", optional "unlabeled" (defaults to the
/// complement), and for production bundles "observed" plus "inductive"
/// (must partition the unlabeled set). Returns false if the file is absent.
bool load_split_json(const std::string& dir, std::size_t n, SplitSpec* out);

/// Records which rows of a dataset were touched while building training
/// inputs; the production-isolation check asserts no inductive row appears.
struct AccessAudit {
    std::vector<bool> feature_rows;
    std::vector<bool> label_rows;
    std::vector<bool> soft_label_rows;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges_used;

    explicit AccessAudit(std::size_t n)
        : feature_rows(n, false), label_rows(n, false), soft_label_rows(n, false) {}

    bool touches(const std::vector<std::uint32_t>& ids) const {
        for (std::uint32_t v : ids) {
            if (feature_rows[v] || label_rows[v] || soft_label_rows[v]) return true;
        }
        for (const auto& [u, w] : edges_used) {
            for (std::uint32_t v : ids) {
                if (u == v || w == v) return true;
            }
        }
        return false;
    }
};

/// Physically compacted training inputs. In production mode the view holds
/// only non-inductive rows, so training code cannot reach held-out data even
/// by accident; `order[i]` maps view row i back to the original node id.
struct TrainView {
    Graph graph;
    DenseMatrix features;
    std::vector<int> labels;  // -1 where the label may not be read
    std::vector<std::uint32_t> order;
    std::vector<std::int64_t> to_view;  // original id -> view row, -1 if absent
    SplitSpec split;                    // ids remapped to view rows
    std::size_t num_classes = 0;
};

/// Identity view over the full dataset (transductive training).
TrainView full_view(const DatasetBundle& data, const SplitSpec& split);

/// Production view: drops inductive rows and their incident edges, remaps
/// the split, records every row and edge actually copied into the audit.
TrainView restrict_to_observed(const DatasetBundle& data, const SplitSpec& split,
                               AccessAudit* audit);

}  // namespace tined
