#include "tined/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "tined/errors.hpp"
#include "tined/rng.hpp"

namespace tined {

DatasetBundle generate_sbm(std::size_t n, std::size_t blocks, double p_in, double p_out,
                           std::size_t feature_dim, double class_shift, std::uint64_t seed,
                           const SbmFeatureNoise& noise) {
    if (blocks == 0 || n == 0) throw DataError("sbm: need at least one block and one node");
    if (feature_dim == 0) throw DataError("sbm: feature_dim must be positive");
    if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
        throw DataError("sbm: edge probabilities must lie in [0, 1]");

    DatasetBundle data;
    data.name = "sbm";
    data.num_classes = blocks;
    data.labels.resize(n);
    for (std::size_t v = 0; v < n; ++v) data.labels[v] = static_cast<int>(v % blocks);

    Rng edge_rng(derive_seed(seed, "sbm-edges"));
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            const double p = (data.labels[u] == data.labels[v]) ? p_in : p_out;
            if (edge_rng.uniform() < p)
                edges.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
        }
    }
    data.graph = make_graph(n, edges);

    Rng feat_rng(derive_seed(seed, "sbm-features"));
    data.features = DenseMatrix(n, feature_dim);
    const double sig_info = noise.sigma_informative * class_shift;
    const double sig_nui = noise.sigma_nuisance * class_shift;
    std::vector<bool> informative(feature_dim, false);
    for (std::size_t c = 0; c < blocks; ++c) informative[c % feature_dim] = true;
    for (std::size_t v = 0; v < n; ++v) {
        const std::size_t shift_col = static_cast<std::size_t>(data.labels[v]) % feature_dim;
        for (std::size_t j = 0; j < feature_dim; ++j) {
            const double sigma = informative[j] ? sig_info : sig_nui;
            double x = sigma * feat_rng.normal();
            if (j == shift_col) x += class_shift;
            data.features.at(v, j) = x;
        }
    }
    return data;
}

DatasetBundle generate_er(std::size_t n, double p, std::size_t feature_dim, std::uint64_t seed) {
    if (p < 0 || p > 1) throw DataError("er: edge probability must lie in [0, 1]");
    DatasetBundle data;
    data.name = "er";
    data.num_classes = 1;
    data.labels.assign(n, 0);
    Rng edge_rng(derive_seed(seed, "er-edges"));
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            if (edge_rng.uniform() < p)
                edges.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
        }
    }
    data.graph = make_graph(n, edges);
    Rng feat_rng(derive_seed(seed, "er-features"));
    data.features = DenseMatrix(n, feature_dim);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t j = 0; j < feature_dim; ++j) data.features.at(v, j) = feat_rng.normal();
    return data;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool blank_or_comment(const std::string& s) {
    for (char c : s) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

}  // namespace

DatasetBundle ingest_dataset(const std::string& dir) {
    DatasetBundle data;
    data.name = dir;

    const std::string labels_path = dir + "/labels.txt";
    int max_label = -1;
    {
        const auto lines = read_lines(labels_path);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (blank_or_comment(lines[i])) continue;
            std::istringstream ss(lines[i]);
            int y = 0;
            if (!(ss >> y))
                throw DataError(labels_path + " line " + std::to_string(i + 1) +
                                ": expected an integer label");
            if (y < 0)
                throw DataError(labels_path + " line " + std::to_string(i + 1) +
                                ": labels must be non-negative");
            data.labels.push_back(y);
            max_label = std::max(max_label, y);
        }
    }
    const std::size_t n = data.labels.size();
    if (n == 0) throw DataError(labels_path + ": no labels found");
    data.num_classes = static_cast<std::size_t>(max_label) + 1;

    const std::string feat_path = dir + "/features.csv";
    {
        const auto lines = read_lines(feat_path);
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (blank_or_comment(lines[i])) continue;
            std::vector<double> row;
            std::istringstream ss(lines[i]);
            std::string cell;
            while (std::getline(ss, cell, ',')) {
                try {
                    std::size_t pos = 0;
                    row.push_back(std::stod(cell, &pos));
                } catch (const std::exception&) {
                    throw DataError(feat_path + " line " + std::to_string(i + 1) +
                                    ": bad number '" + cell + "'");
                }
            }
            if (!rows.empty() && row.size() != rows.front().size())
                throw DataError(feat_path + " line " + std::to_string(i + 1) + ": expected " +
                                std::to_string(rows.front().size()) + " columns, got " +
                                std::to_string(row.size()));
            rows.push_back(std::move(row));
        }
        if (rows.size() != n)
            throw DataError(feat_path + ": " + std::to_string(rows.size()) + " feature rows for " +
                            std::to_string(n) + " labels");
        if (rows.empty() || rows.front().empty())
            throw DataError(feat_path + ": no feature columns");
        const std::size_t dim = rows.front().size();
        data.features = DenseMatrix(n, dim);
        for (std::size_t v = 0; v < n; ++v) {
            for (std::size_t j = 0; j < dim; ++j) data.features.at(v, j) = rows[v][j];
        }
    }

    const std::string edges_path = dir + "/edges.txt";
    {
        const auto lines = read_lines(edges_path);
        std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (blank_or_comment(lines[i])) continue;
            std::istringstream ss(lines[i]);
            long long u = 0, v = 0;
            if (!(ss >> u >> v) || u < 0 || v < 0)
                throw DataError(edges_path + " line " + std::to_string(i + 1) +
                                ": expected two non-negative node ids");
            if (static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n)
                throw DataError(edges_path + " line " + std::to_string(i + 1) +
                                ": node id out of range");
            if (u == v)
                throw DataError(edges_path + " line " + std::to_string(i + 1) + ": self-loop");
            edges.emplace_back(static_cast<std::uint32_t>(u), static_cast<std::uint32_t>(v));
        }
        data.graph = make_graph(n, edges);
    }
    return data;
}

bool load_split_json(const std::string& dir, std::size_t n, SplitSpec* out) {
    const std::string path = dir + "/split.json";
    std::ifstream in(path);
    if (!in) return false;

    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    if (!doc.is_object()) throw DataError(path + ": expected a JSON object");

    auto read_set = [&](const char* key, bool required) {
        std::vector<std::uint32_t> ids;
        if (!doc.contains(key)) {
            if (required) throw DataError(path + ": missing array '" + key + "'");
            return ids;
        }
        const auto& arr = doc.at(key);
        if (!arr.is_array()) throw DataError(path + ": '" + key + "' must be an array");
        for (const auto& item : arr) {
            if (!item.is_number_integer() || item.get<std::int64_t>() < 0)
                throw DataError(path + ": '" + key + "' holds a non-integer or negative id");
            const std::uint64_t v = item.get<std::uint64_t>();
            if (v >= n)
                throw DataError(path + ": '" + key + "' id " + std::to_string(v) +
                                " out of range for " + std::to_string(n) + " nodes");
            ids.push_back(static_cast<std::uint32_t>(v));
        }
        std::sort(ids.begin(), ids.end());
        if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
            throw DataError(path + ": '" + key + "' lists a node twice");
        return ids;
    };

    SplitSpec split;
    split.labeled = read_set("labeled", true);
    split.validation = read_set("validation", true);
    split.unlabeled = read_set("unlabeled", false);
    split.observed = read_set("observed", false);
    split.inductive = read_set("inductive", false);

    std::vector<int> owner(n, -1);
    auto claim = [&](const std::vector<std::uint32_t>& ids, int tag, const char* name) {
        for (std::uint32_t v : ids) {
            if (owner[v] >= 0)
                throw DataError(path + ": node " + std::to_string(v) + " appears in '" + name +
                                "' and an earlier set");
            owner[v] = tag;
        }
    };
    claim(split.labeled, 0, "labeled");
    claim(split.validation, 1, "validation");
    if (split.unlabeled.empty()) {
        for (std::uint32_t v = 0; v < n; ++v) {
            if (owner[v] < 0) split.unlabeled.push_back(v);
        }
    } else {
        claim(split.unlabeled, 2, "unlabeled");
    }

    if (!split.observed.empty() || !split.inductive.empty()) {
        std::vector<std::uint32_t> merged = split.observed;
        merged.insert(merged.end(), split.inductive.begin(), split.inductive.end());
        std::sort(merged.begin(), merged.end());
        if (merged != split.unlabeled)
            throw DataError(path + ": observed and inductive must partition the unlabeled set");
    }

    for (const char* key : {"labeled", "validation", "unlabeled", "observed", "inductive"})
        doc.erase(key);
    if (!doc.empty())
        throw DataError(path + ": unknown key '" + doc.begin().key() + "'");

    *out = std::move(split);
    return true;
}

TrainView full_view(const DatasetBundle& data, const SplitSpec& split) {
    TrainView view;
    view.num_classes = data.num_classes;
    view.graph = data.graph;
    view.features = data.features;
    view.labels.assign(data.graph.n, -1);
    for (std::uint32_t v : split.labeled) view.labels[v] = data.labels[v];
    for (std::uint32_t v : split.validation) view.labels[v] = data.labels[v];
    view.order.resize(data.graph.n);
    view.to_view.resize(data.graph.n);
    for (std::size_t v = 0; v < data.graph.n; ++v) {
        view.order[v] = static_cast<std::uint32_t>(v);
        view.to_view[v] = static_cast<std::int64_t>(v);
    }
    view.split = split;
    view.split.observed.clear();
    view.split.inductive.clear();
    if (split.is_production()) view.split.unlabeled = split.observed;
    return view;
}

TrainView restrict_to_observed(const DatasetBundle& data, const SplitSpec& split,
                               AccessAudit* audit) {
    if (!split.is_production()) return full_view(data, split);

    const std::size_t n = data.graph.n;
    std::vector<bool> hidden(n, false);
    for (std::uint32_t v : split.inductive) hidden[v] = true;

    TrainView view;
    view.num_classes = data.num_classes;
    view.to_view.assign(n, -1);
    for (std::size_t v = 0; v < n; ++v) {
        if (hidden[v]) continue;
        view.to_view[v] = static_cast<std::int64_t>(view.order.size());
        view.order.push_back(static_cast<std::uint32_t>(v));
    }
    const std::size_t kept = view.order.size();

    view.features = DenseMatrix(kept, data.features.cols);
    for (std::size_t i = 0; i < kept; ++i) {
        const std::uint32_t src = view.order[i];
        if (audit) audit->feature_rows[src] = true;
        const double* from = data.features.row(src);
        double* to = view.features.row(i);
        for (std::size_t j = 0; j < data.features.cols; ++j) to[j] = from[j];
    }

    view.labels.assign(kept, -1);
    auto map_set = [&](const std::vector<std::uint32_t>& ids, bool read_label) {
        std::vector<std::uint32_t> out;
        out.reserve(ids.size());
        for (std::uint32_t v : ids) {
            const std::int64_t row = view.to_view[v];
            if (row < 0)
                throw DataError("split set references inductive node " + std::to_string(v));
            out.push_back(static_cast<std::uint32_t>(row));
            if (read_label) {
                if (audit) audit->label_rows[v] = true;
                view.labels[static_cast<std::size_t>(row)] = data.labels[v];
            }
        }
        return out;
    };
    view.split.labeled = map_set(split.labeled, true);
    view.split.validation = map_set(split.validation, true);
    view.split.unlabeled = map_set(split.observed, false);

    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
    edges.reserve(data.graph.edge_count());
    for (const auto& [u, v] : data.graph.edges) {
        if (hidden[u] || hidden[v]) continue;
        if (audit) audit->edges_used.emplace_back(u, v);
        edges.emplace_back(static_cast<std::uint32_t>(view.to_view[u]),
                           static_cast<std::uint32_t>(view.to_view[v]));
    }
    view.graph = make_graph(kept, edges);
    return view;
}

}  // namespace tined
