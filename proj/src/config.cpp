#include "tined/config.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "tined/errors.hpp"

namespace tined {

namespace {

struct TomlValue {
    enum class Kind { Str, Num, Bool, NumList };
    Kind kind = Kind::Num;
    std::string str;
    double num = 0.0;
    bool flag = false;
    std::vector<double> list;
    std::size_t line = 0;
};

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string strip_comment(const std::string& s) {
    bool in_string = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') in_string = !in_string;
        if (s[i] == '#' && !in_string) return s.substr(0, i);
    }
    return s;
}

double parse_number(const std::string& s, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size())
            throw ConfigError("line " + std::to_string(line) + ": bad number '" + s + "'");
        return v;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

TomlValue parse_value(const std::string& raw, std::size_t line) {
    TomlValue v;
    v.line = line;
    if (raw.empty()) throw ConfigError("line " + std::to_string(line) + ": empty value");
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw ConfigError("line " + std::to_string(line) + ": unterminated string");
        v.kind = TomlValue::Kind::Str;
        v.str = raw.substr(1, raw.size() - 2);
        return v;
    }
    if (raw == "true" || raw == "false") {
        v.kind = TomlValue::Kind::Bool;
        v.flag = raw == "true";
        return v;
    }
    if (raw.front() == '[') {
        if (raw.back() != ']')
            throw ConfigError("line " + std::to_string(line) + ": unterminated array");
        v.kind = TomlValue::Kind::NumList;
        const std::string inner = trim(raw.substr(1, raw.size() - 2));
        if (!inner.empty()) {
            std::istringstream ss(inner);
            std::string cell;
            while (std::getline(ss, cell, ',')) v.list.push_back(parse_number(trim(cell), line));
        }
        return v;
    }
    v.kind = TomlValue::Kind::Num;
    v.num = parse_number(raw, line);
    return v;
}

class KeyTable {
  public:
    explicit KeyTable(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        std::string section;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string body = trim(strip_comment(line));
            if (body.empty()) continue;
            if (body.front() == '[') {
                if (body.back() != ']')
                    throw ConfigError("line " + std::to_string(lineno) +
                                      ": unterminated section header");
                section = trim(body.substr(1, body.size() - 2));
                if (section.empty())
                    throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
                continue;
            }
            const std::size_t eq = body.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(body.substr(0, eq));
            if (key.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty key");
            const std::string full = section.empty() ? key : section + "." + key;
            if (values_.count(full))
                throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + full +
                                  "'");
            values_.emplace(full, parse_value(trim(body.substr(eq + 1)), lineno));
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    double num(const std::string& key, double fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second.kind != TomlValue::Kind::Num)
            throw ConfigError("line " + std::to_string(it->second.line) + ": '" + key +
                              "' must be a number");
        consumed_.insert(key);
        return it->second.num;
    }

    std::size_t size(const std::string& key, std::size_t fallback) {
        const double v = num(key, static_cast<double>(fallback));
        if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
            throw ConfigError("'" + key + "' must be a non-negative integer");
        return static_cast<std::size_t>(v);
    }

    std::string str(const std::string& key, const std::string& fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second.kind != TomlValue::Kind::Str)
            throw ConfigError("line " + std::to_string(it->second.line) + ": '" + key +
                              "' must be a string");
        consumed_.insert(key);
        return it->second.str;
    }

    bool boolean(const std::string& key, bool fallback) {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second.kind != TomlValue::Kind::Bool)
            throw ConfigError("line " + std::to_string(it->second.line) + ": '" + key +
                              "' must be true or false");
        consumed_.insert(key);
        return it->second.flag;
    }

    std::vector<double> list(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return {};
        if (it->second.kind != TomlValue::Kind::NumList)
            throw ConfigError("line " + std::to_string(it->second.line) + ": '" + key +
                              "' must be an array of numbers");
        consumed_.insert(key);
        return it->second.list;
    }

    void reject_unknown() const {
        for (const auto& [key, value] : values_) {
            if (!consumed_.count(key))
                throw ConfigError("line " + std::to_string(value.line) + ": unknown key '" + key +
                                  "'");
        }
    }

  private:
    std::map<std::string, TomlValue> values_;
    std::set<std::string> consumed_;
};

void warn_range(std::vector<std::string>* warnings, const std::string& key, double value,
                double lo, double hi) {
    if (!warnings) return;
    if (value < lo || value > hi) {
        std::ostringstream ss;
        ss << key << " = " << value << " outside the documented search space [" << lo << ", "
           << hi << "]";
        warnings->push_back(ss.str());
    }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, std::vector<std::string>* warnings) {
    KeyTable keys(text);
    RunConfig c;

    c.mode = keys.str("mode", c.mode);
    if (c.mode != "transductive" && c.mode != "production")
        throw ConfigError("mode must be 'transductive' or 'production', got '" + c.mode + "'");
    c.seed = static_cast<std::uint64_t>(keys.size("seed", 0));
    for (double s : keys.list("seeds")) {
        if (s < 0) throw ConfigError("seeds must be non-negative");
        c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    c.out_dir = keys.str("out", c.out_dir);

    c.source = keys.str("data.source", c.source);
    c.sbm_n = keys.size("data.n", c.sbm_n);
    c.sbm_blocks = keys.size("data.blocks", c.sbm_blocks);
    c.sbm_p_in = keys.num("data.p_in", c.sbm_p_in);
    c.sbm_p_out = keys.num("data.p_out", c.sbm_p_out);
    c.sbm_dim = keys.size("data.dim", c.sbm_dim);
    c.sbm_shift = keys.num("data.shift", c.sbm_shift);
    c.labels_per_class = keys.size("data.labels_per_class", c.labels_per_class);
    c.val_per_class = keys.size("data.val_per_class", c.val_per_class);

    c.teacher.kind = parse_teacher_kind(keys.str("teacher.kind", to_string(c.teacher.kind)));
    c.teacher.layers = keys.size("teacher.layers", c.teacher.layers);
    c.teacher.hidden = keys.size("teacher.hidden", c.teacher.hidden);
    c.teacher.dropout = keys.num("teacher.dropout", c.teacher.dropout);
    c.teacher.norm = parse_norm_kind(keys.str("teacher.norm", to_string(c.teacher.norm)));
    c.teacher.leaky_slope = keys.num("teacher.leaky_slope", c.teacher.leaky_slope);
    c.teacher.power_steps = keys.size("teacher.power_steps", c.teacher.power_steps);
    c.teacher.teleport = keys.num("teacher.teleport", c.teacher.teleport);
    c.teacher_lr = keys.num("teacher.lr", c.teacher_lr);
    c.teacher_wd = keys.num("teacher.weight_decay", c.teacher_wd);
    c.teacher_epochs = keys.size("teacher.epochs", c.teacher_epochs);

    c.student.lr = keys.num("student.lr", c.student.lr);
    c.student.weight_decay = keys.num("student.weight_decay", c.student.weight_decay);
    c.student.max_epochs = keys.size("student.epochs", c.student.max_epochs);
    c.student.dropout = keys.num("student.dropout", c.student.dropout);
    c.student.gp_activation =
        parse_activation(keys.str("student.gp_activation", to_string(c.student.gp_activation)));
    c.student.inject = keys.boolean("student.inject", c.student.inject);
    c.weights.lambda = keys.num("student.lambda", c.weights.lambda);
    c.weights.beta = keys.num("student.beta", c.weights.beta);
    c.weights.eta = keys.num("student.eta", c.weights.eta);
    c.weights.zeta = keys.num("student.zeta", c.weights.zeta);
    c.weights.mu = parse_mu_kind(keys.str("student.mu", to_string(c.weights.mu)));
    c.weights.temperature = keys.num("student.temperature", c.weights.temperature);

    keys.reject_unknown();

    warn_range(warnings, "teacher.lr", c.teacher_lr, 1e-4, 1e-2);
    warn_range(warnings, "teacher.weight_decay", c.teacher_wd, 0.0, 1e-2);
    warn_range(warnings, "teacher.dropout", c.teacher.dropout, 0.0, 0.8);
    warn_range(warnings, "student.lr", c.student.lr, 1e-4, 1e-2);
    warn_range(warnings, "student.weight_decay", c.student.weight_decay, 0.0, 1e-2);
    warn_range(warnings, "student.dropout", c.student.dropout, 0.0, 0.8);
    warn_range(warnings, "student.lambda", c.weights.lambda, 0.0, 1.0);
    warn_range(warnings, "student.beta", c.weights.beta, 0.0, 10.0);
    warn_range(warnings, "student.eta", c.weights.eta, 0.0, 10.0);
    warn_range(warnings, "student.zeta", c.weights.zeta, 0.001, 1.0);
    return c;
}

RunConfig load_run_config(const std::string& path, std::vector<std::string>* warnings) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), warnings);
}

std::vector<double> eta_preset() { return {0.0, 1e-9, 1e-6, 1e-3, 1e-1, 1.0, 10.0}; }

std::vector<double> beta_preset() { return {0.0, 1e-9, 1e-6, 1e-3, 1e-1, 1.0, 10.0}; }

std::vector<double> grid_for_axis(const std::string& axis) {
    if (axis == "lr") return {0.0001, 0.0005, 0.001, 0.005, 0.01};
    if (axis == "weight_decay") return {0.0, 0.0001, 0.0005, 0.001, 0.005, 0.01};
    if (axis == "lambda") return {0.1, 0.4, 0.5, 0.6, 1.0};
    if (axis == "beta") return {1e-6, 5e-5, 1e-5, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0};
    if (axis == "eta") return {0.01, 0.1, 0.5, 1.0, 3.0, 10.0};
    if (axis == "zeta") return {0.001, 0.005, 0.1, 0.4, 1.0};
    if (axis == "dropout") return {0.0, 0.1, 0.3, 0.5, 0.8};
    throw ConfigError("unknown sweep axis '" + axis + "'");
}

}  // namespace tined
