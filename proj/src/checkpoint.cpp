#include "tined/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "tined/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace tined {

namespace {

using nlohmann::json;

constexpr char kMagic[6] = {'T', 'I', 'N', 'E', 'D', '1'};

void write_file(const std::string& path, const json& header,
                const std::vector<const DenseMatrix*>& matrices) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    const std::string head = header.dump();
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t len = head.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const DenseMatrix* m : matrices) {
        out.write(reinterpret_cast<const char*>(m->data.data()),
                  static_cast<std::streamsize>(m->data.size() * sizeof(double)));
    }
    if (!out) throw DataError("failed writing " + path);
}

json read_header(std::ifstream& in, const std::string& path) {
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError(path + ": not a checkpoint (bad magic)");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    if (!in || len == 0 || len > (1ull << 30))
        throw DataError(path + ": corrupt header length");
    std::string head(len, '\0');
    in.read(head.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError(path + ": truncated header");
    try {
        return json::parse(head);
    } catch (const json::exception& e) {
        throw DataError(path + ": corrupt header json: " + e.what());
    }
}

void read_matrix(std::ifstream& in, const std::string& path, DenseMatrix& m) {
    in.read(reinterpret_cast<char*>(m.data.data()),
            static_cast<std::streamsize>(m.data.size() * sizeof(double)));
    if (!in) throw DataError(path + ": truncated matrix data");
}

json matrix_entry(const Param& p) {
    return json{{"name", p.name},
                {"rows", p.value.rows},
                {"cols", p.value.cols},
                {"multiplier", p.multiplier}};
}

}  // namespace

void save_teacher(TeacherModel& t, const std::string& path) {
    json header;
    header["type"] = "teacher";
    header["kind"] = to_string(t.cfg.kind);
    header["layers"] = t.cfg.layers;
    header["hidden"] = t.cfg.hidden;
    header["dropout"] = t.cfg.dropout;
    header["norm"] = to_string(t.cfg.norm);
    header["leaky_slope"] = t.cfg.leaky_slope;
    header["power_steps"] = t.cfg.power_steps;
    header["teleport"] = t.cfg.teleport;
    header["in_dim"] = t.in_dim;
    header["num_classes"] = t.num_classes;
    json mats = json::array();
    std::vector<const DenseMatrix*> matrices;
    for (Param* p : t.params()) {
        mats.push_back(matrix_entry(*p));
        matrices.push_back(&p->value);
    }
    header["matrices"] = mats;
    write_file(path, header, matrices);
}

TeacherModel load_teacher(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    const json header = read_header(in, path);
    try {
        if (header.at("type").get<std::string>() != "teacher")
            throw DataError(path + ": not a teacher checkpoint");
        TeacherConfig cfg;
        cfg.kind = parse_teacher_kind(header.at("kind").get<std::string>());
        cfg.layers = header.at("layers").get<std::size_t>();
        cfg.hidden = header.at("hidden").get<std::size_t>();
        cfg.dropout = header.at("dropout").get<double>();
        cfg.norm = parse_norm_kind(header.at("norm").get<std::string>());
        cfg.leaky_slope = header.at("leaky_slope").get<double>();
        cfg.power_steps = header.at("power_steps").get<std::size_t>();
        cfg.teleport = header.at("teleport").get<double>();
        TeacherModel t = make_teacher(cfg, header.at("in_dim").get<std::size_t>(),
                                      header.at("num_classes").get<std::size_t>(), 0);
        const std::vector<Param*> params = t.params();
        const json& mats = header.at("matrices");
        if (mats.size() != params.size())
            throw DataError(path + ": matrix count does not match architecture");
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (mats[i].at("rows").get<std::size_t>() != params[i]->value.rows ||
                mats[i].at("cols").get<std::size_t>() != params[i]->value.cols)
                throw DataError(path + ": matrix " + std::to_string(i) + " shape mismatch");
            params[i]->multiplier = mats[i].at("multiplier").get<double>();
            read_matrix(in, path, params[i]->value);
        }
        return t;
    } catch (const json::exception& e) {
        throw DataError(path + ": malformed header: " + e.what());
    }
}

void save_student(StudentMLP& s, const std::string& path) {
    json header;
    header["type"] = "student";
    header["teacher_kind"] = to_string(s.teacher_kind);
    json layers = json::array();
    std::vector<const DenseMatrix*> matrices;
    for (StudentLayer& layer : s.layers) {
        layers.push_back(json{{"role", to_string(layer.role)},
                              {"act", to_string(layer.act)},
                              {"w", matrix_entry(layer.w)},
                              {"b", matrix_entry(layer.b)}});
        matrices.push_back(&layer.w.value);
        matrices.push_back(&layer.b.value);
    }
    header["layers"] = layers;
    write_file(path, header, matrices);
}

StudentMLP load_student(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    const json header = read_header(in, path);
    try {
        if (header.at("type").get<std::string>() != "student")
            throw DataError(path + ": not a student checkpoint");
        StudentMLP s;
        s.teacher_kind = parse_teacher_kind(header.at("teacher_kind").get<std::string>());
        for (const json& lj : header.at("layers")) {
            StudentLayer layer;
            layer.role = parse_layer_role(lj.at("role").get<std::string>());
            layer.act = parse_activation(lj.at("act").get<std::string>());
            const json& wj = lj.at("w");
            const json& bj = lj.at("b");
            layer.w = Param(wj.at("name").get<std::string>(),
                            DenseMatrix(wj.at("rows").get<std::size_t>(),
                                        wj.at("cols").get<std::size_t>()));
            layer.w.multiplier = wj.at("multiplier").get<double>();
            layer.b = Param(bj.at("name").get<std::string>(),
                            DenseMatrix(bj.at("rows").get<std::size_t>(),
                                        bj.at("cols").get<std::size_t>()));
            layer.b.multiplier = bj.at("multiplier").get<double>();
            s.layers.push_back(std::move(layer));
        }
        for (StudentLayer& layer : s.layers) {
            read_matrix(in, path, layer.w.value);
            read_matrix(in, path, layer.b.value);
        }
        return s;
    } catch (const json::exception& e) {
        throw DataError(path + ": malformed header: " + e.what());
    }
}

std::string checkpoint_type(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    const json header = read_header(in, path);
    try {
        return header.at("type").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(path + ": malformed header: " + e.what());
    }
}

}  // namespace tined
