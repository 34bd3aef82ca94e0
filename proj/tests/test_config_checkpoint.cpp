#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "tined/checkpoint.hpp"
#include "tined/config.hpp"
#include "tined/errors.hpp"
#include "tined/models.hpp"

using tined::RunConfig;

namespace {

RunConfig parse(const std::string& text, std::vector<std::string>* warnings = nullptr) {
    std::vector<std::string> sink;
    return tined::parse_run_config(text, warnings ? warnings : &sink);
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/tined_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("empty config yields the benchmark defaults") {
    RunConfig cfg = parse("");
    CHECK(cfg.mode == "transductive");
    CHECK(cfg.seed == 0);
    CHECK(cfg.seeds.empty());
    CHECK(cfg.source == "sbm");
    CHECK(cfg.sbm_n == 200);
    CHECK(cfg.sbm_p_in == 0.1);
    CHECK(cfg.sbm_p_out == 0.01);
    CHECK(cfg.sbm_dim == 16);
    CHECK(cfg.sbm_shift == 0.625);
    CHECK(cfg.labels_per_class == 5);
    CHECK(cfg.teacher.kind == tined::TeacherKind::GraphSAGE);
    CHECK(cfg.teacher.hidden == 64);
    CHECK(cfg.teacher_lr == 0.01);
    CHECK(cfg.teacher_wd == 5e-4);
    CHECK(cfg.teacher_epochs == 500);
    CHECK(cfg.weights.lambda == 0.5);
    CHECK(cfg.weights.beta == 0.1);
    CHECK(cfg.weights.eta == 0.5);
    CHECK(cfg.weights.zeta == 1.0);
    CHECK(cfg.weights.mu == tined::MuKind::Identity);
    CHECK(cfg.student.lr == 0.01);
    CHECK(cfg.student.weight_decay == 5e-4);
    CHECK(cfg.student.max_epochs == 500);
    CHECK(cfg.student.inject);
}

TEST_CASE("a full config file overrides every section") {
    const std::string text = R"(
# run header
mode = "production"
seed = 7
seeds = [3, 4, 5]
out = "results"

[data]
source = "sbm"
n = 120
blocks = 3
p_in = 0.2
p_out = 0.05
dim = 12
shift = 0.8
labels_per_class = 4
val_per_class = 6

[teacher]
kind = "gat"
layers = 2
hidden = 32
dropout = 0.5
norm = "layer"
leaky_slope = 0.1
lr = 0.005
weight_decay = 0.001
epochs = 300

[student]
lr = 0.001
weight_decay = 0.0001
epochs = 250
dropout = 0.1
gp_activation = "identity"
inject = false
lambda = 0.4
beta = 0.05
eta = 1.0
zeta = 0.4
mu = "sqrt"
temperature = 2.0
)";
    std::vector<std::string> warnings;
    RunConfig cfg = parse(text, &warnings);
    CHECK(warnings.empty());
    CHECK(cfg.mode == "production");
    CHECK(cfg.seed == 7);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{3, 4, 5});
    CHECK(cfg.out_dir == "results");
    CHECK(cfg.sbm_n == 120);
    CHECK(cfg.sbm_blocks == 3);
    CHECK(cfg.sbm_p_in == 0.2);
    CHECK(cfg.sbm_shift == 0.8);
    CHECK(cfg.val_per_class == 6);
    CHECK(cfg.teacher.kind == tined::TeacherKind::GAT);
    CHECK(cfg.teacher.hidden == 32);
    CHECK(cfg.teacher.dropout == 0.5);
    CHECK(cfg.teacher.norm == tined::NormKind::Layer);
    CHECK(cfg.teacher.leaky_slope == 0.1);
    CHECK(cfg.teacher_lr == 0.005);
    CHECK(cfg.teacher_epochs == 300);
    CHECK(cfg.student.lr == 0.001);
    CHECK(cfg.student.max_epochs == 250);
    CHECK(cfg.student.dropout == 0.1);
    CHECK(cfg.student.gp_activation == tined::Activation::Identity);
    CHECK(!cfg.student.inject);
    CHECK(cfg.weights.lambda == 0.4);
    CHECK(cfg.weights.beta == 0.05);
    CHECK(cfg.weights.eta == 1.0);
    CHECK(cfg.weights.zeta == 0.4);
    CHECK(cfg.weights.mu == tined::MuKind::Sqrt);
    CHECK(cfg.weights.temperature == 2.0);
}

TEST_CASE("unknown keys report their line number") {
    try {
        parse("seed = 1\n[teacher]\nhiden = 3\n");
        FAIL("expected ConfigError");
    } catch (const tined::ConfigError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        CHECK(std::string(e.what()).find("hiden") != std::string::npos);
    }
}

TEST_CASE("malformed lines are config errors") {
    CHECK_THROWS_AS(parse("seed = 1\nseed = 2\n"), tined::ConfigError);  // duplicate
    CHECK_THROWS_AS(parse("seed = abc\n"), tined::ConfigError);         // bad number
    CHECK_THROWS_AS(parse("seed\n"), tined::ConfigError);               // no assignment
    CHECK_THROWS_AS(parse("[teacher\nhidden = 3\n"), tined::ConfigError);
    CHECK_THROWS_AS(parse("mode = \"oops\"\n"), tined::ConfigError);
    CHECK_THROWS_AS(parse("mode = 3\n"), tined::ConfigError);           // type mismatch
    CHECK_THROWS_AS(parse("seeds = [1, 2\n"), tined::ConfigError);      // unterminated list
    CHECK_THROWS_AS(parse("[teacher]\nkind = \"transformer\"\n"), tined::ConfigError);
    CHECK_THROWS_AS(parse("[student]\nmu = \"cube\"\n"), tined::ConfigError);
}

TEST_CASE("values outside the documented search space warn but parse") {
    std::vector<std::string> warnings;
    RunConfig cfg = parse("[student]\nlambda = 7.5\neta = 50\n", &warnings);
    CHECK(cfg.weights.lambda == 7.5);
    CHECK(cfg.weights.eta == 50.0);
    REQUIRE(warnings.size() == 2);
    CHECK(warnings[0].find("lambda") != std::string::npos);
    CHECK(warnings[1].find("eta") != std::string::npos);

    warnings.clear();
    parse("[student]\nlambda = 0.5\neta = 10\n[teacher]\nlr = 0.0001\n", &warnings);
    CHECK(warnings.empty());
}

TEST_CASE("published sensitivity presets") {
    const std::vector<double> expected{0.0, 1e-9, 1e-6, 1e-3, 1e-1, 1.0, 10.0};
    CHECK(tined::eta_preset() == expected);
    CHECK(tined::beta_preset() == expected);
}

TEST_CASE("search-space grids per axis") {
    CHECK(tined::grid_for_axis("lr") ==
          std::vector<double>{0.0001, 0.0005, 0.001, 0.005, 0.01});
    CHECK(tined::grid_for_axis("weight_decay") ==
          std::vector<double>{0.0, 0.0001, 0.0005, 0.001, 0.005, 0.01});
    CHECK(tined::grid_for_axis("lambda") == std::vector<double>{0.1, 0.4, 0.5, 0.6, 1.0});
    CHECK(tined::grid_for_axis("beta") ==
          std::vector<double>{1e-6, 5e-5, 1e-5, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0});
    CHECK(tined::grid_for_axis("eta") == std::vector<double>{0.01, 0.1, 0.5, 1.0, 3.0, 10.0});
    CHECK(tined::grid_for_axis("zeta") == std::vector<double>{0.001, 0.005, 0.1, 0.4, 1.0});
    CHECK(tined::grid_for_axis("dropout") == std::vector<double>{0.0, 0.1, 0.3, 0.5, 0.8});
    CHECK_THROWS_AS(tined::grid_for_axis("momentum"), tined::ConfigError);
}

TEST_CASE("teacher checkpoints round trip bitwise") {
    tined::TeacherConfig cfg;
    cfg.kind = tined::TeacherKind::GAT;
    cfg.layers = 2;
    cfg.hidden = 6;
    cfg.norm = tined::NormKind::Layer;
    cfg.leaky_slope = 0.17;
    tined::TeacherModel t = tined::make_teacher(cfg, 5, 3, 42);
    t.layers[0].w.multiplier = 0.25;

    TempFile f("teacher.ckpt");
    tined::save_teacher(t, f.path);
    CHECK(tined::checkpoint_type(f.path) == "teacher");

    tined::TeacherModel r = tined::load_teacher(f.path);
    CHECK(r.cfg.kind == cfg.kind);
    CHECK(r.cfg.hidden == cfg.hidden);
    CHECK(r.cfg.norm == cfg.norm);
    CHECK(r.cfg.leaky_slope == cfg.leaky_slope);
    CHECK(r.in_dim == 5);
    CHECK(r.num_classes == 3);
    REQUIRE(r.layers.size() == t.layers.size());
    for (std::size_t l = 0; l < t.layers.size(); ++l) {
        CHECK(r.layers[l].w.value.data == t.layers[l].w.value.data);
        CHECK(r.layers[l].b.value.data == t.layers[l].b.value.data);
        CHECK(r.layers[l].w.multiplier == t.layers[l].w.multiplier);
        CHECK(r.layers[l].has_att == t.layers[l].has_att);
        CHECK(r.layers[l].has_norm == t.layers[l].has_norm);
        if (t.layers[l].has_att) CHECK(r.layers[l].att.value.data == t.layers[l].att.value.data);
        if (t.layers[l].has_norm) {
            CHECK(r.layers[l].gamma.value.data == t.layers[l].gamma.value.data);
            CHECK(r.layers[l].beta.value.data == t.layers[l].beta.value.data);
        }
    }
}

TEST_CASE("appnp checkpoints keep the propagation settings") {
    tined::TeacherConfig cfg;
    cfg.kind = tined::TeacherKind::APPNP;
    cfg.layers = 3;
    cfg.hidden = 4;
    cfg.power_steps = 7;
    cfg.teleport = 0.2;
    tined::TeacherModel t = tined::make_teacher(cfg, 6, 2, 9);

    TempFile f("appnp.ckpt");
    tined::save_teacher(t, f.path);
    tined::TeacherModel r = tined::load_teacher(f.path);
    CHECK(r.cfg.power_steps == 7);
    CHECK(r.cfg.teleport == 0.2);
    CHECK(!r.layers[0].has_bias);
    for (std::size_t l = 0; l < t.layers.size(); ++l)
        CHECK(r.layers[l].w.value.data == t.layers[l].w.value.data);
}

TEST_CASE("student checkpoints preserve roles, activations and multipliers") {
    tined::TeacherConfig cfg;
    cfg.hidden = 6;
    tined::TeacherModel t = tined::make_teacher(cfg, 5, 3, 1);
    tined::StudentMLP s = tined::inject_teacher(t, 0.37, 2);

    TempFile f("student.ckpt");
    tined::save_student(s, f.path);
    CHECK(tined::checkpoint_type(f.path) == "student");

    tined::StudentMLP r = tined::load_student(f.path);
    REQUIRE(r.layers.size() == s.layers.size());
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        CHECK(r.layers[l].role == s.layers[l].role);
        CHECK(r.layers[l].act == s.layers[l].act);
        CHECK(r.layers[l].w.value.data == s.layers[l].w.value.data);
        CHECK(r.layers[l].b.value.data == s.layers[l].b.value.data);
        CHECK(r.layers[l].w.multiplier == s.layers[l].w.multiplier);
        CHECK(r.layers[l].b.multiplier == s.layers[l].b.multiplier);
    }
}

TEST_CASE("corrupt checkpoints are data errors") {
    TempFile f("corrupt.ckpt");
    {
        std::ofstream out(f.path, std::ios::binary);
        out << "NOTTINED and some garbage";
    }
    CHECK_THROWS_AS(tined::load_teacher(f.path), tined::DataError);
    CHECK_THROWS_AS(tined::checkpoint_type(f.path), tined::DataError);

    // Valid header, truncated payload.
    tined::TeacherModel t = tined::make_teacher({}, 4, 2, 3);
    tined::save_teacher(t, f.path);
    std::ifstream in(f.path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    {
        std::ofstream out(f.path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
    }
    CHECK_THROWS_AS(tined::load_teacher(f.path), tined::DataError);

    CHECK_THROWS_AS(tined::load_teacher("/tmp/tined_test_missing.ckpt"), tined::DataError);
}

TEST_CASE("loading the wrong checkpoint kind is a data error") {
    tined::TeacherModel t = tined::make_teacher({}, 4, 2, 3);
    tined::StudentMLP s = tined::inject_teacher(t, 0.5, 4);

    TempFile ft("kind_teacher.ckpt");
    TempFile fs("kind_student.ckpt");
    tined::save_teacher(t, ft.path);
    tined::save_student(s, fs.path);
    CHECK_THROWS_AS(tined::load_student(ft.path), tined::DataError);
    CHECK_THROWS_AS(tined::load_teacher(fs.path), tined::DataError);
}
