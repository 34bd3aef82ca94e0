#include <doctest.h>

#include <cmath>

#include "tined/errors.hpp"
#include "tined/models.hpp"
#include "tined/rng.hpp"

using tined::Activation;
using tined::DenseMatrix;
using tined::ForwardOptions;
using tined::ForwardTrace;
using tined::Graph;
using tined::NodeId;
using tined::Tape;
using tined::TeacherConfig;
using tined::TeacherKind;
using tined::TeacherModel;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    tined::Rng rng(seed);
    DenseMatrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

DenseMatrix run_teacher(TeacherModel& t, const Graph& g, const DenseMatrix& x,
                        ForwardTrace* trace = nullptr) {
    Tape tape;
    NodeId logits = tined::teacher_forward(tape, t, g, tape.constant(x), {}, trace);
    return tape.value(logits);
}

}  // namespace

TEST_CASE("one-layer graphsage with identity-like weights sums self and mean") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GraphSAGE;
    cfg.layers = 1;
    TeacherModel t = tined::make_teacher(cfg, 1, 1, 0);
    // CAT(self, mean) is 2-dim; W = [[1],[1]] turns it into self + mean.
    t.layers[0].w.value = DenseMatrix::from_rows(2, 1, {1, 1});
    t.layers[0].b.value = DenseMatrix(1, 1);

    Graph g = tined::make_graph(2, {{0, 1}});
    DenseMatrix x = DenseMatrix::from_rows(2, 1, {1, 3});
    DenseMatrix out = run_teacher(t, g, x);
    CHECK(out.at(0, 0) == 4.0);  // 1 + 3
    CHECK(out.at(1, 0) == 4.0);  // 3 + 1
}

TEST_CASE("one-layer gcn on a path halves and mixes") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GCN;
    cfg.layers = 1;
    TeacherModel t = tined::make_teacher(cfg, 1, 1, 0);
    t.layers[0].w.value = DenseMatrix::from_rows(1, 1, {1});
    t.layers[0].b.value = DenseMatrix(1, 1);

    Graph g = tined::make_graph(2, {{0, 1}});
    DenseMatrix x = DenseMatrix::from_rows(2, 1, {0, 1});
    DenseMatrix out = run_teacher(t, g, x);
    // D̂^(-1/2)(A+I)D̂^(-1/2) on P2 is the constant 1/2 matrix.
    CHECK(out.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(out.at(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("gat with zero attention vector averages over the closed neighborhood") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GAT;
    cfg.layers = 1;
    TeacherModel t = tined::make_teacher(cfg, 1, 1, 0);
    t.layers[0].w.value = DenseMatrix::from_rows(1, 1, {1});
    t.layers[0].b.value = DenseMatrix(1, 1);
    for (double& v : t.layers[0].att.value.data) v = 0.0;  // uniform softmax

    Graph g = tined::make_graph(3, {{0, 1}, {1, 2}, {0, 2}});
    DenseMatrix x = DenseMatrix::from_rows(3, 1, {3, 6, 9});
    DenseMatrix out = run_teacher(t, g, x);
    for (std::size_t v = 0; v < 3; ++v)
        CHECK(out.at(v, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gat attention weights sum to one per node") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GAT;
    cfg.layers = 2;
    cfg.hidden = 4;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 7);
    Graph g = tined::make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
    Tape tape;
    NodeId z = tape.linear(tape.constant(random_matrix(4, 3, 1)), tape.param(t.layers[0].w),
                           tape.param(t.layers[0].b));
    NodeId alpha = tape.gat_attention(z, tape.param(t.layers[0].att), 0.2, g);
    const DenseMatrix& a = tape.value(alpha);
    tined::SelfLoopAdj adj = tined::self_loop_adjacency(g);
    for (std::size_t v = 0; v < 4; ++v) {
        double sum = 0.0;
        for (std::size_t s = adj.offsets[v]; s < adj.offsets[v + 1]; ++s) sum += a.at(s, 0);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("appnp with full teleport returns the linear stack output") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::APPNP;
    cfg.layers = 2;
    cfg.hidden = 4;
    cfg.teleport = 1.0;
    cfg.power_steps = 7;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 3);
    Graph g = tined::make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
    DenseMatrix x = random_matrix(4, 3, 4);
    DenseMatrix out = run_teacher(t, g, x);

    // Hand-run the pure linear bias-free stack.
    DenseMatrix h = x;
    for (std::size_t l = 0; l < 2; ++l) h = tined::matmul(h, t.layers[l].w.value);
    REQUIRE(out.same_shape(h));
    for (std::size_t i = 0; i < h.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(h.data[i]).epsilon(1e-12));
}

TEST_CASE("appnp power iteration matches a hand loop") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::APPNP;
    cfg.layers = 2;
    cfg.hidden = 5;
    cfg.teleport = 0.1;
    cfg.power_steps = 10;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 9);
    Graph g = tined::make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}});
    DenseMatrix x = random_matrix(5, 3, 10);
    DenseMatrix out = run_teacher(t, g, x);

    DenseMatrix h0 = x;
    for (std::size_t l = 0; l < 2; ++l) h0 = tined::matmul(h0, t.layers[l].w.value);
    DenseMatrix h = h0;
    for (std::size_t k = 0; k < 10; ++k) {
        DenseMatrix prop = tined::prop_apply(g, tined::PropKind::NormAdjSelfLoops, h);
        h = tined::add(tined::scale(prop, 0.9), tined::scale(h0, 0.1));
    }
    for (std::size_t i = 0; i < h.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(h.data[i]).epsilon(1e-12));
}

TEST_CASE("appnp rejects norm layers") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::APPNP;
    cfg.norm = tined::NormKind::Layer;
    CHECK_THROWS_AS(tined::make_teacher(cfg, 3, 2, 0), tined::ConfigError);
}

TEST_CASE("norm layers sit between linear and relu on hidden layers only") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GCN;
    cfg.layers = 2;
    cfg.hidden = 4;
    cfg.norm = tined::NormKind::Layer;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 11);
    CHECK(t.layers[0].has_norm);
    CHECK(!t.layers[1].has_norm);
    CHECK(t.layers[0].gamma.value.cols == 4);

    Graph g = tined::make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
    DenseMatrix out = run_teacher(t, g, random_matrix(4, 3, 12));
    CHECK(out.rows == 4);
    CHECK(out.cols == 2);
    for (double v : out.data) CHECK(std::isfinite(v));
}

TEST_CASE("dropout masks apply in training mode and are recorded pre-dropout") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GCN;
    cfg.layers = 2;
    cfg.hidden = 3;
    cfg.dropout = 0.5;
    TeacherModel t = tined::make_teacher(cfg, 2, 2, 13);
    Graph g = tined::make_graph(3, {{0, 1}, {1, 2}});
    DenseMatrix x = random_matrix(3, 2, 14);

    tined::Rng rng(15);
    std::vector<DenseMatrix> masks = tined::make_dropout_masks({2, 3}, 3, 0.5, rng);
    REQUIRE(masks.size() == 2);
    for (const DenseMatrix& m : masks) {
        for (double v : m.data) CHECK((v == 0.0 || v == 2.0));
    }

    ForwardOptions train_opts;
    train_opts.train = true;
    train_opts.dropout_masks = &masks;
    Tape tape;
    ForwardTrace trace;
    NodeId logits = tined::teacher_forward(tape, t, g, tape.constant(x), train_opts, &trace);
    (void)logits;
    // The first GP trace input must be the pre-dropout features.
    CHECK(tape.value(trace.ops[0].in).data == x.data);

    // Eval mode ignores dropout entirely.
    DenseMatrix eval_out = run_teacher(t, g, x);
    ForwardOptions eval_opts;
    Tape tape2;
    NodeId logits2 = tined::teacher_forward(tape2, t, g, tape2.constant(x), eval_opts, nullptr);
    CHECK(tape2.value(logits2).data == eval_out.data);
}

TEST_CASE("teacher trace alternates GP and FT per layer") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GraphSAGE;
    cfg.layers = 2;
    cfg.hidden = 4;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 16);
    Graph g = tined::make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
    Tape tape;
    ForwardTrace trace;
    tined::teacher_forward(tape, t, g, tape.constant(random_matrix(4, 3, 17)), {}, &trace);
    REQUIRE(trace.ops.size() == 4);
    CHECK(!trace.ops[0].is_ft);
    CHECK(trace.ops[1].is_ft);
    CHECK(!trace.ops[2].is_ft);
    CHECK(trace.ops[3].is_ft);
    CHECK(trace.ops[0].layer == 0);
    CHECK(trace.ops[2].layer == 1);
    // GraphSAGE GP output is the concatenated matrix, twice the input width.
    CHECK(tape.value(trace.ops[0].out).cols == 6);
}

TEST_CASE("make_teacher is deterministic and seed-sensitive") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GAT;
    cfg.layers = 2;
    cfg.hidden = 4;
    TeacherModel a = tined::make_teacher(cfg, 3, 2, 5);
    TeacherModel b = tined::make_teacher(cfg, 3, 2, 5);
    TeacherModel c = tined::make_teacher(cfg, 3, 2, 6);
    CHECK(a.layers[0].w.value.data == b.layers[0].w.value.data);
    CHECK(a.layers[0].att.value.data == b.layers[0].att.value.data);
    CHECK(a.layers[0].w.value.data != c.layers[0].w.value.data);
}

TEST_CASE("inject_teacher copies FT weights verbatim with multiplier eta") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GraphSAGE;
    cfg.layers = 2;
    cfg.hidden = 4;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 18);
    tined::StudentMLP s = tined::inject_teacher(t, 0.25, 99);

    REQUIRE(s.layers.size() == 4);
    CHECK(s.layers[0].role == tined::LayerRole::GpEmulating);
    CHECK(s.layers[1].role == tined::LayerRole::FtInjected);
    CHECK(s.layers[2].role == tined::LayerRole::GpEmulating);
    CHECK(s.layers[3].role == tined::LayerRole::FtInjected);

    CHECK(s.layers[1].w.value.data == t.layers[0].w.value.data);
    CHECK(s.layers[1].b.value.data == t.layers[0].b.value.data);
    CHECK(s.layers[3].w.value.data == t.layers[1].w.value.data);
    CHECK(s.layers[1].w.multiplier == 0.25);
    CHECK(s.layers[1].b.multiplier == 0.25);
    CHECK(s.layers[0].w.multiplier == 1.0);

    // GP slots emulate the concatenation: 3 -> 6 and 4 -> 8.
    CHECK(s.layers[0].w.value.rows == 3);
    CHECK(s.layers[0].w.value.cols == 6);
    CHECK(s.layers[2].w.value.rows == 4);
    CHECK(s.layers[2].w.value.cols == 8);

    // Activations: GP relu by default, FT mirrors teacher (relu then identity).
    CHECK(s.layers[0].act == Activation::ReLU);
    CHECK(s.layers[1].act == Activation::ReLU);
    CHECK(s.layers[3].act == Activation::Identity);
}

TEST_CASE("appnp student is the injected stack plus one gp layer") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::APPNP;
    cfg.layers = 2;
    cfg.hidden = 4;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 19);
    tined::StudentMLP s = tined::inject_teacher(t, 0.5, 7);
    REQUIRE(s.layers.size() == 3);
    CHECK(s.layers[0].role == tined::LayerRole::FtInjected);
    CHECK(s.layers[1].role == tined::LayerRole::FtInjected);
    CHECK(s.layers[2].role == tined::LayerRole::GpEmulating);
    // The teacher stack is pure linear, so every injected activation is
    // identity, including the final GP slot.
    CHECK(s.layers[0].act == Activation::Identity);
    CHECK(s.layers[1].act == Activation::Identity);
    CHECK(s.layers[2].act == Activation::Identity);
    CHECK(s.layers[2].w.value.rows == 2);
    CHECK(s.layers[2].w.value.cols == 2);
    // APPNP FTs are bias-free; the injected bias slots stay zero.
    for (double v : s.layers[0].b.value.data) CHECK(v == 0.0);
}

TEST_CASE("injected FT layers reproduce teacher FT outputs bitwise") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GraphSAGE;
    cfg.layers = 2;
    cfg.hidden = 4;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 20);
    tined::StudentMLP s = tined::inject_teacher(t, 0.5, 21);

    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        // Layer 0 FT input: 6 columns (concatenated), layer 1 FT input: 8.
        for (std::size_t l = 0; l < 2; ++l) {
            const std::size_t in_cols = s.layers[2 * l + 1].w.value.rows;
            DenseMatrix h = random_matrix(5, in_cols, 100 + trial * 2 + l);

            Tape teacher_tape;
            NodeId tf = teacher_tape.linear(teacher_tape.constant(h),
                                            teacher_tape.param(t.layers[l].w),
                                            teacher_tape.param(t.layers[l].b));
            if (l + 1 < 2) tf = teacher_tape.relu(tf);

            Tape student_tape;
            tined::StudentLayer& sl = s.layers[2 * l + 1];
            NodeId sf = student_tape.linear(student_tape.constant(h),
                                            student_tape.param(sl.w), student_tape.param(sl.b));
            if (sl.act == Activation::ReLU) sf = student_tape.relu(sf);

            CHECK(teacher_tape.value(tf).data == student_tape.value(sf).data);
        }
    }
}

TEST_CASE("student skeleton shares gp init with the injected student") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GraphSAGE;
    cfg.layers = 2;
    cfg.hidden = 4;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 22);
    tined::StudentMLP injected = tined::inject_teacher(t, 0.5, 23);
    tined::StudentMLP skeleton = tined::make_student_skeleton(t, 23);
    CHECK(skeleton.layers[0].w.value.data == injected.layers[0].w.value.data);
    CHECK(skeleton.layers[2].w.value.data == injected.layers[2].w.value.data);
    CHECK(skeleton.layers[1].role == tined::LayerRole::FtRandom);
    CHECK(skeleton.layers[1].w.multiplier == 1.0);
    CHECK(skeleton.layers[1].w.value.data != injected.layers[1].w.value.data);
}

TEST_CASE("student_forward runs the fc stack with recorded trace") {
    TeacherConfig cfg;
    cfg.kind = TeacherKind::GCN;
    cfg.layers = 2;
    cfg.hidden = 4;
    TeacherModel t = tined::make_teacher(cfg, 3, 2, 24);
    tined::StudentMLP s = tined::inject_teacher(t, 0.5, 25);
    Tape tape;
    ForwardTrace trace;
    NodeId out = tined::student_forward(tape, s, tape.constant(random_matrix(6, 3, 26)), {},
                                        &trace);
    CHECK(tape.value(out).rows == 6);
    CHECK(tape.value(out).cols == 2);
    REQUIRE(trace.ops.size() == 4);
    CHECK(!trace.ops[0].is_ft);
    CHECK(trace.ops[1].is_ft);
}

TEST_CASE("accuracy breaks ties toward the lowest class") {
    DenseMatrix logits = DenseMatrix::from_rows(3, 3,
                                                {1, 1, 1,    // tie -> class 0
                                                 0, 2, 2,    // tie -> class 1
                                                 0, 1, 5});  // clear -> class 2
    const std::vector<int> labels = {0, 1, 2};
    CHECK(tined::accuracy_from_logits(logits, labels, {0, 1, 2}) == 1.0);
    const std::vector<int> wrong = {1, 2, 2};
    CHECK(tined::accuracy_from_logits(logits, wrong, {0, 1, 2}) ==
          doctest::Approx(1.0 / 3.0));
}

TEST_CASE("name parsing round trips") {
    using tined::parse_activation;
    using tined::parse_norm_kind;
    using tined::parse_teacher_kind;
    CHECK(parse_teacher_kind("graphsage") == TeacherKind::GraphSAGE);
    CHECK(parse_teacher_kind("sage") == TeacherKind::GraphSAGE);
    CHECK(parse_teacher_kind("gcn") == TeacherKind::GCN);
    CHECK(parse_teacher_kind("gat") == TeacherKind::GAT);
    CHECK(parse_teacher_kind("appnp") == TeacherKind::APPNP);
    CHECK_THROWS_AS(parse_teacher_kind("transformer"), tined::ConfigError);
    CHECK(parse_activation("identity") == Activation::Identity);
    CHECK_THROWS_AS(parse_activation("gelu"), tined::ConfigError);
    CHECK(parse_norm_kind("batch") == tined::NormKind::Batch);
    CHECK_THROWS_AS(parse_norm_kind("instance"), tined::ConfigError);
    for (TeacherKind k : {TeacherKind::GraphSAGE, TeacherKind::GCN, TeacherKind::GAT,
                          TeacherKind::APPNP})
        CHECK(parse_teacher_kind(tined::to_string(k)) == k);
}
