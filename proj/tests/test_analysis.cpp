#include <doctest.h>

#include <cmath>

#include "tined/analysis.hpp"
#include "tined/dataset.hpp"
#include "tined/distill.hpp"
#include "tined/errors.hpp"
#include "tined/graph.hpp"
#include "tined/rng.hpp"

using tined::DenseMatrix;
using tined::Graph;
using tined::LaplacianKind;
using tined::TheoremReport;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    tined::Rng rng(seed);
    DenseMatrix m(r, c);
    for (double& v : m.data) v = rng.normal();
    return m;
}

}  // namespace

TEST_CASE("square invertible embeddings emulate propagation exactly") {
    // With H square and invertible, W* = H^{-1} L H reproduces LH.
    Graph g = tined::make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
    DenseMatrix h = random_matrix(4, 4, 2);
    TheoremReport r = tined::verify_theorem1(g, h);
    CHECK(r.relative_error <= 1e-9);
    CHECK(r.bound_holds);
}

TEST_CASE("lambda_max of the path on two nodes is two") {
    Graph g = tined::make_graph(2, {{0, 1}});
    TheoremReport r = tined::verify_theorem1(g, random_matrix(2, 1, 3));
    CHECK(r.lambda_max == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("the bound holds on random graphs for both operators") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        tined::DatasetBundle data = tined::generate_er(25, 0.2, 6, seed);
        for (LaplacianKind kind :
             {LaplacianKind::Combinatorial, LaplacianKind::NormalizedWithSelfLoops}) {
            TheoremReport r = tined::verify_theorem1(data.graph, data.features, kind);
            CHECK(r.bound_holds);
            CHECK(r.relative_error <= r.lambda_max + 1e-9);
            CHECK(r.relative_error >= 0.0);
        }
    }
}

TEST_CASE("the relative error is invariant under column permutation") {
    tined::DatasetBundle data = tined::generate_er(20, 0.25, 5, 7);
    TheoremReport base = tined::verify_theorem1(data.graph, data.features);

    DenseMatrix permuted(20, 5);
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < 5; ++j) permuted.at(i, j) = data.features.at(i, perm[j]);
    TheoremReport shuffled = tined::verify_theorem1(data.graph, permuted);
    CHECK(shuffled.relative_error ==
          doctest::Approx(base.relative_error).epsilon(1e-12));
    CHECK(shuffled.lambda_max == base.lambda_max);
}

TEST_CASE("rank-deficient embeddings are rejected") {
    Graph g = tined::make_graph(4, {{0, 1}, {1, 2}, {2, 3}});
    DenseMatrix h = random_matrix(4, 2, 11);
    DenseMatrix dup(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        dup.at(i, 0) = h.at(i, 0);
        dup.at(i, 1) = h.at(i, 1);
        dup.at(i, 2) = h.at(i, 0);  // duplicate column
    }
    CHECK_THROWS_AS(tined::verify_theorem1(g, dup), tined::RankError);
}

TEST_CASE("approximation errors are finite for an injected student") {
    tined::DatasetBundle data = tined::generate_sbm(50, 2, 0.15, 0.02, 8, 0.7, 5);
    tined::SplitSpec split = tined::make_transductive_split(50, 5, 5, data.labels, 5);
    tined::TrainView view = tined::full_view(data, split);

    tined::TeacherConfig tcfg;
    tcfg.hidden = 8;
    tined::TrainConfig tc;
    tc.max_epochs = 40;
    tined::TeacherModel teacher = tined::train_teacher(tcfg, view, tc, 5, nullptr);

    tined::LossWeights weights;
    tined::DistillResult res;
    tined::StudentMLP s = tined::distill_student(teacher, view, weights, tc, 5, &res);

    std::vector<tined::ApproximationRow> rows =
        tined::approximation_error_table(teacher, s, view.graph, view.features);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].layer == 0);
    CHECK(rows[1].layer == 1);
    for (const auto& row : rows) {
        CHECK(std::isfinite(row.err));
        CHECK(row.err >= 0.0);
    }
}

TEST_CASE("single-teacher de report lists every op with one sample each") {
    tined::DatasetBundle data = tined::generate_sbm(40, 2, 0.15, 0.03, 8, 0.7, 6);
    tined::TeacherConfig tcfg;
    tcfg.hidden = 8;
    tined::TeacherModel teacher = tined::make_teacher(tcfg, 8, 2, 6);

    std::vector<tined::DeRatioRow> rows =
        tined::de_ratio_report(teacher, data.graph, data.features);
    REQUIRE(rows.size() == 4);  // GP/FT per layer, two layers
    for (const auto& row : rows) {
        REQUIRE(row.per_seed.size() == 1);
        CHECK(row.mean_ratio == row.per_seed[0]);
        CHECK(std::isfinite(row.mean_ratio));
    }
    CHECK(!rows[0].is_ft);
    CHECK(rows[1].is_ft);
    CHECK(rows[0].layer == 0);
    CHECK(rows[2].layer == 1);
}

TEST_CASE("multi-seed de report averages per-seed ratios") {
    tined::DatasetBundle data = tined::generate_sbm(40, 2, 0.15, 0.03, 8, 0.7, 8);
    tined::SplitSpec split = tined::make_transductive_split(40, 5, 5, data.labels, 8);
    tined::TrainView view = tined::full_view(data, split);

    tined::TeacherConfig tcfg;
    tcfg.hidden = 8;
    tined::TrainConfig tc;
    tc.max_epochs = 20;
    std::vector<tined::DeRatioRow> rows = tined::de_ratio_report(tcfg, view, tc, {0, 1, 2});
    REQUIRE(rows.size() == 4);
    for (const auto& row : rows) {
        REQUIRE(row.per_seed.size() == 3);
        double mean = 0.0;
        for (double v : row.per_seed) mean += v;
        mean /= 3.0;
        CHECK(row.mean_ratio == doctest::Approx(mean).epsilon(1e-12));
    }

    // Same seeds give the same report.
    std::vector<tined::DeRatioRow> again = tined::de_ratio_report(tcfg, view, tc, {0, 1, 2});
    for (std::size_t i = 0; i < rows.size(); ++i)
        CHECK(rows[i].per_seed == again[i].per_seed);
}
