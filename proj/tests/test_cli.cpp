#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kBin = TINED_BIN_PATH;

struct Workdir {
    fs::path dir;
    explicit Workdir(const std::string& name) : dir(fs::path("/tmp") / ("tined_cli_" + name)) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workdir() { fs::remove_all(dir); }
    std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

int run_cli(const std::string& args, const std::string& log_path) {
    std::string cmd = std::string(kBin) + " " + args + " >" + log_path + " 2>&1";
    int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

const char* kSmallConfig = R"(
[data]
n = 60
shift = 0.8

[teacher]
hidden = 8
epochs = 60

[student]
epochs = 60
)";

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    Workdir w("usage");
    CHECK(run_cli("--definitely-not-a-flag", w / "log1") == 2);
    CHECK(run_cli("frobnicate", w / "log2") == 2);
    CHECK(run_cli("", w / "log3") == 2);

    write_file(w / "bad.toml", "mode = \"oops\"\n");
    CHECK(run_cli("train-teacher --config " + (w / "bad.toml") + " --out " + (w / "out"),
                  w / "log4") == 2);
    std::string log = slurp(w / "log4");
    CHECK(log.find("mode") != std::string::npos);
}

TEST_CASE("missing dataset directories exit with code 3") {
    Workdir w("missing_data");
    CHECK(run_cli("train-teacher --data /tmp/tined_no_such_dir --out " + (w / "out"),
                  w / "log") == 3);
}

TEST_CASE("help exits cleanly") {
    Workdir w("help");
    CHECK(run_cli("--help", w / "log") == 0);
    std::string log = slurp(w / "log");
    CHECK(log.find("train-teacher") != std::string::npos);
    CHECK(log.find("verify-bound") != std::string::npos);
}

TEST_CASE("train, distill and eval agree and rerun byte-identically") {
    Workdir w("pipeline");
    write_file(w / "run.toml", kSmallConfig);
    const std::string common = " --config " + (w / "run.toml") + " --out " + (w / "out");

    REQUIRE(run_cli("train-teacher" + common, w / "t1") == 0);
    REQUIRE(run_cli("distill" + common, w / "d1") == 0);

    json teacher = json::parse(slurp(w / "out/teacher_summary.json"));
    json student = json::parse(slurp(w / "out/student_summary.json"));
    CHECK(teacher.at("test_acc").get<double>() >= 0.0);
    CHECK(student.at("weights").at("beta").get<double>() == 0.1);
    CHECK(student.at("test_acc").get<double>() >= teacher.at("test_acc").get<double>() - 0.5);

    // eval on the student checkpoint reproduces the summary number.
    REQUIRE(run_cli("eval --checkpoint " + (w / "out/student.ckpt") + " --set test" + common,
                    w / "e1") == 0);
    json ev = json::parse(slurp(w / "out/eval_test.json"));
    CHECK(ev.at("accuracy").get<double>() == student.at("test_acc").get<double>());

    // Rerunning into the same directory reproduces every byte.
    const std::string before_teacher = slurp(w / "out/teacher.ckpt");
    const std::string before_student = slurp(w / "out/student.ckpt");
    const std::string before_summary = slurp(w / "out/student_summary.json");
    const std::string before_profile = slurp(w / "out/de_profile.csv");
    const std::string before_history = slurp(w / "out/student_metrics.jsonl");
    REQUIRE(run_cli("train-teacher" + common, w / "t2") == 0);
    REQUIRE(run_cli("distill" + common, w / "d2") == 0);
    CHECK(slurp(w / "out/teacher.ckpt") == before_teacher);
    CHECK(slurp(w / "out/student.ckpt") == before_student);
    CHECK(slurp(w / "out/student_summary.json") == before_summary);
    CHECK(slurp(w / "out/de_profile.csv") == before_profile);
    CHECK(slurp(w / "out/student_metrics.jsonl") == before_history);

    // A second output directory matches up to the echoed checkpoint path.
    const std::string common2 = " --config " + (w / "run.toml") + " --out " + (w / "out2");
    REQUIRE(run_cli("train-teacher" + common2, w / "t3") == 0);
    REQUIRE(run_cli("distill" + common2, w / "d3") == 0);
    CHECK(slurp(w / "out/teacher.ckpt") == slurp(w / "out2/teacher.ckpt"));
    CHECK(slurp(w / "out/student.ckpt") == slurp(w / "out2/student.ckpt"));
    json a = json::parse(slurp(w / "out/student_summary.json"));
    json b = json::parse(slurp(w / "out2/student_summary.json"));
    a.erase("teacher_checkpoint");
    b.erase("teacher_checkpoint");
    CHECK(a == b);
    CHECK(slurp(w / "out/de_profile.csv") == slurp(w / "out2/de_profile.csv"));
}

TEST_CASE("distill with beta zero reports an identically zero ded term") {
    Workdir w("beta0");
    write_file(w / "run.toml", kSmallConfig);
    const std::string common = " --config " + (w / "run.toml") + " --out " + (w / "out");
    REQUIRE(run_cli("train-teacher" + common, w / "t") == 0);
    REQUIRE(run_cli("distill --beta 0" + common, w / "d") == 0);
    json student = json::parse(slurp(w / "out/student_summary.json"));
    CHECK(student.at("ded_zero_all_epochs").get<bool>());
    CHECK(student.at("ded_max_abs").get<double>() == 0.0);
    CHECK(student.at("weights").at("beta").get<double>() == 0.0);
}

TEST_CASE("gen-sbm output ingests and trains") {
    Workdir w("gensbm");
    REQUIRE(run_cli("gen-sbm --n 60 --shift 0.8 --out " + (w / "data"), w / "g") == 0);
    CHECK(fs::exists(w / "data/edges.txt"));
    CHECK(fs::exists(w / "data/features.csv"));
    CHECK(fs::exists(w / "data/labels.txt"));

    write_file(w / "train.toml", "[teacher]\nhidden = 8\nepochs = 40\n");
    REQUIRE(run_cli("train-teacher --config " + (w / "train.toml") + " --data " + (w / "data") +
                        " --out " + (w / "out"),
                    w / "t") == 0);
    json teacher = json::parse(slurp(w / "out/teacher_summary.json"));
    CHECK(teacher.at("train_acc").get<double>() > 0.5);
}

TEST_CASE("verify-bound reports every instance holding") {
    Workdir w("bound");
    REQUIRE(run_cli("verify-bound --random 10 --n 20 --p 0.2 --d 6 --out " + (w / "out"),
                    w / "v") == 0);
    json report = json::parse(slurp(w / "out/bound_report.json"));
    CHECK(report.at("passed").get<int>() == 10);
    CHECK(report.at("total").get<int>() == 10);
    CHECK(report.at("all_hold").get<bool>());
    CHECK(report.at("instances").size() == 10);
}

TEST_CASE("analyze-de emits one row per op") {
    Workdir w("de");
    write_file(w / "run.toml", kSmallConfig);
    REQUIRE(run_cli("analyze-de --seeds 0,1 --config " + (w / "run.toml") + " --out " +
                        (w / "out"),
                    w / "a") == 0);
    json rows = json::parse(slurp(w / "out/de_ratios.json"));
    REQUIRE(rows.at("rows").size() == 4);
    std::string csv = slurp(w / "out/de_ratios.csv");
    CHECK(csv.find("seed_0") != std::string::npos);
    CHECK(csv.find("seed_1") != std::string::npos);
}

TEST_CASE("production mode records isolation in the summary") {
    Workdir w("prod");
    write_file(w / "run.toml", std::string("mode = \"production\"\n") + kSmallConfig);
    const std::string common = " --config " + (w / "run.toml") + " --out " + (w / "out");
    REQUIRE(run_cli("train-teacher" + common, w / "t") == 0);
    REQUIRE(run_cli("distill" + common, w / "d") == 0);
    json student = json::parse(slurp(w / "out/student_summary.json"));
    CHECK(!student.at("inductive_rows_read").get<bool>());
    const double n_ind = student.at("n_ind").get<double>();
    const double n_tran = student.at("n_tran").get<double>();
    CHECK(n_ind > 0);
    const double weighted = (student.at("acc_ind").get<double>() * n_ind +
                             student.at("acc_tran").get<double>() * n_tran) /
                            (n_ind + n_tran);
    CHECK(student.at("acc_prod").get<double>() == doctest::Approx(weighted).epsilon(1e-12));
}
