#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "otdg/cli.hpp"
#include "otdg/ot.hpp"
#include "otdg/rng.hpp"

using namespace otdg;
using namespace otdg::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    std::string path;
    explicit TempDir(const std::string& name) : path("/tmp/otdg_cli_" + name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kTinyTrain = R"({
  "method": "wbae",
  "alpha": 0.0005,
  "beta": 0.0005,
  "lr": 0.01,
  "optimizer": "adam",
  "batch": 16,
  "epochs": 2,
  "feature_dim": 4,
  "hidden": 16,
  "sinkhorn_unroll": 15,
  "bary_outer_iters": 8,
  "seed": 3,
  "dataset": {"type": "gauss_mixture", "angles_deg": [0, 40], "n_per_domain": 50, "noise_sd": 0.4, "seed": 1},
  "unseen": "rot40",
  "out_dir": "OUTDIR"
})";

std::string config_with_out(const std::string& text, const std::string& out_dir) {
    std::string s = text;
    auto pos = s.find("OUTDIR");
    REQUIRE(pos != std::string::npos);
    s.replace(pos, 6, out_dir);
    return s;
}

}  // namespace

TEST_CASE("experiment config: defaults mirror the hyper-parameter table") {
    auto cfg = parse_experiment_config(R"({"dataset": {"type": "gauss_mixture"}})");
    CHECK(cfg.train.lr == 5e-5);
    CHECK(cfg.train.batch == 32);
    CHECK(cfg.train.epochs == 40);
    CHECK(cfg.train.delta == 0.1);
    CHECK(cfg.train.epsilon == 0.5);
    CHECK(cfg.train.alpha == 1e-4);
    CHECK(cfg.train.beta == 1e-4);
    CHECK(cfg.train.method == dg::Method::wbae);
    CHECK(cfg.train.encoder_update == dg::EncoderUpdate::objective);
}

TEST_CASE("experiment config: unknown keys and bad values are rejected with field messages") {
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"learning_rate": 0.1})"),
                         doctest::Contains("unknown key 'learning_rate'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"dataset": {"kind": "csv"}})"),
                         doctest::Contains("unknown key 'kind'"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"epsilon": 0.0})"), doctest::Contains("epsilon"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"method": "wbgan"})"), doctest::Contains("wbgan"),
                         std::runtime_error);
    CHECK_THROWS_AS(parse_experiment_config("not json"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"lr": "fast"})"), doctest::Contains("wrong type"), ConfigError);
}

TEST_CASE("point cloud csv: round trip and schema errors") {
    TempDir dir("cloud");
    Tensor pts = Tensor::from_rows({{0.25, -1.5}, {2.0, 0.125}});
    auto m = meas::EmpiricalMeasure(pts, {0.25, 0.75});
    save_cloud_csv(m, dir.path + "/c.csv");
    auto back = load_cloud_csv(dir.path + "/c.csv");
    CHECK(max_abs_diff(back.points, m.points) == 0.0);
    CHECK(back.weights == m.weights);

    std::ofstream(dir.path + "/bad.csv") << "a,b,weight\n1,2,0.5\n";
    CHECK_THROWS_AS(load_cloud_csv(dir.path + "/bad.csv"), data::CsvError);
}

TEST_CASE("model binary: round trip with magic and version") {
    TempDir dir("model");
    auto m = dg::Model::init(3, 8, 2, 2, true, 77);
    save_model(m, dir.path + "/m.bin");
    auto back = load_model(dir.path + "/m.bin");
    CHECK(back.input_dim == 3);
    CHECK(back.has_decoder);
    REQUIRE(back.params.size() == m.params.size());
    for (size_t i = 0; i < m.params.size(); ++i) {
        CHECK(back.params[i].id == m.params[i].id);
        CHECK(back.params[i].value.data == m.params[i].value.data);
    }
    std::ofstream(dir.path + "/junk.bin") << "NOTMAGIC garbage";
    CHECK_THROWS(load_model(dir.path + "/junk.bin"));
}

TEST_CASE("cmd_train: emits the three artifacts and a provenance-carrying report") {
    TempDir dir("train");
    auto cfg = parse_experiment_config(config_with_out(kTinyTrain, dir.path));
    CHECK(cmd_train(cfg) == kExitOk);
    CHECK(fs::exists(dir.path + "/run_report.json"));
    CHECK(fs::exists(dir.path + "/metrics.csv"));
    CHECK(fs::exists(dir.path + "/model.bin"));

    std::string report = slurp(dir.path + "/run_report.json");
    CHECK(report.find("\"format_version\"") != std::string::npos);
    CHECK(report.find("\"config\"") != std::string::npos);
    CHECK(report.find("\"test_accuracy\"") != std::string::npos);

    std::string metrics = slurp(dir.path + "/metrics.csv");
    CHECK(metrics.rfind("epoch,L_c,L_wb,L_aux,val_acc\n", 0) == 0);

    auto model = load_model(dir.path + "/model.bin");
    CHECK(model.input_dim == 2);
    CHECK(model.feature_dim == 4);
}

TEST_CASE("cmd_train: rerun with identical config is byte-identical") {
    TempDir d1("rera"), d2("rerb");
    auto c1 = parse_experiment_config(config_with_out(kTinyTrain, d1.path));
    auto c2 = parse_experiment_config(config_with_out(kTinyTrain, d2.path));
    CHECK(cmd_train(c1) == kExitOk);
    CHECK(cmd_train(c2) == kExitOk);
    CHECK(slurp(d1.path + "/metrics.csv") == slurp(d2.path + "/metrics.csv"));
}

TEST_CASE("cmd_train: unknown unseen domain is a config error") {
    TempDir dir("badunseen");
    auto cfg = parse_experiment_config(config_with_out(kTinyTrain, dir.path));
    cfg.unseen = "rot99";
    CHECK_THROWS_AS(cmd_train(cfg), ConfigError);
}

TEST_CASE("cmd_loo: table has one row per domain plus the average") {
    TempDir dir("loo");
    auto cfg = parse_experiment_config(config_with_out(kTinyTrain, dir.path));
    cfg.train.method = dg::Method::erm;
    cfg.train.epochs = 1;
    cfg.seeds = {1, 2, 3};
    CHECK(cmd_loo(cfg) == kExitOk);
    std::string table = slurp(dir.path + "/loo_table.csv");
    CHECK(table.find("rot0") != std::string::npos);
    CHECK(table.find("rot40") != std::string::npos);
    CHECK(table.find("Avg") != std::string::npos);
    int lines = 0;
    for (char c : table) lines += c == '\n';
    CHECK(lines == 4);  // header + 2 domains + Avg
}

TEST_CASE("cmd_bounds: default sweep set passes and exits zero") {
    TempDir dir("bounds");
    BoundsConfig cfg;
    cfg.cases = 25;
    cfg.n_mc = 5000;
    cfg.out_dir = dir.path;
    CHECK(cmd_bounds(cfg) == kExitOk);
    std::string rep = slurp(dir.path + "/bounds_report.json");
    CHECK(rep.find("\"all_pass\": true") != std::string::npos);
    CHECK(rep.find("regime_detail") != std::string::npos);
}

TEST_CASE("cmd_ot: sinkhorn on identical files reports near-zero divergence") {
    TempDir dir("otsk");
    Tensor pts = Tensor::from_rows({{0.0, 0.0}, {1.0, 0.0}, {0.5, 1.0}});
    auto m = meas::EmpiricalMeasure::uniform(pts);
    save_cloud_csv(m, dir.path + "/a.csv");
    save_cloud_csv(m, dir.path + "/b.csv");
    OtConfig cfg;
    cfg.op = "sinkhorn";
    cfg.inputs = {dir.path + "/a.csv", dir.path + "/b.csv"};
    cfg.eps = 0.1;
    cfg.out_dir = dir.path;
    CHECK(cmd_ot(cfg) == kExitOk);
    std::string rep = slurp(dir.path + "/ot_result.json");
    CHECK(rep.find("\"divergence\": 0.0") != std::string::npos);
}

TEST_CASE("cmd_ot: two-dirac barycenter lands at the midpoint with plot output") {
    TempDir dir("otbary");
    save_cloud_csv(meas::EmpiricalMeasure::uniform(Tensor::from_rows({{0.0, 0.0}})), dir.path + "/a.csv");
    save_cloud_csv(meas::EmpiricalMeasure::uniform(Tensor::from_rows({{2.0, 0.0}})), dir.path + "/b.csv");
    OtConfig cfg;
    cfg.op = "barycenter";
    cfg.inputs = {dir.path + "/a.csv", dir.path + "/b.csv"};
    cfg.k = 1;
    cfg.eps = 0.1;
    cfg.plot = true;
    cfg.out_dir = dir.path;
    CHECK(cmd_ot(cfg) == kExitOk);
    auto support = load_cloud_csv(dir.path + "/barycenter_support.csv");
    CHECK(support.size() == 1);
    CHECK(support.points.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("values outside the default search grids warn but parse") {
    auto cfg = parse_experiment_config(R"({"alpha": 0.05, "beta": 0.02, "dataset": {"type": "two_moons"}})");
    CHECK(cfg.train.alpha == 0.05);
    CHECK(cfg.train.beta == 0.02);
}

TEST_CASE("run: exit-code contract for usage, config, and numerical failures") {
    TempDir dir("exitcodes");
    auto call = [&](std::vector<std::string> args) {
        std::vector<char*> argv;
        args.insert(args.begin(), "otdg");
        for (auto& a : args) argv.push_back(a.data());
        return run(static_cast<int>(argv.size()), argv.data());
    };
    CHECK(call({"train"}) == kExitConfig);  // --config missing
    std::ofstream(dir.path + "/bad.json") << R"({"unknown_field": 1})";
    CHECK(call({"train", "--config", dir.path + "/bad.json"}) == kExitConfig);
    CHECK(call({"train", "--config", dir.path + "/nonexistent.json"}) == kExitConfig);

    // a transport problem far beyond the iteration budget exits 2
    save_cloud_csv(meas::EmpiricalMeasure::uniform(Tensor::from_rows({{0.0}, {100.0}})), dir.path + "/a.csv");
    save_cloud_csv(meas::EmpiricalMeasure::uniform(Tensor::from_rows({{50.0}, {150.0}})), dir.path + "/b.csv");
    std::ofstream(dir.path + "/ot.json") << R"({"op": "sinkhorn", "inputs": [")" << dir.path << R"(/a.csv", ")"
                                         << dir.path << R"(/b.csv"], "eps": 0.0001, "max_iter": 3, "tol": 1e-12,)"
                                         << R"( "out_dir": ")" << dir.path << R"("})";
    CHECK(call({"ot", "--config", dir.path + "/ot.json"}) == kExitNumerical);
}

TEST_CASE("cmd_ot: barycenter of one cloud stays close to it") {
    TempDir dir("otself");
    auto m = meas::sample(meas::GaussianMeasure::standard(2), 32, 5);
    save_cloud_csv(m, dir.path + "/a.csv");
    OtConfig cfg;
    cfg.op = "barycenter";
    cfg.inputs = {dir.path + "/a.csv"};
    cfg.k = 32;
    cfg.eps = 0.01;
    cfg.plot = true;
    cfg.out_dir = dir.path;
    CHECK(cmd_ot(cfg) == kExitOk);
    auto support = load_cloud_csv(dir.path + "/barycenter_support.csv");
    double self_div = ot::sinkhorn_divergence(support, m, 0.01, {.max_iter = 2000, .tol = 1e-7});
    CHECK(self_div < 1e-3);
}
