#pragma once

#include <string>
#include <vector>

#include "otdg/bounds.hpp"
#include "otdg/data.hpp"
#include "otdg/dg.hpp"
#include "otdg/measures.hpp"

namespace otdg::cli {

// Exit-code contract shared by every subcommand.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;     // usage / config error
constexpr int kExitNumerical = 2;  // numerical failure during compute
constexpr int kExitCheck = 3;      // acceptance-check failure (bound slack)

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DatasetSpec {
    std::string type = "gauss_mixture";  // gauss_mixture | two_moons | csv
    std::vector<double> angles_deg{0.0, 25.0, 50.0, 75.0};
    int n_per_domain = 500;
    double noise_sd = 0.4;
    uint64_t seed = 0;
    std::string path;  // csv only
};

struct ExperimentConfig {
    dg::TrainConfig train;
    DatasetSpec dataset;
    std::string unseen;              // domain name held out by `train`
    std::vector<uint64_t> seeds{1};  // loo / ablate repetitions
    std::string out_dir = "out";
};

struct BoundsConfig {
    std::vector<std::string> sweeps{"pinsker",        "l1_transport",     "kl_w2", "jensen_quarter",
                                    "quarter_subadditivity", "risk_bound", "split_reference", "regime"};
    int cases = 100;
    int n_mc = 20000;
    uint64_t seed = 0;
    std::string out_dir = "out";
};

struct OtConfig {
    std::string op = "sinkhorn";  // sinkhorn | barycenter
    std::vector<std::string> inputs;
    double eps = 0.5;
    int k = 32;
    int max_iter = 500;
    double tol = 1e-6;
    int outer_iters = 50;
    double bary_tol = 1e-4;
    uint64_t seed = 0;
    bool plot = false;
    std::string out_dir = "out";
};

// Strict parsers: unknown keys are rejected with a field-level message.
ExperimentConfig parse_experiment_config(const std::string& json_text);
BoundsConfig parse_bounds_config(const std::string& json_text);
OtConfig parse_ot_config(const std::string& json_text);

data::DomainDataset build_dataset(const DatasetSpec& spec);

// Point-cloud CSV: header x1,...,xd,weight.
meas::EmpiricalMeasure load_cloud_csv(const std::string& path);
void save_cloud_csv(const meas::EmpiricalMeasure& m, const std::string& path);

// Versioned model binary (magic + format version).
void save_model(const dg::Model& m, const std::string& path);
dg::Model load_model(const std::string& path);

// Subcommand drivers; they write artifacts under cfg.out_dir and return an
// exit code per the contract above.
int cmd_train(const ExperimentConfig& cfg);
int cmd_loo(const ExperimentConfig& cfg);
int cmd_ablate(const ExperimentConfig& cfg);
int cmd_bounds(const BoundsConfig& cfg);
int cmd_ot(const OtConfig& cfg);

// Full argv entry point used by the binary.
int run(int argc, char** argv);

}  // namespace otdg::cli
