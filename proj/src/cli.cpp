#include "otdg/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "otdg/ot.hpp"
#include "otdg/rng.hpp"

namespace otdg::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kFormatVersion = 1;

void require_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": field '" + key + "' has the wrong type");
    }
}

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << content;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void warn_outside_grid(double value, const std::vector<double>& grid, const std::string& name) {
    for (double g : grid)
        if (value == g) return;
    std::cerr << "warning: " << name << " = " << value << " lies outside the default search grid\n";
}

json dataset_to_json(const DatasetSpec& d) {
    json j;
    j["type"] = d.type;
    if (d.type == "csv") {
        j["path"] = d.path;
    } else {
        j["angles_deg"] = d.angles_deg;
        j["n_per_domain"] = d.n_per_domain;
        j["noise_sd"] = d.noise_sd;
        j["seed"] = d.seed;
    }
    return j;
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["method"] = dg::method_to_string(cfg.train.method);
    j["alpha"] = cfg.train.alpha;
    j["beta"] = cfg.train.beta;
    j["epsilon"] = cfg.train.epsilon;
    j["delta"] = cfg.train.delta;
    j["lr"] = cfg.train.lr;
    j["batch"] = cfg.train.batch;
    j["epochs"] = cfg.train.epochs;
    j["seed"] = cfg.train.seed;
    j["feature_dim"] = cfg.train.feature_dim;
    j["hidden"] = cfg.train.hidden;
    j["optimizer"] = cfg.train.optimizer == dg::OptimizerKind::adam ? "adam" : "sgd";
    j["encoder_update"] = cfg.train.encoder_update == dg::EncoderUpdate::algorithm1 ? "algorithm1" : "objective";
    j["sinkhorn_unroll"] = cfg.train.sinkhorn_unroll;
    j["bary_outer_iters"] = cfg.train.bary_outer_iters;
    j["bary_tol"] = cfg.train.bary_tol;
    j["mi_num_eigen"] = cfg.train.mi_num_eigen;
    j["split_fraction"] = cfg.train.split_fraction;
    j["dataset"] = dataset_to_json(cfg.dataset);
    j["unseen"] = cfg.unseen;
    j["seeds"] = cfg.seeds;
    j["out_dir"] = cfg.out_dir;
    return j;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j = parse_json(json_text);
    require_keys(j, {"method", "alpha", "beta", "epsilon", "delta", "lr", "batch", "epochs", "seed", "seeds",
                     "feature_dim", "hidden", "optimizer", "encoder_update", "sinkhorn_unroll", "bary_outer_iters",
                     "bary_tol", "mi_num_eigen", "split_fraction", "dataset", "unseen", "out_dir"},
                 "config");
    ExperimentConfig cfg;
    cfg.train.method = dg::method_from_string(get_or<std::string>(j, "method", "wbae", "config"));
    cfg.train.alpha = get_or<double>(j, "alpha", cfg.train.alpha, "config");
    cfg.train.beta = get_or<double>(j, "beta", cfg.train.beta, "config");
    cfg.train.epsilon = get_or<double>(j, "epsilon", cfg.train.epsilon, "config");
    cfg.train.delta = get_or<double>(j, "delta", cfg.train.delta, "config");
    cfg.train.lr = get_or<double>(j, "lr", cfg.train.lr, "config");
    cfg.train.batch = get_or<int>(j, "batch", cfg.train.batch, "config");
    cfg.train.epochs = get_or<int>(j, "epochs", cfg.train.epochs, "config");
    cfg.train.seed = get_or<uint64_t>(j, "seed", cfg.train.seed, "config");
    cfg.train.feature_dim = get_or<int>(j, "feature_dim", cfg.train.feature_dim, "config");
    cfg.train.hidden = get_or<int>(j, "hidden", cfg.train.hidden, "config");
    cfg.train.sinkhorn_unroll = get_or<int>(j, "sinkhorn_unroll", cfg.train.sinkhorn_unroll, "config");
    cfg.train.bary_outer_iters = get_or<int>(j, "bary_outer_iters", cfg.train.bary_outer_iters, "config");
    cfg.train.bary_tol = get_or<double>(j, "bary_tol", cfg.train.bary_tol, "config");
    cfg.train.mi_num_eigen = get_or<int>(j, "mi_num_eigen", cfg.train.mi_num_eigen, "config");
    cfg.train.split_fraction = get_or<double>(j, "split_fraction", cfg.train.split_fraction, "config");

    std::string opt = get_or<std::string>(j, "optimizer", "sgd", "config");
    if (opt == "sgd")
        cfg.train.optimizer = dg::OptimizerKind::sgd;
    else if (opt == "adam")
        cfg.train.optimizer = dg::OptimizerKind::adam;
    else
        throw ConfigError("config: optimizer must be 'sgd' or 'adam', got '" + opt + "'");

    std::string upd = get_or<std::string>(j, "encoder_update", "objective", "config");
    if (upd == "objective")
        cfg.train.encoder_update = dg::EncoderUpdate::objective;
    else if (upd == "algorithm1")
        cfg.train.encoder_update = dg::EncoderUpdate::algorithm1;
    else
        throw ConfigError("config: encoder_update must be 'objective' or 'algorithm1', got '" + upd + "'");

    if (cfg.train.alpha < 0.0 || cfg.train.beta < 0.0) throw ConfigError("config: alpha and beta must be nonnegative");
    if (!(cfg.train.epsilon > 0.0)) throw ConfigError("config: epsilon must be positive");
    if (cfg.train.batch < 1) throw ConfigError("config: batch must be >= 1");
    if (cfg.train.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (cfg.train.uses_mi() && !(cfg.train.delta > 0.0))
        throw ConfigError("config: delta must be positive for MI methods");
    warn_outside_grid(cfg.train.alpha, {1e-4, 5e-4}, "alpha");
    warn_outside_grid(cfg.train.beta, {1e-4, 5e-4, 1e-3, 5e-3}, "beta");

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        require_keys(d, {"type", "angles_deg", "n_per_domain", "noise_sd", "seed", "path"}, "config.dataset");
        cfg.dataset.type = get_or<std::string>(d, "type", cfg.dataset.type, "config.dataset");
        cfg.dataset.angles_deg = get_or<std::vector<double>>(d, "angles_deg", cfg.dataset.angles_deg, "config.dataset");
        cfg.dataset.n_per_domain = get_or<int>(d, "n_per_domain", cfg.dataset.n_per_domain, "config.dataset");
        cfg.dataset.noise_sd = get_or<double>(d, "noise_sd", cfg.dataset.noise_sd, "config.dataset");
        cfg.dataset.seed = get_or<uint64_t>(d, "seed", cfg.dataset.seed, "config.dataset");
        cfg.dataset.path = get_or<std::string>(d, "path", cfg.dataset.path, "config.dataset");
        if (cfg.dataset.type != "gauss_mixture" && cfg.dataset.type != "two_moons" && cfg.dataset.type != "csv")
            throw ConfigError("config.dataset: type must be gauss_mixture, two_moons or csv");
        if (cfg.dataset.type == "csv" && cfg.dataset.path.empty())
            throw ConfigError("config.dataset: csv type requires 'path'");
    }
    cfg.unseen = get_or<std::string>(j, "unseen", "", "config");
    cfg.seeds = get_or<std::vector<uint64_t>>(j, "seeds", cfg.seeds, "config");
    if (cfg.seeds.empty()) throw ConfigError("config: 'seeds' must not be empty");
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir, "config");
    return cfg;
}

BoundsConfig parse_bounds_config(const std::string& json_text) {
    json j = parse_json(json_text);
    require_keys(j, {"sweeps", "cases", "n_mc", "seed", "out_dir"}, "config");
    BoundsConfig cfg;
    cfg.sweeps = get_or<std::vector<std::string>>(j, "sweeps", cfg.sweeps, "config");
    cfg.cases = get_or<int>(j, "cases", cfg.cases, "config");
    cfg.n_mc = get_or<int>(j, "n_mc", cfg.n_mc, "config");
    cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed, "config");
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir, "config");
    if (cfg.cases < 1) throw ConfigError("config: cases must be >= 1");
    const std::vector<std::string> known{"pinsker",        "l1_transport",     "kl_w2", "jensen_quarter",
                                         "quarter_subadditivity", "risk_bound", "split_reference", "regime"};
    for (const auto& s : cfg.sweeps)
        if (std::find(known.begin(), known.end(), s) == known.end())
            throw ConfigError("config: unknown sweep '" + s + "'");
    return cfg;
}

OtConfig parse_ot_config(const std::string& json_text) {
    json j = parse_json(json_text);
    require_keys(j, {"op", "inputs", "eps", "k", "max_iter", "tol", "outer_iters", "bary_tol", "seed", "plot",
                     "out_dir"},
                 "config");
    OtConfig cfg;
    cfg.op = get_or<std::string>(j, "op", cfg.op, "config");
    cfg.inputs = get_or<std::vector<std::string>>(j, "inputs", cfg.inputs, "config");
    cfg.eps = get_or<double>(j, "eps", cfg.eps, "config");
    cfg.k = get_or<int>(j, "k", cfg.k, "config");
    cfg.max_iter = get_or<int>(j, "max_iter", cfg.max_iter, "config");
    cfg.tol = get_or<double>(j, "tol", cfg.tol, "config");
    cfg.outer_iters = get_or<int>(j, "outer_iters", cfg.outer_iters, "config");
    cfg.bary_tol = get_or<double>(j, "bary_tol", cfg.bary_tol, "config");
    cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed, "config");
    cfg.plot = get_or<bool>(j, "plot", cfg.plot, "config");
    cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir, "config");
    if (cfg.op != "sinkhorn" && cfg.op != "barycenter") throw ConfigError("config: op must be sinkhorn or barycenter");
    if (cfg.inputs.empty()) throw ConfigError("config: 'inputs' must list point-cloud CSV files");
    if (cfg.op == "sinkhorn" && cfg.inputs.size() != 2) throw ConfigError("config: sinkhorn needs exactly two inputs");
    return cfg;
}

data::DomainDataset build_dataset(const DatasetSpec& spec) {
    if (spec.type == "csv") return data::load_csv(spec.path);
    return data::generate_rotated(spec.type, spec.angles_deg, spec.n_per_domain, spec.noise_sd, spec.seed);
}

meas::EmpiricalMeasure load_cloud_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open point-cloud file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw data::CsvError(1, "empty point-cloud file");
    std::vector<std::string> header;
    {
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                header.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur.push_back(ch);
            }
        }
        header.push_back(cur);
    }
    int d = static_cast<int>(header.size()) - 1;
    if (d < 1 || header.back() != "weight") throw data::CsvError(1, "expected header x1,...,xd,weight");
    for (int k = 0; k < d; ++k)
        if (header[static_cast<size_t>(k)] != "x" + std::to_string(k + 1))
            throw data::CsvError(1, "expected header x1,...,xd,weight");

    std::vector<std::vector<double>> pts;
    std::vector<double> weights;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> vals;
        std::string cur;
        auto push = [&]() {
            try {
                size_t pos = 0;
                vals.push_back(std::stod(cur, &pos));
                if (pos != cur.size()) throw std::invalid_argument("");
            } catch (...) {
                throw data::CsvError(line_no, "non-numeric field '" + cur + "'");
            }
            cur.clear();
        };
        for (char ch : line) {
            if (ch == ',')
                push();
            else if (ch != '\r')
                cur.push_back(ch);
        }
        push();
        if (static_cast<int>(vals.size()) != d + 1)
            throw data::CsvError(line_no, "expected " + std::to_string(d + 1) + " fields");
        weights.push_back(vals.back());
        vals.pop_back();
        pts.push_back(std::move(vals));
    }
    if (pts.empty()) throw data::CsvError(line_no, "no data rows");
    return meas::EmpiricalMeasure(Tensor::from_rows(pts), weights);
}

void save_cloud_csv(const meas::EmpiricalMeasure& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    for (int k = 1; k <= m.dim(); ++k) out << "x" << k << ",";
    out << "weight\n";
    for (int i = 0; i < m.size(); ++i) {
        for (int k = 0; k < m.dim(); ++k) out << fmt_double(m.points.at(i, k)) << ",";
        out << fmt_double(m.weights[static_cast<size_t>(i)]) << "\n";
    }
}

void save_model(const dg::Model& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    const char magic[8] = {'O', 'T', 'D', 'G', 'M', 'D', 'L', '\0'};
    out.write(magic, 8);
    auto put_u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    put_u32(static_cast<uint32_t>(kFormatVersion));
    put_u32(static_cast<uint32_t>(m.input_dim));
    put_u32(static_cast<uint32_t>(m.hidden));
    put_u32(static_cast<uint32_t>(m.feature_dim));
    put_u32(static_cast<uint32_t>(m.classes));
    put_u32(m.has_decoder ? 1 : 0);
    put_u32(static_cast<uint32_t>(m.params.size()));
    for (const auto& p : m.params) {
        put_u32(static_cast<uint32_t>(p.id.size()));
        out.write(p.id.data(), static_cast<long>(p.id.size()));
        put_u32(static_cast<uint32_t>(p.value.rows));
        put_u32(static_cast<uint32_t>(p.value.cols));
        out.write(reinterpret_cast<const char*>(p.value.data.data()),
                  static_cast<long>(p.value.data.size() * sizeof(double)));
    }
}

dg::Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 7) != "OTDGMDL") throw std::runtime_error("model file: bad magic");
    auto get_u32 = [&]() {
        uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw std::runtime_error("model file: truncated");
        return v;
    };
    uint32_t version = get_u32();
    if (version != kFormatVersion) throw std::runtime_error("model file: unsupported format version");
    dg::Model m;
    m.input_dim = static_cast<int>(get_u32());
    m.hidden = static_cast<int>(get_u32());
    m.feature_dim = static_cast<int>(get_u32());
    m.classes = static_cast<int>(get_u32());
    m.has_decoder = get_u32() != 0;
    uint32_t count = get_u32();
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t len = get_u32();
        std::string id(len, '\0');
        in.read(id.data(), static_cast<long>(len));
        uint32_t rows = get_u32(), cols = get_u32();
        Tensor t(static_cast<int>(rows), static_cast<int>(cols));
        in.read(reinterpret_cast<char*>(t.data.data()), static_cast<long>(t.data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("model file: truncated");
        m.params.push_back({std::move(id), std::move(t)});
    }
    return m;
}

namespace {

void write_metrics_csv(const dg::RunReport& rep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "epoch,L_c,L_wb,L_aux,val_acc\n";
    for (size_t e = 0; e < rep.epoch_losses.size(); ++e) {
        out << e << "," << fmt_double(rep.epoch_losses[e].l_c) << "," << fmt_double(rep.epoch_losses[e].l_wb) << ","
            << fmt_double(rep.epoch_losses[e].l_aux) << "," << fmt_double(rep.val_accuracy[e]) << "\n";
    }
}

json run_report_to_json(const dg::RunReport& rep) {
    json j;
    j["method"] = dg::method_to_string(rep.method);
    j["seed"] = rep.seed;
    j["selected_epoch"] = rep.selected_epoch;
    j["val_accuracy"] = rep.val_accuracy;
    json losses = json::array();
    for (const auto& e : rep.epoch_losses) losses.push_back({{"L_c", e.l_c}, {"L_wb", e.l_wb}, {"L_aux", e.l_aux}});
    j["epoch_losses"] = losses;
    if (rep.has_test) j["test_accuracy"] = rep.test_accuracy;
    j["initial_encoded_divergence"] = rep.initial_encoded_divergence;
    j["final_encoded_divergence"] = rep.final_encoded_divergence;
    return j;
}

void write_loo_csv(const dg::LooTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "domain";
    for (const auto& c : table.columns) out << "," << c << "," << c << "_std";
    out << "\n";
    for (size_t r = 0; r < table.rows.size(); ++r) {
        out << table.rows[r];
        for (const auto& cell : table.cells[r]) out << "," << fmt_double(cell.mean) << "," << fmt_double(cell.stddev);
        out << "\n";
    }
}

const data::Domain* find_domain(const data::DomainDataset& ds, const std::string& name) {
    for (const auto& d : ds.domains)
        if (d.name == name) return &d;
    return nullptr;
}

}  // namespace

int cmd_train(const ExperimentConfig& cfg) {
    data::DomainDataset all = build_dataset(cfg.dataset);
    data::DomainDataset seen;
    seen.class_count = all.class_count;
    seen.feature_dim = all.feature_dim;
    const data::Domain* unseen = nullptr;
    if (!cfg.unseen.empty()) {
        unseen = find_domain(all, cfg.unseen);
        if (!unseen) throw ConfigError("config: unseen domain '" + cfg.unseen + "' not in dataset");
        for (const auto& d : all.domains)
            if (d.name != cfg.unseen) seen.domains.push_back(d);
        if (seen.domains.empty()) throw ConfigError("config: no seen domains remain after holding out '" + cfg.unseen + "'");
    } else {
        seen.domains = all.domains;
    }

    dg::Model selected = dg::Model::init(seen.feature_dim, cfg.train.hidden, cfg.train.feature_dim, seen.class_count,
                                         cfg.train.uses_decoder(), 0);
    dg::RunReport rep = dg::train(cfg.train, seen, unseen, &selected);

    fs::create_directories(cfg.out_dir);
    json j;
    j["format_version"] = kFormatVersion;
    j["config"] = config_to_json(cfg);
    j["report"] = run_report_to_json(rep);
    write_file(cfg.out_dir + "/run_report.json", j.dump(2) + "\n");
    write_metrics_csv(rep, cfg.out_dir + "/metrics.csv");
    save_model(selected, cfg.out_dir + "/model.bin");
    std::cout << "train: wrote run_report.json, metrics.csv, model.bin to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_loo(const ExperimentConfig& cfg) {
    data::DomainDataset ds = build_dataset(cfg.dataset);
    dg::LooTable table = dg::leave_one_out(ds, cfg.train, cfg.seeds);
    fs::create_directories(cfg.out_dir);
    write_loo_csv(table, cfg.out_dir + "/loo_table.csv");
    json j;
    j["format_version"] = kFormatVersion;
    j["config"] = config_to_json(cfg);
    write_file(cfg.out_dir + "/loo_config.json", j.dump(2) + "\n");
    std::cout << "loo: wrote loo_table.csv to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_ablate(const ExperimentConfig& cfg) {
    data::DomainDataset ds = build_dataset(cfg.dataset);
    dg::LooTable table = dg::ablate(ds, cfg.train, cfg.seeds);
    fs::create_directories(cfg.out_dir);
    write_loo_csv(table, cfg.out_dir + "/ablation_table.csv");
    json j;
    j["format_version"] = kFormatVersion;
    j["config"] = config_to_json(cfg);
    write_file(cfg.out_dir + "/ablation_config.json", j.dump(2) + "\n");
    std::cout << "ablate: wrote ablation_table.csv to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_bounds(const BoundsConfig& cfg) {
    json j;
    j["format_version"] = kFormatVersion;
    j["config"] = {{"sweeps", cfg.sweeps}, {"cases", cfg.cases}, {"n_mc", cfg.n_mc}, {"seed", cfg.seed},
                   {"out_dir", cfg.out_dir}};
    json sweeps = json::array();
    bool all_pass = true;

    auto record = [&](const bounds::SweepResult& r) {
        sweeps.push_back({{"name", r.name},
                          {"cases", r.cases},
                          {"min_slack", r.min_slack},
                          {"tolerance", r.tolerance},
                          {"pass", r.pass}});
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  min_slack=" << r.min_slack << "\n";
        all_pass = all_pass && r.pass;
    };

    for (const auto& name : cfg.sweeps) {
        uint64_t seed = derive_seed(cfg.seed, name);
        if (name == "pinsker") record(bounds::sweep_pinsker(cfg.cases, seed));
        if (name == "l1_transport") record(bounds::sweep_l1_transport(cfg.cases, seed));
        if (name == "kl_w2") record(bounds::sweep_kl_w2(cfg.cases, seed));
        if (name == "jensen_quarter") record(bounds::sweep_jensen_quarter(cfg.cases, seed));
        if (name == "quarter_subadditivity") record(bounds::sweep_quarter_subadditivity(cfg.cases, seed));
        if (name == "risk_bound") record(bounds::sweep_risk_bound(cfg.cases, seed, cfg.n_mc));
        if (name == "split_reference") record(bounds::sweep_split_reference(cfg.cases, seed, cfg.n_mc));
        if (name == "regime") {
            bounds::RegimeSweepResult rs = bounds::sweep_regimes(cfg.cases, seed);
            record(rs.chain);
            json extra = {{"sqrt_w2_tighter", rs.sqrt_w2_tighter},
                          {"w1_tighter", rs.w1_tighter},
                          {"sufficient_condition_cases", rs.sufficient_condition_cases},
                          {"implication_holds", rs.implication_holds}};
            sweeps.back()["regime_detail"] = extra;
            bool regime_ok = rs.sqrt_w2_tighter > 0 && rs.w1_tighter > 0 && rs.implication_holds;
            if (!regime_ok) {
                sweeps.back()["pass"] = false;
                all_pass = false;
            }
        }
    }
    j["sweeps"] = sweeps;
    j["all_pass"] = all_pass;
    fs::create_directories(cfg.out_dir);
    write_file(cfg.out_dir + "/bounds_report.json", j.dump(2) + "\n");
    std::cout << (all_pass ? "bounds: all sweeps passed\n" : "bounds: slack violation detected\n");
    return all_pass ? kExitOk : kExitCheck;
}

int cmd_ot(const OtConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    json j;
    j["format_version"] = kFormatVersion;
    j["config"] = {{"op", cfg.op},     {"inputs", cfg.inputs},       {"eps", cfg.eps},
                   {"k", cfg.k},       {"max_iter", cfg.max_iter},   {"tol", cfg.tol},
                   {"outer_iters", cfg.outer_iters}, {"bary_tol", cfg.bary_tol}, {"seed", cfg.seed},
                   {"plot", cfg.plot}, {"out_dir", cfg.out_dir}};
    if (cfg.op == "sinkhorn") {
        auto a = load_cloud_csv(cfg.inputs[0]);
        auto b = load_cloud_csv(cfg.inputs[1]);
        ot::SinkhornOptions opt{cfg.max_iter, cfg.tol};
        ot::TransportPlan plan = ot::sinkhorn_ot(a, b, cfg.eps, opt);
        double divergence = ot::sinkhorn_divergence(a, b, cfg.eps, opt);
        j["result"] = {{"cost", plan.cost},
                       {"entropic_term", plan.entropic_term},
                       {"dual_value", plan.dual_value},
                       {"divergence", divergence},
                       {"iterations_used", plan.iterations_used},
                       {"converged", plan.converged},
                       {"marginal_violation", plan.marginal_violation}};
        write_file(cfg.out_dir + "/ot_result.json", j.dump(2) + "\n");
        std::cout << "ot sinkhorn: cost=" << plan.cost << " divergence=" << divergence << "\n";
        if (!plan.converged) {
            std::cerr << "ot: sinkhorn did not converge within the iteration budget\n";
            return kExitNumerical;
        }
        return kExitOk;
    }

    std::vector<meas::EmpiricalMeasure> inputs;
    for (const auto& p : cfg.inputs) inputs.push_back(load_cloud_csv(p));
    std::vector<double> weights(inputs.size(), 1.0 / static_cast<double>(inputs.size()));
    ot::BarycenterOptions opt;
    opt.outer_iters = cfg.outer_iters;
    opt.tol = cfg.bary_tol;
    opt.sinkhorn = {cfg.max_iter, cfg.tol};
    opt.seed = cfg.seed;
    ot::BarycenterResult res = ot::free_support_barycenter(inputs, weights, cfg.k, cfg.eps, opt);
    j["result"] = {{"objective_trace", res.objective_trace},
                   {"support_shift_trace", res.support_shift_trace},
                   {"support_size", res.measure.size()}};
    write_file(cfg.out_dir + "/barycenter.json", j.dump(2) + "\n");
    if (cfg.plot) save_cloud_csv(res.measure, cfg.out_dir + "/barycenter_support.csv");
    std::cout << "ot barycenter: " << res.objective_trace.size() << " outer iterations, final objective "
              << (res.objective_trace.empty() ? 0.0 : res.objective_trace.back()) << "\n";
    return kExitOk;
}

int run(int argc, char** argv) {
    CLI::App app{"optimal-transport domain generalization toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_override, seed_override;
    bool serial = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--out", out_override, "output directory override");
        sub->add_option("--seed", seed_override, "comma-separated seed list override");
        sub->add_flag("--serial", serial, "force the bit-deterministic serial path (already the default)");
    };

    CLI::App* train = app.add_subcommand("train", "train one configuration");
    CLI::App* loo = app.add_subcommand("loo", "leave-one-domain-out evaluation");
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "five-variant ablation grid");
    CLI::App* bounds_cmd = app.add_subcommand("bounds", "transport-inequality verification sweeps");
    CLI::App* ot_cmd = app.add_subcommand("ot", "standalone sinkhorn / barycenter runs");
    for (CLI::App* sub : {train, loo, ablate_cmd, bounds_cmd, ot_cmd}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    auto seeds_from_override = [&]() {
        std::vector<uint64_t> seeds;
        std::string cur;
        for (char ch : seed_override + ",") {
            if (ch == ',') {
                if (!cur.empty()) {
                    try {
                        seeds.push_back(std::stoull(cur));
                    } catch (...) {
                        throw ConfigError("--seed: '" + cur + "' is not a seed");
                    }
                }
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        if (seeds.empty()) throw ConfigError("--seed: empty seed list");
        return seeds;
    };

    try {
        std::string text = read_file(config_path);
        if (bounds_cmd->parsed()) {
            BoundsConfig cfg = parse_bounds_config(text);
            if (!out_override.empty()) cfg.out_dir = out_override;
            if (!seed_override.empty()) cfg.seed = seeds_from_override().at(0);
            return cmd_bounds(cfg);
        }
        if (ot_cmd->parsed()) {
            OtConfig cfg = parse_ot_config(text);
            if (!out_override.empty()) cfg.out_dir = out_override;
            if (!seed_override.empty()) cfg.seed = seeds_from_override().at(0);
            return cmd_ot(cfg);
        }
        ExperimentConfig cfg = parse_experiment_config(text);
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (!seed_override.empty()) {
            cfg.seeds = seeds_from_override();
            cfg.train.seed = cfg.seeds[0];
        }
        if (train->parsed()) return cmd_train(cfg);
        if (loo->parsed()) return cmd_loo(cfg);
        return cmd_ablate(cfg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const data::CsvError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}

}  // namespace otdg::cli
