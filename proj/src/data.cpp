#include "otdg/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "otdg/rng.hpp"

namespace otdg::data {

namespace {

constexpr double kPi = 3.14159265358979323846;

// 2-class Gaussian mixture, means (+-1.5, 0).
void gauss_mixture_base(int n, double sd, std::mt19937_64& rng, Tensor& feats, std::vector<int>& labels) {
    feats = Tensor(n, 2);
    labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int cls = i % 2;
        double cx = cls == 0 ? -1.5 : 1.5;
        feats.at(i, 0) = cx + sd * std_normal(rng);
        feats.at(i, 1) = sd * std_normal(rng);
        labels[static_cast<size_t>(i)] = cls;
    }
}

// Two interleaving half circles with Gaussian jitter.
void two_moons_base(int n, double sd, std::mt19937_64& rng, Tensor& feats, std::vector<int>& labels) {
    feats = Tensor(n, 2);
    labels.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        int cls = i % 2;
        double t = kPi * uniform01(rng);
        double x, y;
        if (cls == 0) {
            x = std::cos(t);
            y = std::sin(t);
        } else {
            x = 1.0 - std::cos(t);
            y = 0.5 - std::sin(t);
        }
        feats.at(i, 0) = x + sd * std_normal(rng);
        feats.at(i, 1) = y + sd * std_normal(rng);
        labels[static_cast<size_t>(i)] = cls;
    }
}

}  // namespace

DomainDataset generate_rotated(const std::string& base, const std::vector<double>& angles_deg, int n_per_domain,
                               double noise_sd, uint64_t seed) {
    if (angles_deg.empty()) throw std::runtime_error("generate_rotated: need at least one angle");
    if (n_per_domain < 1) throw std::runtime_error("generate_rotated: n_per_domain must be >= 1");
    if (base != "two_moons" && base != "gauss_mixture")
        throw std::runtime_error("generate_rotated: unknown base '" + base + "'");

    DomainDataset ds;
    ds.feature_dim = 2;
    ds.class_count = 2;
    for (size_t a = 0; a < angles_deg.size(); ++a) {
        auto rng = make_rng(derive_seed(seed, "domain-" + std::to_string(a)));
        Domain dom;
        std::ostringstream name;
        name << "rot" << angles_deg[a];
        dom.name = name.str();
        if (base == "gauss_mixture")
            gauss_mixture_base(n_per_domain, noise_sd, rng, dom.features, dom.labels);
        else
            two_moons_base(n_per_domain, noise_sd, rng, dom.features, dom.labels);
        double rad = angles_deg[a] * kPi / 180.0;
        double c = std::cos(rad), s = std::sin(rad);
        for (int i = 0; i < n_per_domain; ++i) {
            double x = dom.features.at(i, 0), y = dom.features.at(i, 1);
            dom.features.at(i, 0) = c * x - s * y;
            dom.features.at(i, 1) = s * x + c * y;
        }
        ds.domains.push_back(std::move(dom));
    }
    return ds;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

DomainDataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw CsvError(1, "empty file");
    auto header = split_fields(line);
    if (header.size() < 3 || header[0] != "domain" || header[1] != "label")
        throw CsvError(1, "expected header 'domain,label,f1,...'");
    int d = static_cast<int>(header.size()) - 2;
    for (int k = 0; k < d; ++k)
        if (header[static_cast<size_t>(k + 2)] != "f" + std::to_string(k + 1))
            throw CsvError(1, "feature columns must be named f1..f" + std::to_string(d));

    std::map<std::string, std::vector<std::pair<std::vector<double>, long>>> rows;  // domain -> (features, raw label)
    std::vector<std::string> domain_order;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (static_cast<int>(fields.size()) != d + 2)
            throw CsvError(line_no, "expected " + std::to_string(d + 2) + " fields, got " + std::to_string(fields.size()));
        long label;
        try {
            size_t pos = 0;
            label = std::stol(fields[1], &pos);
            if (pos != fields[1].size() || label < 0) throw std::invalid_argument("");
        } catch (...) {
            throw CsvError(line_no, "label must be a non-negative integer, got '" + fields[1] + "'");
        }
        std::vector<double> feats(static_cast<size_t>(d));
        for (int k = 0; k < d; ++k) {
            try {
                size_t pos = 0;
                feats[static_cast<size_t>(k)] = std::stod(fields[static_cast<size_t>(k + 2)], &pos);
                if (pos != fields[static_cast<size_t>(k + 2)].size()) throw std::invalid_argument("");
            } catch (...) {
                throw CsvError(line_no, "non-numeric feature '" + fields[static_cast<size_t>(k + 2)] + "'");
            }
        }
        if (!rows.count(fields[0])) domain_order.push_back(fields[0]);
        rows[fields[0]].emplace_back(std::move(feats), label);
    }
    if (rows.empty()) throw CsvError(line_no, "no data rows");

    // dense re-indexing of labels, mapping recorded by sorted raw value
    std::vector<long> raw_labels;
    for (const auto& [name, rs] : rows)
        for (const auto& r : rs) raw_labels.push_back(r.second);
    std::sort(raw_labels.begin(), raw_labels.end());
    raw_labels.erase(std::unique(raw_labels.begin(), raw_labels.end()), raw_labels.end());
    auto dense = [&](long raw) {
        return static_cast<int>(std::lower_bound(raw_labels.begin(), raw_labels.end(), raw) - raw_labels.begin());
    };

    DomainDataset ds;
    ds.feature_dim = d;
    ds.class_count = static_cast<int>(raw_labels.size());
    for (const auto& name : domain_order) {
        const auto& rs = rows[name];
        Domain dom;
        dom.name = name;
        dom.features = Tensor(static_cast<int>(rs.size()), d);
        dom.labels.resize(rs.size());
        for (size_t i = 0; i < rs.size(); ++i) {
            for (int k = 0; k < d; ++k) dom.features.at(static_cast<int>(i), k) = rs[i].first[static_cast<size_t>(k)];
            dom.labels[i] = dense(rs[i].second);
        }
        ds.domains.push_back(std::move(dom));
    }
    return ds;
}

void save_csv(const DomainDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_csv: cannot open '" + path + "'");
    out << "domain,label";
    for (int k = 1; k <= ds.feature_dim; ++k) out << ",f" << k;
    out << "\n";
    char buf[32];
    for (const auto& dom : ds.domains) {
        for (int i = 0; i < dom.features.rows; ++i) {
            out << dom.name << "," << dom.labels[static_cast<size_t>(i)];
            for (int k = 0; k < ds.feature_dim; ++k) {
                std::snprintf(buf, sizeof buf, "%.17g", dom.features.at(i, k));
                out << "," << buf;
            }
            out << "\n";
        }
    }
}

SplitResult split_train_val(const DomainDataset& ds, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::runtime_error("split_train_val: fraction must be in (0,1)");
    SplitResult out;
    out.train.class_count = out.val.class_count = ds.class_count;
    out.train.feature_dim = out.val.feature_dim = ds.feature_dim;
    for (size_t dmn = 0; dmn < ds.domains.size(); ++dmn) {
        const Domain& dom = ds.domains[dmn];
        std::map<int, std::vector<int>> by_class;
        for (size_t i = 0; i < dom.labels.size(); ++i) by_class[dom.labels[i]].push_back(static_cast<int>(i));

        auto rng = make_rng(derive_seed(seed, "split-" + std::to_string(dmn)));
        std::vector<int> train_idx, val_idx;
        for (auto& [cls, idx] : by_class) {
            if (idx.size() < 2)
                throw std::runtime_error("split_train_val: class " + std::to_string(cls) + " in domain '" + dom.name +
                                         "' has fewer than 2 samples; stratification impossible");
            for (size_t i = idx.size(); i > 1; --i)
                std::swap(idx[i - 1], idx[static_cast<size_t>(uniform_int(rng, static_cast<int>(i)))]);
            // at least one sample on each side
            size_t take = static_cast<size_t>(std::lround(fraction * static_cast<double>(idx.size())));
            take = std::clamp<size_t>(take, 1, idx.size() - 1);
            train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<long>(take));
            val_idx.insert(val_idx.end(), idx.begin() + static_cast<long>(take), idx.end());
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
        auto subset = [&](const std::vector<int>& idx) {
            Domain sub;
            sub.name = dom.name;
            sub.features = Tensor(static_cast<int>(idx.size()), ds.feature_dim);
            sub.labels.resize(idx.size());
            for (size_t i = 0; i < idx.size(); ++i) {
                for (int k = 0; k < ds.feature_dim; ++k)
                    sub.features.at(static_cast<int>(i), k) = dom.features.at(idx[i], k);
                sub.labels[i] = dom.labels[static_cast<size_t>(idx[i])];
            }
            return sub;
        };
        out.train.domains.push_back(subset(train_idx));
        out.val.domains.push_back(subset(val_idx));
    }
    return out;
}

}  // namespace otdg::data
