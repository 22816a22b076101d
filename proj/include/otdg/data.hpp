#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "otdg/tensor.hpp"

namespace otdg::data {

struct Domain {
    std::string name;
    Tensor features;          // n x d
    std::vector<int> labels;  // length n
};

struct DomainDataset {
    std::vector<Domain> domains;
    int class_count = 0;
    int feature_dim = 0;
};

// One domain per angle: the base dataset rotated in the first two feature
// coordinates, labels carried along (covariate shift with a shared task).
// base: "two_moons" or "gauss_mixture".
DomainDataset generate_rotated(const std::string& base, const std::vector<double>& angles_deg, int n_per_domain,
                               double noise_sd, uint64_t seed);

// CSV schema (UTF-8, header required): domain,label,f1,...,fd
struct CsvError : std::runtime_error {
    int line;
    CsvError(int line_no, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
};

DomainDataset load_csv(const std::string& path);
void save_csv(const DomainDataset& ds, const std::string& path);

// Per-domain label-stratified split; deterministic under seed; train and
// val are disjoint and exhaustive. Throws when a class has fewer than two
// samples in some domain.
struct SplitResult {
    DomainDataset train;
    DomainDataset val;
};
SplitResult split_train_val(const DomainDataset& ds, double fraction, uint64_t seed);

}  // namespace otdg::data
