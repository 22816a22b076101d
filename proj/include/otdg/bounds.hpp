#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "otdg/measures.hpp"
#include "otdg/tensor.hpp"

namespace otdg::bounds {

// Convention flag for the log base of the density-gradient envelope. The
// default keeps base 2; the natural-log reading rescales both constants by
// ln 2.
enum class LogBase { base2, natural };

struct RegularityConstants {
    double c1 = 0.0;
    double c2 = 0.0;
};

// Envelope constants for a Gaussian: |grad log p| <= |S^-1| |x| + |S^-1 m|,
// scaled per the chosen log base.
RegularityConstants regularity_constants_gaussian(const meas::GaussianMeasure& g, LogBase base = LogBase::base2);

// Worst case over a family, so one pair of constants covers every member.
RegularityConstants worst_case_constants(const std::vector<meas::GaussianMeasure>& gs, LogBase base = LogBase::base2);

// Invertible affine map x -> A x + b; pushes Gaussians forward in closed form.
struct AffineMap {
    Tensor a;               // d' x d
    std::vector<double> b;  // d'

    std::vector<double> apply(const std::vector<double>& x) const;
    meas::GaussianMeasure pushforward(const meas::GaussianMeasure& g) const;
};

// Bounded loss min(L, d(a,b)) with d either the discrete metric or |a-b|.
struct LossSpec {
    double bound = 1.0;
    enum class Metric { zero_one, absolute } metric = Metric::zero_one;

    double operator()(double x, double y) const;
};

using Hypothesis = std::function<double(const std::vector<double>&)>;

struct RiskEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
};

// Monte-Carlo risk E_{x~mu}[ loss(h(x), h_ref(x)) ].
RiskEstimate risk(const Hypothesis& h, const Hypothesis& h_ref, const meas::GaussianMeasure& mu,
                  const LossSpec& loss, int n_mc, uint64_t seed);

struct SigmaEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    enum class Side { seen, unseen } side = Side::seen;
};

// min over the two cross-domain expectations of the disagreement between
// the optimal hypotheses; ties within MC error resolve to the seen side.
SigmaEstimate sigma_estimate(const Hypothesis& h_u, const Hypothesis& h_s, const meas::GaussianMeasure& mu_u,
                             const meas::GaussianMeasure& mu_s, const LossSpec& loss, int n_mc, uint64_t seed);

// (l1 actual, bound value) for the L1-vs-sqrt(W2) transport inequality on
// families where both sides are exact.
struct L1BoundResult {
    double l1 = 0.0;
    double bound = 0.0;
};
L1BoundResult l1_transport_bound(const meas::GaussianMeasure& mu, const meas::GaussianMeasure& nu,
                                const RegularityConstants& rc);
L1BoundResult l1_transport_bound(const meas::HistogramMeasure& mu, const meas::HistogramMeasure& nu,
                                const RegularityConstants& rc);

// Signed slack of the symmetric-KL-vs-W2 inequality; nonnegative when the
// constants cover both Gaussians.
double kl_w2_slack(const meas::GaussianMeasure& mu, const meas::GaussianMeasure& nu, const RegularityConstants& rc);

struct DomainSpec {
    meas::GaussianMeasure measure = meas::GaussianMeasure::standard(1);
    Hypothesis labeler;  // the domain's own optimal hypothesis
};

struct BoundReport {
    double lhs_risk = 0.0;
    double term_risks = 0.0;
    double term_transport = 0.0;          // L C [sum lambda W2^2]^{1/4}
    double term_transport_reference = 0.0;  // split form only: seen-to-reference
    double term_transport_unseen = 0.0;     // split form only: reference-to-unseen
    double term_sigma = 0.0;
    double rhs_total = 0.0;
    double slack = 0.0;
    double mc_tolerance = 0.0;  // 3 x combined MC standard error
    double constant_l = 0.0;
    double constant_c = 0.0;
    RegularityConstants rc;
    std::vector<double> lambda;
    bool split_form = false;
};

struct BoundInputs {
    std::vector<DomainSpec> seen;
    DomainSpec unseen;
    Hypothesis h;
    AffineMap f;
    std::vector<double> lambda;  // convex weights, one per seen domain
    LossSpec loss;
    int n_mc = 100000;
    uint64_t seed = 0;
    LogBase base = LogBase::base2;
};

// Term-by-term risk bound through the Wasserstein-2 mixture of seen
// pushforwards. Pushforwards must be Gaussian (affine encoder), so the
// transport term and moments are exact; risks are Monte-Carlo.
BoundReport risk_bound_report(const BoundInputs& in);

// Split-reference form against an arbitrary pushforward measure.
BoundReport split_reference_report(const BoundInputs& in, const meas::GaussianMeasure& reference);

// max reconstruction displacement and the 2 Q K delta slack term.
struct ReconstructionSlack {
    double delta = 0.0;
    double extra_term = 0.0;
};
using VectorMap = std::function<std::vector<double>(const std::vector<double>&)>;
ReconstructionSlack near_invertibility_slack(const VectorMap& f, const VectorMap& reconstructor,
                                             const std::vector<std::vector<double>>& samples, double lip_k,
                                             double lip_q);

// W1 / sqrt(W2) regime comparison on small uniform clouds.
struct RegimeReport {
    double w1 = 0.0;
    double w2 = 0.0;
    double sqrt_w2 = 0.0;
    double quarter_bound = 0.0;        // [diam * W1]^{1/4}
    double diameter = 0.0;
    bool sufficient_condition_holds = false;  // diam <= W1^3
    bool sqrt_w2_below_w1 = false;
};
RegimeReport regime_compare(const meas::EmpiricalMeasure& mu, const meas::EmpiricalMeasure& nu,
                            double f_range_diameter);

// ---- randomized verification sweeps (drive the bounds CLI command) ----

struct SweepResult {
    std::string name;
    int cases = 0;
    double min_slack = 0.0;
    double tolerance = 0.0;  // slack may not fall below -tolerance
    bool pass = false;
};

SweepResult sweep_pinsker(int cases, uint64_t seed);
SweepResult sweep_l1_transport(int cases, uint64_t seed);
SweepResult sweep_kl_w2(int cases, uint64_t seed);
SweepResult sweep_jensen_quarter(int cases, uint64_t seed);
SweepResult sweep_quarter_subadditivity(int cases, uint64_t seed);
SweepResult sweep_risk_bound(int cases, uint64_t seed, int n_mc = 20000);
SweepResult sweep_split_reference(int cases, uint64_t seed, int n_mc = 20000);

struct RegimeSweepResult {
    SweepResult chain;         // W1 <= W2 and sqrt(W2) <= quarter bound
    int sqrt_w2_tighter = 0;   // cases with sqrt(W2) < W1
    int w1_tighter = 0;        // cases with W1 < sqrt(W2)
    int sufficient_condition_cases = 0;
    bool implication_holds = true;  // diam <= W1^3 always gave sqrt(W2) <= W1
};
RegimeSweepResult sweep_regimes(int cases, uint64_t seed);

}  // namespace otdg::bounds
