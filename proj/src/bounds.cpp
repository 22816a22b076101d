#include "otdg/bounds.hpp"

#include <cmath>
#include <stdexcept>

#include "otdg/linalg.hpp"
#include "otdg/ot.hpp"
#include "otdg/rng.hpp"

namespace otdg::bounds {

namespace {

constexpr double kLn2 = 0.6931471805599453;

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double base_scale(LogBase base) { return base == LogBase::base2 ? 1.0 / kLn2 : 1.0; }

// One pass of seeded Gaussian draws evaluated through a scalar functional.
RiskEstimate mc_expectation(const std::function<double(const std::vector<double>&)>& fn,
                            const meas::GaussianMeasure& mu, int n_mc, uint64_t seed) {
    if (n_mc < 1) throw std::runtime_error("risk: n_mc must be >= 1");
    int d = mu.dim();
    Tensor chol = linalg::cholesky(mu.cov);
    auto rng = make_rng(seed);
    std::vector<double> z(static_cast<size_t>(d)), x(static_cast<size_t>(d));
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        for (int k = 0; k < d; ++k) z[static_cast<size_t>(k)] = std_normal(rng);
        for (int r = 0; r < d; ++r) {
            double v = mu.mean[static_cast<size_t>(r)];
            for (int k = 0; k <= r; ++k) v += chol.at(r, k) * z[static_cast<size_t>(k)];
            x[static_cast<size_t>(r)] = v;
        }
        double val = fn(x);
        sum += val;
        sumsq += val * val;
    }
    RiskEstimate est;
    est.value = sum / n_mc;
    double var = std::max(0.0, sumsq / n_mc - est.value * est.value);
    est.stderr_ = std::sqrt(var / n_mc);
    return est;
}

double l1_bound_value(const RegularityConstants& rc, double m2_mu, double m2_nu, double w2) {
    double inner = rc.c1 * (std::sqrt(m2_mu) + std::sqrt(m2_nu)) + 2.0 * rc.c2;
    return std::sqrt(inner) * std::sqrt(w2);
}

}  // namespace

RegularityConstants regularity_constants_gaussian(const meas::GaussianMeasure& g, LogBase base) {
    linalg::SymEig eg = linalg::eig_sym(g.cov);
    double lam_min = eg.values.front();
    if (lam_min <= 0.0) throw std::runtime_error("regularity_constants: covariance not positive definite");
    std::vector<double> sinv_m = linalg::solve_spd(g.cov, g.mean);
    double scale = base_scale(base);
    return {scale / lam_min, scale * norm2(sinv_m)};
}

RegularityConstants worst_case_constants(const std::vector<meas::GaussianMeasure>& gs, LogBase base) {
    RegularityConstants rc;
    for (const auto& g : gs) {
        RegularityConstants one = regularity_constants_gaussian(g, base);
        rc.c1 = std::max(rc.c1, one.c1);
        rc.c2 = std::max(rc.c2, one.c2);
    }
    return rc;
}

std::vector<double> AffineMap::apply(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != a.cols) throw std::runtime_error("AffineMap: input dimension mismatch");
    std::vector<double> out(b);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out[static_cast<size_t>(i)] += a.at(i, j) * x[static_cast<size_t>(j)];
    return out;
}

meas::GaussianMeasure AffineMap::pushforward(const meas::GaussianMeasure& g) const {
    std::vector<double> m = apply(g.mean);
    Tensor ac = linalg::matmul(a, g.cov);
    Tensor cov = linalg::matmul(ac, linalg::transpose(a));
    for (int i = 0; i < cov.rows; ++i)  // exact symmetry against roundoff
        for (int j = 0; j < i; ++j) {
            double v = 0.5 * (cov.at(i, j) + cov.at(j, i));
            cov.at(i, j) = v;
            cov.at(j, i) = v;
        }
    return meas::GaussianMeasure(std::move(m), std::move(cov));
}

double LossSpec::operator()(double x, double y) const {
    double d = metric == Metric::zero_one ? (x == y ? 0.0 : 1.0) : std::fabs(x - y);
    return std::min(bound, d);
}

RiskEstimate risk(const Hypothesis& h, const Hypothesis& h_ref, const meas::GaussianMeasure& mu, const LossSpec& loss,
                  int n_mc, uint64_t seed) {
    return mc_expectation([&](const std::vector<double>& x) { return loss(h(x), h_ref(x)); }, mu, n_mc, seed);
}

SigmaEstimate sigma_estimate(const Hypothesis& h_u, const Hypothesis& h_s, const meas::GaussianMeasure& mu_u,
                             const meas::GaussianMeasure& mu_s, const LossSpec& loss, int n_mc, uint64_t seed) {
    auto disagreement = [&](const std::vector<double>& x) { return loss(h_u(x), h_s(x)); };
    RiskEstimate under_u = mc_expectation(disagreement, mu_u, n_mc, derive_seed(seed, "sigma-unseen"));
    RiskEstimate under_s = mc_expectation(disagreement, mu_s, n_mc, derive_seed(seed, "sigma-seen"));
    SigmaEstimate out;
    double mc_err = std::sqrt(under_u.stderr_ * under_u.stderr_ + under_s.stderr_ * under_s.stderr_);
    if (under_s.value <= under_u.value || std::fabs(under_s.value - under_u.value) <= mc_err) {
        out.value = std::min(under_s.value, under_u.value);
        out.stderr_ = under_s.stderr_;
        out.side = SigmaEstimate::Side::seen;
    } else {
        out.value = under_u.value;
        out.stderr_ = under_u.stderr_;
        out.side = SigmaEstimate::Side::unseen;
    }
    return out;
}

L1BoundResult l1_transport_bound(const meas::GaussianMeasure& mu, const meas::GaussianMeasure& nu,
                                const RegularityConstants& rc) {
    L1BoundResult out;
    out.l1 = meas::l1_distance(mu, nu);
    out.bound = l1_bound_value(rc, meas::second_moment(mu), meas::second_moment(nu), meas::w2_gaussian(mu, nu));
    return out;
}

L1BoundResult l1_transport_bound(const meas::HistogramMeasure& mu, const meas::HistogramMeasure& nu,
                                const RegularityConstants& rc) {
    L1BoundResult out;
    out.l1 = meas::l1_distance(mu, nu);
    out.bound =
        l1_bound_value(rc, meas::second_moment(mu), meas::second_moment(nu), meas::w2_histogram_1d(mu, nu));
    return out;
}

double kl_w2_slack(const meas::GaussianMeasure& mu, const meas::GaussianMeasure& nu, const RegularityConstants& rc) {
    double sym_kl = meas::kl_divergence(mu, nu) + meas::kl_divergence(nu, mu);
    double w2 = meas::w2_gaussian(mu, nu);
    double rhs = 2.0 * (0.5 * rc.c1 * (std::sqrt(meas::second_moment(mu)) + std::sqrt(meas::second_moment(nu))) + rc.c2) * w2;
    return rhs - sym_kl;
}

namespace {

struct TransportTerms {
    double theorem = 0.0;
    double seen_to_ref = 0.0;
    double ref_to_unseen = 0.0;
    double constant_c = 0.0;
    RegularityConstants rc;
};

TransportTerms transport_terms(const BoundInputs& in, const meas::GaussianMeasure* reference) {
    std::vector<meas::GaussianMeasure> pushes;
    pushes.push_back(in.f.pushforward(in.unseen.measure));
    for (const auto& s : in.seen) pushes.push_back(in.f.pushforward(s.measure));

    TransportTerms t;
    t.rc = worst_case_constants(pushes, in.base);

    double m2_u = meas::second_moment(pushes[0]);
    double c = 0.0;
    double mix_theorem = 0.0, mix_ref = 0.0;
    for (size_t s = 0; s < in.seen.size(); ++s) {
        const auto& push_s = pushes[s + 1];
        double m2_s = meas::second_moment(push_s);
        c = std::max(c, std::sqrt(t.rc.c1 * (std::sqrt(m2_u) + std::sqrt(m2_s)) + 2.0 * t.rc.c2));
        double w_us = meas::w2_gaussian(pushes[0], push_s);
        mix_theorem += in.lambda[s] * w_us * w_us;
        if (reference) {
            double w_rs = meas::w2_gaussian(*reference, push_s);
            mix_ref += in.lambda[s] * w_rs * w_rs;
        }
    }
    t.constant_c = c;
    t.theorem = in.loss.bound * c * std::pow(mix_theorem, 0.25);
    if (reference) {
        t.seen_to_ref = in.loss.bound * c * std::pow(mix_ref, 0.25);
        double w_ur = meas::w2_gaussian(pushes[0], *reference);
        t.ref_to_unseen = in.loss.bound * c * std::pow(w_ur * w_ur, 0.25);
    }
    return t;
}

BoundReport assemble_report(const BoundInputs& in, const meas::GaussianMeasure* reference) {
    if (in.seen.empty()) throw std::runtime_error("bound report: need at least one seen domain");
    if (in.lambda.size() != in.seen.size()) throw std::runtime_error("bound report: one weight per seen domain");
    double lsum = 0.0;
    for (double l : in.lambda) {
        if (l < 0.0) throw std::runtime_error("bound report: weights must be nonnegative");
        lsum += l;
    }
    if (std::fabs(lsum - 1.0) > 1e-9) throw std::runtime_error("bound report: weights must sum to 1");

    TransportTerms t = transport_terms(in, reference);

    BoundReport rep;
    rep.rc = t.rc;
    rep.constant_c = t.constant_c;
    rep.constant_l = in.loss.bound;
    rep.lambda = in.lambda;

    RiskEstimate lhs = risk(in.h, in.unseen.labeler, in.unseen.measure, in.loss, in.n_mc, derive_seed(in.seed, "lhs"));
    rep.lhs_risk = lhs.value;

    double var = lhs.stderr_ * lhs.stderr_;
    for (size_t s = 0; s < in.seen.size(); ++s) {
        RiskEstimate rs = risk(in.h, in.seen[s].labeler, in.seen[s].measure, in.loss, in.n_mc,
                               derive_seed(in.seed, "seen-" + std::to_string(s)));
        rep.term_risks += in.lambda[s] * rs.value;
        var += in.lambda[s] * in.lambda[s] * rs.stderr_ * rs.stderr_;
        SigmaEstimate sig = sigma_estimate(in.unseen.labeler, in.seen[s].labeler, in.unseen.measure,
                                           in.seen[s].measure, in.loss, in.n_mc,
                                           derive_seed(in.seed, "sigma-" + std::to_string(s)));
        rep.term_sigma += in.lambda[s] * sig.value;
        var += in.lambda[s] * in.lambda[s] * sig.stderr_ * sig.stderr_;
    }

    if (reference) {
        rep.split_form = true;
        rep.term_transport_reference = t.seen_to_ref;
        rep.term_transport_unseen = t.ref_to_unseen;
        rep.term_transport = t.seen_to_ref + t.ref_to_unseen;
    } else {
        rep.term_transport = t.theorem;
    }
    rep.rhs_total = rep.term_risks + rep.term_transport + rep.term_sigma;
    rep.slack = rep.rhs_total - rep.lhs_risk;
    rep.mc_tolerance = 3.0 * std::sqrt(var);
    return rep;
}

}  // namespace

BoundReport risk_bound_report(const BoundInputs& in) { return assemble_report(in, nullptr); }

BoundReport split_reference_report(const BoundInputs& in, const meas::GaussianMeasure& reference) {
    return assemble_report(in, &reference);
}

ReconstructionSlack near_invertibility_slack(const VectorMap& f, const VectorMap& reconstructor,
                                             const std::vector<std::vector<double>>& samples, double lip_k,
                                             double lip_q) {
    if (samples.empty()) throw std::runtime_error("near_invertibility_slack: empty sample set");
    double worst = 0.0;
    for (const auto& x : samples) {
        std::vector<double> back = reconstructor(f(x));
        if (back.size() != x.size()) throw std::runtime_error("near_invertibility_slack: reconstruction dimension mismatch");
        double d2 = 0.0;
        for (size_t k = 0; k < x.size(); ++k) {
            double d = x[k] - back[k];
            d2 += d * d;
        }
        worst = std::max(worst, std::sqrt(d2));
    }
    return {worst, 2.0 * lip_q * lip_k * worst};
}

RegimeReport regime_compare(const meas::EmpiricalMeasure& mu, const meas::EmpiricalMeasure& nu,
                            double f_range_diameter) {
    RegimeReport r;
    r.w1 = ot::exact_w1(mu, nu);
    double w2sq = ot::exact_ot(mu, nu);
    r.w2 = std::sqrt(w2sq);
    r.sqrt_w2 = std::sqrt(r.w2);
    r.diameter = f_range_diameter;
    r.quarter_bound = std::pow(f_range_diameter * r.w1, 0.25);
    r.sufficient_condition_holds = f_range_diameter <= r.w1 * r.w1 * r.w1;
    r.sqrt_w2_below_w1 = r.sqrt_w2 <= r.w1;
    return r;
}

// ---- sweeps ----

namespace {

meas::GaussianMeasure random_gauss_1d(std::mt19937_64& rng) {
    double m = -2.0 + 4.0 * uniform01(rng);
    double var = 0.3 + 2.0 * uniform01(rng);
    return meas::GaussianMeasure::iso({m}, var);
}

std::vector<double> random_convex_weights(std::mt19937_64& rng, int s) {
    std::vector<double> w(static_cast<size_t>(s));
    double sum = 0.0;
    for (auto& v : w) {
        v = 0.05 + uniform01(rng);
        sum += v;
    }
    for (auto& v : w) v /= sum;
    return w;
}

SweepResult finish(std::string name, int cases, double min_slack, double tol) {
    SweepResult r;
    r.name = std::move(name);
    r.cases = cases;
    r.min_slack = min_slack;
    r.tolerance = tol;
    r.pass = min_slack >= -tol;
    return r;
}

}  // namespace

SweepResult sweep_pinsker(int cases, uint64_t seed) {
    auto rng = make_rng(seed);
    double min_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cases; ++t) {
        int k = 2 + uniform_int(rng, 7);
        Tensor sup(k, 1);
        for (int i = 0; i < k; ++i) sup.at(i, 0) = i;
        std::vector<double> p(static_cast<size_t>(k)), q(static_cast<size_t>(k));
        double ps = 0.0, qs = 0.0;
        for (int i = 0; i < k; ++i) {
            p[static_cast<size_t>(i)] = 0.02 + uniform01(rng);
            q[static_cast<size_t>(i)] = 0.02 + uniform01(rng);
            ps += p[static_cast<size_t>(i)];
            qs += q[static_cast<size_t>(i)];
        }
        for (int i = 0; i < k; ++i) {
            p[static_cast<size_t>(i)] /= ps;
            q[static_cast<size_t>(i)] /= qs;
        }
        meas::HistogramMeasure hp(sup, p), hq(sup, q);
        double l1 = meas::l1_distance(hp, hq);
        min_slack = std::min(min_slack, 2.0 * meas::kl_divergence(hp, hq) - l1 * l1);
    }
    return finish("pinsker", cases, min_slack, 1e-9);
}

SweepResult sweep_l1_transport(int cases, uint64_t seed) {
    auto rng = make_rng(seed);
    double min_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cases; ++t) {
        auto mu = random_gauss_1d(rng);
        auto nu = random_gauss_1d(rng);
        RegularityConstants rc = worst_case_constants({mu, nu});
        L1BoundResult r = l1_transport_bound(mu, nu, rc);
        min_slack = std::min(min_slack, r.bound - r.l1);
    }
    return finish("l1_transport", cases, min_slack, 1e-9);
}

SweepResult sweep_kl_w2(int cases, uint64_t seed) {
    auto rng = make_rng(seed);
    double min_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cases; ++t) {
        auto mu = random_gauss_1d(rng);
        auto nu = random_gauss_1d(rng);
        RegularityConstants rc = worst_case_constants({mu, nu});
        min_slack = std::min(min_slack, kl_w2_slack(mu, nu, rc));
    }
    return finish("kl_w2", cases, min_slack, 1e-9);
}

SweepResult sweep_jensen_quarter(int cases, uint64_t seed) {
    auto rng = make_rng(seed);
    double min_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cases; ++t) {
        int s = 1 + uniform_int(rng, 5);
        auto lambda = random_convex_weights(rng, s);
        double mix_sqrt = 0.0, mix_sq = 0.0;
        for (int i = 0; i < s; ++i) {
            double w = 3.0 * uniform01(rng);
            mix_sqrt += lambda[static_cast<size_t>(i)] * std::sqrt(w);
            mix_sq += lambda[static_cast<size_t>(i)] * w * w;
        }
        min_slack = std::min(min_slack, std::pow(mix_sq, 0.25) - mix_sqrt);
    }
    return finish("jensen_quarter", cases, min_slack, 1e-9);
}

SweepResult sweep_quarter_subadditivity(int cases, uint64_t seed) {
    auto rng = make_rng(seed);
    double min_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cases; ++t) {
        double a = 5.0 * uniform01(rng), b = 5.0 * uniform01(rng);
        min_slack = std::min(min_slack, std::pow(a, 0.25) + std::pow(b, 0.25) - std::pow(a + b, 0.25));
    }
    return finish("quarter_subadditivity", cases, min_slack, 1e-9);
}

namespace {

// Randomized 1-D bound instance: Gaussian domains, invertible affine encoder,
// threshold hypotheses on the representation.
BoundInputs random_bound_inputs(std::mt19937_64& rng, int n_mc, uint64_t case_seed) {
    BoundInputs in;
    int s_count = 1 + uniform_int(rng, 3);
    double slope = (uniform01(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + 1.5 * uniform01(rng));
    double shift = -1.0 + 2.0 * uniform01(rng);
    Tensor a(1, 1);
    a.at(0, 0) = slope;
    in.f = AffineMap{a, {shift}};

    auto threshold = [&](double w, double t) {
        AffineMap f = in.f;
        return Hypothesis([f, w, t](const std::vector<double>& x) {
            return f.apply(x)[0] * w > t ? 1.0 : 0.0;
        });
    };
    for (int s = 0; s < s_count; ++s) {
        meas::GaussianMeasure m = random_gauss_1d(rng);
        in.seen.push_back({m, threshold(uniform01(rng) < 0.5 ? -1.0 : 1.0, -1.0 + 2.0 * uniform01(rng))});
    }
    in.unseen = {random_gauss_1d(rng), threshold(uniform01(rng) < 0.5 ? -1.0 : 1.0, -1.0 + 2.0 * uniform01(rng))};
    in.h = threshold(uniform01(rng) < 0.5 ? -1.0 : 1.0, -1.0 + 2.0 * uniform01(rng));
    in.lambda = random_convex_weights(rng, s_count);
    in.loss = LossSpec{1.0, LossSpec::Metric::zero_one};
    in.n_mc = n_mc;
    in.seed = case_seed;
    return in;
}

}  // namespace

SweepResult sweep_risk_bound(int cases, uint64_t seed, int n_mc) {
    auto rng = make_rng(seed);
    double min_norm_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cases; ++t) {
        BoundInputs in = random_bound_inputs(rng, n_mc, derive_seed(seed, "case-" + std::to_string(t)));
        BoundReport rep = risk_bound_report(in);
        min_norm_slack = std::min(min_norm_slack, rep.slack + rep.mc_tolerance);
    }
    // pass iff slack >= -mc_tolerance for every case
    return finish("risk_bound", cases, min_norm_slack, 0.0);
}

SweepResult sweep_split_reference(int cases, uint64_t seed, int n_mc) {
    auto rng = make_rng(seed);
    double min_norm_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cases; ++t) {
        BoundInputs in = random_bound_inputs(rng, n_mc, derive_seed(seed, "case-" + std::to_string(t)));
        meas::GaussianMeasure reference = random_gauss_1d(rng);
        BoundReport split = split_reference_report(in, reference);
        BoundReport base = risk_bound_report(in);
        // the split transport term dominates the direct one (triangle chain)
        min_norm_slack = std::min(min_norm_slack, split.term_transport - base.term_transport);
        min_norm_slack = std::min(min_norm_slack, split.slack + split.mc_tolerance);
    }
    return finish("split_reference", cases, min_norm_slack, 1e-9);
}

RegimeSweepResult sweep_regimes(int cases, uint64_t seed) {
    auto rng = make_rng(seed);
    RegimeSweepResult out;
    double min_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cases; ++t) {
        int n = 3 + uniform_int(rng, 4);
        int d = 1 + uniform_int(rng, 3);
        // alternate near and far pairs so both regimes appear
        double separation = (t % 2 == 0) ? 0.0 : 1.5 + 2.0 * uniform01(rng);
        Tensor pa(n, d), pb(n, d);
        for (auto& v : pa.data) v = uniform01(rng);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < d; ++k) pb.at(i, k) = uniform01(rng) + (k == 0 ? separation : 0.0);
        auto mu = meas::EmpiricalMeasure::uniform(pa);
        auto nu = meas::EmpiricalMeasure::uniform(pb);
        // diameter of the pooled support
        double diam = 0.0;
        auto all = [&](int idx) { return idx < n ? mu.points.row_vec(idx) : nu.points.row_vec(idx - n); };
        for (int i = 0; i < 2 * n; ++i)
            for (int j = i + 1; j < 2 * n; ++j) {
                auto xi = all(i), xj = all(j);
                double s = 0.0;
                for (int k = 0; k < d; ++k) s += (xi[static_cast<size_t>(k)] - xj[static_cast<size_t>(k)]) *
                                                 (xi[static_cast<size_t>(k)] - xj[static_cast<size_t>(k)]);
                diam = std::max(diam, std::sqrt(s));
            }
        RegimeReport r = regime_compare(mu, nu, diam);
        min_slack = std::min(min_slack, r.w2 - r.w1);                    // W1 <= W2
        min_slack = std::min(min_slack, r.quarter_bound - r.sqrt_w2);    // sqrt(W2) <= [diam W1]^{1/4}
        if (r.sqrt_w2 < r.w1) ++out.sqrt_w2_tighter;
        if (r.w1 < r.sqrt_w2) ++out.w1_tighter;
        if (r.sufficient_condition_holds) {
            ++out.sufficient_condition_cases;
            if (!r.sqrt_w2_below_w1) out.implication_holds = false;
        }
    }
    out.chain = finish("regime_chain", cases, min_slack, 1e-9);
    return out;
}

}  // namespace otdg::bounds
