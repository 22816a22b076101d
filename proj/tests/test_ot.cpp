#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otdg/measures.hpp"
#include "otdg/ot.hpp"
#include "otdg/rng.hpp"

using namespace otdg;
using namespace otdg::meas;
using namespace otdg::ot;

namespace {

EmpiricalMeasure random_cloud(std::mt19937_64& rng, int n, int d, double lo = 0.0, double hi = 2.0) {
    Tensor pts(n, d);
    for (auto& v : pts.data) v = lo + (hi - lo) * uniform01(rng);
    return EmpiricalMeasure::uniform(std::move(pts));
}

// Independent oracle: exhaustive minimum over all permutations.
double brute_force_w2sq(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    int n = a.size();
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            for (int k = 0; k < a.dim(); ++k) {
                double d = a.points.at(i, k) - b.points.at(perm[static_cast<size_t>(i)], k);
                total += d * d;
            }
        }
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / n;
}

EmpiricalMeasure translated(const EmpiricalMeasure& m, const std::vector<double>& t) {
    Tensor pts = m.points;
    for (int i = 0; i < pts.rows; ++i)
        for (int j = 0; j < pts.cols; ++j) pts.at(i, j) += t[static_cast<size_t>(j)];
    return EmpiricalMeasure(pts, m.weights);
}

}  // namespace

TEST_CASE("sinkhorn_ot: self-coupling stays near the diagonal") {
    auto a = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0, 0.0}, {1.0, 0.0}}));
    auto plan = sinkhorn_ot(a, a, 0.1);
    CHECK(plan.converged);
    CHECK(plan.cost <= 0.1);
    CHECK(plan.plan.at(0, 0) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(plan.plan.at(1, 1) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(plan.plan.at(0, 1) < 1e-3);
}

TEST_CASE("sinkhorn_ot: single forced pair") {
    auto a = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0, 0.0}}));
    auto b = EmpiricalMeasure::uniform(Tensor::from_rows({{1.0, 0.0}}));
    for (double eps : {1e-2, 0.5, 2.0}) {
        auto plan = sinkhorn_ot(a, b, eps);
        CHECK(plan.cost == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(plan.plan.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("sinkhorn_ot: two-point clouds against permutation oracle") {
    auto a = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0, 0.0}, {1.0, 0.0}}));
    auto b = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0, 1.0}, {1.0, 1.0}}));
    // identity pairing costs 1, the swap costs 2
    CHECK(brute_force_w2sq(a, b) == doctest::Approx(1.0));
    auto plan = sinkhorn_ot(a, b, 1e-3, {.max_iter = 20000, .tol = 1e-9});
    CHECK(plan.cost == doctest::Approx(1.0).epsilon(1e-2));
}

TEST_CASE("sinkhorn_ot: marginal feasibility of converged plans") {
    auto rng = make_rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = random_cloud(rng, 3 + uniform_int(rng, 4), 2);
        auto b = random_cloud(rng, 3 + uniform_int(rng, 4), 2);
        auto plan = sinkhorn_ot(a, b, 0.1, {.max_iter = 20000, .tol = 1e-6});
        CHECK(plan.converged);
        CHECK(plan.marginal_violation < 1e-6);
        CHECK(plan.cost >= 0.0);
    }
}

TEST_CASE("sinkhorn_ot: errors and non-convergence contract") {
    auto a = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0}}));
    CHECK_THROWS(sinkhorn_ot(a, a, 0.0));
    CHECK_THROWS(sinkhorn_ot(a, a, -1.0));
    auto far1 = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0}, {100.0}}));
    auto far2 = EmpiricalMeasure::uniform(Tensor::from_rows({{50.0}, {150.0}}));
    auto plan = sinkhorn_ot(far1, far2, 1e-4, {.max_iter = 3, .tol = 1e-12});
    CHECK(!plan.converged);  // budget exhausted, no throw
}

TEST_CASE("exact_ot: identical, translated, and random clouds vs brute force") {
    auto rng = make_rng(77);
    auto a = random_cloud(rng, 5, 2);
    CHECK(exact_ot(a, a) == doctest::Approx(0.0));

    std::vector<double> t{0.7, -0.3};
    CHECK(exact_ot(a, translated(a, t)) == doctest::Approx(0.7 * 0.7 + 0.3 * 0.3).epsilon(1e-12));

    for (int trial = 0; trial < 5; ++trial) {
        auto x = random_cloud(rng, 5, 2);
        auto y = random_cloud(rng, 5, 2);
        CHECK(exact_ot(x, y) == doctest::Approx(brute_force_w2sq(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("exact_ot: rejects non-uniform weights and unequal sizes") {
    auto a = EmpiricalMeasure(Tensor::from_rows({{0.0}, {1.0}}), {0.3, 0.7});
    auto b = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0}, {1.0}}));
    CHECK_THROWS_WITH(exact_ot(a, b), doctest::Contains("sinkhorn_ot"));
    auto c = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0}}));
    CHECK_THROWS_WITH(exact_ot(b, c), doctest::Contains("sinkhorn_ot"));
}

TEST_CASE("sinkhorn transport cost approaches exact_ot as eps shrinks") {
    auto rng = make_rng(404);
    SinkhornOptions tight{.max_iter = 20000, .tol = 1e-10};
    // near-tied assignments leave a ~1e-6 plateau where the entropic plan
    // mixes both optima at every eps; the slack covers that floor
    const double noise_floor = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        auto a = random_cloud(rng, 4 + uniform_int(rng, 3), 2);
        auto b = random_cloud(rng, a.size(), 2);
        double exact = exact_ot(a, b);
        double prev_gap = std::numeric_limits<double>::infinity();
        for (double eps : {1e-1, 1e-2, 1e-3}) {
            auto plan = sinkhorn_ot(a, b, eps, tight);
            double gap = std::fabs(plan.cost - exact);
            CHECK(gap <= prev_gap + noise_floor);
            prev_gap = gap;
        }
        CHECK(prev_gap < 0.02 * std::max(exact, 0.05));
    }
}

TEST_CASE("sinkhorn_divergence: zero on identical, symmetric, positive on distinct") {
    auto rng = make_rng(555);
    auto a = random_cloud(rng, 6, 2);
    CHECK(sinkhorn_divergence(a, a, 0.5) == 0.0);

    for (int trial = 0; trial < 100; ++trial) {
        auto x = random_cloud(rng, 3 + uniform_int(rng, 4), 2);
        auto y = random_cloud(rng, 3 + uniform_int(rng, 4), 2);
        double sxy = sinkhorn_divergence(x, y, 0.2);
        double syx = sinkhorn_divergence(y, x, 0.2);
        CHECK(sxy == syx);  // canonical internal order makes this exact
        CHECK(std::fabs(sxy - syx) <= 1e-8);
        CHECK(sxy > 0.0);
    }
}

TEST_CASE("sinkhorn_divergence: recovers squared W2 between gaussian samples") {
    // trimmed-down version of the 2000-sample acceptance run
    auto a = sample(GaussianMeasure::standard(2), 600, 1);
    auto b = sample(GaussianMeasure::iso({3.0, 0.0}, 1.0), 600, 2);
    double s = sinkhorn_divergence(a, b, 0.5, {.max_iter = 400, .tol = 1e-4});
    CHECK(s == doctest::Approx(9.0).epsilon(0.12));
}

TEST_CASE("free_support_barycenter: two diracs meet at the midpoint") {
    auto d1 = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0, 0.0}}));
    auto d2 = EmpiricalMeasure::uniform(Tensor::from_rows({{2.0, 0.0}}));
    auto res = free_support_barycenter({d1, d2}, {0.5, 0.5}, 1, 0.1);
    CHECK(res.measure.size() == 1);
    CHECK(res.measure.points.at(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::fabs(res.measure.points.at(0, 1)) < 1e-6);
}

TEST_CASE("free_support_barycenter: single measure converges onto itself") {
    auto m = sample(GaussianMeasure::standard(2), 32, 9);
    BarycenterOptions opt;
    opt.seed = 3;
    auto res = free_support_barycenter({m}, {1.0}, 32, 0.01, opt);
    double self_div = sinkhorn_divergence(res.measure, m, 0.01, {.max_iter = 2000, .tol = 1e-7});
    CHECK(self_div < 1e-3);
}

TEST_CASE("free_support_barycenter: copies of one measure, objective trace monotone") {
    auto m = sample(GaussianMeasure::standard(2), 24, 14);
    BarycenterOptions opt;
    opt.seed = 5;
    auto res = free_support_barycenter({m, m, m}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, 24, 0.01, opt);
    for (size_t i = 1; i < res.objective_trace.size(); ++i)
        CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-6);
    double self_div = sinkhorn_divergence(res.measure, m, 0.01, {.max_iter = 2000, .tol = 1e-7});
    CHECK(self_div < 1e-3);
}

TEST_CASE("free_support_barycenter: two gaussian clouds, mean lands at the midpoint") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        auto a = sample(GaussianMeasure::iso({-2.0, 0.0}, 0.25), 256, seed * 11);
        auto b = sample(GaussianMeasure::iso({2.0, 0.0}, 0.25), 256, seed * 11 + 1);
        BarycenterOptions opt;
        opt.seed = seed;
        auto res = free_support_barycenter({a, b}, {0.5, 0.5}, 64, 0.05, opt);
        double mx = 0.0, my = 0.0;
        for (int i = 0; i < res.measure.size(); ++i) {
            mx += res.measure.points.at(i, 0);
            my += res.measure.points.at(i, 1);
        }
        mx /= res.measure.size();
        my /= res.measure.size();
        CHECK(std::fabs(mx) < 0.1);
        CHECK(std::fabs(my) < 0.1);
        for (size_t i = 1; i < res.objective_trace.size(); ++i)
            CHECK(res.objective_trace[i] <= res.objective_trace[i - 1] + 1e-6);
    }
}

TEST_CASE("free_support_barycenter: rigid translation covariance") {
    auto rng = make_rng(88);
    auto a = random_cloud(rng, 12, 2);
    auto b = random_cloud(rng, 12, 2);
    std::vector<double> t{1.3, -0.8};
    BarycenterOptions opt;
    opt.seed = 17;
    auto base = free_support_barycenter({a, b}, {0.5, 0.5}, 8, 0.05, opt);
    auto moved = free_support_barycenter({translated(a, t), translated(b, t)}, {0.5, 0.5}, 8, 0.05, opt);
    // same seeded init indices, so supports correspond elementwise
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(moved.measure.points.at(i, j) ==
                  doctest::Approx(base.measure.points.at(i, j) + t[static_cast<size_t>(j)]).epsilon(1e-6));
}

TEST_CASE("free_support_barycenter: error on empty input") {
    CHECK_THROWS(free_support_barycenter({}, {}, 4, 0.1));
}

TEST_CASE("graph: divergence matches numeric solver on converged problems") {
    auto rng = make_rng(606);
    auto a = random_cloud(rng, 6, 2);
    auto b = random_cloud(rng, 6, 2);
    diff::Graph g;
    diff::NodeId x = g.constant(a.points);
    diff::NodeId y = g.constant(b.points);
    diff::NodeId node = sinkhorn_divergence_node(g, x, y, a.weights, b.weights, {.eps = 0.5, .iters = 200});
    double graph_val = diff::evaluate(g, node, {}).item();
    double numeric = sinkhorn_divergence(a, b, 0.5, {.max_iter = 2000, .tol = 1e-10});
    CHECK(graph_val == doctest::Approx(numeric).epsilon(1e-6));
}

TEST_CASE("graph: finite differences through the unrolled divergence") {
    auto rng = make_rng(707);
    auto a = random_cloud(rng, 8, 2);
    auto b = random_cloud(rng, 8, 2);
    diff::Graph g;
    diff::NodeId x = g.leaf("x", 8, 2);
    diff::NodeId y = g.constant(b.points);
    diff::NodeId node = sinkhorn_divergence_node(g, x, y, a.weights, b.weights, {.eps = 0.5, .iters = 30});
    double err = diff::finite_diff_check(g, node, {{"x", a.points}}, "x");
    CHECK(err <= 1e-3);
}

TEST_CASE("graph: barycenter loss zero-ish when domains equal the barycenter") {
    auto rng = make_rng(808);
    auto m = random_cloud(rng, 8, 2);
    diff::Graph g;
    diff::NodeId z1 = g.constant(m.points);
    diff::NodeId z2 = g.constant(m.points);
    diff::NodeId loss = barycenter_loss_node(g, {z1, z2}, {m.weights, m.weights}, m, {.eps = 0.1, .iters = 200});
    CHECK(std::fabs(diff::evaluate(g, loss, {}).item()) < 1e-6);
}

TEST_CASE("graph: one-point domain gradient points along the displacement") {
    meas::EmpiricalMeasure bary = EmpiricalMeasure::uniform(Tensor::from_rows({{0.0, 0.0}}));
    diff::Graph g;
    diff::NodeId q = g.leaf("q", 1, 2);
    diff::NodeId loss = barycenter_loss_node(g, {q}, {{1.0}}, bary, {.eps = 0.5, .iters = 20});
    Tensor at = Tensor::from_rows({{0.6, -0.8}});
    auto grads = diff::backward(g, loss, {{"q", at}});
    // S_eps between diracs is exactly the squared distance; gradient = 2(q - b)
    CHECK(grads.at("q").at(0, 0) == doctest::Approx(2.0 * 0.6).epsilon(1e-9));
    CHECK(grads.at("q").at(0, 1) == doctest::Approx(2.0 * -0.8).epsilon(1e-9));
}

TEST_CASE("graph: barycenter loss finite-difference agreement on random 8-point configs") {
    auto rng = make_rng(909);
    auto bary = random_cloud(rng, 8, 2);
    auto d1 = random_cloud(rng, 8, 2);
    auto d2 = random_cloud(rng, 8, 2);
    diff::Graph g;
    diff::NodeId z1 = g.leaf("z1", 8, 2);
    diff::NodeId z2 = g.leaf("z2", 8, 2);
    diff::NodeId loss = barycenter_loss_node(g, {z1, z2}, {d1.weights, d2.weights}, bary, {.eps = 0.5, .iters = 25});
    diff::Bindings binds{{"z1", d1.points}, {"z2", d2.points}};
    CHECK(diff::finite_diff_check(g, loss, binds, "z1") <= 1e-3);
    CHECK(diff::finite_diff_check(g, loss, binds, "z2") <= 1e-3);
}

TEST_CASE("graph: barycenter support is gradient-free (detachment contract)") {
    auto rng = make_rng(1001);
    auto bary_m = random_cloud(rng, 4, 2);
    diff::Graph g;
    // bind the barycenter through a detached leaf to observe its gradient
    diff::NodeId bary_leaf = g.leaf("bary", 4, 2);
    diff::NodeId bary_detached = g.detach(bary_leaf);
    diff::NodeId z = g.leaf("z", 4, 2);
    diff::NodeId div = sinkhorn_divergence_node(g, bary_detached, z, bary_m.weights, bary_m.weights, {.eps = 0.5, .iters = 20});
    auto d1 = random_cloud(rng, 4, 2);
    auto grads = diff::backward(g, div, {{"bary", bary_m.points}, {"z", d1.points}});
    for (double v : grads.at("bary").data) CHECK(v == 0.0);
    double znorm = 0.0;
    for (double v : grads.at("z").data) znorm += std::fabs(v);
    CHECK(znorm > 0.0);
}
