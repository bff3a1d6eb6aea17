#include "higgsflow/flow.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace higgsflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const double kPi = std::numbers::pi;

struct Setup {
  LatticeSurface surface;
  BackgroundBundle bundle;
  HiggsField phi;
};

Setup setup(const std::string& name, int n = 8) {
  const auto ex = find_example(name);
  LatticeSurface s(n, 1.0);
  auto b = build_background(s, ex.rank, ex.flux);
  return {s, std::move(b), HiggsField::constant(s, ex.higgs)};
}

// Metric on the geodesic k exp(s log(k^{-1} h)) evaluated independently with dense exponentials.
MetricField geodesic(const MetricField& k, const MetricField& h, double t) {
  EndoField out(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) {
    const Mat ksqrt = linalg::hermitian_sqrt(k[i]);
    const Mat kinv = ksqrt.inverse();
    const Mat inner = linalg::hermitian_part(kinv * h[i] * kinv);
    out[i] = ksqrt * linalg::hermitian_function(inner, [t](double x) { return std::pow(x, t); }) * ksqrt;
  }
  return MetricField(out);
}

}  // namespace

TEST_CASE("Romberg refinement of nested trapezoid sums", "[flow]") {
  auto sample = [](int points, auto f) {
    std::vector<double> v(points);
    for (int q = 0; q < points; ++q) v[q] = f(static_cast<double>(q) / (points - 1));
    return v;
  };
  auto poly = [](double x) { return 3 * std::pow(x, 9) - 2 * std::pow(x, 4) + x; };
  const double exact = 0.3 - 0.4 + 0.5;
  CHECK_THAT(integrate_unit_interval(sample(33, poly), QuadratureRule::romberg), WithinAbs(exact, 1e-13));
  const double trap = integrate_unit_interval(sample(33, poly), QuadratureRule::trapezoid);
  CHECK(std::abs(trap - exact) > 1e-4);
  // panel counts that are not powers of two fall back to the trapezoid rule
  const auto odd = sample(13, poly);
  CHECK(integrate_unit_interval(odd, QuadratureRule::romberg) == integrate_unit_interval(odd, QuadratureRule::trapezoid));
  CHECK_THAT(integrate_unit_interval(sample(2, [](double x) { return x; }), QuadratureRule::romberg), WithinAbs(0.5, 1e-15));
}

TEST_CASE("Donaldson functional basics", "[flow]") {
  auto st = setup("nilpotent");
  const auto h = random_smooth_metric(st.bundle, 0.3, 1);
  SECTION("vanishes on the zero path") {
    CHECK(donaldson_functional(st.bundle, st.phi, h, h, 0.0) == 0.0);
  }
  SECTION("quad_points must be at least two") {
    CHECK_THROWS_AS(donaldson_functional(st.bundle, st.phi, h, h, 0.0, 1), ValidationError);
  }
  SECTION("closed form agrees with the quadrature") {
    const auto k = random_smooth_metric(st.bundle, 0.3, 2);
    const double quad = donaldson_functional(st.bundle, st.phi, h, k, 0.0);
    const double exact = donaldson_functional_exact(st.bundle, st.phi, h, k, 0.0);
    CHECK_THAT(quad, WithinRel(exact, 1e-8));
  }
}

TEST_CASE("flat line bundle under constant rescaling", "[flow]") {
  auto st = setup("flat-line-0");
  const auto k = MetricField::identity(st.surface, 1);
  const auto h = MetricField::constant(st.surface, Mat::Constant(1, 1, std::exp(0.8)));
  CHECK_THAT(donaldson_functional(st.bundle, st.phi, h, k, 0.0), WithinAbs(0.0, 1e-14));
}

TEST_CASE("Donaldson functional is antisymmetric and path independent", "[flow][property]") {
  for (const char* name : {"nilpotent", "split-unstable", "diag-polystable", "flat-line-2"}) {
    auto st = setup(name);
    const double c = hym_constant(st.bundle.total_flux() / static_cast<double>(st.bundle.rank()), 1.0, 1);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto h = random_smooth_metric(st.bundle, 0.3, 100 + seed);
      const auto k = random_smooth_metric(st.bundle, 0.3, 200 + seed);
      const auto mid = random_smooth_metric(st.bundle, 0.3, 300 + seed);
      const double hk = donaldson_functional(st.bundle, st.phi, h, k, c);
      const double kh = donaldson_functional(st.bundle, st.phi, k, h, c);
      CHECK_THAT(hk, WithinAbs(-kh, 1e-9 * (1.0 + std::abs(hk))));
      const double two = donaldson_functional(st.bundle, st.phi, h, mid, c) +
                         donaldson_functional(st.bundle, st.phi, mid, k, c);
      CHECK(std::abs(hk - two) <= 1e-6 * std::max(1.0, std::abs(hk)));
    }
  }
}

TEST_CASE("metric geodesic matches the dense-exponential oracle", "[flow]") {
  auto st = setup("split-unstable");
  const auto h = random_smooth_metric(st.bundle, 0.4, 3);
  const auto k = random_smooth_metric(st.bundle, 0.4, 4);
  EndoField eta(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) eta[i] = linalg::relative_log(k[i], h[i]);
  for (double t : {0.0, 0.25, 0.5, 1.0}) {
    const auto a = metric_geodesic_point(k, eta, t);
    const auto b = geodesic(k, h, t);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK((a[i] - b[i]).norm() < 1e-11);
  }
}

TEST_CASE("flow_step", "[flow]") {
  SECTION("fixed point is stationary") {
    auto st = setup("flat-line-0");
    const auto h = MetricField::constant(st.surface, Mat::Constant(1, 1, 1.9));
    const auto next = flow_step(st.bundle, st.phi, h, 0.0, 0.1);
    REQUIRE(next);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK((*next)[i] == h[i]);
  }
  SECTION("scalar closed form") {
    for (int d : {-2, 1, 3}) {
      auto st = setup("flat-line-" + std::to_string(d));
      const double c = 1.25;
      const double dt = 0.01;
      const auto next = flow_step(st.bundle, st.phi, MetricField::identity(st.surface, 1), c, dt);
      REQUIRE(next);
      const double expected = std::exp(-dt * (2 * kPi * d - c));
      for (const auto& m : next->values()) CHECK_THAT(m(0, 0).real(), WithinRel(expected, 1e-12));
    }
  }
  SECTION("update is Hermitian") {
    for (const char* name : {"nilpotent", "split-unstable", "diag-polystable"}) {
      auto st = setup(name);
      const auto h = random_smooth_metric(st.bundle, 0.5, 8);
      const auto next = flow_step(st.bundle, st.phi, h, 0.0, 1e-3);
      REQUIRE(next);
      for (const auto& m : next->values()) CHECK((m - m.adjoint()).norm() <= 1e-12);
    }
  }
  SECTION("falling below the floor is signalled") {
    auto st = setup("split-unstable");
    CHECK_FALSE(flow_step(st.bundle, st.phi, MetricField::identity(st.surface, 2), 0.0, 10.0, 1e-10));
    CHECK_THROWS_AS(flow_step(st.bundle, st.phi, MetricField::identity(st.surface, 2), 0.0, 0.0), ValidationError);
  }
}

TEST_CASE("FlowConfig validation", "[flow]") {
  FlowConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto bad = [](auto mutate) {
    FlowConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](FlowConfig& c) { c.dt_init = 1.0; c.dt_max = 0.5; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](FlowConfig& c) { c.max_steps = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](FlowConfig& c) { c.deviation_target = 0.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](FlowConfig& c) { c.t_max = -1.0; }).validate(), ValidationError);
  CHECK_THROWS_AS(bad([](FlowConfig& c) { c.monotonicity_slack = -1.0; }).validate(), ValidationError);
}

TEST_CASE("run_flow at a fixed point stops immediately", "[flow]") {
  auto st = setup("flat-line-0");
  const auto h0 = MetricField::identity(st.surface, 1);
  const auto tr = run_flow(st.bundle, st.phi, h0, h0, FlowConfig{});
  REQUIRE(tr.rows.size() == 1);
  CHECK(tr.rows[0].dev_sup == 0.0);
  CHECK(tr.rows[0].t == 0.0);
  CHECK(tr.status == FlowStatus::reached_target);
  CHECK(classify(tr, FlowConfig{}) == FlowClass::approx_hym_reached);
}

TEST_CASE("run_flow trace invariants on a perturbed start", "[flow][property]") {
  for (const char* name : {"nilpotent", "split-unstable", "diag-polystable"}) {
    auto st = setup(name);
    const auto h0 = random_smooth_metric(st.bundle, 0.3, 5);
    FlowConfig cfg;
    cfg.dt_init = 1e-3;
    cfg.dt_max = 4e-3;
    cfg.max_steps = 150;
    cfg.deviation_target = 1e-8;
    std::size_t observed = 0;
    const auto tr = run_flow(st.bundle, st.phi, h0, h0, cfg,
                             [&](std::size_t row, const MetricField&, const CurvatureField&) { CHECK(row == observed++); });
    CHECK(observed == tr.rows.size());
    CHECK(tr.rows.front().L == 0.0);
    for (std::size_t i = 1; i < tr.rows.size(); ++i) {
      CHECK(tr.rows[i].t > tr.rows[i - 1].t);
      CHECK(tr.rows[i].dt > 0.0);
      CHECK(tr.rows[i].L <= tr.rows[i - 1].L + cfg.monotonicity_slack * (1.0 + std::abs(tr.rows[i - 1].L)));
    }
    for (const auto& r : tr.rows) {
      CHECK(r.deg_drift <= 1e-6);
      CHECK(r.min_eig >= cfg.eig_floor);
    }
    CHECK(static_cast<int>(tr.rows.size()) - 1 <= cfg.max_steps);
    // determinism
    const auto again = run_flow(st.bundle, st.phi, h0, h0, cfg);
    REQUIRE(again.rows.size() == tr.rows.size());
    for (std::size_t i = 0; i < tr.rows.size(); ++i) {
      CHECK(again.rows[i].L == tr.rows[i].L);
      CHECK(again.rows[i].dev_sup == tr.rows[i].dev_sup);
      CHECK(again.rows[i].dt == tr.rows[i].dt);
    }
  }
}

TEST_CASE("run_flow reports step failure against a high eigenvalue floor", "[flow]") {
  auto st = setup("split-unstable");
  const auto h0 = MetricField::identity(st.surface, 2);
  FlowConfig cfg;
  cfg.eig_floor = 0.5;
  cfg.t_max = 5.0;
  cfg.deviation_target = 0.1;
  const auto tr = run_flow(st.bundle, st.phi, h0, h0, cfg);
  CHECK(tr.status == FlowStatus::step_failure);
  CHECK_FALSE(tr.diagnostic.empty());
  CHECK(tr.rejected_steps > 0);
}

TEST_CASE("nilpotent flow decays to a tenth of its initial deviation", "[flow]") {
  auto st = setup("nilpotent", 8);
  const auto h0 = MetricField::identity(st.surface, 2);
  FlowConfig cfg;
  cfg.dt_max = 0.05;
  cfg.t_max = 100.0;
  cfg.deviation_target = 0.1;
  cfg.deviation_target_relative = true;
  const auto tr = run_flow(st.bundle, st.phi, h0, h0, cfg);
  CHECK(tr.status == FlowStatus::reached_target);
  CHECK_THAT(tr.target, WithinRel(0.1 * std::sqrt(2.0), 1e-12));
  CHECK(tr.rows.back().dev_sup <= 0.1 * tr.rows.front().dev_sup);
  CHECK(classify(tr, cfg) == FlowClass::approx_hym_reached);
}

TEST_CASE("split-unstable flow keeps its deviation and diverges", "[flow]") {
  auto st = setup("split-unstable", 8);
  const auto h0 = MetricField::identity(st.surface, 2);
  FlowConfig cfg;
  cfg.dt_max = 0.05;
  cfg.t_max = 1.0;
  cfg.deviation_target = 1.0;
  const auto tr = run_flow(st.bundle, st.phi, h0, h0, cfg);
  CHECK(tr.status == FlowStatus::reached_t_max);
  for (const auto& r : tr.rows) CHECK(r.dev_sup >= 2 * kPi);
  CHECK(classify(tr, cfg) == FlowClass::diverging);
}

TEST_CASE("gradient check", "[flow]") {
  SECTION("fixed point") {
    auto st = setup("flat-line-2");
    const auto h = MetricField::identity(st.surface, 1);
    const auto g = gradient_check(st.bundle, st.phi, h, h, hym_constant(2.0, 1.0, 1));
    CHECK(std::abs(g.analytic) <= 1e-10);
    CHECK(std::abs(g.numeric) <= 1e-10);
  }
  for (const char* name : {"nilpotent", "split-unstable"}) {
    SECTION(std::string("identity metric, ") + name) {
      auto st = setup(name, 16);
      const auto h = MetricField::identity(st.surface, 2);
      const auto g = gradient_check(st.bundle, st.phi, h, h, 0.0);
      CHECK(g.analytic < 0.0);
      CHECK(g.rel_err <= 1e-3);
    }
  }
}

TEST_CASE("classify", "[flow]") {
  FlowConfig cfg;
  cfg.deviation_target = 0.5;
  FlowTrace tr;
  CHECK_THROWS_AS(classify(tr, cfg), ValidationError);
  tr.target = 0.5;
  tr.rows = {{0.0, 0.0, 2.0, 2.0, 1.0, 0.0, 0.1}, {0.1, -1.0, 0.4, 0.4, 1.0, 0.0, 0.1}};
  CHECK(classify(tr, cfg) == FlowClass::approx_hym_reached);
  tr.rows = {{0.0, 0.0, 9.0, 9.0, 1.0, 0.0, 0.1}, {0.1, -50.0, 8.9, 8.9, 1.0, 0.0, 0.1}};
  CHECK(classify(tr, cfg) == FlowClass::diverging);
  tr.rows = {{0.0, 0.0, 9.0, 9.0, 1.0, 0.0, 0.1}, {0.1, -2.0, 3.0, 3.0, 1.0, 0.0, 0.1}};
  CHECK(classify(tr, cfg) == FlowClass::bounded_below_plateau);
  cfg.deviation_floor = 10.0;
  tr.rows = {{0.0, 0.0, 9.0, 9.0, 1.0, 0.0, 0.1}, {0.1, -50.0, 8.9, 8.9, 1.0, 0.0, 0.1}};
  CHECK(classify(tr, cfg) == FlowClass::bounded_below_plateau);
}
