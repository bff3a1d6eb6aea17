#include "higgsflow/gauge.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace higgsflow;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const double kPi = std::numbers::pi;

BackgroundBundle background(const LatticeSurface& s, std::vector<int> flux) {
  return build_background(s, static_cast<int>(flux.size()), flux);
}

Mat random_unitary(int r, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Mat a(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) a(i, j) = Complex(g(rng), g(rng));
  Eigen::HouseholderQR<Mat> qr(a);
  return qr.householderQ();
}

Mat random_hermitian(int r, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g;
  Mat a(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) a(i, j) = scale * Complex(g(rng), g(rng));
  return 0.5 * (a + a.adjoint());
}

double trace_integral(const LatticeSurface& s, const EndoField& k) {
  ScalarField t(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) t[i] = k[i].trace();
  return s.integrate(t).real();
}

}  // namespace

TEST_CASE("chern_connection of constant metrics vanishes", "[gauge]") {
  LatticeSurface s(8, 1.0);
  for (const auto& m : chern_connection(background(s, {0}), MetricField::identity(s, 1))) CHECK(m.norm() == 0.0);
  Mat h = Mat::Zero(2, 2);
  h(0, 0) = 2.0;
  h(1, 1) = 1.0;
  for (const auto& m : chern_connection(background(s, {0, 0}), MetricField::constant(s, h)))
    CHECK(m.norm() < 1e-15);
}

TEST_CASE("chern_connection of a conformal metric is the difference of its logarithm", "[gauge]") {
  const int n = 32;
  LatticeSurface s(n, 1.0);
  const double a = s.spacing();
  std::vector<double> f(s.site_count());
  EndoField h(s.site_count());
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = 0.3 * std::sin(2 * kPi * s.x_of(i) / n) + 0.2 * std::cos(2 * kPi * s.y_of(i) / n);
    h[i] = std::exp(f[i]) * Mat::Identity(2, 2);
  }
  const auto conn = chern_connection(background(s, {0, 0}), MetricField(h));
  double worst_exact = 0.0, worst_fd = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double dx = f[s.shift(i, Direction::X)] - f[i];
    const double dy = f[s.shift(i, Direction::Y)] - f[i];
    const Complex exact = 0.5 * Complex((std::exp(dx) - 1.0) / a, -(std::exp(dy) - 1.0) / a);
    const Complex first_order = 0.5 * Complex(dx / a, -dy / a);
    worst_exact = std::max(worst_exact, (conn[i] - exact * Mat::Identity(2, 2)).norm());
    worst_fd = std::max(worst_fd, std::abs(conn[i](0, 0) - first_order));
    CHECK(std::abs(conn[i](0, 1)) < 1e-14);
  }
  CHECK(worst_exact < 1e-12);
  CHECK(worst_fd < 0.05);  // O(a) agreement with the plain forward difference of f
}

TEST_CASE("higgs_adjoint is the metric adjoint", "[gauge]") {
  LatticeSurface s(4, 1.0);
  Mat m(2, 2);
  m << Complex(0.3, 1.0), 2.0, Complex(0.0, -1.0), 0.5;
  SECTION("identity metric gives the conjugate transpose") {
    for (const auto& v : higgs_adjoint(HiggsField::constant(s, m), MetricField::identity(s, 2)))
      CHECK((v - m.adjoint()).norm() < 1e-15);
  }
  SECTION("diag(2,1) with the nilpotent field") {
    Mat nil = Mat::Zero(2, 2);
    nil(0, 1) = 1.0;
    Mat h = Mat::Zero(2, 2);
    h(0, 0) = 2.0;
    h(1, 1) = 1.0;
    Mat expected = Mat::Zero(2, 2);
    expected(1, 0) = 2.0;
    for (const auto& v : higgs_adjoint(HiggsField::constant(s, nil), MetricField::constant(s, h)))
      CHECK((v - expected).norm() < 1e-12);
  }
  SECTION("defining identity h(s, phi t) = h(phibar s, t)") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
      const Mat h = random_hermitian(3, rng) + 4.0 * Mat::Identity(3, 3);
      Mat phi(3, 3);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) phi(i, j) = Complex(g(rng), g(rng));
      const Mat bar = higgs_adjoint_matrix(phi, h);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          const Vec e = Vec::Unit(3, i), f = Vec::Unit(3, j);
          const Complex lhs = e.dot(h * (phi * f));
          const Complex rhs = (bar * e).dot(h * f);
          CHECK(std::abs(lhs - rhs) < 1e-12 * (1.0 + std::abs(lhs)));
        }
    }
  }
  SECTION("zero field") {
    for (const auto& v : higgs_adjoint(HiggsField::zero(s, 2), MetricField::identity(s, 2))) CHECK(v.norm() == 0.0);
  }
}

TEST_CASE("curvature of reference configurations", "[gauge]") {
  SECTION("flat trivial bundle") {
    LatticeSurface s(8, 1.0);
    const auto cf = hs_curvature(background(s, {0}), MetricField::identity(s, 1), HiggsField::zero(s, 1));
    for (std::size_t i = 0; i < s.site_count(); ++i) {
      CHECK(cf.plaquette[i].norm() == 0.0);
      CHECK(cf.higgs_commutator[i].norm() == 0.0);
      CHECK(cf.contracted[i].norm() == 0.0);
    }
  }
  SECTION("constant flux gives 2 pi d / V") {
    for (int d : {-3, -1, 1, 2, 5}) {
      for (double side : {1.0, 2.0}) {
        LatticeSurface s(16, side);
        const auto k = mean_curvature(background(s, {d}), MetricField::identity(s, 1), HiggsField::zero(s, 1));
        for (const auto& m : k) CHECK_THAT(m(0, 0).real(), WithinAbs(2 * kPi * d / (side * side), 1e-6));
      }
    }
  }
  SECTION("nilpotent Higgs field on the trivial background") {
    LatticeSurface s(8, 1.0);
    const Complex t(0.7, -0.4);
    Mat m = Mat::Zero(2, 2);
    m(0, 1) = t;
    const auto cf = hs_curvature(background(s, {0, 0}), MetricField::identity(s, 2), HiggsField::constant(s, m));
    Mat expected = Mat::Zero(2, 2);
    expected(0, 0) = std::norm(t);
    expected(1, 1) = -std::norm(t);
    for (std::size_t i = 0; i < s.site_count(); ++i) {
      CHECK((cf.higgs_commutator[i] - expected).norm() < 1e-14);
      CHECK((cf.contracted[i] - expected).norm() < 1e-14);
      CHECK(cf.plaquette[i].norm() < 1e-15);
    }
  }
}

TEST_CASE("scalar metric curvature is minus half the lattice Laplacian", "[gauge]") {
  const int n = 12;
  LatticeSurface s(n, 1.0);
  std::vector<double> u(s.site_count());
  EndoField h(s.site_count());
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = 0.4 * std::cos(2 * kPi * (s.x_of(i) + 2 * s.y_of(i)) / n) + 0.1 * std::sin(2 * kPi * s.y_of(i) / n);
    h[i] = Mat::Constant(1, 1, std::exp(u[i]));
  }
  const auto k = mean_curvature(background(s, {0}), MetricField(h), HiggsField::zero(s, 1));
  const double a2 = s.cell_area();
  for (std::size_t i = 0; i < u.size(); ++i) {
    double lap = -4.0 * u[i];
    for (auto d : kDirections) lap += u[s.shift(i, d)] + u[s.shift(i, d, -1)];
    CHECK_THAT(k[i](0, 0).real(), WithinAbs(-0.5 * lap / a2, 1e-10));
  }
}

TEST_CASE("degree and slope", "[gauge]") {
  std::mt19937_64 rng(17);
  LatticeSurface s(16, 1.0);
  SECTION("trivial flux") {
    const auto b = background(s, {0});
    CHECK_THAT(degree(b, MetricField::identity(s, 1)), WithinAbs(0.0, 1e-12));
    CHECK_THAT(degree(b, random_smooth_metric(b, 0.5, 4)), WithinAbs(0.0, 1e-10));
  }
  SECTION("flux three") {
    const auto b = background(s, {3});
    CHECK_THAT(degree(b, MetricField::identity(s, 1)), WithinAbs(3.0, 1e-10));
    CHECK_THAT(slope(b, MetricField::identity(s, 1)), WithinAbs(3.0, 1e-10));
  }
  SECTION("split flux with random metrics") {
    const auto b = background(s, {1, -1});
    const double d0 = degree(b, MetricField::identity(s, 2));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const double d = degree(b, random_smooth_metric(b, 0.5, seed));
      CHECK(std::abs(d) < 1e-6);
      CHECK(std::abs(d - d0) < 1e-8);
      CHECK(std::abs(slope(b, random_smooth_metric(b, 0.5, seed))) < 1e-6);
    }
  }
  SECTION("rank three with mixed fluxes") {
    const auto b = background(s, {2, 0, 1});
    CHECK_THAT(slope(b, random_smooth_metric(b, 0.3, 8)), WithinAbs(1.0, 1e-8));
  }
}

TEST_CASE("hym_constant", "[gauge]") {
  CHECK(hym_constant(0.0, 1.0, 1) == 0.0);
  CHECK_THAT(hym_constant(1.0, 1.0, 1), WithinRel(2 * kPi, 1e-15));
  CHECK_THAT(hym_constant(2.0, 4.0, 1), WithinRel(kPi, 1e-15));
  CHECK_THAT(hym_constant(1.5, 2.0, 2), WithinRel(2.0 * 2 * kPi * 1.5 / (2.0 * 2.0), 1e-15));
  CHECK_THROWS_AS(hym_constant(1.0, 0.0, 1), ValidationError);
  CHECK_THROWS_AS(hym_constant(1.0, 1.0, 0), ValidationError);
}

TEST_CASE("deviation norms", "[gauge]") {
  LatticeSurface s(8, 1.0);
  SECTION("K = c Id") {
    const EndoField k(s.site_count(), 2.5 * Mat::Identity(2, 2));
    const auto h = MetricField::identity(s, 2);
    CHECK(deviation_norm_sup(k, 2.5, h) == 0.0);
    CHECK(deviation_norm_l2(s, k, 2.5, h) == 0.0);
  }
  SECTION("diag(2 pi, -2 pi)") {
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = 2 * kPi;
    m(1, 1) = -2 * kPi;
    const EndoField k(s.site_count(), m);
    CHECK_THAT(deviation_norm_sup(k, 0.0, MetricField::identity(s, 2)), WithinRel(8.885765876316732, 1e-12));
    CHECK_THAT(deviation_norm_l2(s, k, 0.0, MetricField::identity(s, 2)), WithinRel(2 * kPi * std::sqrt(2.0), 1e-12));
  }
  SECTION("homogeneity and frame independence") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
      const Mat h = random_hermitian(3, rng) + 5.0 * Mat::Identity(3, 3);
      // h-self-adjoint K = h^{-1} H with H Hermitian; its eigenvalues are real
      const Mat k = h.inverse() * random_hermitian(3, rng);
      const double c = 0.3 * trial;
      Eigen::ComplexEigenSolver<Mat> es(k - c * Mat::Identity(3, 3));
      const double oracle = std::sqrt(es.eigenvalues().squaredNorm());
      const auto metric = MetricField::constant(s, h);
      const double sup = deviation_norm_sup(EndoField(s.site_count(), k), c, metric);
      CHECK_THAT(sup, WithinRel(oracle, 1e-10));
      const double alpha = 1.7;
      CHECK_THAT(deviation_norm_sup(EndoField(s.site_count(), alpha * k), alpha * c, metric),
                 WithinRel(alpha * sup, 1e-12));
    }
  }
  SECTION("non-self-adjoint input is a contract violation") {
    Mat k = Mat::Zero(2, 2);
    k(0, 1) = 1.0;
    CHECK_THROWS_AS(deviation_norm_sup(EndoField(s.site_count(), k), 0.0, MetricField::identity(s, 2)),
                    ContractViolation);
  }
}

TEST_CASE("curvature is gauge covariant under constant unitary frame changes", "[gauge][property]") {
  std::mt19937_64 rng(11);
  LatticeSurface s(8, 1.0);
  for (const auto& ex : catalog()) {
    const auto b = background(s, ex.flux);
    const auto h = random_smooth_metric(b, 0.4, 21);
    const auto phi = HiggsField::constant(s, ex.higgs);
    const Mat p = random_unitary(ex.rank, rng);
    const auto bp = b.conjugated(p);
    EndoField hp(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) hp[i] = p * h[i] * p.adjoint();
    const auto phip = HiggsField::constant(s, p * ex.higgs * p.adjoint());
    const MetricField mp(hp);

    const auto k = mean_curvature(b, h, phi);
    const auto kp = mean_curvature(bp, mp, phip);
    double worst = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i)
      worst = std::max(worst, (kp[i] - p * k[i] * p.adjoint()).norm() / (1.0 + k[i].norm()));
    CHECK(worst < 1e-9);
    const double c = hym_constant(slope(b, h), s.area(), 1);
    CHECK_THAT(deviation_norm_sup(kp, c, mp), WithinRel(deviation_norm_sup(k, c, h), 1e-9));
    CHECK_THAT(deviation_norm_l2(s, kp, c, mp), WithinRel(deviation_norm_l2(s, k, c, h), 1e-9));
    CHECK_THAT(degree(bp, mp), WithinAbs(degree(b, h), 1e-9));
  }
}

TEST_CASE("curvature is translation covariant on the trivial background", "[gauge][property]") {
  LatticeSurface s(8, 1.0);
  const auto ex = find_example("nilpotent");
  const auto b = background(s, ex.flux);
  const auto h = random_smooth_metric(b, 0.4, 2);
  const auto phi = HiggsField::constant(s, ex.higgs);
  const auto k = mean_curvature(b, h, phi);
  EndoField shifted(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) shifted[s.index(s.x_of(i) + 3, s.y_of(i) + 5)] = h[i];
  const auto ks = mean_curvature(b, MetricField(shifted), phi);
  for (std::size_t i = 0; i < h.size(); ++i) CHECK((ks[s.index(s.x_of(i) + 3, s.y_of(i) + 5)] - k[i]).norm() < 1e-10);
}

TEST_CASE("mean curvature is self-adjoint and integrates to 2 pi deg", "[gauge][property]") {
  LatticeSurface s(16, 1.0);
  for (const auto& ex : catalog()) {
    const auto b = background(s, ex.flux);
    const auto phi = HiggsField::constant(s, ex.higgs);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto h = random_smooth_metric(b, 0.4, seed);
      const auto k = mean_curvature(b, h, phi);
      for (std::size_t i = 0; i < k.size(); ++i) {
        const Mat hk = h[i] * k[i];
        CHECK((hk - hk.adjoint()).norm() <= 1e-9 * (1.0 + hk.norm()));
      }
      const double deg = degree(b, h);
      CHECK_THAT(trace_integral(s, k), WithinAbs(2 * kPi * deg, 1e-6 * (1.0 + std::abs(deg))));
    }
  }
}

TEST_CASE("flat line bundles sit at the HYM fixed point", "[gauge]") {
  for (int d : {-2, 0, 1, 3}) {
    LatticeSurface s(16, 1.5);
    const auto b = background(s, {d});
    const auto k = mean_curvature(b, MetricField::constant(s, Mat::Constant(1, 1, 2.7)), HiggsField::zero(s, 1));
    const double c = hym_constant(d, s.area(), 1);
    for (const auto& m : k) CHECK_THAT(m(0, 0).real(), WithinAbs(c, 1e-6));
  }
}

TEST_CASE("mean curvature is the gradient of the lattice potential", "[gauge][property]") {
  // central difference of the potential along h exp(eps xi) against a^2 sum tr(xi (K - c))
  std::mt19937_64 rng(41);
  LatticeSurface s(8, 1.0);
  for (const auto& ex : catalog()) {
    const auto b = background(s, ex.flux);
    const auto phi = HiggsField::constant(s, ex.higgs);
    const auto h = random_smooth_metric(b, 0.3, 9);
    const double c = 0.37;
    EndoField xi(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) xi[i] = h[i].inverse() * random_hermitian(ex.rank, rng, 0.5);
    auto moved = [&](double eps) {
      EndoField out(h.size());
      for (std::size_t i = 0; i < h.size(); ++i)
        out[i] = h[i] * linalg::metric_self_adjoint_function(xi[i], h[i], [eps](double x) { return std::exp(eps * x); });
      return MetricField(out);
    };
    const double eps = 1e-5;
    const double fd = (donaldson_potential(b, phi, moved(eps), c) - donaldson_potential(b, phi, moved(-eps), c)) / (2 * eps);
    const auto k = mean_curvature(b, h, phi);
    double pairing = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i)
      pairing += (xi[i] * (k[i] - c * Mat::Identity(ex.rank, ex.rank))).trace().real();
    pairing *= s.cell_area();
    CHECK_THAT(fd, WithinRel(pairing, 1e-6));
  }
}
