#pragma once

// Chern and Hitchin-Simpson curvature of a metric on a flux background, the mean
// curvature, degree/slope and the deviation norms.
//
// The mean curvature is the exact gradient of a lattice energy
//
//   F(h) = a^2 sum_s [ tr(log h . B) + tr(M M^{*h}) - c log det h ]
//        + 1/4 sum_{s,mu} tr( log(h(s)^{-1} U h(s+mu) U^dagger)^2 )
//
// with respect to variations h -> h exp(eps xi) and the pairing a^2 sum_s tr(xi K):
//
//   K = Dlog_h[B] h + [M, M^{*h}]
//     + (1/2a^2) sum_mu ( -L_mu(s) + U_mu(s-mu)^dagger L_mu(s-mu) U_mu(s-mu) ),
//   L_mu(s) = log(h(s)^{-1} U_mu(s) h(s+mu) U_mu(s)^dagger),
//
// where B is the background plaquette phase divided by a^2. The link term is the squared
// geodesic distance between neighbouring fibre metrics; it has zero total trace, so the
// degree only sees the background flux. For scalar h = e^u the link term is -Lap(u)/2.

#include "higgsflow/bundle.hpp"

#include <cmath>
#include <numbers>

namespace higgsflow {

struct CurvatureField {
  EndoField plaquette;         // (1,1) coefficient per plaquette: a^2 (background + metric part)
  EndoField higgs_commutator;  // [phi, phi^{*h}]
  EndoField contracted;        // i Lambda of the total: the mean curvature
  double dbar_phi_residual = 0.0;  // (0,2)/(2,0) diagnostic, not seen by Lambda
};

/// phi^{*h} = h^{-1} phi^dagger h, the dzbar coefficient of the metric adjoint.
inline Mat higgs_adjoint_matrix(const Mat& phi, const Mat& h) {
  Eigen::LLT<Mat> llt(linalg::hermitian_part(h));
  if (llt.info() != Eigen::Success) throw ConditioningError("higgs_adjoint: singular metric");
  return llt.solve(phi.adjoint() * h);
}

inline EndoField higgs_adjoint(const HiggsField& phi, const MetricField& h) {
  if (phi.phi.size() != h.size()) throw DimensionError("higgs_adjoint: size mismatch");
  EndoField out(h.size());
  for (std::size_t s = 0; s < h.size(); ++s) out[s] = higgs_adjoint_matrix(phi.phi[s], h[s]);
  return out;
}

/// (1,0) connection coefficient A = h^{-1} d h with covariant forward differences,
/// d = (nabla_x - i nabla_y) / 2.
inline EndoField chern_connection(const BackgroundBundle& bundle, const MetricField& h,
                                  double eig_floor = MetricField::kDefaultEigFloor) {
  const auto& surf = bundle.surface();
  surf.check_size(h.size(), "chern_connection");
  if (h.min_eigenvalue() < eig_floor) throw ConditioningError("chern_connection: metric below floor");
  EndoField out(h.size());
  for (std::size_t s = 0; s < h.size(); ++s) {
    Mat grad[2];
    for (auto d : kDirections) {
      const Mat& u = bundle.link(d, s);
      grad[static_cast<int>(d)] = (u * h[surf.shift(s, d)] * u.adjoint() - h[s]) / surf.spacing();
    }
    const Mat dh = 0.5 * (grad[0] - Complex(0.0, 1.0) * grad[1]);
    out[s] = Eigen::LLT<Mat>(h[s]).solve(dh);
  }
  return out;
}

/// Curvature together with the lattice energy it is the gradient of.
struct CurvatureEvaluation {
  CurvatureField curvature;
  double energy = 0.0;  // F(h) without the -c log det h term
  double log_det_integral = 0.0;  // a^2 sum_s log det h(s)
};

inline CurvatureEvaluation evaluate_curvature(const BackgroundBundle& bundle, const HiggsField& phi,
                                              const MetricField& h) {
  const auto& surf = bundle.surface();
  const auto n = surf.site_count();
  surf.check_size(h.size(), "hs_curvature");
  surf.check_size(phi.phi.size(), "hs_curvature");
  if (h.rank() != bundle.rank()) throw DimensionError("hs_curvature: metric rank mismatch");

  const double a2 = surf.cell_area();
  CurvatureEvaluation ev;
  auto& cf = ev.curvature;
  cf.plaquette.resize(n);
  cf.higgs_commutator.resize(n);
  cf.contracted.resize(n);

  std::array<EndoField, 2> link_logs;
  for (auto& l : link_logs) l.resize(n);
  double link_energy = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    for (auto d : kDirections) {
      const Mat& u = bundle.link(d, s);
      double sq = 0.0;
      link_logs[static_cast<int>(d)][s] =
          linalg::relative_log(h[s], u * h[surf.shift(s, d)] * u.adjoint(), &sq);
      link_energy += 0.25 * sq;
    }
  }

  double site_energy = 0.0;
  double log_det = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const Mat& hs = h[s];
    const auto eig = linalg::hermitian_eig(hs);
    if (eig.values.minCoeff() <= 0.0) throw ConditioningError("hs_curvature: metric not positive");
    const Eigen::VectorXd logs = eig.values.array().log();
    log_det += logs.sum();
    const Mat log_h = eig.vectors * logs.cast<Complex>().asDiagonal() * eig.vectors.adjoint();

    const Mat& theta = bundle.plaquette_phase(s);
    const Mat background = linalg::log_derivative(hs, theta) * hs;  // a^2 Dlog_h[B] h
    site_energy += (log_h * theta).trace().real();

    Mat metric_part = Mat::Zero(hs.rows(), hs.cols());
    for (auto d : kDirections) {
      const auto sm = surf.shift(s, d, -1);
      const Mat& u = bundle.link(d, sm);
      metric_part += 0.5 * (-link_logs[static_cast<int>(d)][s] +
                            u.adjoint() * link_logs[static_cast<int>(d)][sm] * u);
    }
    cf.plaquette[s] = background + metric_part;

    const Mat& m = phi.phi[s];
    const Mat mstar = higgs_adjoint_matrix(m, hs);
    cf.higgs_commutator[s] = linalg::commutator(m, mstar);
    site_energy += a2 * (m * mstar).trace().real();
  }
  cf.contracted = surf.lambda_contract(cf.plaquette);
  for (std::size_t s = 0; s < n; ++s) cf.contracted[s] += cf.higgs_commutator[s];

  cf.dbar_phi_residual = verify_higgs(bundle, phi).holomorphy_residual;
  ev.energy = site_energy + link_energy;
  ev.log_det_integral = a2 * log_det;
  return ev;
}

inline CurvatureField hs_curvature(const BackgroundBundle& bundle, const MetricField& h,
                                   const HiggsField& phi) {
  return evaluate_curvature(bundle, phi, h).curvature;
}

inline EndoField mean_curvature(const BackgroundBundle& bundle, const MetricField& h,
                                const HiggsField& phi) {
  return hs_curvature(bundle, h, phi).contracted;
}

/// Lattice energy F(h) - c a^2 sum log det h; differences of it are the Donaldson functional.
inline double donaldson_potential(const BackgroundBundle& bundle, const HiggsField& phi,
                                  const MetricField& h, double c) {
  const auto ev = evaluate_curvature(bundle, phi, h);
  return ev.energy - c * ev.log_det_integral;
}

/// (1/2pi) sum over plaquettes of the trace of the combined (1,1) curvature.
inline double degree(const BackgroundBundle& bundle, const MetricField& h) {
  const auto cf = hs_curvature(bundle, h, HiggsField::zero(bundle.surface(), bundle.rank()));
  double acc = 0.0;
  for (const auto& p : cf.plaquette) acc += p.trace().real();
  return acc / (2.0 * std::numbers::pi);
}

inline double slope(const BackgroundBundle& bundle, const MetricField& h) {
  return degree(bundle, h) / bundle.rank();
}

/// c = 2 n pi mu / (n! vol).
inline double hym_constant(double slope_value, double vol, int n) {
  if (!(vol > 0.0)) throw ValidationError("hym_constant: vol must be positive");
  if (n < 1) throw ValidationError("hym_constant: n must be >= 1");
  double fact = 1.0;
  for (int k = 2; k <= n; ++k) fact *= k;
  return 2.0 * n * std::numbers::pi * slope_value / (fact * vol);
}

namespace detail {

/// tr((K - c)^2) evaluated in an h-orthonormal frame.
inline double deviation_trace_square(const Mat& k, double c, const Mat& h) {
  const Mat psi = k - c * Mat::Identity(k.rows(), k.cols());
  const Mat hp = h * psi;
  const double scale = 1.0 + hp.norm();
  if ((hp - hp.adjoint()).norm() > 1e-9 * scale)
    throw ContractViolation("deviation norm: K is not self-adjoint with respect to h");
  const Mat l = linalg::cholesky_factor(h);
  // L^dagger psi L^{-dagger} is Hermitian
  const Mat lt = l.adjoint();
  const Mat frame = lt.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(lt * psi);
  return linalg::hermitian_part(frame).squaredNorm();
}

}  // namespace detail

inline double deviation_norm_sup(const EndoField& k, double c, const MetricField& h) {
  if (k.size() != h.size()) throw DimensionError("deviation_norm_sup: size mismatch");
  double out = 0.0;
  for (std::size_t s = 0; s < k.size(); ++s)
    out = std::max(out, std::sqrt(detail::deviation_trace_square(k[s], c, h[s])));
  return out;
}

inline double deviation_norm_l2(const LatticeSurface& surface, const EndoField& k, double c,
                                const MetricField& h) {
  surface.check_size(k.size(), "deviation_norm_l2");
  std::vector<double> f(k.size());
  for (std::size_t s = 0; s < k.size(); ++s) f[s] = detail::deviation_trace_square(k[s], c, h[s]);
  return std::sqrt(surface.integrate_real(f));
}

}  // namespace higgsflow
