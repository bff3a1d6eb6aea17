#pragma once

// Reductive group layer for GL(m) and SL(m): Cartan involution, invariant pairing,
// adjoint representation, the projection onto the complement of the ad-image, and the
// endomorphism-bundle transfer used to test that the flow stays among induced metrics.

#include "higgsflow/gauge.hpp"

#include <string>
#include <vector>

namespace higgsflow {

enum class GroupKind { GL, SL };

inline const char* to_string(GroupKind k) { return k == GroupKind::GL ? "GL" : "SL"; }

inline GroupKind group_kind_from_string(const std::string& s) {
  if (s == "GL") return GroupKind::GL;
  if (s == "SL") return GroupKind::SL;
  throw ValidationError("unknown group kind '" + s + "' (expected GL or SL)");
}

/// Invariant pairing on gl(m), kappa(X, Y) = -tr(XY). The sign makes kappa(psi, iota psi) =
/// tr(psi psi^dagger) nonnegative for the involution iota(X) = -X^dagger.
inline Complex kappa(const Mat& x, const Mat& y) { return -(x * y).trace(); }

class ReductiveGroupData {
 public:
  static constexpr double kMembershipTol = 1e-10;

  ReductiveGroupData(GroupKind kind, int m) : kind_(kind), m_(m) {
    if (m < 1) throw ValidationError("ReductiveGroupData: m must be >= 1");
    if (kind == GroupKind::SL && m < 2) throw ValidationError("ReductiveGroupData: SL needs m >= 2");
    // GL(m): the elementary matrices in row-major order, so coordinates are vec_row_major.
    // SL(m): off-diagonal elementary matrices followed by E_ii - E_{i+1,i+1}.
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        if (i == j && kind == GroupKind::SL) continue;
        Mat e = Mat::Zero(m, m);
        e(i, j) = 1.0;
        basis_.push_back(e);
      }
    if (kind == GroupKind::GL) {
      center_basis_.push_back(Mat::Identity(m, m));
    } else {
      for (int i = 0; i + 1 < m; ++i) {
        Mat e = Mat::Zero(m, m);
        e(i, i) = 1.0;
        e(i + 1, i + 1) = -1.0;
        basis_.push_back(e);
      }
    }
    const int dim = algebra_dim();
    embedding_.resize(m * m, dim);
    for (int a = 0; a < dim; ++a) embedding_.col(a) = linalg::vec_row_major(basis_[a]);
    coordinates_solver_.compute(embedding_);

    pairing_.resize(dim, dim);
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b) pairing_(a, b) = kappa(basis_[a], basis_[b]);

    for (int a = 0; a < dim; ++a) {
      Mat ad(dim, dim);
      for (int b = 0; b < dim; ++b) ad.col(b) = coordinates(linalg::commutator(basis_[a], basis_[b]));
      ad_matrices_.push_back(std::move(ad));
    }
    build_ad_image_basis();
  }

  GroupKind kind() const { return kind_; }
  int m() const { return m_; }
  int algebra_dim() const { return kind_ == GroupKind::GL ? m_ * m_ : m_ * m_ - 1; }
  const std::vector<Mat>& basis() const { return basis_; }
  const Mat& pairing() const { return pairing_; }
  const std::vector<Mat>& ad_matrices() const { return ad_matrices_; }
  const std::vector<Mat>& ad_image_orthobasis() const { return ad_image_; }
  const std::vector<Mat>& center_basis() const { return center_basis_; }

  /// Coefficients of X in the basis (least squares; see membership_residual).
  Vec coordinates(const Mat& x) const {
    check_shape(x, "coordinates");
    return coordinates_solver_.solve(linalg::vec_row_major(x));
  }

  Mat from_coordinates(const Vec& c) const {
    if (c.size() != algebra_dim()) throw DimensionError("from_coordinates: wrong length");
    return linalg::unvec_row_major(embedding_ * c, m_);
  }

  double membership_residual(const Mat& x) const {
    return (linalg::vec_row_major(x) - embedding_ * coordinates(x)).norm();
  }

  void require_member(const Mat& x, const char* what) const {
    const double res = membership_residual(x);
    if (res > kMembershipTol * (1.0 + x.norm()))
      throw ValidationError(std::string(what) + ": matrix is not in the Lie algebra (residual " +
                            std::to_string(res) + ")");
  }

  /// Matrix, in basis coordinates, of an operator on gl(m) given in the row-major elementary
  /// basis and restricted to the algebra.
  Mat operator_coordinates(const Mat& op) const {
    if (op.rows() != m_ * m_ || op.cols() != m_ * m_)
      throw DimensionError("operator_coordinates: expected an m^2 x m^2 matrix");
    return coordinates_solver_.solve(op * embedding_);
  }

  /// ad(X) in basis coordinates.
  Mat ad(const Mat& x) const {
    const Vec c = coordinates(x);
    Mat out = Mat::Zero(algebra_dim(), algebra_dim());
    for (int a = 0; a < algebra_dim(); ++a) out += c[a] * ad_matrices_[a];
    return out;
  }

 private:
  void check_shape(const Mat& x, const char* what) const {
    if (x.rows() != m_ || x.cols() != m_)
      throw DimensionError(std::string(what) + ": expected a " + std::to_string(m_) + "x" +
                           std::to_string(m_) + " matrix");
  }

  // Gram-Schmidt under <A, B> = tr(A^dagger B), two passes per vector.
  void build_ad_image_basis() {
    constexpr double kDropTol = 1e-12;
    for (const auto& ad : ad_matrices_) {
      Mat v = ad;
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& q : ad_image_) v -= (q.adjoint() * v).trace() * q;
      const double nv = v.norm();
      if (nv > kDropTol * (1.0 + ad.norm())) ad_image_.push_back(v / nv);
    }
  }

  GroupKind kind_;
  int m_;
  std::vector<Mat> basis_;
  std::vector<Mat> center_basis_;
  Mat embedding_;
  Eigen::ColPivHouseholderQR<Mat> coordinates_solver_;
  Mat pairing_;
  std::vector<Mat> ad_matrices_;
  std::vector<Mat> ad_image_;
};

/// iota(X) = -X^dagger; its +1 eigenspace is the anti-Hermitian (compact) part.
inline Mat cartan_involution(const ReductiveGroupData& group, const Mat& x) {
  group.require_member(x, "cartan_involution");
  return -x.adjoint();
}

/// Algebra-valued one-form a dz + b dzbar, one coefficient pair per site.
struct AlgebraOneForm {
  EndoField dz;
  EndoField dzbar;
};

/// iota(s (x) eta) = -iota(s) (x) conj(eta), so a dz + b dzbar maps to b^dagger dz + a^dagger dzbar.
inline AlgebraOneForm iota_on_forms(const ReductiveGroupData& group, const AlgebraOneForm& form) {
  if (form.dz.size() != form.dzbar.size()) throw DimensionError("iota_on_forms: size mismatch");
  AlgebraOneForm out;
  out.dz.reserve(form.dz.size());
  out.dzbar.reserve(form.dz.size());
  for (std::size_t s = 0; s < form.dz.size(); ++s) {
    out.dz.push_back(-cartan_involution(group, form.dzbar[s]));
    out.dzbar.push_back(-cartan_involution(group, form.dz[s]));
  }
  return out;
}

/// max over sites of sqrt(kappa(psi, iota psi)).
inline double section_norm(const ReductiveGroupData& group, const EndoField& psi) {
  double out = 0.0;
  for (const auto& p : psi) {
    const Complex v = kappa(p, cartan_involution(group, p));
    if (v.real() < -1e-12 || std::abs(v.imag()) > 1e-12 * (1.0 + std::abs(v.real())))
      throw ContractViolation("section_norm: kappa(psi, iota psi) is not a nonnegative real");
    out = std::max(out, std::sqrt(std::max(v.real(), 0.0)));
  }
  return out;
}

/// r(M) = M - Pi_ad(M), with Pi_ad the Hilbert-Schmidt projector onto span{ad X}.
inline Mat ad_perp_projection(const ReductiveGroupData& group, const Mat& m) {
  const int dim = group.algebra_dim();
  if (m.rows() != dim || m.cols() != dim)
    throw ValidationError("ad_perp_projection: expected a " + std::to_string(dim) + "x" +
                          std::to_string(dim) + " matrix");
  Mat out = m;
  for (const auto& q : group.ad_image_orthobasis()) out -= (q.adjoint() * m).trace() * q;
  return out;
}

/// Gram matrix G[(ij),(kl)] = tr(h E_ij h^{-1} E_kl^dagger) in the row-major elementary basis,
/// which is conj(h) (x) h^{-1}.
inline MetricField induced_endo_metric(const MetricField& h) {
  EndoField out;
  out.reserve(h.size());
  for (std::size_t s = 0; s < h.size(); ++s) {
    Eigen::LLT<Mat> llt(h[s]);
    if (llt.info() != Eigen::Success) throw ConditioningError("induced_endo_metric: singular metric");
    const Mat inv = llt.solve(Mat::Identity(h.rank(), h.rank()));
    out.push_back(linalg::kron(h[s].conjugate(), inv));
  }
  return MetricField(std::move(out));
}

/// The same metric in the <s, t> = s^dagger H t convention of the gauge module: H = G^T.
inline MetricField endomorphism_fibre_metric(const MetricField& h) {
  const auto gram = induced_endo_metric(h);
  EndoField out;
  out.reserve(gram.size());
  for (const auto& g : gram.values()) out.push_back(g.transpose());
  return MetricField(std::move(out));
}

/// Higgs field ad(phi) on End(E).
inline HiggsField endomorphism_higgs(const HiggsField& phi) {
  HiggsField out;
  out.phi.reserve(phi.phi.size());
  for (const auto& m : phi.phi) out.phi.push_back(linalg::adjoint_derivation(m));
  out.holomorphy_residual = phi.holomorphy_residual;
  return out;
}

struct EndomorphismCurvature {
  BackgroundBundle bundle;
  MetricField metric;
  EndoField mean_curvature;
};

/// Mean curvature of End(E) with the background, Higgs field and metric induced from (E, h, phi).
inline EndomorphismCurvature endomorphism_curvature(const BackgroundBundle& bundle,
                                                    const MetricField& h, const HiggsField& phi) {
  auto end_bundle = bundle.endomorphism_bundle();
  auto metric = endomorphism_fibre_metric(h);
  auto k = mean_curvature(end_bundle, metric, endomorphism_higgs(phi));
  return {std::move(end_bundle), std::move(metric), std::move(k)};
}

/// max over sites of ||K_End - ad(K)|| divided by the curvature scale max(||ad K|| + ||K||).
/// The identity is exact for metrics commuting with the background flux.
inline double commutator_identity_error(const BackgroundBundle& bundle, const MetricField& h,
                                        const HiggsField& phi) {
  const auto k = mean_curvature(bundle, h, phi);
  const auto end = endomorphism_curvature(bundle, h, phi);
  double err = 0.0;
  double scale = 0.0;
  for (std::size_t s = 0; s < k.size(); ++s) {
    const Mat adk = linalg::adjoint_derivation(k[s]);
    err = std::max(err, (end.mean_curvature[s] - adk).norm());
    scale = std::max(scale, adk.norm() + k[s].norm());
  }
  return err / (scale + 1e-12);
}

/// sup over sites of ||r(K_End(s))||_HS: the distance of the endomorphism-bundle curvature
/// from the image of ad. Measured in gl(m) coordinates, whose ad-image equals that of sl(m).
inline double reduction_residual(const BackgroundBundle& bundle, const MetricField& h,
                                 const HiggsField& phi) {
  const ReductiveGroupData gl(GroupKind::GL, bundle.rank());
  const auto end = endomorphism_curvature(bundle, h, phi);
  double out = 0.0;
  for (const auto& k : end.mean_curvature)
    out = std::max(out, ad_perp_projection(gl, gl.operator_coordinates(k)).norm());
  return out;
}

/// Matrices L^dagger X L^{-dagger} with h = L L^dagger: the field written in an h-unitary frame.
inline EndoField to_unitary_frame(const MetricField& h, const EndoField& x) {
  if (x.size() != h.size()) throw DimensionError("to_unitary_frame: size mismatch");
  EndoField out;
  out.reserve(x.size());
  for (std::size_t s = 0; s < x.size(); ++s) {
    const Mat lt = linalg::cholesky_factor(h[s]).adjoint();
    out.push_back(lt.triangularView<Eigen::Upper>().solve<Eigen::OnTheRight>(lt * x[s]));
  }
  return out;
}

struct Certificate {
  bool holds = false;
  double norm = 0.0;
  double margin = 0.0;  // xi - norm
};

/// section_norm(K - tau) < xi, with tau required to lie in the centre.
inline Certificate principal_ahym_certificate(const ReductiveGroupData& group, const EndoField& k,
                                              const Mat& tau, double xi) {
  if (!(xi > 0.0)) throw ValidationError("principal_ahym_certificate: xi must be positive");
  if (tau.rows() != group.m() || tau.cols() != group.m())
    throw DimensionError("principal_ahym_certificate: tau has the wrong size");
  Mat residual = tau;
  for (const auto& z : group.center_basis()) {
    const Complex coef = (z.adjoint() * tau).trace() / z.squaredNorm();
    residual -= coef * z;
  }
  if (residual.norm() > ReductiveGroupData::kMembershipTol * (1.0 + tau.norm()))
    throw ValidationError("principal_ahym_certificate: tau is not in the centre of the algebra");
  EndoField shifted;
  shifted.reserve(k.size());
  for (const auto& m : k) shifted.push_back(m - tau);
  Certificate out;
  out.norm = section_norm(group, shifted);
  out.margin = xi - out.norm;
  out.holds = out.norm < xi;
  return out;
}

}  // namespace higgsflow
