#pragma once

// Bundle data: flux backgrounds, Higgs fields, fibre metrics and the example catalog.

#include "higgsflow/surface.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace higgsflow {

/// Holomorphic structure of a direct sum of line bundles, realized by unitary link
/// variables. links(d)[s] parallel-transports the fibre at s + d back to s.
class BackgroundBundle {
 public:
  BackgroundBundle(LatticeSurface surface, int rank, std::vector<int> flux,
                   std::array<EndoField, 2> links)
      : surface_(std::move(surface)), rank_(rank), flux_(std::move(flux)),
        links_(std::move(links)) {
    surface_.check_size(links_[0].size(), "BackgroundBundle");
    surface_.check_size(links_[1].size(), "BackgroundBundle");
    compute_plaquettes();
  }

  const LatticeSurface& surface() const { return surface_; }
  int rank() const { return rank_; }
  const std::vector<int>& flux() const { return flux_; }
  int total_flux() const {
    int t = 0;
    for (int d : flux_) t += d;
    return t;
  }

  const Mat& link(Direction d, std::size_t s) const { return links_[static_cast<int>(d)][s]; }
  const EndoField& links(Direction d) const { return links_[static_cast<int>(d)]; }

  /// Ordered product U_x(s) U_y(s+x) U_x(s+y)^dagger U_y(s)^dagger around the plaquette at s.
  const Mat& plaquette_holonomy(std::size_t s) const { return holonomy_[s]; }
  /// Hermitian phase matrix -i log of the plaquette holonomy (principal branch).
  const Mat& plaquette_phase(std::size_t s) const { return phase_[s]; }

  /// Same bundle written in the frame changed by a constant unitary p.
  BackgroundBundle conjugated(const Mat& p) const {
    std::array<EndoField, 2> l = links_;
    for (auto& field : l)
      for (auto& u : field) u = p * u * p.adjoint();
    return BackgroundBundle(surface_, rank_, flux_, std::move(l));
  }

  /// Endomorphism bundle End(E) = E (x) E*, links A -> U A U^dagger in the row-major basis.
  BackgroundBundle endomorphism_bundle() const {
    std::array<EndoField, 2> l;
    for (int d = 0; d < 2; ++d) {
      l[d].reserve(links_[d].size());
      for (const auto& u : links_[d]) l[d].push_back(linalg::kron(u, u.conjugate()));
    }
    std::vector<int> f;
    for (int di : flux_)
      for (int dj : flux_) f.push_back(di - dj);
    return BackgroundBundle(surface_, rank_ * rank_, std::move(f), std::move(l));
  }

 private:
  void compute_plaquettes() {
    const auto n = surface_.site_count();
    holonomy_.resize(n);
    phase_.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
      const auto sx = surface_.shift(s, Direction::X);
      const auto sy = surface_.shift(s, Direction::Y);
      holonomy_[s] = links_[0][s] * links_[1][sx] * links_[0][sy].adjoint() * links_[1][s].adjoint();
      phase_[s] = linalg::hermitian_part(Complex(0.0, -1.0) * linalg::unitary_log(holonomy_[s]));
    }
  }

  LatticeSurface surface_;
  int rank_;
  std::vector<int> flux_;
  std::array<EndoField, 2> links_;
  EndoField holonomy_;
  EndoField phase_;
};

/// Diagonal U(1)^r links with constant plaquette phase 2 pi d_i / N^2 in block i.
/// U_y(x, y) = exp(i theta x) and the x-links carry the compensating twist on the
/// last column, U_x(N-1, y) = exp(-i theta N y).
inline BackgroundBundle build_background(const LatticeSurface& surface, int rank,
                                         std::span<const int> flux) {
  if (rank <= 0) throw ValidationError("build_background: rank must be positive");
  if (static_cast<int>(flux.size()) != rank)
    throw ValidationError("build_background: flux length must equal rank");
  const int n = surface.sites_per_side();
  for (int d : flux)
    if (2 * std::abs(static_cast<long>(d)) >= static_cast<long>(n) * n)
      throw ValidationError("build_background: |flux| must stay below N^2/2 so plaquette phases "
                            "remain on the principal branch");
  std::array<EndoField, 2> links;
  for (auto& l : links) l.assign(surface.site_count(), Mat::Identity(rank, rank));
  const double base = 2.0 * std::numbers::pi / (static_cast<double>(n) * n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const auto s = surface.index(x, y);
      for (int i = 0; i < rank; ++i) {
        const double theta = base * flux[i];
        links[1][s](i, i) = std::polar(1.0, theta * x);
        if (x == n - 1) links[0][s](i, i) = std::polar(1.0, -theta * n * y);
      }
    }
  }
  return BackgroundBundle(surface, rank, std::vector<int>(flux.begin(), flux.end()), std::move(links));
}

/// The dz-component of a Higgs field, one r x r matrix per site.
struct HiggsField {
  EndoField phi;
  double holomorphy_residual = 0.0;

  static HiggsField constant(const LatticeSurface& surface, const Mat& m) {
    return HiggsField{EndoField(surface.site_count(), m), 0.0};
  }
  static HiggsField zero(const LatticeSurface& surface, int rank) {
    return constant(surface, Mat::Zero(rank, rank));
  }
};

struct HiggsCheck {
  double holomorphy_residual = 0.0;
  bool integrability_ok = true;
};

/// Backward covariant difference of an endomorphism field along d.
inline Mat covariant_backward_difference(const BackgroundBundle& bundle, const EndoField& f,
                                         std::size_t s, Direction d) {
  const auto& surf = bundle.surface();
  const auto sm = surf.shift(s, d, -1);
  const Mat& u = bundle.link(d, sm);
  return (f[s] - u.adjoint() * f[sm] * u) / surf.spacing();
}

/// Sup norm of the lattice dbar of phi, and the pointwise check [phi, phi] = 0 of the
/// would-be (2,0) coefficient (which vanishes identically on a curve).
inline HiggsCheck verify_higgs(const BackgroundBundle& bundle, const HiggsField& higgs) {
  const auto& surf = bundle.surface();
  surf.check_size(higgs.phi.size(), "verify_higgs");
  HiggsCheck out;
  for (std::size_t s = 0; s < surf.site_count(); ++s) {
    if (higgs.phi[s].rows() != bundle.rank() || higgs.phi[s].cols() != bundle.rank())
      throw DimensionError("verify_higgs: phi has the wrong matrix size");
    const Mat dbar = 0.5 * (covariant_backward_difference(bundle, higgs.phi, s, Direction::X) +
                            Complex(0.0, 1.0) *
                                covariant_backward_difference(bundle, higgs.phi, s, Direction::Y));
    out.holomorphy_residual = std::max(out.holomorphy_residual, dbar.norm());
    if (linalg::commutator(higgs.phi[s], higgs.phi[s]).norm() != 0.0) out.integrability_ok = false;
  }
  return out;
}

/// Hermitian positive-definite fibre metric per site, <s, t> = s^dagger h t.
class MetricField {
 public:
  static constexpr double kDefaultEigFloor = 1e-10;

  MetricField() = default;

  /// Symmetrizes and validates. Inputs further than 1e-8 (relative) from Hermitian are rejected.
  explicit MetricField(EndoField h, double eig_floor = kDefaultEigFloor) : h_(std::move(h)) {
    min_eig_ = std::numeric_limits<double>::infinity();
    for (auto& m : h_) {
      if (m.rows() != m.cols()) throw DimensionError("MetricField: non-square matrix");
      const double asym = (m - m.adjoint()).norm();
      if (asym > 1e-8 * (1.0 + m.norm())) throw ValidationError("MetricField: matrix is not Hermitian");
      m = linalg::hermitian_part(m);
      min_eig_ = std::min(min_eig_, linalg::min_eigenvalue(m));
    }
    if (min_eig_ < eig_floor)
      throw ConditioningError("MetricField: smallest eigenvalue " + std::to_string(min_eig_) +
                              " is below the floor " + std::to_string(eig_floor));
  }

  static MetricField identity(const LatticeSurface& surface, int rank) {
    return MetricField(EndoField(surface.site_count(), Mat::Identity(rank, rank)));
  }
  static MetricField constant(const LatticeSurface& surface, const Mat& h) {
    return MetricField(EndoField(surface.site_count(), h));
  }

  const EndoField& values() const { return h_; }
  const Mat& operator[](std::size_t s) const { return h_[s]; }
  std::size_t size() const { return h_.size(); }
  int rank() const { return h_.empty() ? 0 : static_cast<int>(h_.front().rows()); }
  double min_eigenvalue() const { return min_eig_; }

 private:
  EndoField h_;
  double min_eig_ = 0.0;
};

/// h(s) = exp(X(s)) with X a random Hermitian combination of the constant and the
/// lowest Fourier modes, each coefficient entry drawn uniformly from [-amplitude, amplitude].
/// X is then smoothed covariantly with the background links, so entries coupling blocks of
/// different flux become smooth sections rather than jumping across the gauge seam.
inline MetricField random_smooth_metric(const BackgroundBundle& bundle, double amplitude,
                                        std::uint64_t seed, int smoothing_sweeps = -1) {
  const auto& surface = bundle.surface();
  const int rank = bundle.rank();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-amplitude, amplitude);
  auto random_hermitian = [&] {
    Mat a(rank, rank);
    for (int i = 0; i < rank; ++i)
      for (int j = 0; j < rank; ++j) a(i, j) = Complex(uni(rng), uni(rng));
    return linalg::hermitian_part(a);
  };
  constexpr int kModes[][2] = {{1, 0}, {0, 1}, {1, 1}};
  const Mat c0 = random_hermitian();
  std::vector<std::pair<Mat, Mat>> coeffs;
  for (int k = 0; k < 3; ++k) coeffs.emplace_back(random_hermitian(), random_hermitian());
  const int n = surface.sites_per_side();
  EndoField x(surface.site_count());
  for (std::size_t s = 0; s < x.size(); ++s) {
    x[s] = c0;
    for (int k = 0; k < 3; ++k) {
      const double arg = 2.0 * std::numbers::pi *
                         (kModes[k][0] * surface.x_of(s) + kModes[k][1] * surface.y_of(s)) / n;
      x[s] += std::cos(arg) * coeffs[k].first + std::sin(arg) * coeffs[k].second;
    }
  }
  bool uniform_flux = true;
  for (int d : bundle.flux()) uniform_flux = uniform_flux && d == bundle.flux().front();
  const int sweeps = smoothing_sweeps >= 0 ? smoothing_sweeps : (uniform_flux ? 0 : n * n / 2);
  EndoField next(x.size());
  for (int it = 0; it < sweeps; ++it) {
    for (std::size_t s = 0; s < x.size(); ++s) {
      Mat lap = -4.0 * x[s];
      for (auto d : kDirections) {
        const Mat& up = bundle.link(d, s);
        const Mat& down = bundle.link(d, surface.shift(s, d, -1));
        lap += up * x[surface.shift(s, d)] * up.adjoint() +
               down.adjoint() * x[surface.shift(s, d, -1)] * down;
      }
      next[s] = x[s] + 0.125 * lap;
    }
    std::swap(x, next);
  }
  EndoField h(x.size());
  for (std::size_t s = 0; s < x.size(); ++s) h[s] = linalg::hermitian_exp(x[s]);
  return MetricField(std::move(h));
}

enum class VerdictClass { stable, strictly_semistable, polystable, unstable };

inline const char* to_string(VerdictClass v) {
  switch (v) {
    case VerdictClass::stable: return "stable";
    case VerdictClass::strictly_semistable: return "strictly_semistable";
    case VerdictClass::polystable: return "polystable";
    case VerdictClass::unstable: return "unstable";
  }
  return "?";
}

inline VerdictClass verdict_from_string(const std::string& s) {
  if (s == "stable") return VerdictClass::stable;
  if (s == "strictly_semistable") return VerdictClass::strictly_semistable;
  if (s == "polystable") return VerdictClass::polystable;
  if (s == "unstable") return VerdictClass::unstable;
  throw ValidationError("unknown verdict '" + s + "'");
}

/// A phi-invariant subbundle of a split background: either a set of coordinate line
/// bundles, or an eigenline of the Higgs matrix inside one equal-flux block.
struct SubbundleDescriptor {
  enum class Kind { coordinate_block, eigenline };
  Kind kind = Kind::coordinate_block;
  std::vector<int> indices;  // coordinate_block: selected line bundles
  Vec direction;             // eigenline: spanning vector
  int degree = 0;
  int rank = 0;

  /// Basis of the subspace as columns.
  Mat basis(int ambient_rank) const {
    if (kind == Kind::eigenline) return direction;
    Mat b = Mat::Zero(ambient_rank, static_cast<Eigen::Index>(indices.size()));
    for (std::size_t k = 0; k < indices.size(); ++k) b(indices[k], static_cast<Eigen::Index>(k)) = 1.0;
    return b;
  }
};

struct ExampleSpec {
  std::string name;
  int rank = 1;
  std::vector<int> flux;
  Mat higgs;  // constant dz-coefficient M in the flux gauge
  VerdictClass expected_verdict = VerdictClass::polystable;
  std::optional<SubbundleDescriptor> expected_destabilizer;

  void validate() const {
    if (rank <= 0) throw ValidationError("example '" + name + "': rank must be positive");
    if (static_cast<int>(flux.size()) != rank)
      throw ValidationError("example '" + name + "': flux length must equal rank");
    if (higgs.rows() != rank || higgs.cols() != rank)
      throw ValidationError("example '" + name + "': Higgs matrix must be rank x rank");
  }
};

inline ExampleSpec flat_line_example(int d) {
  return {"flat-line-" + std::to_string(d), 1, {d}, Mat::Zero(1, 1), VerdictClass::polystable, {}};
}

inline std::vector<ExampleSpec> catalog(int flat_line_degree = 1) {
  std::vector<ExampleSpec> out;
  out.push_back(flat_line_example(flat_line_degree));

  Mat nil = Mat::Zero(2, 2);
  nil(0, 1) = 1.0;
  SubbundleDescriptor kernel_line;
  kernel_line.kind = SubbundleDescriptor::Kind::eigenline;
  kernel_line.direction = Vec::Unit(2, 0);
  kernel_line.degree = 0;
  kernel_line.rank = 1;
  out.push_back({"nilpotent", 2, {0, 0}, nil, VerdictClass::strictly_semistable, kernel_line});

  SubbundleDescriptor block1;
  block1.kind = SubbundleDescriptor::Kind::coordinate_block;
  block1.indices = {0};
  block1.degree = 1;
  block1.rank = 1;
  out.push_back({"split-unstable", 2, {1, -1}, Mat::Zero(2, 2), VerdictClass::unstable, block1});

  Mat diag = Mat::Zero(2, 2);
  diag(0, 0) = 1.0;
  diag(1, 1) = -1.0;
  out.push_back({"diag-polystable", 2, {0, 0}, diag, VerdictClass::polystable, {}});
  return out;
}

/// Catalog lookup; "flat-line-<d>" accepts any integer degree.
inline ExampleSpec find_example(const std::string& name) {
  const std::string prefix = "flat-line-";
  if (name.rfind(prefix, 0) == 0) {
    const std::string tail = name.substr(prefix.size());
    std::size_t used = 0;
    int d = 0;
    try {
      d = std::stoi(tail, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != tail.size()) throw ValidationError("bad flat-line degree in '" + name + "'");
    return flat_line_example(d);
  }
  for (auto& e : catalog())
    if (e.name == name) return e;
  throw ValidationError("unknown catalog example '" + name + "'");
}

}  // namespace higgsflow
