#pragma once

// Square flat torus sampled on an N x N periodic lattice.

#include "higgsflow/linalg.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace higgsflow {

using ScalarField = std::vector<Complex>;
using EndoField   = std::vector<Mat>;

enum class Direction : int { X = 0, Y = 1 };
inline constexpr Direction kDirections[] = {Direction::X, Direction::Y};

/// Base curve of the lattice model. The Kahler form is the Euclidean area form
/// dx ^ dy, so integration is the Riemann sum with cell area a^2 and the complex
/// dimension is fixed to one.
class LatticeSurface {
 public:
  LatticeSurface(int sites_per_side, double side_length)
      : n_(sites_per_side), side_(side_length) {
    if (n_ < 4)
      throw ValidationError("LatticeSurface: sites_per_side N must satisfy N >= 4 (got " +
                            std::to_string(n_) + ")");
    if (!(side_ > 0.0))
      throw ValidationError("LatticeSurface: side_length L must be positive");
    spacing_ = side_ / static_cast<double>(n_);
  }

  int sites_per_side() const { return n_; }
  double side_length() const { return side_; }
  double area() const { return side_ * side_; }
  double spacing() const { return spacing_; }
  double cell_area() const { return spacing_ * spacing_; }
  int complex_dim() const { return 1; }
  std::size_t site_count() const { return static_cast<std::size_t>(n_) * n_; }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(wrap(y)) * n_ + static_cast<std::size_t>(wrap(x));
  }
  int x_of(std::size_t s) const { return static_cast<int>(s % n_); }
  int y_of(std::size_t s) const { return static_cast<int>(s / n_); }

  std::size_t shift(std::size_t s, Direction d, int step = 1) const {
    return d == Direction::X ? index(x_of(s) + step, y_of(s)) : index(x_of(s), y_of(s) + step);
  }

  /// Riemann sum a^2 * sum_s f(s).
  Complex integrate(const ScalarField& f) const {
    check_size(f.size(), "integrate");
    Complex acc = 0.0;
    for (const auto& v : f) acc += v;
    return cell_area() * acc;
  }

  double integrate_real(const std::vector<double>& f) const {
    check_size(f.size(), "integrate");
    double acc = 0.0;
    for (double v : f) acc += v;
    return cell_area() * acc;
  }

  /// i*Lambda of a per-plaquette two-form coefficient. A plaquette phase theta carries the
  /// flux theta / a^2 per unit area, so the contraction divides by the cell area.
  EndoField lambda_contract(const EndoField& two_form) const {
    check_size(two_form.size(), "lambda_contract");
    EndoField out;
    out.reserve(two_form.size());
    const double inv = 1.0 / cell_area();
    for (const auto& m : two_form) out.push_back(inv * m);
    return out;
  }

  void check_size(std::size_t got, const char* what) const {
    if (got != site_count())
      throw DimensionError(std::string(what) + ": field has " + std::to_string(got) +
                           " sites, lattice has " + std::to_string(site_count()));
  }

 private:
  int wrap(int i) const { return ((i % n_) + n_) % n_; }

  int n_;
  double side_;
  double spacing_;
};

}  // namespace higgsflow
