#pragma once

// Algebraic slope stability for split flux backgrounds with a constant Higgs matrix, and
// the comparison of that verdict with the outcome of the heat flow.

#include "higgsflow/flow.hpp"

#include <boost/rational.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace higgsflow {

using Slope = boost::rational<long long>;

struct UnsupportedError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {

constexpr double kZeroEntry = 1e-12;

inline bool same_line(const Vec& a, const Vec& b) {
  const Complex overlap = a.dot(b);
  return std::abs(std::abs(overlap) - a.norm() * b.norm()) <= 1e-10 * a.norm() * b.norm();
}

inline bool is_coordinate_line(const Vec& v, int* index) {
  int found = -1;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > 1e-10 * v.norm()) {
      if (found >= 0) return false;
      found = static_cast<int>(i);
    }
  }
  if (index) *index = found;
  return found >= 0;
}

inline void check_family(const ExampleSpec& ex) {
  ex.validate();
  for (int i = 0; i < ex.rank; ++i)
    for (int j = 0; j < ex.rank; ++j)
      if (ex.flux[i] != ex.flux[j] && std::abs(ex.higgs(i, j)) > kZeroEntry)
        throw UnsupportedError("example '" + ex.name +
                               "': Higgs entries between blocks of different flux are outside the "
                               "supported family (they are not covariantly constant)");
}

}  // namespace detail

/// Phi-invariant candidates: coordinate blocks S with M_ij = 0 for i outside S and j in S,
/// plus eigenlines of M inside flux groups of size >= 2 (a rank-one block that is also such an
/// eigenline is reported once, as the eigenline). Within this family every invariant line has
/// degree at most the largest block degree, so lines outside the list cannot destabilize.
inline std::vector<SubbundleDescriptor> invariant_subbundles(const ExampleSpec& ex) {
  detail::check_family(ex);
  const int r = ex.rank;
  std::vector<SubbundleDescriptor> out;
  if (r < 2) return out;
  if (r > 20) throw UnsupportedError("invariant_subbundles: rank above 20 is not supported");

  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < r; ++i) groups[ex.flux[i]].push_back(i);

  std::vector<SubbundleDescriptor> eigenlines;
  for (const auto& [flux, idx] : groups) {
    if (idx.size() < 2) continue;
    const auto k = static_cast<Eigen::Index>(idx.size());
    Mat block(k, k);
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) block(a, b) = ex.higgs(idx[a], idx[b]);
    Eigen::ComplexEigenSolver<Mat> es(block);
    if (es.info() != Eigen::Success) throw ConditioningError("invariant_subbundles: eigensolver failed");
    for (Eigen::Index c = 0; c < k; ++c) {
      Vec v = Vec::Zero(r);
      for (Eigen::Index a = 0; a < k; ++a) v[idx[a]] = es.eigenvectors()(a, c);
      // defective blocks return numerically parallel eigenvectors; keep only verified ones
      if ((ex.higgs * v - es.eigenvalues()[c] * v).norm() > 1e-9 * (1.0 + ex.higgs.norm())) continue;
      int lead = 0;
      for (Eigen::Index a = 1; a < v.size(); ++a)
        if (std::abs(v[a]) > std::abs(v[lead]) + 1e-12) lead = static_cast<int>(a);
      v *= std::abs(v[lead]) / v[lead];  // fix the phase so the output is reproducible
      v.normalize();
      bool dup = false;
      for (const auto& e : eigenlines) dup = dup || detail::same_line(e.direction, v);
      if (dup) continue;
      SubbundleDescriptor d;
      d.kind = SubbundleDescriptor::Kind::eigenline;
      d.direction = v;
      d.degree = flux;
      d.rank = 1;
      eigenlines.push_back(std::move(d));
    }
  }

  for (unsigned mask = 1; mask + 1 < (1u << r); ++mask) {
    std::vector<int> sel;
    for (int i = 0; i < r; ++i)
      if (mask & (1u << i)) sel.push_back(i);
    bool invariant = true;
    for (int i = 0; i < r && invariant; ++i) {
      if (mask & (1u << i)) continue;
      for (int j : sel) invariant = invariant && std::abs(ex.higgs(i, j)) <= detail::kZeroEntry;
    }
    if (!invariant) continue;
    if (sel.size() == 1) {
      bool dup = false;
      for (const auto& e : eigenlines) dup = dup || detail::same_line(e.direction, Vec::Unit(r, sel[0]));
      if (dup) continue;
    }
    SubbundleDescriptor d;
    d.kind = SubbundleDescriptor::Kind::coordinate_block;
    d.indices = sel;
    d.rank = static_cast<int>(sel.size());
    for (int i : sel) d.degree += ex.flux[i];
    out.push_back(std::move(d));
  }
  out.insert(out.end(), eigenlines.begin(), eigenlines.end());
  return out;
}

inline Slope slope_of(const SubbundleDescriptor& d) { return Slope(d.degree, d.rank); }

inline Slope ambient_slope(const ExampleSpec& ex) {
  long long total = 0;
  for (int d : ex.flux) total += d;
  return Slope(total, ex.rank);
}

struct Verdict {
  VerdictClass cls = VerdictClass::polystable;
  std::optional<SubbundleDescriptor> destabilizer;
  Slope slope_ambient;
  std::optional<Slope> slope_witness;
};

namespace detail {

inline Eigen::Index column_rank(const Mat& m) {
  if (m.cols() == 0) return 0;
  Eigen::ColPivHouseholderQR<Mat> qr(m);
  qr.setThreshold(1e-10);
  return qr.rank();
}

inline bool contains(const SubbundleDescriptor& outer, const SubbundleDescriptor& inner, int r) {
  if (inner.rank >= outer.rank) return false;
  Mat both(r, outer.rank + inner.rank);
  both << outer.basis(r), inner.basis(r);
  return column_rank(both) == outer.rank;
}

// Depth-first search for pairwise complementary candidates of slope mu that span the fibre.
inline bool find_splitting(const std::vector<SubbundleDescriptor>& parts, int r, std::size_t start,
                           Mat& span, int used) {
  if (used == r) return true;
  for (std::size_t i = start; i < parts.size(); ++i) {
    if (used + parts[i].rank > r) continue;
    Mat next(r, span.cols() + parts[i].rank);
    next << span, parts[i].basis(r);
    if (column_rank(next) != used + parts[i].rank) continue;
    if (find_splitting(parts, r, i + 1, next, used + parts[i].rank)) return true;
  }
  return false;
}

}  // namespace detail

/// Slope comparison in exact rationals. Rank one is reported as polystable.
inline Verdict verdict(const ExampleSpec& ex) {
  const auto candidates = invariant_subbundles(ex);
  Verdict v;
  v.slope_ambient = ambient_slope(ex);
  if (ex.rank == 1) return v;

  const SubbundleDescriptor* best = nullptr;
  for (const auto& c : candidates)
    if (!best || slope_of(c) > slope_of(*best)) best = &c;
  if (best && slope_of(*best) > v.slope_ambient) {
    v.cls = VerdictClass::unstable;
    v.destabilizer = *best;
    v.slope_witness = slope_of(*best);
    return v;
  }

  std::vector<SubbundleDescriptor> equal;
  for (const auto& c : candidates)
    if (slope_of(c) == v.slope_ambient) equal.push_back(c);
  if (equal.empty()) {
    v.cls = VerdictClass::stable;
    return v;
  }
  // A summand is stable when no other equal-slope candidate sits properly inside it.
  std::vector<SubbundleDescriptor> stable_parts;
  for (const auto& c : equal) {
    bool stable = true;
    for (const auto& other : equal) stable = stable && !detail::contains(c, other, ex.rank);
    if (stable) stable_parts.push_back(c);
  }
  Mat span(ex.rank, 0);
  v.cls = detail::find_splitting(stable_parts, ex.rank, 0, span, 0) ? VerdictClass::polystable
                                                                     : VerdictClass::strictly_semistable;
  v.destabilizer = equal.front();
  v.slope_witness = v.slope_ambient;
  return v;
}

inline bool is_semistable(VerdictClass c) { return c != VerdictClass::unstable; }

inline std::string slope_string(const Slope& s) {
  return std::to_string(s.numerator()) + (s.denominator() == 1 ? "" : "/" + std::to_string(s.denominator()));
}

struct Reconciliation {
  bool pass = false;
  VerdictClass verdict = VerdictClass::polystable;
  FlowClass flow = FlowClass::bounded_below_plateau;
  std::string evidence;
};

/// Semistable verdicts must pair with approx_hym_reached and unstable ones with diverging.
inline Reconciliation reconcile(const ExampleSpec& ex, const Verdict& v, const FlowTrace& trace,
                                const FlowConfig& config) {
  if (trace.example != ex.name)
    throw ValidationError("reconcile: trace belongs to '" + trace.example + "', not '" + ex.name + "'");
  Reconciliation out;
  out.verdict = v.cls;
  out.flow = classify(trace, config);
  const bool semistable = is_semistable(v.cls);
  const bool approx = out.flow == FlowClass::approx_hym_reached;
  const bool diverging = out.flow == FlowClass::diverging;
  out.pass = (semistable == approx) && (!semistable == diverging);

  double min_dev = trace.rows.front().dev_sup;
  for (const auto& r : trace.rows) min_dev = std::min(min_dev, r.dev_sup);
  out.evidence = std::string("verdict ") + to_string(v.cls) + " (mu(E) = " + slope_string(v.slope_ambient) +
                 (v.slope_witness ? ", witness slope " + slope_string(*v.slope_witness) : std::string()) +
                 "); flow " + to_string(out.flow) + " (status " + to_string(trace.status) +
                 ", min dev_sup " + std::to_string(min_dev) + ", target " + std::to_string(trace.target) +
                 ", L drop " + std::to_string(trace.rows.front().L - trace.rows.back().L) + ")";
  return out;
}

inline Reconciliation reconcile(const ExampleSpec& ex, const FlowTrace& trace, const FlowConfig& config) {
  return reconcile(ex, verdict(ex), trace, config);
}

}  // namespace higgsflow
