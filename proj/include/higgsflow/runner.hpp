#pragma once

// Scenario configs, end-to-end runs and the suite driver behind the command-line tool.

#include "higgsflow/lie.hpp"
#include "higgsflow/stability.hpp"
#include "higgsflow/trace_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace higgsflow {

using json = nlohmann::json;

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

enum class InitialMetricKind { identity, smooth_random };

struct ScenarioConfig {
  int n = 32;
  double side = 1.0;
  ExampleSpec example;
  FlowConfig flow;
  GroupKind group = GroupKind::GL;
  InitialMetricKind initial_metric = InitialMetricKind::identity;
  double initial_amplitude = 0.3;
  std::optional<double> tau;  // centre element as a multiple of Id; defaults to c for GL
  std::filesystem::path trace_path;
  std::filesystem::path report_path;
  std::filesystem::path plotdata_path;
  std::uint64_t seed = 0;
  json echo;  // the config document as read
};

namespace detail {

/// Typed access to one JSON object that rejects unknown keys and names the offending field.
class Fields {
 public:
  Fields(const json& obj, std::string path, std::set<std::string> allowed)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    for (const auto& [key, _] : obj_.items())
      if (!allowed.count(key)) fail(join(key), "unknown key");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  const json& at(const std::string& key) const {
    if (!has(key)) fail(join(key), "required field is missing");
    return obj_.at(key);
  }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      at(key);
    }
    const auto& v = obj_.at(key);
    if (!v.is_number()) fail(join(key), "expected a number");
    return v.get<double>();
  }

  long long integer(const std::string& key, std::optional<long long> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      at(key);
    }
    const auto& v = obj_.at(key);
    if (!v.is_number_integer()) fail(join(key), "expected an integer");
    return v.get<long long>();
  }

  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto& v = obj_.at(key);
    if (!v.is_boolean()) fail(join(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
    if (!has(key)) {
      if (fallback) return *fallback;
      at(key);
    }
    const auto& v = obj_.at(key);
    if (!v.is_string()) fail(join(key), "expected a string");
    return v.get<std::string>();
  }

  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw ConfigError("config field '" + field + "': " + what);
  }

 private:
  const json& obj_;
  std::string path_;
};

inline Complex parse_complex(const json& v, const std::string& field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  Fields::fail(field, "expected a number or a [re, im] pair");
}

inline ExampleSpec parse_inline_example(const json& j) {
  Fields f(j, "example", {"name", "rank", "flux", "higgs", "expected_verdict"});
  ExampleSpec ex;
  ex.name = f.string("name");
  const long long rank = f.integer("rank");
  if (rank < 1 || rank > 8) Fields::fail("example.rank", "must be between 1 and 8");
  ex.rank = static_cast<int>(rank);
  const auto& flux = f.at("flux");
  if (!flux.is_array()) Fields::fail("example.flux", "expected an array of integers");
  for (const auto& d : flux) {
    if (!d.is_number_integer()) Fields::fail("example.flux", "flux entries must be integers");
    ex.flux.push_back(d.get<int>());
  }
  ex.higgs = Mat::Zero(ex.rank, ex.rank);
  if (f.has("higgs")) {
    const auto& rows = f.at("higgs");
    if (!rows.is_array() || static_cast<int>(rows.size()) != ex.rank)
      Fields::fail("example.higgs", "expected rank rows");
    for (int i = 0; i < ex.rank; ++i) {
      if (!rows[i].is_array() || static_cast<int>(rows[i].size()) != ex.rank)
        Fields::fail("example.higgs", "row " + std::to_string(i) + " must have rank entries");
      for (int k = 0; k < ex.rank; ++k)
        ex.higgs(i, k) = parse_complex(rows[i][k], "example.higgs[" + std::to_string(i) + "][" +
                                                       std::to_string(k) + "]");
    }
  }
  try {
    ex.expected_verdict = verdict_from_string(f.string("expected_verdict"));
  } catch (const ValidationError& e) {
    Fields::fail("example.expected_verdict", e.what());
  }
  try {
    ex.validate();
  } catch (const ValidationError& e) {
    Fields::fail("example", e.what());
  }
  return ex;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  const auto end = text.begin() + static_cast<std::ptrdiff_t>(std::min(offset, text.size()));
  return 1 + static_cast<std::size_t>(std::count(text.begin(), end, '\n'));
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON (line " +
                      std::to_string(detail::line_of_offset(text, e.byte)) + "): " + e.what());
  }
  using detail::Fields;
  Fields root(doc, "", {"surface", "example", "flow", "group", "initial_metric", "tau", "outputs", "seed"});
  ScenarioConfig cfg;
  cfg.echo = doc;

  Fields surface(root.at("surface"), "surface", {"N", "L"});
  const long long n = surface.integer("N");
  cfg.side = surface.number("L", 1.0);
  if (n < 4 || n > 4096)
    Fields::fail("surface.N", "sites_per_side N must satisfy N >= 4 (and at most 4096), got " +
                                  std::to_string(n));
  if (!(cfg.side > 0.0)) Fields::fail("surface.L", "side length must be positive");
  cfg.n = static_cast<int>(n);

  const auto& ex = root.at("example");
  if (ex.is_string()) {
    try {
      cfg.example = find_example(ex.get<std::string>());
    } catch (const ValidationError& e) {
      Fields::fail("example", e.what());
    }
  } else {
    cfg.example = detail::parse_inline_example(ex);
  }

  if (root.has("flow")) {
    Fields f(root.at("flow"), "flow",
             {"dt_init", "dt_max", "t_max", "max_steps", "deviation_target", "deviation_target_relative",
              "eig_floor", "monotonicity_slack", "dt_min", "dt_growth", "growth_interval",
              "diverging_drop", "deviation_floor"});
    auto& fl = cfg.flow;
    fl.dt_init = f.number("dt_init", fl.dt_init);
    fl.dt_max = f.number("dt_max", fl.dt_max);
    fl.t_max = f.number("t_max", fl.t_max);
    fl.max_steps = static_cast<int>(std::clamp<long long>(f.integer("max_steps", fl.max_steps), -1, 1'000'000'000));
    fl.deviation_target = f.number("deviation_target", fl.deviation_target);
    fl.deviation_target_relative = f.boolean("deviation_target_relative", fl.deviation_target_relative);
    fl.eig_floor = f.number("eig_floor", fl.eig_floor);
    fl.monotonicity_slack = f.number("monotonicity_slack", fl.monotonicity_slack);
    fl.dt_min = f.number("dt_min", fl.dt_min);
    fl.dt_growth = f.number("dt_growth", fl.dt_growth);
    fl.growth_interval = static_cast<int>(std::clamp<long long>(f.integer("growth_interval", fl.growth_interval), 0, 1'000'000));
    fl.diverging_drop = f.number("diverging_drop", fl.diverging_drop);
    fl.deviation_floor = f.number("deviation_floor", fl.deviation_floor);
    try {
      fl.validate();
    } catch (const ValidationError& e) {
      Fields::fail("flow", e.what());
    }
    if (!(fl.dt_growth >= 1.0)) Fields::fail("flow.dt_growth", "must be >= 1");
    if (fl.growth_interval < 1) Fields::fail("flow.growth_interval", "must be >= 1");
  }

  try {
    cfg.group = group_kind_from_string(root.string("group", std::string("GL")));
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    Fields::fail("group", e.what());
  }
  if (cfg.group == GroupKind::SL && cfg.example.rank < 2)
    Fields::fail("group", "SL needs rank >= 2");

  if (root.has("initial_metric")) {
    Fields im(root.at("initial_metric"), "initial_metric", {"kind", "amplitude"});
    const auto kind = im.string("kind", std::string("identity"));
    if (kind == "identity") cfg.initial_metric = InitialMetricKind::identity;
    else if (kind == "smooth_random") cfg.initial_metric = InitialMetricKind::smooth_random;
    else Fields::fail("initial_metric.kind", "expected identity or smooth_random");
    cfg.initial_amplitude = im.number("amplitude", cfg.initial_amplitude);
    if (!(cfg.initial_amplitude >= 0.0)) Fields::fail("initial_metric.amplitude", "must be >= 0");
  }

  if (root.has("tau")) cfg.tau = root.number("tau");
  if (cfg.group == GroupKind::SL && cfg.tau && *cfg.tau != 0.0)
    Fields::fail("tau", "the centre of sl(m) is trivial, so tau must be 0");

  const long long seed = root.integer("seed", 0);
  if (seed < 0) Fields::fail("seed", "must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);

  Fields out(root.at("outputs"), "outputs", {"trace_path", "report_path", "plotdata_path"});
  auto resolve = [&](const char* key) {
    std::filesystem::path p = out.string(key);
    if (p.empty()) Fields::fail(out.join(key), "must not be empty");
    return p.is_absolute() ? p : base_dir / p;
  };
  cfg.trace_path = resolve("trace_path");
  cfg.report_path = resolve("report_path");
  cfg.plotdata_path = resolve("plotdata_path");
  return cfg;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return parse_scenario(text, path.parent_path());
}

struct RunOptions {
  bool verbose = false;
  std::optional<int> max_steps_override;
  std::ostream* log = &std::cerr;
};

/// Keeps at most 2 * target evenly strided samples of a stream of unknown length.
template <class T>
class StrideSampler {
 public:
  explicit StrideSampler(std::size_t target) : target_(std::max<std::size_t>(target, 2)) {}

  void offer(std::size_t index, const std::function<T()>& make) {
    if (index % stride_ != 0) return;
    items_.emplace_back(index, make());
    if (items_.size() > 2 * target_) {
      std::vector<std::pair<std::size_t, T>> kept;
      stride_ *= 2;
      for (auto& it : items_)
        if (it.first % stride_ == 0) kept.push_back(std::move(it));
      items_ = std::move(kept);
    }
  }

  /// target samples spread evenly over what was kept; `last` is appended if it is newer.
  std::vector<std::pair<std::size_t, T>> select(std::optional<std::pair<std::size_t, T>> last) {
    auto all = items_;
    if (last && (all.empty() || all.back().first != last->first)) all.push_back(std::move(*last));
    if (all.size() <= target_) return all;
    std::vector<std::pair<std::size_t, T>> out;
    for (std::size_t k = 0; k < target_; ++k) out.push_back(all[(k * (all.size() - 1)) / (target_ - 1)]);
    return out;
  }

 private:
  std::size_t target_;
  std::size_t stride_ = 1;
  std::vector<std::pair<std::size_t, T>> items_;
};

struct ScenarioResult {
  int exit_code = 1;
  json report;
  FlowTrace trace;
  std::string message;
};

namespace detail {

inline json descriptor_json(const SubbundleDescriptor& d) {
  json j;
  j["kind"] = d.kind == SubbundleDescriptor::Kind::eigenline ? "eigenline" : "coordinate_block";
  j["degree"] = d.degree;
  j["rank"] = d.rank;
  if (d.kind == SubbundleDescriptor::Kind::eigenline) {
    json dir = json::array();
    for (Eigen::Index i = 0; i < d.direction.size(); ++i)
      dir.push_back({d.direction[i].real(), d.direction[i].imag()});
    j["direction"] = dir;
  } else {
    j["indices"] = d.indices;
  }
  return j;
}

inline bool same_subbundle(const SubbundleDescriptor& a, const SubbundleDescriptor& b, int r) {
  if (a.rank != b.rank || a.degree != b.degree) return false;
  Mat both(r, a.rank + b.rank);
  both << a.basis(r), b.basis(r);
  return column_rank(both) == a.rank;
}

inline json flow_config_json(const FlowConfig& f) {
  return {{"dt_init", f.dt_init},
          {"dt_max", f.dt_max},
          {"t_max", f.t_max},
          {"max_steps", f.max_steps},
          {"deviation_target", f.deviation_target},
          {"deviation_target_relative", f.deviation_target_relative},
          {"eig_floor", f.eig_floor},
          {"monotonicity_slack", f.monotonicity_slack},
          {"dt_min", f.dt_min},
          {"dt_growth", f.dt_growth},
          {"growth_interval", f.growth_interval},
          {"diverging_drop", f.diverging_drop},
          {"deviation_floor", f.deviation_floor}};
}

}  // namespace detail

/// build -> verify_higgs -> verdict -> run_flow -> reconcile -> certificates, then the files.
/// Exit codes: 0 reconciliation PASS, 2 FAIL, 1 execution error.
inline ScenarioResult execute_scenario(ScenarioConfig cfg, const RunOptions& opts = {}) {
  ScenarioResult res;
  if (opts.max_steps_override) {
    if (*opts.max_steps_override < 1) throw ConfigError("--max-steps-override must be >= 1");
    cfg.flow.max_steps = *opts.max_steps_override;
  }
  auto& log = *opts.log;
  const LatticeSurface surface(cfg.n, cfg.side);
  const auto& ex = cfg.example;
  const auto bundle = build_background(surface, ex.rank, ex.flux);
  const auto phi = HiggsField::constant(surface, ex.higgs);
  const auto hcheck = verify_higgs(bundle, phi);

  const auto v = verdict(ex);
  const MetricField h0 = cfg.initial_metric == InitialMetricKind::identity
                             ? MetricField::identity(surface, ex.rank)
                             : random_smooth_metric(bundle, cfg.initial_amplitude, cfg.seed);

  StrideSampler<MetricField> sampler(20);
  FlowObserver observer = [&](std::size_t row, const MetricField& h, const CurvatureField&) {
    sampler.offer(row, [&] { return h; });
    if (opts.verbose && row % 100 == 0) log << "  [" << ex.name << "] accepted step " << row << "\n";
  };
  if (opts.verbose)
    log << "[" << ex.name << "] N=" << cfg.n << " L=" << cfg.side << " verdict " << to_string(v.cls) << "\n";
  res.trace = run_flow(bundle, phi, h0, h0, cfg.flow, observer);
  auto& trace = res.trace;
  trace.example = ex.name;
  const auto cls = classify(trace, cfg.flow);
  const auto rec = reconcile(ex, v, trace, cfg.flow);

  // reduction residuals along the run
  json residuals = json::array();
  double max_residual = 0.0;
  for (auto& [row, h] : sampler.select(std::make_pair(trace.rows.size() - 1, trace.final_metric))) {
    const double r = reduction_residual(bundle, h, phi);
    max_residual = std::max(max_residual, r);
    residuals.push_back({{"row", row}, {"t", trace.rows[row].t}, {"residual", r}});
  }

  // certificates at the final metric
  const ReductiveGroupData group(cfg.group, std::max(ex.rank, cfg.group == GroupKind::SL ? 2 : 1));
  const auto kfinal = mean_curvature(bundle, trace.final_metric, phi);
  auto kframe = to_unitary_frame(trace.final_metric, kfinal);
  double trace_part = 0.0;
  if (cfg.group == GroupKind::SL) {
    for (auto& k : kframe) {
      const Complex tr = k.trace() / static_cast<double>(ex.rank);
      trace_part = std::max(trace_part, std::abs(tr) * std::sqrt(static_cast<double>(ex.rank)));
      k -= tr * Mat::Identity(ex.rank, ex.rank);
    }
  }
  const double tau_value = cfg.group == GroupKind::SL ? 0.0 : cfg.tau.value_or(trace.c);
  const Mat tau = tau_value * Mat::Identity(ex.rank, ex.rank);
  const auto cert = principal_ahym_certificate(group, kframe, tau, trace.target);
  const double trace_norm = deviation_norm_sup(kfinal, tau_value, trace.final_metric);
  const auto end = endomorphism_curvature(bundle, trace.final_metric, phi);
  const double end_dev = deviation_norm_sup(end.mean_curvature, 0.0, end.metric);
  const double delta = trace.rows.back().dev_sup;
  const double transfer_bound = 2.0 * std::sqrt(static_cast<double>(group.algebra_dim())) * delta;
  const double comm_err = commutator_identity_error(bundle, trace.final_metric, phi);

  double min_dev = trace.rows.front().dev_sup, max_drift = 0.0;
  bool monotone = true;
  for (std::size_t i = 0; i < trace.rows.size(); ++i) {
    min_dev = std::min(min_dev, trace.rows[i].dev_sup);
    max_drift = std::max(max_drift, trace.rows[i].deg_drift);
    if (i > 0) {
      const double prev = trace.rows[i - 1].L;
      monotone = monotone && trace.rows[i].L <= prev + cfg.flow.monotonicity_slack * (1.0 + std::abs(prev));
    }
  }

  json verdict_j = {{"class", to_string(v.cls)},
                    {"expected", to_string(ex.expected_verdict)},
                    {"matches_expected", v.cls == ex.expected_verdict},
                    {"slope_ambient", slope_string(v.slope_ambient)},
                    {"slope_witness", v.slope_witness ? json(slope_string(*v.slope_witness)) : json(nullptr)},
                    {"destabilizer", v.destabilizer ? detail::descriptor_json(*v.destabilizer) : json(nullptr)}};
  json candidates = json::array();
  for (const auto& c : invariant_subbundles(ex)) candidates.push_back(detail::descriptor_json(c));
  verdict_j["invariant_subbundles"] = candidates;
  if (ex.expected_destabilizer) {
    verdict_j["destabilizer_matches_expected"] =
        v.destabilizer.has_value() && detail::same_subbundle(*v.destabilizer, *ex.expected_destabilizer, ex.rank);
  }

  const auto& last = trace.rows.back();
  res.report = {
      {"example", ex.name},
      {"config", cfg.echo},
      {"flow_config", detail::flow_config_json(cfg.flow)},
      {"surface", {{"N", cfg.n}, {"L", cfg.side}, {"area", surface.area()}}},
      {"higgs_check", {{"holomorphy_residual", hcheck.holomorphy_residual}, {"integrability_ok", hcheck.integrability_ok}}},
      {"verdict", verdict_j},
      {"flow",
       {{"status", to_string(trace.status)},
        {"classification", to_string(cls)},
        {"c", trace.c},
        {"target", trace.target},
        {"accepted_steps", trace.rows.size() - 1},
        {"rejected_steps", trace.rejected_steps},
        {"t_final", last.t},
        {"L_final", last.L},
        {"dev_sup_initial", trace.rows.front().dev_sup},
        {"dev_sup_final", last.dev_sup},
        {"dev_sup_min", min_dev},
        {"dev_l2_final", last.dev_l2},
        {"min_eig_final", last.min_eig},
        {"max_degree_drift", max_drift},
        {"monotone", monotone},
        {"diagnostic", trace.diagnostic}}},
      {"reconciliation", {{"result", rec.pass ? "PASS" : "FAIL"}, {"evidence", rec.evidence}}},
      {"reduction_residuals", residuals},
      {"max_reduction_residual", max_residual},
      {"commutator_identity_error", comm_err},
      {"certificates",
       {{"group", to_string(cfg.group)},
        {"algebra_dim", group.algebra_dim()},
        {"xi", trace.target},
        {"tau", tau_value},
        {"kappa_norm", cert.norm},
        {"trace_norm", trace_norm},
        {"trace_part", trace_part},
        {"margin", cert.margin},
        {"holds", cert.holds},
        {"adjoint_transfer",
         {{"end_deviation", end_dev}, {"bound", transfer_bound}, {"ok", end_dev <= transfer_bound + 1e-9}}}}},
      {"outputs",
       {{"trace_path", cfg.trace_path.string()},
        {"report_path", cfg.report_path.string()},
        {"plotdata_path", cfg.plotdata_path.string()}}}};

  const bool failed_step = trace.status == FlowStatus::step_failure;
  res.exit_code = failed_step ? 1 : (rec.pass ? 0 : 2);
  res.message = failed_step ? "flow step failure: " + trace.diagnostic : rec.evidence;
  res.report["exit_code"] = res.exit_code;

  json sidecar = {{"example", ex.name},
                  {"config", cfg.echo},
                  {"flow_config", detail::flow_config_json(cfg.flow)},
                  {"status", to_string(trace.status)},
                  {"classification", to_string(cls)},
                  {"c", trace.c},
                  {"target", trace.target},
                  {"rows", trace.rows.size()},
                  {"rejected_steps", trace.rejected_steps},
                  {"diagnostic", trace.diagnostic}};
  write_text(cfg.trace_path, trace_csv(trace));
  write_text(cfg.trace_path.string() + ".json", sidecar.dump(2) + "\n");
  write_text(cfg.plotdata_path, plot_data(trace));
  write_text(cfg.report_path, res.report.dump(2) + "\n");
  return res;
}

/// Runs one config file; every failure mode is mapped to an exit code with a diagnostic.
inline int run_scenario(const std::filesystem::path& config_path, const RunOptions& opts = {},
                        std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  try {
    const auto cfg = load_scenario(config_path);
    auto res = execute_scenario(cfg, opts);
    if (res.exit_code == 1) err << "error: " << config_path.string() << ": " << res.message << "\n";
    else out << (res.exit_code == 0 ? "PASS " : "FAIL ") << cfg.example.name << ": " << res.message << "\n";
    return res.exit_code;
  } catch (const std::exception& e) {
    err << "error: " << config_path.string() << ": " << e.what() << "\n";
    return 1;
  }
}

/// Runs every *.json scenario in a directory (sorted by name). Nonzero if any scenario does
/// not PASS or the directory holds none.
inline int run_suite(const std::filesystem::path& dir, const RunOptions& opts = {},
                     std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) {
    err << "error: " << dir.string() << " is not a directory\n";
    return 1;
  }
  std::vector<std::filesystem::path> configs;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") configs.push_back(entry.path());
  std::sort(configs.begin(), configs.end());
  if (configs.empty()) {
    err << "error: no scenario configs (*.json) in " << dir.string() << "\n";
    return 1;
  }
  int failures = 0;
  std::vector<std::pair<std::string, int>> table;
  for (const auto& path : configs) {
    std::ostringstream sink;
    const int code = run_scenario(path, opts, opts.verbose ? out : sink, err);
    table.emplace_back(path.filename().string(), code);
    failures += code != 0;
  }
  for (const auto& [name, code] : table)
    out << (code == 0 ? "PASS" : code == 2 ? "FAIL" : "ERROR") << "  " << name << "\n";
  out << (failures == 0 ? "all " + std::to_string(table.size()) + " scenarios passed"
                        : std::to_string(failures) + " of " + std::to_string(table.size()) + " scenarios did not pass")
      << "\n";
  return failures == 0 ? 0 : 2;
}

}  // namespace higgsflow
