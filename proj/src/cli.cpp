#include "pathtemper/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pathtemper/baselines.hpp"
#include "pathtemper/diagnostics.hpp"
#include "pathtemper/error.hpp"
#include "pathtemper/idc.hpp"
#include "pathtemper/model.hpp"
#include "pathtemper/temper.hpp"

namespace pathtemper {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class IoError : public Error {
 public:
  using Error::Error;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.17g}", v);
}

// JSON has no infinities; they become null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : path_(path), os_(path) {
    if (!os_) throw IoError("cannot write " + path.string());
    row_text(header);
  }
  void row(std::span<const double> values) {
    std::string line;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) line += ',';
      line += num(values[i]);
    }
    os_ << line << '\n';
  }
  void row_text(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    os_ << line << '\n';
  }
  void close() {
    os_.close();
    if (!os_) throw IoError("failed writing " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream os_;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  os.close();
  if (!os) throw IoError("failed writing " + path.string());
}

// Whitespace-separated copy of a table for gnuplot.
void write_dat(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << '#';
  for (const auto& h : header) os << ' ' << h;
  os << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? " " : "") << num(r[i]);
    os << '\n';
  }
}

KernelFamily parse_family(const std::string& s) {
  if (s == "gaussian") return KernelFamily::gaussian;
  if (s == "logit") return KernelFamily::logit;
  if (s == "mixed") return KernelFamily::mixed;
  throw ValidationError("kernel_family", "expected gaussian, logit or mixed, got '" + s + "'");
}

SamplerConfig sampler_from(const RunConfig& cfg) {
  SamplerConfig s;
  s.chains = cfg.chains;
  s.seed = cfg.seed;
  s.target_accept = cfg.target_accept;
  s.max_tree_depth = cfg.max_depth;
  return s;
}

const FixtureCatalogEntry& catalog_entry(const std::string& name) {
  const auto& cat = fixture_catalog();
  const auto it = std::find_if(cat.begin(), cat.end(), [&](const auto& e) { return e.name == name; });
  if (it == cat.end()) throw FixtureNotFound(name);
  return *it;
}

// Reference log z(lambda) - log z(0) along the fixture's geometric path, when one exists.
std::optional<std::function<double(double)>> reference_logz(const RunConfig& cfg) {
  const FixtureCatalogEntry& e = catalog_entry(cfg.fixture);
  Params p = e.parameters;
  for (const auto& [k, v] : cfg.params) p[k] = v;
  if (e.family == "beta_binomial") {
    const double a = p.at("alpha"), b = p.at("beta"), y = p.at("y"), n = p.at("n");
    const double base = beta_binomial_logz(a, b, y, n, 0.0);
    return [=](double lambda) { return beta_binomial_logz(a, b, y, n, lambda) - base; };
  }
  const Fixture fx = make_fixture(cfg.fixture, cfg.params);
  if (fx.target.dim != 1) return std::nullopt;
  ModelSpec path;
  path.name = fx.name + "_path";
  path.dim = 1;
  path.lambda_dependent = true;
  path.evaluator = [t = fx.target, b = fx.base](std::span<const double> x, double lambda,
                                                std::span<double> g) {
    double gt = 0.0, gb = 0.0;
    const double lt = eval_into(t, x, 1.0, std::span<double>(&gt, 1));
    const double lb = eval_into(b, x, 1.0, std::span<double>(&gb, 1));
    g[0] = lambda * gt + (1.0 - lambda) * gb;
    return lambda * lt + (1.0 - lambda) * lb;
  };
  const double base = quadrature_logz(path, 0.0);
  return [=](double lambda) { return quadrature_logz(path, lambda) - base; };
}

std::vector<std::string> theta_names(std::size_t dim) {
  std::vector<std::string> out;
  for (std::size_t k = 0; k < dim; ++k) out.push_back(fmt::format("theta_{}", k + 1));
  return out;
}

// Per-coordinate R-hat and ESS of draws grouped by chain.
json chain_summary(const DrawStore& store, const std::vector<std::string>& names) {
  json rhat = json::object(), bulk = json::object(), tail = json::object();
  bool all_ok = true;
  std::uint32_t nchain = 0;
  for (std::uint32_t c : store.chain) nchain = std::max(nchain, c + 1);
  for (std::size_t k = 0; k < store.theta_dim; ++k) {
    ChainMatrix m(nchain);
    for (std::size_t i = 0; i < store.size(); ++i)
      m[store.chain[i]].push_back(store.theta_row(i)[k]);
    std::erase_if(m, [](const auto& v) { return v.size() < 4; });
    double r = std::numeric_limits<double>::quiet_NaN(), eb = r, et = r;
    if (!m.empty()) {
      try {
        r = split_rhat(m);
        eb = ess_bulk(m);
        et = ess_tail(m);
      } catch (const Error&) {
      }
    }
    all_ok = all_ok && std::isfinite(r) && r < 1.05;
    rhat[names[k]] = jnum(r);
    bulk[names[k]] = jnum(eb);
    tail[names[k]] = jnum(et);
  }
  return json{{"rhat", rhat}, {"ess_bulk", bulk}, {"ess_tail", tail}, {"rhat_pass", all_ok}};
}

void write_draws(const fs::path& path, const DrawStore& s, const LinkFunction* link,
                 const std::vector<std::string>& names, const char* a_name = "a") {
  std::vector<std::string> header{"adaptation", "chain", a_name};
  if (link) header.push_back("lambda");
  header.insert(header.end(), names.begin(), names.end());
  header.insert(header.end(), {"logq", "logpsi", "divergent"});
  CsvWriter w(path, header);
  std::vector<double> row;
  for (std::size_t i = 0; i < s.size(); ++i) {
    row.assign({static_cast<double>(s.adaptation[i]), static_cast<double>(s.chain[i]), s.a[i]});
    if (link) row.push_back(link->eval(s.a[i]).lambda);
    const auto th = s.theta_row(i);
    row.insert(row.end(), th.begin(), th.end());
    row.insert(row.end(), {s.log_q[i], s.log_psi[i], static_cast<double>(s.divergent[i])});
    w.row(row);
  }
  w.close();
}

json base_report(const RunConfig& cfg) {
  return json{{"command", cfg.command}, {"fixture", cfg.fixture}, {"seed", cfg.seed}};
}

void gnuplot_script(const fs::path& dir, const std::string& body) {
  std::ofstream os(dir / "plot.gp");
  if (!os) throw IoError("cannot write " + (dir / "plot.gp").string());
  os << "set datafile commentschars '#'\nset key left top\n" << body;
}

// ---------------------------------------------------------------- temper

void cmd_temper(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Fixture fx = make_fixture(cfg.fixture, cfg.params);
  TemperConfig tc;
  tc.max_adaptations = cfg.adaptations;
  tc.draws_per_adaptation = cfg.draws;
  tc.khat_threshold = cfg.khat_threshold;
  tc.sampler = sampler_from(cfg);
  tc.link = LinkFunction(cfg.a_min, cfg.a_max);
  tc.kernel_family = parse_family(cfg.kernel_family);
  tc.kernels = cfg.kernels;
  tc.grid_size = cfg.grid_size;
  tc.stop_on_convergence = cfg.stop_on_convergence;
  tc.production_draws = cfg.production_draws;
  const TemperResult r = run_continuous_tempering(fx.target, fx.base, tc);
  const auto ref = reference_logz(cfg);

  const PathEstimate& pe = r.path_estimate;
  std::vector<std::string> header{"lambda", "logz_raw", "logz_fit"};
  if (ref) header.push_back("logz_reference");
  std::vector<std::vector<double>> rows;
  double mae = 0.0;
  for (std::size_t i = 0; i < pe.grid_lambda.size(); ++i) {
    std::vector<double> row{pe.grid_lambda[i], pe.logz_raw[i], pe.logz_fit[i]};
    if (ref) {
      row.push_back((*ref)(pe.grid_lambda[i]));
      mae += std::abs(pe.logz_fit[i] - row.back());
    }
    rows.push_back(std::move(row));
  }
  {
    CsvWriter w(out / "logz.csv", header);
    for (const auto& row : rows) w.row(row);
    w.close();
  }
  {
    CsvWriter w(out / "marginal.csv", {"a", "log_p"});
    for (std::size_t i = 0; i < r.marginal_a.size(); ++i)
      w.row(std::vector<double>{r.marginal_a[i], r.marginal_log_p[i]});
    w.close();
  }
  const auto names = theta_names(fx.target.dim);
  write_draws(out / "draws.csv", r.full_store, &tc.link, names);

  json rep = base_report(cfg);
  rep["converged"] = r.converged;
  rep["adaptations"] = r.adaptations_used;
  rep["first_pass"] = r.first_pass;
  const double khat = r.history.empty() ? std::numeric_limits<double>::infinity()
                                        : r.history.back().khat;
  rep["khat"] = jnum(khat);
  rep["khat_threshold"] = cfg.khat_threshold;
  rep["logz_at_1"] = jnum(pe.logz_fit.empty() ? std::nan("") : pe.logz_fit.back());
  rep["target_draws"] = r.target_draws.size();
  rep["empty_target_warning"] = r.empty_target_warning;
  rep["total_grad_evals"] = r.total_grad_evals;
  json hist = json::array();
  for (const auto& h : r.history)
    hist.push_back({{"adaptation", h.index + 1},
                    {"khat", jnum(h.khat)},
                    {"khat_pass", h.khat_pass},
                    {"moved_fraction", h.moved_fraction},
                    {"target_draws", h.target_draws},
                    {"divergences", h.divergences},
                    {"grad_evals", h.grad_evals},
                    {"slope_fallback", h.slope_fallback},
                    {"insufficient_coverage", h.insufficient_coverage}});
  rep["history"] = hist;
  const json cs = chain_summary(r.target_draws, names);
  for (const auto& [k, v] : cs.items()) rep[k] = v;
  rep["pass"] = {{"khat", khat < cfg.khat_threshold}, {"rhat", cs["rhat_pass"]}};
  if (ref) rep["logz_mae"] = mae / static_cast<double>(pe.grid_lambda.size());
  write_json(out / "report.json", rep);

  if (cfg.emit_gnuplot) {
    const fs::path g = out / "gnuplot";
    fs::create_directories(g);
    write_dat(g / "logz.dat", header, rows);
    std::vector<std::vector<double>> m;
    for (std::size_t i = 0; i < r.marginal_a.size(); ++i)
      m.push_back({r.marginal_a[i], std::exp(r.marginal_log_p[i])});
    write_dat(g / "marginal.dat", {"a", "p"}, m);
    gnuplot_script(g, std::string("set xlabel 'lambda'\nset ylabel 'log z'\n"
                                  "plot 'logz.dat' u 1:2 w p t 'raw', '' u 1:3 w l t 'fit'") +
                          (ref ? ", '' u 1:4 w l dt 2 t 'reference'\n" : "\n") +
                          "pause -1\nset xlabel 'a'\nset ylabel 'p(a)'\n"
                          "plot 'marginal.dat' u 1:2 w l t 'marginal'\n");
  }
  log << fmt::format("temper {}: {} after {} adaptation(s), log z(1) = {}\n", cfg.fixture,
                     r.converged ? "converged" : "not converged", r.adaptations_used,
                     pe.logz_fit.empty() ? std::string("n/a") : num(pe.logz_fit.back()));
}

// ---------------------------------------------------------------- idc

struct MarginChoice {
  std::size_t index;
  bool log_scale;
};

MarginChoice resolve_margin(const RunConfig& cfg, std::size_t dim) {
  const std::string& family = catalog_entry(cfg.fixture).family;
  const bool schools = family.starts_with("eight_schools");
  if (schools && cfg.margin == "tau") return {1, true};
  if (schools && cfg.margin == "mu") return {0, false};
  std::size_t idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoul(cfg.margin, &used);
    if (used != cfg.margin.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ValidationError("margin", "unknown margin '" + cfg.margin + "'");
  }
  if (idx >= dim) throw ValidationError("margin", "index outside the model");
  return {idx, schools && idx == 1};
}

void cmd_idc(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const Fixture fx = make_fixture(cfg.fixture, cfg.params);
  const MarginChoice mc = resolve_margin(cfg, fx.target.dim);
  IdcConfig ic;
  ic.margin_index = mc.index;
  ic.grid_lo = cfg.grid_lo;
  ic.grid_hi = cfg.grid_hi;
  ic.grid_size = cfg.grid_n;
  ic.max_adaptations = cfg.adaptations;
  ic.min_adaptations = cfg.min_adaptations;
  ic.draws_per_adaptation = cfg.draws;
  ic.khat_threshold = cfg.khat_threshold;
  ic.sampler = sampler_from(cfg);
  if (cfg.target == "optimal") {
    ic.target = MarginTarget::adaptive_optimal;
  } else if (cfg.target == "prior") {
    if (!(mc.log_scale && catalog_entry(cfg.fixture).family.starts_with("eight_schools")))
      throw ValidationError("target", "a prior target is only defined for the eight-schools tau");
    ic.target = MarginTarget::fixed;
    // half-Cauchy(0, 5) on tau, expressed on log tau.
    ic.fixed_target = [](double t) {
      const double u = std::exp(t) / 5.0;
      return -std::log1p(u * u) + t;
    };
  } else {
    throw ValidationError("target", "expected prior or optimal, got '" + cfg.target + "'");
  }
  const IdcResult r = run_idc(fx.target, ic);
  const MarginalDensity& md = r.marginal;
  const MarginScale scale = mc.log_scale ? MarginScale::exp : MarginScale::identity;

  {
    std::vector<std::string> header{"x", "log_density"};
    if (mc.log_scale) header.insert(header.end(), {"x_natural", "log_density_natural"});
    CsvWriter w(out / "marginal.csv", header);
    for (std::size_t i = 0; i < md.grid.size(); ++i) {
      std::vector<double> row{md.grid[i], md.log_density[i]};
      if (mc.log_scale) row.insert(row.end(), {std::exp(md.grid[i]), md.log_density[i] - md.grid[i]});
      w.row(row);
    }
    w.close();
  }
  json moments = json::object();
  for (int m : {1, 2}) {
    const std::string key = m == 1 ? "mean" : "second_moment";
    moments[key] = {
        {"quadrature", jnum(moment_estimate(md, m, MomentMethod::quadrature, nullptr, scale))},
        {"importance", jnum(moment_estimate(md, m, MomentMethod::importance, &r.draws, scale))}};
  }
  moments["scale"] = mc.log_scale ? "natural" : "identity";
  write_json(out / "moments.json", moments);
  {
    CsvWriter w(out / "quantiles.csv", {"prob", "quantile"});
    for (double p : {0.001, 0.005, 0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99, 0.999}) {
      const double q = quantile_estimate(md, p);
      w.row(std::vector<double>{p, mc.log_scale ? std::exp(q) : q});
    }
    w.close();
  }
  write_draws(out / "draws.csv", r.draws, nullptr, theta_names(fx.target.dim), "margin");

  json rep = base_report(cfg);
  rep["converged"] = r.converged;
  rep["adaptations"] = r.adaptations_used;
  rep["margin_index"] = mc.index;
  const double khat = r.history.back().khat;
  rep["khat"] = jnum(khat);
  rep["khat_threshold"] = cfg.khat_threshold;
  rep["outside_grid"] = r.outside_grid;
  rep["total_grad_evals"] = r.total_grad_evals;
  rep["density_integral"] = md.integral();
  json hist = json::array();
  for (const auto& h : r.history)
    hist.push_back({{"adaptation", h.index + 1},
                    {"khat", jnum(h.khat)},
                    {"khat_pass", h.khat_pass},
                    {"sampled_lo", h.sampled_lo},
                    {"sampled_hi", h.sampled_hi},
                    {"divergences", h.divergences},
                    {"grad_evals", h.grad_evals},
                    {"uniform_fallback", h.uniform_fallback}});
  rep["history"] = hist;
  rep["pass"] = {{"khat", khat < cfg.khat_threshold}};
  write_json(out / "report.json", rep);

  if (cfg.emit_gnuplot) {
    const fs::path g = out / "gnuplot";
    fs::create_directories(g);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < md.grid.size(); ++i) rows.push_back({md.grid[i], std::exp(md.log_density[i])});
    write_dat(g / "marginal.dat", {"x", "p"}, rows);
    gnuplot_script(g, "set xlabel 'margin'\nplot 'marginal.dat' u 1:2 w l t 'p_hat'\n");
  }
  log << fmt::format("idc {}: {} after {} adaptation(s), E = {}\n", cfg.fixture,
                     r.converged ? "converged" : "not converged", r.adaptations_used,
                     num(moments["mean"]["quadrature"].is_null()
                             ? std::nan("")
                             : moments["mean"]["quadrature"].get<double>()));
}

// ---------------------------------------------------------------- bench

void cmd_bench(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto ref = reference_logz(cfg);
  if (!ref) throw ValidationError("fixture", "bench needs a fixture with a reference log z");
  for (const auto& m : cfg.methods)
    if (m != "path" && m != "rb" && m != "is")
      throw ValidationError("methods", "unknown method '" + m + "'");
  const Fixture fx = make_fixture(cfg.fixture, cfg.params);
  const DiscreteLadder ladder = DiscreteLadder::even(11);
  std::vector<double> truth(ladder.lambda.size());
  for (std::size_t k = 0; k < truth.size(); ++k) truth[k] = (*ref)(ladder.lambda[k]);
  const auto l2 = [&](const std::function<double(std::size_t)>& est) {
    double s = 0.0;
    for (std::size_t k = 1; k < truth.size(); ++k) s += std::pow(est(k) - truth[k], 2);
    return std::sqrt(s / static_cast<double>(truth.size() - 1));
  };

  std::map<std::string, std::vector<double>> err;
  std::map<std::string, std::size_t> evals;
  for (const auto& m : cfg.methods) {
    if (m == "path") {
      TemperConfig tc;
      tc.max_adaptations = cfg.adaptations;
      tc.draws_per_adaptation = cfg.draws;
      tc.sampler = sampler_from(cfg);
      tc.link = LinkFunction(cfg.a_min, cfg.a_max);
      tc.kernel_family = parse_family(cfg.kernel_family);
      tc.kernels = cfg.kernels;
      tc.grid_size = cfg.grid_size;
      tc.stop_on_convergence = false;
      const TemperResult r = run_continuous_tempering(fx.target, fx.base, tc);
      for (const auto& h : r.history)
        err[m].push_back(l2([&](std::size_t k) { return h.logz.fit.log_c(ladder.lambda[k]); }));
      evals[m] = r.total_grad_evals;
    } else {
      DiscreteBudget b;
      b.adaptations = cfg.adaptations;
      b.lambda_draws = cfg.lambda_draws;
      b.hmc_updates = cfg.hmc_updates;
      b.chains = cfg.chains;
      const DiscreteRun r = discrete_tempering_run(
          fx.target, fx.base, ladder,
          m == "rb" ? DiscreteEstimator::rao_blackwell : DiscreteEstimator::empirical_is, b,
          cfg.seed);
      for (const auto& row : r.logz) err[m].push_back(l2([&](std::size_t k) { return row[k]; }));
      evals[m] = r.grad_evals;
    }
  }

  std::vector<std::string> header{"adaptation"};
  header.insert(header.end(), cfg.methods.begin(), cfg.methods.end());
  std::vector<std::vector<double>> rows;
  for (std::size_t t = 0; t < cfg.adaptations; ++t) {
    std::vector<double> row{static_cast<double>(t + 1)};
    for (const auto& m : cfg.methods)
      row.push_back(t < err[m].size() ? err[m][t] : std::nan(""));
    rows.push_back(std::move(row));
  }
  {
    CsvWriter w(out / "l2_error.csv", header);
    for (const auto& row : rows) w.row(row);
    w.close();
  }
  json rep = base_report(cfg);
  rep["converged"] = true;
  rep["adaptations"] = cfg.adaptations;
  json fin = json::object(), ev = json::object();
  for (const auto& m : cfg.methods) {
    fin[m] = jnum(err[m].empty() ? std::nan("") : err[m].back());
    ev[m] = evals[m];
  }
  rep["final_l2"] = fin;
  rep["grad_evals"] = ev;
  write_json(out / "report.json", rep);
  if (cfg.emit_gnuplot) {
    const fs::path g = out / "gnuplot";
    fs::create_directories(g);
    write_dat(g / "l2_error.dat", header, rows);
    std::string plot = "set logscale y\nset xlabel 'adaptation'\nset ylabel 'L2 error'\nplot ";
    for (std::size_t i = 0; i < cfg.methods.size(); ++i)
      plot += fmt::format("{}'l2_error.dat' u 1:{} w lp t '{}'", i ? ", " : "", i + 2,
                          cfg.methods[i]);
    gnuplot_script(g, plot + "\n");
  }
  for (const auto& m : cfg.methods)
    log << fmt::format("bench {} {}: final L2 {}\n", cfg.fixture, m, num(err[m].back()));
}

// ---------------------------------------------------------------- logz

void cmd_logz(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  const auto ref = reference_logz(cfg);
  if (!ref) throw ValidationError("fixture", "no reference log z for '" + cfg.fixture + "'");
  std::vector<std::vector<double>> rows;
  {
    CsvWriter w(out / "logz.csv", {"lambda", "logz_reference"});
    for (std::size_t i = 0; i <= cfg.grid_size; ++i) {
      const double lambda = static_cast<double>(i) / static_cast<double>(cfg.grid_size);
      rows.push_back({lambda, (*ref)(lambda)});
      w.row(rows.back());
    }
    w.close();
  }
  json rep = base_report(cfg);
  rep["converged"] = true;
  rep["logz_at_1"] = rows.back()[1];
  rep["method"] = catalog_entry(cfg.fixture).family == "beta_binomial" ? "analytic" : "quadrature";
  write_json(out / "report.json", rep);
  if (cfg.emit_gnuplot) {
    const fs::path g = out / "gnuplot";
    fs::create_directories(g);
    write_dat(g / "logz.dat", {"lambda", "logz_reference"}, rows);
    gnuplot_script(g, "plot 'logz.dat' u 1:2 w l t 'reference log z'\n");
  }
  log << fmt::format("logz {}: log z(1) = {}\n", cfg.fixture, num(rows.back()[1]));
}

// ---------------------------------------------------------------- diagnose

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

void cmd_diagnose(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
  std::ifstream is(cfg.input);
  if (!is) throw IoError("cannot read " + cfg.input);
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("input", "empty file");
  const auto header = split_csv(line);
  const auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto chain_col = col("chain");
  if (!chain_col) throw ValidationError("input", "no chain column");
  const auto adapt_col = col("adaptation");
  const auto a_col = col("a");
  std::vector<std::size_t> theta_cols;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i].starts_with("theta_")) {
      theta_cols.push_back(i);
      names.push_back(header[i]);
    }
  if (theta_cols.empty()) throw ValidationError("input", "no theta_ columns");

  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ValidationError("input", "ragged row");
    std::vector<double> v(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) v[i] = std::stod(cells[i]);
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw ValidationError("input", "no draws");
  double last = 0.0;
  if (adapt_col)
    for (const auto& r : rows) last = std::max(last, r[*adapt_col]);
  const LinkFunction link(cfg.a_min, cfg.a_max);
  DrawStore s;
  s.theta_dim = theta_cols.size();
  std::vector<double> th(theta_cols.size());
  for (const auto& r : rows) {
    if (adapt_col && r[*adapt_col] != last) continue;
    if (a_col && !link.in_target_plateau(r[*a_col])) continue;
    for (std::size_t k = 0; k < theta_cols.size(); ++k) th[k] = r[theta_cols[k]];
    s.push_back(0, static_cast<std::uint32_t>(r[*chain_col]), 1.0, th, 0.0, 0.0, false);
  }
  json rep = base_report(cfg);
  rep["input"] = cfg.input;
  rep["draws_used"] = s.size();
  const json cs = chain_summary(s, names);
  for (const auto& [k, v] : cs.items()) rep[k] = v;
  rep["converged"] = cs["rhat_pass"];
  rep["pass"] = {{"rhat", cs["rhat_pass"]}};
  write_json(out / "report.json", rep);
  log << fmt::format("diagnose: {} draws, R-hat {}\n", s.size(),
                     cs["rhat_pass"].get<bool>() ? "< 1.05 on every coordinate" : ">= 1.05 somewhere");
}

RunConfig command_defaults(const std::string& command) {
  RunConfig c;
  c.command = command;
  if (command == "idc") {
    c.fixture = "eight_schools";
    c.adaptations = 10;
    c.min_adaptations = 10;
    c.draws = 8000;
    c.target_accept = 0.95;
  }
  return c;
}

}  // namespace

json RunConfig::to_json() const {
  return json{{"command", command},
              {"model", {{"name", fixture}, {"params", params}}},
              {"out", out},
              {"seed", seed},
              {"chains", chains},
              {"draws", draws},
              {"adaptations", adaptations},
              {"target_accept", target_accept},
              {"max_depth", max_depth},
              {"a_min", a_min},
              {"a_max", a_max},
              {"kernel_family", kernel_family},
              {"kernels", kernels},
              {"grid_size", grid_size},
              {"khat_threshold", khat_threshold},
              {"stop_on_convergence", stop_on_convergence},
              {"production_draws", production_draws},
              {"margin", margin},
              {"target", target},
              {"grid", {grid_lo, grid_hi, grid_n}},
              {"min_adaptations", min_adaptations},
              {"methods", methods},
              {"lambda_draws", lambda_draws},
              {"hmc_updates", hmc_updates},
              {"input", input},
              {"emit_gnuplot", emit_gnuplot}};
}

RunConfig RunConfig::from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ValidationError("config", "expected a JSON object");
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  try {
    get("command", c.command);
    if (j.contains("model")) {
      const json& m = j.at("model");
      if (m.contains("name")) m.at("name").get_to(c.fixture);
      if (m.contains("params")) m.at("params").get_to(c.params);
    }
    get("out", c.out);
    get("seed", c.seed);
    get("chains", c.chains);
    get("draws", c.draws);
    get("adaptations", c.adaptations);
    get("target_accept", c.target_accept);
    get("max_depth", c.max_depth);
    get("a_min", c.a_min);
    get("a_max", c.a_max);
    get("kernel_family", c.kernel_family);
    get("kernels", c.kernels);
    get("grid_size", c.grid_size);
    get("khat_threshold", c.khat_threshold);
    get("stop_on_convergence", c.stop_on_convergence);
    get("production_draws", c.production_draws);
    get("margin", c.margin);
    get("target", c.target);
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      if (!g.is_array() || g.size() != 3) throw ValidationError("grid", "expected [lo, hi, n]");
      g[0].get_to(c.grid_lo);
      g[1].get_to(c.grid_hi);
      g[2].get_to(c.grid_n);
    }
    get("min_adaptations", c.min_adaptations);
    get("methods", c.methods);
    get("lambda_draws", c.lambda_draws);
    get("hmc_updates", c.hmc_updates);
    get("input", c.input);
    get("emit_gnuplot", c.emit_gnuplot);
  } catch (const json::exception& e) {
    throw ValidationError("config", e.what());
  }
  return c;
}

void execute(const RunConfig& cfg, std::ostream& log) {
  if (cfg.out.empty()) throw ValidationError("out", "an output directory is required");
  if (cfg.command != "diagnose") catalog_entry(cfg.fixture);
  const fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw IoError("cannot create output directory " + cfg.out);
  write_json(out / "config_resolved.json", cfg.to_json());
  if (cfg.command == "temper") return cmd_temper(cfg, out, log);
  if (cfg.command == "idc") return cmd_idc(cfg, out, log);
  if (cfg.command == "bench") return cmd_bench(cfg, out, log);
  if (cfg.command == "logz") return cmd_logz(cfg, out, log);
  if (cfg.command == "diagnose") return cmd_diagnose(cfg, out, log);
  throw ValidationError("command", "unknown command '" + cfg.command + "'");
}

namespace {

// Options of one subcommand, recorded only when given on the command line.
class FlagSet {
 public:
  explicit FlagSet(CLI::App* app) : app_(app) {}

  template <class T>
  void add(const std::string& flag, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app_->add_option(flag, *holder, help);
    collect_.push_back([opt, holder, key](json& j) {
      if (opt->count()) j[key] = *holder;
    });
  }

  void add_params() {
    auto holder = std::make_shared<std::vector<std::string>>();
    CLI::Option* opt = app_->add_option("--param", *holder, "fixture parameter override key=value");
    collect_.push_back([opt, holder](json& j) {
      if (!opt->count()) return;
      json p = json::object();
      for (const auto& kv : *holder) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw ValidationError("param", "expected key=value, got '" + kv + "'");
        try {
          p[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
        } catch (const std::invalid_argument&) {
          throw ValidationError("param", "non-numeric value in '" + kv + "'");
        }
      }
      j["model"]["params"] = p;
    });
  }

  void add_switch(const std::string& flag, const std::string& key, bool value,
                  const std::string& help) {
    CLI::Option* opt = app_->add_flag(flag, help);
    collect_.push_back([opt, key, value](json& j) {
      if (opt->count()) j[key] = value;
    });
  }

  void add_grid() {
    auto holder = std::make_shared<std::string>();
    CLI::Option* opt = app_->add_option("--grid", *holder, "margin grid lo,hi,n");
    collect_.push_back([opt, holder](json& j) {
      if (!opt->count()) return;
      std::vector<std::string> parts;
      std::stringstream ss(*holder);
      for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
      if (parts.size() != 3) throw ValidationError("grid", "expected lo,hi,n");
      try {
        j["grid"] = {std::stod(parts[0]), std::stod(parts[1]), std::stoul(parts[2])};
      } catch (const std::exception&) {
        throw ValidationError("grid", "expected lo,hi,n");
      }
    });
  }

  void add_methods() {
    auto holder = std::make_shared<std::string>();
    CLI::Option* opt = app_->add_option("--methods", *holder, "comma-separated subset of path,rb,is");
    collect_.push_back([opt, holder](json& j) {
      if (!opt->count()) return;
      std::vector<std::string> parts;
      std::stringstream ss(*holder);
      for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
      j["methods"] = parts;
    });
  }

  json collect() const {
    json j = json::object();
    for (const auto& f : collect_) f(j);
    if (j.contains("fixture")) {
      j["model"]["name"] = j["fixture"];
      j.erase("fixture");
    }
    return j;
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> collect_;
};

void add_common(FlagSet& f) {
  f.add<std::string>("--fixture", "fixture", "fixture name");
  f.add<std::string>("--out", "out", "output directory");
  f.add<std::uint64_t>("--seed", "seed", "random seed");
  f.add<std::size_t>("--chains", "chains", "number of chains");
  f.add<std::size_t>("--draws", "draws", "sampler iterations per adaptation, summed over chains");
  f.add<std::size_t>("--adaptations", "adaptations", "maximum number of adaptations");
  f.add<double>("--target-accept", "target_accept", "step size adaptation target");
  f.add<int>("--max-depth", "max_depth", "maximum NUTS tree depth");
  f.add<double>("--khat-threshold", "khat_threshold", "k-hat stopping threshold");
  f.add_params();
  f.add_switch("--emit-gnuplot", "emit_gnuplot", true, "also write gnuplot data files");
}

void add_path(FlagSet& f) {
  f.add<double>("--a-min", "a_min", "link knot a_min");
  f.add<double>("--a-max", "a_max", "link knot a_max");
  f.add<std::string>("--kernel-family", "kernel_family", "gaussian, logit or mixed");
  f.add<std::size_t>("--kernels", "kernels", "number of basis kernels J");
  f.add<std::size_t>("--grid-size", "grid_size", "log z grid size I");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive path sampling with continuous tempering and implicit divide-and-conquer",
               "pathtemper"};
  app.require_subcommand(1);
  std::string config_path;

  struct Sub {
    CLI::App* app;
    FlagSet flags;
  };
  std::vector<Sub> subs;
  const auto make = [&](const char* name, const char* help) -> Sub& {
    CLI::App* a = app.add_subcommand(name, help);
    a->add_option("--config", config_path, "JSON configuration, e.g. a config_resolved.json");
    subs.push_back({a, FlagSet(a)});
    add_common(subs.back().flags);
    return subs.back();
  };
  subs.reserve(5);
  Sub& temper = make("temper", "continuous tempering with path sampling");
  add_path(temper.flags);
  temper.flags.add<std::size_t>("--production-draws", "production_draws",
                                "extra iterations with the final pseudo-prior");
  temper.flags.add_switch("--no-stop", "stop_on_convergence", false,
                          "run every adaptation even after k-hat passes");
  Sub& idc = make("idc", "implicit divide-and-conquer over one margin");
  idc.flags.add<std::string>("--margin", "margin", "margin name (tau, mu) or coordinate index");
  idc.flags.add<std::string>("--target", "target", "prior or optimal");
  idc.flags.add_grid();
  idc.flags.add<std::size_t>("--min-adaptations", "min_adaptations",
                             "adaptations before k-hat may stop the loop");
  Sub& bench = make("bench", "L2 error per adaptation of path and discrete tempering estimators");
  add_path(bench.flags);
  bench.flags.add_methods();
  bench.flags.add<std::size_t>("--lambda-draws", "lambda_draws", "discrete rung draws per adaptation");
  bench.flags.add<std::size_t>("--hmc-updates", "hmc_updates", "HMC updates per rung draw");
  Sub& logz = make("logz", "reference log z curve of a fixture");
  logz.flags.add<std::size_t>("--grid-size", "grid_size", "number of lambda intervals");
  Sub& diagnose = make("diagnose", "R-hat and ESS of a draws.csv file");
  diagnose.flags.add<std::string>("--input", "input", "draws.csv to diagnose");
  diagnose.flags.add<double>("--a-max", "a_max", "link knot a_max");
  diagnose.flags.add<double>("--a-min", "a_min", "link knot a_min");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  const Sub* chosen = nullptr;
  for (const Sub& s : subs)
    if (s.app->parsed()) chosen = &s;
  try {
    RunConfig cfg = command_defaults(chosen->app->get_name());
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw IoError("cannot read " + config_path);
      json j;
      try {
        is >> j;
      } catch (const json::exception& e) {
        throw ValidationError("config", e.what());
      }
      cfg = RunConfig::from_json(j, cfg);
      cfg.command = chosen->app->get_name();
    }
    const json given = chosen->flags.collect();
    cfg = RunConfig::from_json(given, cfg);
    // A shortened idc run keeps its default warm-up count within the new cap.
    if (cfg.command == "idc" && given.contains("adaptations") && !given.contains("min_adaptations"))
      cfg.min_adaptations = std::min(cfg.min_adaptations, cfg.adaptations);
    if (cfg.command != "diagnose" && cfg.fixture.empty())
      throw ValidationError("fixture", "--fixture is required");
    execute(cfg, out);
    return 0;
  } catch (const FixtureNotFound& e) {
    err << "error: " << e.what() << "\n\n" << chosen->app->help();
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n\n" << chosen->app->help();
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pathtemper
