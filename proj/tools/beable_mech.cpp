// beable-mech: optimize a transfer field, simulate beable ensembles and
// extract the mean jump count from modulated-field measurements.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "beable/analysis.hpp"
#include "beable/errors.hpp"
#include "beable/io.hpp"
#include "beable/mechanism.hpp"
#include "beable/optimizer.hpp"
#include "beable/parallel.hpp"
#include "beable/propagator.hpp"
#include "beable/sampler.hpp"
#include "beable/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace beable;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kNumerical = 2, kEmpty = 3 };

// JSON config reader for CLI11. Nested objects are flattened, so
// {"simulate": {"n_traj": 100}} and {"n_traj": 100} mean the same; keys may
// use '_' or '-'.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json doc = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || opt->get_lnames()[0] == "config") continue;
      const auto& results = opt->results();
      if (!results.empty())
        doc[opt->get_lnames()[0]] = results.size() == 1 ? json(results[0]) : json(results);
      else if (default_also && !opt->get_default_str().empty())
        doc[opt->get_lnames()[0]] = opt->get_default_str();
    }
    return doc.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(doc, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be numbers, strings, booleans or arrays");
  }

  static void flatten(const json& doc, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : doc.items()) {
      if (value.is_object()) {
        flatten(value, items);
        continue;
      }
      CLI::ConfigItem item;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
  }
};

constexpr double kAuto = std::numeric_limits<double>::quiet_NaN();

struct Settings {
  // shared
  std::string system_path;
  std::string field_path;
  std::string out_dir = "out";
  int initial = 0;
  int target = -1;
  int workers = 0;
  bool self_check = false;
  bool zero_field = false;
  double horizon = 100.0;
  double step = 0.025;

  // optimize
  int iterations = 2000;
  double learning_rate = 10.0;
  double max_field_step = 0.01;
  double penalty = 0.0;
  double smoothing = 0.0;
  std::uint64_t field_seed = 1;
  double amplitude = 0.05;
  double stop_transfer = 0.97;
  double target_transfer = 0.90;
  int max_rejections = 30;

  // simulate
  int n_traj = 10000;
  std::uint64_t seed = 0;
  int substeps = 1;
  int checkpoints = 40;
  // NaN: 0.8 t_f for tau_max, (0.7 t_f, 0.8 t_f) for the window.
  double tau_max = kAuto;
  double tau_step = 0.1;
  int jump_from = -1;
  int jump_to = -1;
  double window_lo = kAuto;
  double window_hi = kAuto;

  // mechanism
  std::string dataset_path;
  double sigma = 0.1;
  double increment = 0.01;
  double m_lo = 0.01;
  double m_hi = 1.6;
  int k_max = 4;
  double head_fraction = 0.1;
  double min_lo = 0.2;
  double min_hi = 0.8;
  double max_lo = 0.7;
  double max_hi = 1.6;
  double min_width = 0.10;
  bool amplitude_space = false;
  std::vector<double> sigma_scan;
  int scan_seeds = 1;
};

// Files written by a run, kept for the self-check.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path add(const std::string& name, io::Schema schema) {
    fs::path p = dir_ / name;
    written_.emplace_back(p, schema);
    return p;
  }

  void svg(const std::string& name, const std::string& document) {
    svg::write(add(name, io::Schema::kSvg), document);
  }

  int check() const {
    int bad = 0;
    for (const auto& [path, schema] : written_) {
      for (const auto& problem : io::validate_file(path, schema)) {
        std::cerr << "self-check: " << path.string() << ": " << problem << "\n";
        ++bad;
      }
    }
    std::cout << "self-check: " << written_.size() << " files, " << bad << " problems\n";
    return bad;
  }

 private:
  fs::path dir_;
  std::vector<std::pair<fs::path, io::Schema>> written_;
};

std::string fmt(double v, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct Context {
  Settings s;
  LevelSystem sys = seven_level_example();
  Transfer transfer{};
  int workers = 1;
  std::unique_ptr<Outputs> out;
};

Context make_context(const Settings& s) {
  Context ctx;
  ctx.s = s;
  if (!s.system_path.empty()) ctx.sys = io::read_system(s.system_path);
  const int target = s.target < 0 ? ctx.sys.count() - 1 : s.target;
  ctx.transfer = {s.initial, target};
  validate_transfer(ctx.sys, ctx.transfer);
  if (s.workers < 0) throw ConfigError("workers must be >= 0");
  ctx.workers = s.workers > 0 ? s.workers : default_workers();
  ctx.out = std::make_unique<Outputs>(s.out_dir);
  io::write_json(ctx.out->add("system.json", io::Schema::kSystem), io::system_to_json(ctx.sys));
  return ctx;
}

ControlField load_field(const Context& ctx) {
  const Settings& s = ctx.s;
  if (s.zero_field) {
    if (!(s.step > 0.0) || !(s.horizon > 0.0)) throw ConfigError("step and horizon must be > 0");
    return ControlField::zero({static_cast<int>(std::lround(s.horizon / s.step)), s.step});
  }
  if (s.field_path.empty()) throw ConfigError("no control field: pass --field or --zero-field");
  return io::read_field(s.field_path);
}

void plot_field(Outputs& out, const ControlField& field) {
  svg::Series e{"E(t)", {}, field.values()};
  for (int p = 0; p < field.grid().steps; ++p) e.x.push_back(field.grid().time(p));
  out.svg("field.svg", svg::render(svg::LinePlot{"Control field", "t (fs)", "E (V/Angstrom)", {e}}));
}

// --- optimize ---------------------------------------------------------------

std::optional<ControlField> cmd_optimize(Context& ctx, int& code) {
  const Settings& s = ctx.s;
  OptimizerConfig cfg;
  cfg.transfer = ctx.transfer;
  cfg.horizon = s.horizon;
  cfg.step = s.step;
  cfg.iterations = s.iterations;
  cfg.learning_rate = s.learning_rate;
  cfg.max_field_step = s.max_field_step;
  cfg.fluence_penalty = s.penalty;
  cfg.smoothing_width = s.smoothing;
  cfg.initial = {s.field_seed, s.amplitude};
  cfg.stop_transfer = s.stop_transfer;
  cfg.max_rejections = s.max_rejections;
  if (!(s.target_transfer > 0.0 && s.target_transfer <= 1.0))
    throw ConfigError("target transfer must lie in (0, 1]");

  const OptimizationResult res = optimize(ctx.sys, cfg);
  Outputs& out = *ctx.out;
  io::write_field(out.add("field.csv", io::Schema::kField), res.field);
  io::write_optimizer_log(out.add("optimizer_log.csv", io::Schema::kOptimizerLog), res.log);

  const Propagation prop =
      propagate(ctx.sys, res.field, QuantumState::basis(ctx.sys.count(), ctx.transfer.initial));
  io::write_states(out.add("states.csv", io::Schema::kStates), prop);
  plot_field(out, res.field);

  svg::Series obj{"transfer", {}, {}};
  for (const auto& row : res.log) {
    obj.x.push_back(row.iteration);
    obj.y.push_back(row.transfer);
  }
  out.svg("convergence.svg",
          svg::render(svg::LinePlot{"Optimizer convergence", "iteration", "transferred population", {obj}}));

  const bool reached = res.transfer >= s.target_transfer;
  json summary = {{"transfer", res.transfer},
                  {"target_transfer", s.target_transfer},
                  {"iterations", res.log.empty() ? 0 : res.log.back().iteration},
                  {"stagnated", res.stagnated},
                  {"reached", reached},
                  {"initial", ctx.transfer.initial},
                  {"target", ctx.transfer.target}};
  io::write_json(out.add("optimize.json", io::Schema::kSummary), summary);

  std::cout << "optimize: transfer " << fmt(res.transfer) << " after "
            << summary["iterations"].get<int>() << " iterations"
            << (res.stagnated ? " (stagnated)" : "") << "\n";
  if (!reached) {
    std::cerr << "optimize: transfer below target " << fmt(s.target_transfer) << "\n";
    code = kNumerical;
    return std::nullopt;
  }
  return res.field;
}

// --- simulate ---------------------------------------------------------------

void plot_states(Outputs& out, const Propagation& prop, int count) {
  std::vector<svg::Series> series;
  for (int n = 0; n < count; ++n) {
    svg::Series s{"|psi_" + std::to_string(n) + "|^2", {}, {}};
    for (int p = 0; p <= prop.grid.steps; ++p) {
      s.x.push_back(prop.grid.time(p));
      s.y.push_back(prop.population(p, n));
    }
    series.push_back(std::move(s));
  }
  out.svg("states.svg", svg::render(svg::LinePlot{"Level populations", "t (fs)", "population", series}));
}

void plot_trajectories(Outputs& out, const Ensemble& ens) {
  std::vector<svg::Series> series;
  std::vector<int> wanted = {4, 6, 8, 10};
  const double t_end = ens.grid.horizon();
  for (int j : wanted) {
    for (const auto& traj : ens.trajectories) {
      if (traj.jumps() != j) continue;
      const double lift = 0.04 * static_cast<double>(series.size());
      svg::Series s{std::to_string(j) + " jumps", {0.0}, {traj.initial + lift}};
      int site = traj.initial;
      for (const auto& e : traj.events) {
        const double t = ens.grid.time(e.step) + 0.5 * ens.grid.step;
        s.x.push_back(t);
        s.y.push_back(site + lift);
        s.x.push_back(t);
        s.y.push_back(e.to + lift);
        site = e.to;
      }
      s.x.push_back(t_end);
      s.y.push_back(site + lift);
      series.push_back(std::move(s));
      break;
    }
  }
  out.svg("trajectories.svg",
          svg::render(svg::LinePlot{"Sample trajectories", "t (fs)", "site", series}));
}

int cmd_simulate(Context& ctx, const ControlField& field) {
  Settings s = ctx.s;
  const double t_f = field.grid().steps * field.grid().step;
  if (std::isnan(s.tau_max)) s.tau_max = 0.8 * t_f;
  if (std::isnan(s.window_lo)) s.window_lo = 0.7 * t_f;
  if (std::isnan(s.window_hi)) s.window_hi = 0.8 * t_f;
  if (s.n_traj < 1) throw ConfigError("n_traj must be >= 1");
  if (s.checkpoints < 1) throw ConfigError("checkpoints must be >= 1");
  if (!(s.tau_step > 0.0) || s.tau_max < 0.0) throw ConfigError("bad tau grid");
  Outputs& out = *ctx.out;
  const int count = ctx.sys.count();

  const Propagation prop =
      propagate(ctx.sys, field, QuantumState::basis(count, ctx.transfer.initial));
  io::write_states(out.add("states.csv", io::Schema::kStates), prop);
  plot_states(out, prop, count);

  EnsembleConfig ec;
  ec.n_traj = s.n_traj;
  ec.seed = s.seed;
  ec.initial = ctx.transfer.initial;
  ec.substeps = s.substeps;
  ec.workers = ctx.workers;
  const Ensemble ens = run_ensemble(ctx.sys, field, prop, ec);

  io::write_ensemble(out.add("ensemble.csv", io::Schema::kEnsemble), ens);
  io::write_json(out.add("ensemble.json", io::Schema::kEnsembleSummary),
                 io::ensemble_summary(ens, ec, ctx.transfer.target));
  const PathwayTable table = pathway_table(ens);
  io::write_pathways(out.add("pathways.csv", io::Schema::kPathways), table);
  plot_trajectories(out, ens);

  // Occupancy against |psi|^2 at uniformly spaced checkpoints.
  std::vector<int> checks;
  const int steps = prop.grid.steps;
  for (int k = 1; k <= s.checkpoints; ++k)
    checks.push_back(static_cast<int>(std::lround(static_cast<double>(k) * steps / s.checkpoints)));
  io::write_occupancy(out.add("occupancy.csv", io::Schema::kOccupancy), ens, prop, checks);
  double discrepancy = 0.0;
  for (int p : checks) {
    const auto occ = occupancy(ens, p);
    for (int n = 0; n < count; ++n)
      discrepancy = std::max(discrepancy, std::abs(occ[n] - prop.population(p, n)));
  }
  const double bound = 5.0 / std::sqrt(static_cast<double>(s.n_traj));

  // Jump-jump correlation on one transition (default: into the target).
  JumpSelector sel;
  sel.to = s.jump_to >= 0 ? s.jump_to : ctx.transfer.target;
  sel.from = s.jump_from;
  if (sel.from < 0) {
    for (int m = count - 1; m >= 0; --m)
      if (m != sel.to && ctx.sys.coupled(sel.to, m)) {
        sel.from = m;
        break;
      }
  }
  ctx.sys.check_site(sel.from);
  ctx.sys.check_site(sel.to);
  std::vector<double> taus;
  const int n_tau = static_cast<int>(std::floor(s.tau_max / s.tau_step + 1e-9));
  for (int k = -n_tau; k <= n_tau; ++k) taus.push_back(k * s.tau_step);
  const auto j2 = jump_correlation(ens, sel, taus);
  io::write_series(out.add("correlation.csv", io::Schema::kCorrelation), "tau", "J2", taus, j2);
  out.svg("correlation.svg",
          svg::render(svg::LinePlot{"Jump correlation " + std::to_string(sel.from) + "->" +
                                        std::to_string(sel.to),
                                    "tau (fs)", "J2", {{"J2", taus, j2}}}));

  // Re z for the selected transition in both directions, and its correlation with |E|.
  const auto up = rez_series(prop, sel.to, sel.from);
  const auto down = rez_series(prop, sel.from, sel.to);
  std::vector<double> t_axis;
  for (int p = 0; p < steps; ++p) t_axis.push_back(prop.grid.time(p));
  io::write_series(out.add("rez.csv", io::Schema::kRez), "t", "rez", t_axis, up);
  // Undefined (null in the summary) for an empty window or a constant series.
  const auto correlate = [&](const std::vector<double>& series) {
    try {
      return field_rate_correlation(field, series, s.window_lo, s.window_hi);
    } catch (const EmptyResultError&) {
    } catch (const NumericalError&) {
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double corr_up = correlate(up), corr_down = correlate(down);
  {
    svg::Series abs_e{"|E(t)|", {}, {}}, rz{"Re z_" + std::to_string(sel.to) + std::to_string(sel.from), {}, {}};
    for (int p = 0; p < steps; ++p) {
      const double t = prop.grid.time(p);
      if (t < s.window_lo || t > s.window_hi) continue;
      abs_e.x.push_back(t);
      abs_e.y.push_back(std::abs(field.value(p)));
      rz.x.push_back(t);
      rz.y.push_back(up[p]);
    }
    out.svg("rez.svg", svg::render(svg::LinePlot{"Field modulus and Re z", "t (fs)", "fs^-1", {abs_e, rz}}));
  }

  const JumpMoments moments = jump_moments(ens, 4);
  json summary = {{"n_traj", s.n_traj},
                  {"seed", s.seed},
                  {"transfer", prop.population(steps, ctx.transfer.target)},
                  {"occupancy_discrepancy", discrepancy},
                  {"discrepancy_bound", bound},
                  {"checkpoints", s.checkpoints},
                  {"mean_jumps", moments.mean()},
                  {"moments", moments.moments},
                  {"pathways", table.rows.size()},
                  {"correlation_transition", {sel.from, sel.to}},
                  {"field_rate_window", {s.window_lo, s.window_hi}},
                  {"field_rate_correlation_up", std::isfinite(corr_up) ? json(corr_up) : json(nullptr)},
                  {"field_rate_correlation_down", std::isfinite(corr_down) ? json(corr_down) : json(nullptr)},
                  {"sampler",
                   {{"floor_exceptions", ens.stats.floor_exceptions},
                    {"pair_instances", ens.stats.pair_instances},
                    {"overflow_columns", ens.stats.overflow_columns}}}};
  io::write_json(out.add("simulate.json", io::Schema::kSummary), summary);

  std::cout << "simulate: " << s.n_traj << " trajectories, <j> = " << fmt(moments.mean())
            << ", " << table.rows.size() << " pathways\n";
  for (std::size_t i = 0; i < std::min<std::size_t>(4, table.rows.size()); ++i) {
    const auto& row = table.rows[i];
    std::string label;
    for (int site : row.pathway.sites) label += (label.empty() ? "" : "-") + std::to_string(site);
    std::cout << "  " << label << "  P = " << fmt(row.probability, 4) << "\n";
  }
  std::cout << "  occupancy discrepancy " << fmt(discrepancy, 3) << " (bound " << fmt(bound, 3)
            << ")\n";
  if (discrepancy > bound)
    std::cerr << "simulate: occupancy discrepancy exceeds 5/sqrt(n_traj)\n";
  return kOk;
}

// --- mechanism --------------------------------------------------------------

RangeGrid range_grid(const Settings& s) {
  RangeGrid g;
  g.m_min_lo = s.min_lo;
  g.m_min_hi = s.min_hi;
  g.m_max_lo = s.max_lo;
  g.m_max_hi = s.max_hi;
  g.min_width = s.min_width;
  g.increment = s.increment;
  return g;
}

FitOptions fit_options(const Settings& s, int j_min) {
  FitOptions o;
  o.k_max = s.k_max;
  o.a_lower_bound = j_min;
  o.amplitude_space = s.amplitude_space;
  return o;
}

struct MechanismRun {
  JminEstimate jmin;
  RangeReport report;
  BestFit best;
};

// Fits every window; `best` is left for the caller so the fits can be written
// even when every window is excluded.
MechanismRun analyse(const ModulationDataset& ds, const Settings& s, int workers) {
  MechanismRun r;
  r.jmin = estimate_jmin(ds, s.head_fraction);
  RangeGrid grid = range_grid(s);
  grid.increment = ds.increment;
  r.report = range_search(ds, grid, fit_options(s, r.jmin.j_min), r.jmin.j_min, workers);
  return r;
}

svg::Heatmap window_map(const RangeReport& report, const std::string& title,
                        double (*value)(const WindowFit&)) {
  std::map<long long, std::size_t> xs, ys;
  const auto key = [](double v) { return std::llround(v * 1e6); };
  for (const auto& wf : report.fits) {
    xs.emplace(key(wf.fit.window.lo), 0);
    ys.emplace(key(wf.fit.window.hi), 0);
  }
  svg::Heatmap map{title, "M_min", "M_max", {}, {}, {}};
  for (auto& [k, idx] : xs) {
    idx = map.x.size();
    map.x.push_back(static_cast<double>(k) * 1e-6);
  }
  for (auto& [k, idx] : ys) {
    idx = map.y.size();
    map.y.push_back(static_cast<double>(k) * 1e-6);
  }
  map.values.assign(map.x.size() * map.y.size(), std::numeric_limits<double>::quiet_NaN());
  for (const auto& wf : report.fits) {
    if (wf.excluded()) continue;
    const std::size_t i = xs[key(wf.fit.window.lo)], j = ys[key(wf.fit.window.hi)];
    map.values[j * map.x.size() + i] = value(wf);
  }
  return map;
}

int cmd_mechanism(Context& ctx, const std::optional<ControlField>& field) {
  const Settings& s = ctx.s;
  Outputs& out = *ctx.out;
  if (s.k_max < 1 || s.k_max > 8) throw ConfigError("k_max must lie in 1..8");
  if (!(s.head_fraction > 0.0 && s.head_fraction <= 1.0))
    throw ConfigError("head_fraction must lie in (0, 1]");
  if (!(s.sigma >= 0.0)) throw ConfigError("sigma must be >= 0");

  ModulationDataset ds;
  std::vector<double> grid;
  if (!s.dataset_path.empty()) {
    ds = io::read_dataset(s.dataset_path);
  } else {
    if (!field) throw ConfigError("mechanism needs --field (or --dataset)");
    if (!(s.increment > 0.0) || !(s.m_hi > s.m_lo) || !(s.m_lo > 0.0))
      throw ConfigError("bad modulation grid");
    grid = modulation_grid(s.m_lo, s.m_hi, s.increment);
    ds = sweep(ctx.sys, *field, ctx.transfer, grid, s.sigma, s.seed, ctx.workers);
  }
  io::write_dataset(out.add("dataset.csv", io::Schema::kDataset), ds);

  MechanismRun run = analyse(ds, s, ctx.workers);
  io::write_jmin(out.add("jmin.csv", io::Schema::kJmin), run.jmin);
  io::write_fits(out.add("fits.csv", io::Schema::kFits), run.report);
  run.best = select_best(run.report);
  io::write_json(out.add("report.json", io::Schema::kReport),
                 io::mechanism_report(run.jmin, run.report, run.best));

  // Data with the best fit over its window.
  const FitResult& best_fit = run.report.fits[run.best.index].fit;
  svg::Series data{"data", {}, {}}, model{"best fit", {}, {}};
  for (const auto& row : ds.rows) {
    data.x.push_back(row.modulation);
    data.y.push_back(row.population);
    if (row.modulation >= best_fit.window.lo - 1e-12 && row.modulation <= best_fit.window.hi + 1e-12) {
      model.x.push_back(row.modulation);
      model.y.push_back(model_population(row.modulation, best_fit.params));
    }
  }
  out.svg("fit.svg", svg::render(svg::LinePlot{"Best fit over (" + fmt(best_fit.window.lo, 3) + ", " +
                                                   fmt(best_fit.window.hi, 3) + ")",
                                               "M", "target population", {data, model}}));
  svg::Series deriv{"d log|psi| / d log M", {}, {}};
  for (const auto& d : run.jmin.derivative) {
    deriv.x.push_back(std::log(d.modulation));
    deriv.y.push_back(d.derivative);
  }
  out.svg("jmin.svg", svg::render(svg::LinePlot{"Log-log derivative", "log M", "derivative", {deriv}}));
  out.svg("mean_jumps.svg",
          svg::render(window_map(run.report, "Fitted <j_P>",
                                 [](const WindowFit& wf) { return wf.fit.mean_jumps(); })));
  out.svg("fit_quality.svg",
          svg::render(window_map(run.report, "Fit quality log10(1/MSD)", [](const WindowFit& wf) {
            return wf.fit.msd > 0.0 ? -std::log10(wf.fit.msd) : std::numeric_limits<double>::quiet_NaN();
          })));

  std::cout << "mechanism: j_min = " << run.jmin.j_min << " (limit " << fmt(run.jmin.limit, 4)
            << ")\n"
            << "  windows " << run.report.fits.size() << ", best (" << fmt(run.best.window.lo, 3)
            << ", " << fmt(run.best.window.hi, 3) << ")\n"
            << "  <j_P> = " << fmt(run.best.mean_jumps) << ", MSD = " << fmt(run.best.msd, 4)
            << "\n";

  if (!s.sigma_scan.empty()) {
    if (!field) throw ConfigError("sigma scan needs --field");
    if (s.scan_seeds < 1) throw ConfigError("scan_seeds must be >= 1");
    if (grid.empty()) grid = modulation_grid(s.m_lo, s.m_hi, s.increment);
    const auto exact = exact_populations(ctx.sys, *field, ctx.transfer, grid, ctx.workers);
    io::CsvTable table{{"sigma", "j_min", "mean_jumps", "M_min", "M_max", "msd"}, {}};
    svg::Series curve{"<j_P>", {}, {}};
    for (double sigma : s.sigma_scan) {
      if (!(sigma >= 0.0)) throw ConfigError("sigma scan values must be >= 0");
      std::vector<double> means;
      for (int k = 0; k < s.scan_seeds; ++k) {
        const auto noisy = add_noise(grid, exact, sigma, s.seed + static_cast<std::uint64_t>(k));
        MechanismRun r;
        try {
          r = analyse(noisy, s, ctx.workers);
          r.best = select_best(r.report);
        } catch (const EmptyResultError&) {
          continue;
        }
        means.push_back(r.best.mean_jumps);
        table.rows.push_back({io::format_double(sigma), std::to_string(r.jmin.j_min),
                              io::format_double(r.best.mean_jumps),
                              io::format_double(r.best.window.lo),
                              io::format_double(r.best.window.hi), io::format_double(r.best.msd)});
      }
      if (means.empty()) continue;
      std::sort(means.begin(), means.end());
      curve.x.push_back(sigma);
      curve.y.push_back(means[means.size() / 2]);
      std::cout << "  sigma " << fmt(sigma, 3) << ": median <j_P> = " << fmt(curve.y.back()) << "\n";
    }
    io::write_csv(out.add("sigma_scan.csv", io::Schema::kSigmaScan), table);
    out.svg("sigma_scan.svg",
            svg::render(svg::LinePlot{"Fitted <j_P> against noise", "sigma", "<j_P>", {curve}}));
  }
  return kOk;
}

void add_options(CLI::App& app, Settings& s) {
  app.add_option("--system", s.system_path, "Level system JSON (default: built-in 7-level example)")
      ->check(CLI::ExistingFile);
  app.add_option("--field", s.field_path, "Control field CSV (t,E)")->check(CLI::ExistingFile);
  app.add_flag("--zero-field", s.zero_field, "Use E(t) = 0 on the --horizon/--step grid");
  app.add_option("--out", s.out_dir, "Output directory")->capture_default_str();
  app.add_option("--initial", s.initial, "Initial site")->capture_default_str();
  app.add_option("--target", s.target, "Target site (default: highest level)");
  app.add_option("--workers", s.workers,
                 "Worker threads (0: BEABLE_MECH_WORKERS, else all cores)")
      ->capture_default_str();
  app.add_flag("--self-check", s.self_check, "Validate every written file against its schema");
  app.add_option("--horizon", s.horizon, "Final time t_f, fs")->capture_default_str();
  app.add_option("--step", s.step, "Time step, fs")->capture_default_str();

  auto* opt = app.add_option_group("optimize");
  opt->add_option("--iterations", s.iterations)->capture_default_str();
  opt->add_option("--learning-rate", s.learning_rate)->capture_default_str();
  opt->add_option("--max-field-step", s.max_field_step, "V/Angstrom per iteration")
      ->capture_default_str();
  opt->add_option("--penalty", s.penalty, "Fluence penalty weight")->capture_default_str();
  opt->add_option("--smoothing", s.smoothing, "Gradient smoothing width, fs (0: off)")
      ->capture_default_str();
  opt->add_option("--field-seed", s.field_seed, "Initial-field phase seed")->capture_default_str();
  opt->add_option("--amplitude", s.amplitude, "Initial-field amplitude per transition")
      ->capture_default_str();
  opt->add_option("--stop-transfer", s.stop_transfer)->capture_default_str();
  opt->add_option("--target-transfer", s.target_transfer, "Transfer needed for exit code 0")
      ->capture_default_str();
  opt->add_option("--max-rejections", s.max_rejections)->capture_default_str();

  auto* sim = app.add_option_group("simulate");
  sim->add_option("--n-traj", s.n_traj)->capture_default_str();
  sim->add_option("--seed", s.seed, "Seed for trajectories and measurement noise")
      ->capture_default_str();
  sim->add_option("--substeps", s.substeps)->capture_default_str();
  sim->add_option("--checkpoints", s.checkpoints, "Occupancy checkpoints")->capture_default_str();
  sim->add_option("--tau-max", s.tau_max, "Largest correlation lag, fs (default: 0.8 t_f)");
  sim->add_option("--tau-step", s.tau_step)->capture_default_str();
  sim->add_option("--jump-from", s.jump_from, "Correlated transition source (default: auto)");
  sim->add_option("--jump-to", s.jump_to, "Correlated transition destination (default: target)");
  sim->add_option("--window-lo", s.window_lo, "Field-rate correlation window start, fs (default: 0.7 t_f)");
  sim->add_option("--window-hi", s.window_hi, "Field-rate correlation window end, fs (default: 0.8 t_f)");

  auto* mech = app.add_option_group("mechanism");
  mech->add_option("--dataset", s.dataset_path, "Measured dataset CSV (M,population,sigma)")
      ->check(CLI::ExistingFile);
  mech->add_option("--sigma", s.sigma, "Relative measurement noise")->capture_default_str();
  mech->add_option("--increment", s.increment, "Modulation increment")->capture_default_str();
  mech->add_option("--m-lo", s.m_lo)->capture_default_str();
  mech->add_option("--m-hi", s.m_hi)->capture_default_str();
  mech->add_option("--k-max", s.k_max)->capture_default_str();
  mech->add_option("--head-fraction", s.head_fraction)->capture_default_str();
  mech->add_option("--min-lo", s.min_lo)->capture_default_str();
  mech->add_option("--min-hi", s.min_hi)->capture_default_str();
  mech->add_option("--max-lo", s.max_lo)->capture_default_str();
  mech->add_option("--max-hi", s.max_hi)->capture_default_str();
  mech->add_option("--min-width", s.min_width)->capture_default_str();
  mech->add_flag("--amplitude-space", s.amplitude_space, "Fit |psi| instead of population");
  mech->add_option("--sigma-scan", s.sigma_scan, "Noise levels for a <j_P>-vs-sigma scan");
  mech->add_option("--scan-seeds", s.scan_seeds, "Seeds per scanned noise level")
      ->capture_default_str();
}

int run(const std::string& command, Settings& s) {
  Context ctx = make_context(s);
  int code = kOk;
  if (command == "optimize") {
    cmd_optimize(ctx, code);
  } else if (command == "simulate") {
    code = cmd_simulate(ctx, load_field(ctx));
  } else if (command == "mechanism") {
    std::optional<ControlField> field;
    if (s.dataset_path.empty() || !s.sigma_scan.empty()) field = load_field(ctx);
    code = cmd_mechanism(ctx, field);
  } else {
    std::optional<ControlField> field;
    if (s.field_path.empty() && !s.zero_field)
      field = cmd_optimize(ctx, code);
    else
      field = load_field(ctx);
    if (code == kOk) code = cmd_simulate(ctx, *field);
    if (code == kOk) code = cmd_mechanism(ctx, field);
  }
  if (s.self_check && ctx.out->check() > 0 && code == kOk) code = kNumerical;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beable jump mechanisms: field optimization, trajectory ensembles, mechanism fits"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON configuration file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();

  Settings s;
  add_options(app, s);
  std::string command;
  for (const char* name : {"optimize", "simulate", "mechanism", "all"}) {
    const std::string help = std::string(name) == "optimize"    ? "Optimize a population-transfer field"
                             : std::string(name) == "simulate"  ? "Propagate and sample a beable ensemble"
                             : std::string(name) == "mechanism" ? "Sweep field modulation and fit <j_P>"
                                                                : "Optimize, simulate and fit in sequence";
    app.add_subcommand(name, help)->callback([&command, name] { command = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    return run(command, s);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const EmptyResultError& e) {
    std::cerr << "empty result: " << e.what() << "\n";
    return kEmpty;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  }
}
