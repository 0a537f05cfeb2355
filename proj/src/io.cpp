#include "beable/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "beable/errors.hpp"

namespace beable::io {

std::string format_double(double value) {
  if (!std::isfinite(value)) throw NumericalError("cannot write a non-finite value");
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(n));
}

namespace {

std::string str(double v) { return format_double(v); }
std::string str(long long v) { return std::to_string(v); }
std::string str(int v) { return std::to_string(v); }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

std::string site_label(int n) { return std::to_string(n); }

std::string pathway_label(const Pathway& p) {
  std::string s;
  for (std::size_t i = 0; i < p.sites.size(); ++i) {
    if (i) s += '-';
    s += std::to_string(p.sites[i]);
  }
  return s;
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ConfigError("missing CSV column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  CsvTable table;
  std::string line;
  bool have_header = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto cells = split(line);
    for (auto& c : cells) c = trim(c);
    if (!have_header) {
      table.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != table.header.size())
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(table.header.size()) + " columns");
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ConfigError(path.string() + ": missing header row");
  return table;
}

void write_csv(const fs::path& path, const CsvTable& table) {
  std::ofstream out = open_out(path);
  auto row_out = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  row_out(table.header);
  for (const auto& r : table.rows) row_out(r);
  if (!out) throw ConfigError("failed writing " + path.string());
}

double parse_double(const std::string& cell, const std::string& what) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw ConfigError("bad number '" + cell + "' for " + what);
  return v;
}

long long parse_integer(const std::string& cell, const std::string& what) {
  long long v = 0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad integer '" + cell + "' for " + what);
  return v;
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw ConfigError("failed writing " + path.string());
}

LevelSystem system_from_json(const json& doc) {
  try {
    const int count = doc.at("count").get<int>();
    auto omega = doc.at("omega").get<std::vector<double>>();
    const auto rows = doc.at("mu").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(omega.size()) != count || static_cast<int>(rows.size()) != count)
      throw ConfigError("system: omega and mu must have 'count' entries");
    Eigen::MatrixXd mu(count, count);
    for (int n = 0; n < count; ++n) {
      if (static_cast<int>(rows[n].size()) != count)
        throw ConfigError("system: mu row " + std::to_string(n) + " has the wrong length");
      for (int m = 0; m < count; ++m) mu(n, m) = rows[n][m];
    }
    return LevelSystem(std::move(omega), std::move(mu));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("system: ") + e.what());
  }
}

json system_to_json(const LevelSystem& sys) {
  json mu = json::array();
  for (int n = 0; n < sys.count(); ++n) {
    json row = json::array();
    for (int m = 0; m < sys.count(); ++m) row.push_back(sys.mu()(n, m));
    mu.push_back(std::move(row));
  }
  return {{"count", sys.count()}, {"omega", sys.omega()}, {"mu", std::move(mu)}};
}

LevelSystem read_system(const fs::path& path) { return system_from_json(read_json(path)); }

ControlField read_field(const fs::path& path) {
  const CsvTable table = read_csv(path);
  const std::size_t ct = table.column("t");
  const std::size_t ce = table.column("E");
  if (table.rows.size() < 2) throw ConfigError(path.string() + ": need at least two samples");
  std::vector<double> t, e;
  for (const auto& r : table.rows) {
    t.push_back(parse_double(r[ct], "t"));
    e.push_back(parse_double(r[ce], "E"));
  }
  const double step = t[1] - t[0];
  if (!(step > 0.0) || std::abs(t[0]) > 1e-12 * step)
    throw ConfigError(path.string() + ": grid must start at t = 0 and increase");
  for (std::size_t p = 0; p < t.size(); ++p)
    if (std::abs(t[p] - static_cast<double>(p) * step) > 1e-9 * step * static_cast<double>(p + 1))
      throw ConfigError(path.string() + ": time grid is not uniform at row " +
                        std::to_string(p + 1));
  return ControlField::sampled(step, std::move(e));
}

void write_field(const fs::path& path, const ControlField& field) {
  CsvTable table{{"t", "E"}, {}};
  const auto values = field.values();
  for (int p = 0; p < field.grid().steps; ++p)
    table.rows.push_back({str(field.grid().time(p)), str(values[p])});
  write_csv(path, table);
}

void write_optimizer_log(const fs::path& path, const std::vector<OptimizerLogRow>& log) {
  CsvTable table{{"iteration", "objective", "transfer", "fluence", "step_size"}, {}};
  for (const auto& r : log)
    table.rows.push_back(
        {str(r.iteration), str(r.objective), str(r.transfer), str(r.fluence), str(r.step_size)});
  write_csv(path, table);
}

void write_states(const fs::path& path, const Propagation& prop) {
  CsvTable table{{"t"}, {}};
  const int n_lev = static_cast<int>(prop.states.front().size());
  for (int n = 0; n < n_lev; ++n) table.header.push_back("pop" + site_label(n));
  for (std::size_t p = 0; p < prop.states.size(); ++p) {
    std::vector<std::string> row{str(prop.grid.time(static_cast<int>(p)))};
    for (int n = 0; n < n_lev; ++n) row.push_back(str(std::norm(prop.states[p][n])));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

void write_ensemble(const fs::path& csv_path, const Ensemble& ens) {
  std::ofstream out = open_out(csv_path);
  out << "traj_id,step,from,to\n";
  for (std::size_t i = 0; i < ens.trajectories.size(); ++i)
    for (const auto& e : ens.trajectories[i].events)
      out << i << ',' << e.step << ',' << e.from << ',' << e.to << '\n';
  if (!out) throw ConfigError("failed writing " + csv_path.string());
}

json ensemble_summary(const Ensemble& ens, const EnsembleConfig& cfg, int target) {
  json initial;
  if (const int* site = std::get_if<int>(&cfg.initial)) {
    initial = *site;
  } else {
    initial = std::get<std::vector<double>>(cfg.initial);
  }
  json sites = json::array();
  std::vector<std::int64_t> finals;
  for (const auto& t : ens.trajectories) {
    sites.push_back(t.initial);
    if (static_cast<std::size_t>(t.final) >= finals.size()) finals.resize(t.final + 1, 0);
    ++finals[t.final];
  }
  json doc = {
      {"n_traj", ens.size()},
      {"seed", cfg.seed},
      {"steps", ens.grid.steps},
      {"step", ens.grid.step},
      {"substeps", cfg.substeps},
      {"floor", cfg.floor},
      {"initial", initial},
      {"target", target},
      {"final_counts", finals},
      {"stats",
       {{"floor_exceptions", ens.stats.floor_exceptions},
        {"pair_instances", ens.stats.pair_instances},
        {"overflow_columns", ens.stats.overflow_columns}}},
      {"initial_sites", std::move(sites)},
  };
  try {
    const JumpMoments mom = jump_moments(ens, 4, target);
    doc["moments"] = {{"k_max", 4},
                      {"values", mom.moments},
                      {"j_min", mom.j_min},
                      {"j_max", mom.j_max},
                      {"count", mom.count}};
  } catch (const EmptyResultError&) {
    doc["moments"] = nullptr;
  }
  return doc;
}

Ensemble read_ensemble(const fs::path& csv_path, const json& summary) {
  Ensemble ens;
  try {
    ens.grid = {summary.at("steps").get<int>(), summary.at("step").get<double>()};
    const auto sites = summary.at("initial_sites").get<std::vector<int>>();
    if (static_cast<int>(sites.size()) != summary.at("n_traj").get<int>())
      throw ConfigError("ensemble summary: initial_sites does not match n_traj");
    ens.trajectories.resize(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i)
      ens.trajectories[i].initial = ens.trajectories[i].final = sites[i];
    const auto& st = summary.at("stats");
    ens.stats = {st.at("floor_exceptions").get<std::int64_t>(),
                 st.at("pair_instances").get<std::int64_t>(),
                 st.at("overflow_columns").get<std::int64_t>()};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ensemble summary: ") + e.what());
  }
  const CsvTable table = read_csv(csv_path);
  const std::size_t ci = table.column("traj_id"), cs = table.column("step"),
                    cf = table.column("from"), ct = table.column("to");
  for (const auto& r : table.rows) {
    const long long id = parse_integer(r[ci], "traj_id");
    if (id < 0 || id >= static_cast<long long>(ens.trajectories.size()))
      throw ConfigError("ensemble: traj_id out of range");
    Trajectory& traj = ens.trajectories[static_cast<std::size_t>(id)];
    JumpEvent e{static_cast<int>(parse_integer(r[cs], "step")),
                static_cast<int>(parse_integer(r[cf], "from")),
                static_cast<int>(parse_integer(r[ct], "to"))};
    if (e.from != traj.final) throw ConfigError("ensemble: jump does not start at current site");
    traj.events.push_back(e);
    traj.final = e.to;
  }
  return ens;
}

void write_pathways(const fs::path& path, const PathwayTable& table) {
  CsvTable out{{"rank", "pathway", "jumps", "count", "probability", "std_error"}, {}};
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    out.rows.push_back({str(static_cast<long long>(i + 1)), pathway_label(r.pathway),
                        str(r.pathway.jumps()), str(static_cast<long long>(r.count)),
                        str(r.probability), str(r.std_error)});
  }
  write_csv(path, out);
}

void write_occupancy(const fs::path& path, const Ensemble& ens, const Propagation& prop,
                     const std::vector<int>& steps) {
  const int n_lev = static_cast<int>(prop.states.front().size());
  CsvTable table{{"t"}, {}};
  for (int n = 0; n < n_lev; ++n) table.header.push_back("empirical" + site_label(n));
  for (int n = 0; n < n_lev; ++n) table.header.push_back("pop" + site_label(n));
  const auto occ = occupancy_series(ens, steps);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::vector<std::string> row{str(prop.grid.time(steps[i]))};
    for (int n = 0; n < n_lev; ++n) row.push_back(str(occ[i][n]));
    for (int n = 0; n < n_lev; ++n) row.push_back(str(std::norm(prop.states[steps[i]][n])));
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

void write_series(const fs::path& path, const std::string& x_name, const std::string& y_name,
                  const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ConfigError("series columns differ in length");
  CsvTable table{{x_name, y_name}, {}};
  for (std::size_t i = 0; i < x.size(); ++i) table.rows.push_back({str(x[i]), str(y[i])});
  write_csv(path, table);
}

ModulationDataset read_dataset(const fs::path& path) {
  const CsvTable table = read_csv(path);
  const std::size_t cm = table.column("M"), cp = table.column("population"),
                    cs = table.column("sigma");
  ModulationDataset ds;
  for (const auto& r : table.rows)
    ds.rows.push_back({parse_double(r[cm], "M"), parse_double(r[cp], "population"),
                       parse_double(r[cs], "sigma")});
  if (ds.rows.size() >= 2) ds.increment = ds.rows[1].modulation - ds.rows[0].modulation;
  ds.validate();
  return ds;
}

void write_dataset(const fs::path& path, const ModulationDataset& ds) {
  CsvTable table{{"M", "population", "sigma"}, {}};
  for (const auto& r : ds.rows)
    table.rows.push_back({str(r.modulation), str(r.population), str(r.sigma)});
  write_csv(path, table);
}

void write_jmin(const fs::path& path, const JminEstimate& est) {
  CsvTable table{{"M", "derivative", "weight"}, {}};
  for (const auto& d : est.derivative)
    table.rows.push_back({str(d.modulation), str(d.derivative), str(d.weight)});
  write_csv(path, table);
}

void write_fits(const fs::path& path, const RangeReport& report) {
  CsvTable table{{"M_min", "M_max", "mean_jumps"}, {}};
  for (int k = 2; k <= report.k_max; ++k) table.header.push_back("moment" + std::to_string(k));
  for (const char* h : {"a", "amplitude", "msd", "converged", "moment_flag", "below_jmin",
                        "pathological"})
    table.header.emplace_back(h);
  for (const auto& wf : report.fits) {
    const auto& f = wf.fit;
    std::vector<std::string> row{str(f.window.lo), str(f.window.hi)};
    for (double m : f.params.moments) row.push_back(str(m));
    row.push_back(str(f.params.a));
    row.push_back(str(f.params.amplitude));
    row.push_back(str(f.msd));
    for (bool b : {f.converged, f.moment_flag, wf.below_jmin, wf.pathological})
      row.emplace_back(b ? "1" : "0");
    table.rows.push_back(std::move(row));
  }
  write_csv(path, table);
}

json fit_to_json(const FitResult& fit) {
  return {{"window", {fit.window.lo, fit.window.hi}},
          {"points", fit.points},
          {"moments", fit.params.moments},
          {"a", fit.params.a},
          {"amplitude", fit.params.amplitude},
          {"msd", fit.msd},
          {"converged", fit.converged},
          {"moment_flag", fit.moment_flag}};
}

json mechanism_report(const JminEstimate& jmin, const RangeReport& report,
                      const BestFit& best) {
  std::int64_t below = 0, pathological = 0, admissible = 0;
  for (const auto& wf : report.fits) {
    below += wf.below_jmin;
    pathological += wf.pathological;
    admissible += !wf.excluded();
  }
  json m_min = json::array(), m_max = json::array(), mean = json::array(), msd = json::array(),
       excluded = json::array();
  for (const auto& wf : report.fits) {
    m_min.push_back(wf.fit.window.lo);
    m_max.push_back(wf.fit.window.hi);
    mean.push_back(wf.fit.mean_jumps());
    msd.push_back(std::isfinite(wf.fit.msd) ? json(wf.fit.msd) : json(nullptr));
    excluded.push_back(wf.excluded());
  }
  return {{"j_min",
           {{"value", jmin.j_min},
            {"limit", jmin.limit},
            {"slope", jmin.slope},
            {"head_points", jmin.head_points}}},
          {"k_max", report.k_max},
          {"windows",
           {{"total", report.fits.size()},
            {"below_jmin", below},
            {"pathological", pathological},
            {"admissible", admissible}}},
          {"best",
           {{"mean_jumps", best.mean_jumps},
            {"window", {best.window.lo, best.window.hi}},
            {"msd", best.msd},
            {"fit", fit_to_json(report.fits.at(best.index).fit)}}},
          {"maps",
           {{"M_min", m_min},
            {"M_max", m_max},
            {"mean_jumps", mean},
            {"msd", msd},
            {"excluded", excluded}}}};
}

namespace {

void expect_header(const CsvTable& t, const std::vector<std::string>& want,
                   std::vector<std::string>& problems) {
  if (t.header.size() < want.size()) {
    problems.push_back("header has too few columns");
    return;
  }
  for (std::size_t i = 0; i < want.size(); ++i)
    if (t.header[i] != want[i]) problems.push_back("column " + std::to_string(i) + " should be '" + want[i] + "'");
}

void expect_numeric(const CsvTable& t, std::size_t first_col, std::vector<std::string>& problems) {
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = first_col; c < t.rows[r].size(); ++c) {
      try {
        parse_double(t.rows[r][c], t.header[c]);
      } catch (const ConfigError& e) {
        problems.push_back("row " + std::to_string(r + 1) + ": " + e.what());
        return;
      }
    }
}

void expect_keys(const json& doc, const std::vector<std::string>& keys,
                 std::vector<std::string>& problems) {
  for (const auto& k : keys)
    if (!doc.contains(k)) problems.push_back("missing key '" + k + "'");
}

void expect_prefixes(const CsvTable& t, const std::vector<std::string>& prefixes,
                     std::vector<std::string>& problems) {
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    bool ok = false;
    for (const auto& p : prefixes) ok = ok || t.header[c].rfind(p, 0) == 0;
    if (!ok) problems.push_back("unexpected column '" + t.header[c] + "'");
  }
}

}  // namespace

std::vector<std::string> validate_file(const fs::path& path, Schema schema) {
  std::vector<std::string> problems;
  try {
    switch (schema) {
      case Schema::kSystem:
        system_from_json(read_json(path));
        break;
      case Schema::kField:
        read_field(path);
        break;
      case Schema::kOptimizerLog: {
        const auto t = read_csv(path);
        expect_header(t, {"iteration", "objective", "transfer", "fluence", "step_size"}, problems);
        expect_numeric(t, 0, problems);
        break;
      }
      case Schema::kStates: {
        const auto t = read_csv(path);
        expect_header(t, {"t"}, problems);
        expect_prefixes(t, {"pop"}, problems);
        expect_numeric(t, 0, problems);
        break;
      }
      case Schema::kEnsemble: {
        const auto t = read_csv(path);
        expect_header(t, {"traj_id", "step", "from", "to"}, problems);
        if (t.header.size() != 4) problems.emplace_back("expected exactly four columns");
        for (const auto& r : t.rows)
          for (const auto& c : r) parse_integer(c, "ensemble cell");
        break;
      }
      case Schema::kEnsembleSummary: {
        const json doc = read_json(path);
        expect_keys(doc, {"n_traj", "seed", "steps", "step", "initial", "target", "stats",
                          "initial_sites", "moments", "final_counts"},
                    problems);
        break;
      }
      case Schema::kPathways: {
        const auto t = read_csv(path);
        expect_header(t, {"rank", "pathway", "jumps", "count", "probability", "std_error"},
                      problems);
        for (const auto& r : t.rows) {
          parse_integer(r[0], "rank");
          parse_integer(r[2], "jumps");
          parse_integer(r[3], "count");
          parse_double(r[4], "probability");
          parse_double(r[5], "std_error");
        }
        break;
      }
      case Schema::kOccupancy: {
        const auto t = read_csv(path);
        expect_header(t, {"t"}, problems);
        expect_prefixes(t, {"empirical", "pop"}, problems);
        expect_numeric(t, 0, problems);
        break;
      }
      case Schema::kCorrelation: {
        const auto t = read_csv(path);
        expect_header(t, {"tau", "J2"}, problems);
        expect_numeric(t, 0, problems);
        break;
      }
      case Schema::kRez: {
        const auto t = read_csv(path);
        expect_header(t, {"t", "rez"}, problems);
        expect_numeric(t, 0, problems);
        break;
      }
      case Schema::kDataset:
        read_dataset(path);
        break;
      case Schema::kJmin: {
        const auto t = read_csv(path);
        expect_header(t, {"M", "derivative", "weight"}, problems);
        expect_numeric(t, 0, problems);
        break;
      }
      case Schema::kFits: {
        const auto t = read_csv(path);
        expect_header(t, {"M_min", "M_max", "mean_jumps"}, problems);
        expect_numeric(t, 0, problems);
        break;
      }
      case Schema::kReport: {
        const json doc = read_json(path);
        expect_keys(doc, {"j_min", "k_max", "windows", "best", "maps"}, problems);
        if (doc.contains("best")) expect_keys(doc["best"], {"mean_jumps", "window", "msd", "fit"}, problems);
        break;
      }
      case Schema::kSigmaScan: {
        const auto t = read_csv(path);
        expect_header(t, {"sigma", "j_min", "mean_jumps", "M_min", "M_max", "msd"}, problems);
        expect_numeric(t, 0, problems);
        break;
      }
      case Schema::kSummary: {
        const json doc = read_json(path);
        if (!doc.is_object() || doc.empty()) problems.emplace_back("expected a non-empty object");
        break;
      }
      case Schema::kSvg: {
        std::ifstream in(path, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string text = buf.str();
        if (text.find("<svg") == std::string::npos || text.find("</svg>") == std::string::npos)
          problems.emplace_back("not an SVG document");
        break;
      }
    }
  } catch (const std::exception& e) {
    problems.emplace_back(e.what());
  }
  return problems;
}

}  // namespace beable::io
