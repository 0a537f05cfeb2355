#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "beable/analysis.hpp"
#include "beable/control_field.hpp"
#include "beable/level_system.hpp"
#include "beable/mechanism.hpp"
#include "beable/optimizer.hpp"
#include "beable/propagator.hpp"
#include "beable/sampler.hpp"

namespace beable::io {

using nlohmann::json;
namespace fs = std::filesystem;

/// 17 significant digits, so the text reads back to the same double.
std::string format_double(double value);

/// Simple comma-separated table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws ConfigError when absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(const fs::path& path);
void write_csv(const fs::path& path, const CsvTable& table);
/// Throws ConfigError when the cell is not a complete finite number.
double parse_double(const std::string& cell, const std::string& what);
long long parse_integer(const std::string& cell, const std::string& what);

json read_json(const fs::path& path);
void write_json(const fs::path& path, const json& doc);

// system.json: {"count": N, "omega": [...], "mu": [[...], ...]}
LevelSystem system_from_json(const json& doc);
json system_to_json(const LevelSystem& sys);
LevelSystem read_system(const fs::path& path);

// field.csv: t,E on a uniform grid starting at t = 0.
ControlField read_field(const fs::path& path);
void write_field(const fs::path& path, const ControlField& field);

void write_optimizer_log(const fs::path& path, const std::vector<OptimizerLogRow>& log);

/// t followed by |psi_n|^2 for every site.
void write_states(const fs::path& path, const Propagation& prop);

// ensemble.csv: traj_id,step,from,to (one row per jump event), plus a JSON
// summary holding the run metadata and each trajectory's initial site.
void write_ensemble(const fs::path& csv_path, const Ensemble& ens);
json ensemble_summary(const Ensemble& ens, const EnsembleConfig& cfg, int target);
Ensemble read_ensemble(const fs::path& csv_path, const json& summary);

void write_pathways(const fs::path& path, const PathwayTable& table);
/// t, then empirical P_n and |psi_n|^2 for every site.
void write_occupancy(const fs::path& path, const Ensemble& ens, const Propagation& prop,
                     const std::vector<int>& steps);
void write_series(const fs::path& path, const std::string& x_name, const std::string& y_name,
                  const std::vector<double>& x, const std::vector<double>& y);

// dataset.csv: M,population,sigma
ModulationDataset read_dataset(const fs::path& path);
void write_dataset(const fs::path& path, const ModulationDataset& ds);

void write_jmin(const fs::path& path, const JminEstimate& est);
/// One row per fit window with its moments, a, MSD and exclusion flags.
void write_fits(const fs::path& path, const RangeReport& report);

json fit_to_json(const FitResult& fit);
json mechanism_report(const JminEstimate& jmin, const RangeReport& report,
                      const BestFit& best);

/// Schemas known to the self-check.
enum class Schema {
  kSystem,
  kField,
  kOptimizerLog,
  kStates,
  kEnsemble,
  kEnsembleSummary,
  kPathways,
  kOccupancy,
  kCorrelation,
  kRez,
  kDataset,
  kJmin,
  kFits,
  kReport,
  kSigmaScan,
  kSummary,  // any non-empty JSON object
  kSvg,
};

/// Checks one written file against its schema; returns problems found (empty when
/// valid).
std::vector<std::string> validate_file(const fs::path& path, Schema schema);

}  // namespace beable::io
