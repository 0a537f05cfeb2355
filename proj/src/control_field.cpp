#include "beable/control_field.hpp"

#include <cmath>
#include <string>

#include "beable/errors.hpp"

namespace beable {

ControlField::ControlField(TimeGrid grid, std::vector<Carrier> carriers, double modulation)
    : grid_(grid), carriers_(std::move(carriers)), modulation_(modulation) {
  if (grid_.steps < 1) throw ConfigError("field grid needs at least one step");
  if (!(grid_.step > 0.0) || !std::isfinite(grid_.step))
    throw ConfigError("field step must be positive");
  if (!std::isfinite(modulation_) || modulation_ < 0.0)
    throw ConfigError("modulation must be finite and non-negative");
  for (const auto& c : carriers_) {
    if (static_cast<int>(c.amplitude.size()) != grid_.steps ||
        static_cast<int>(c.phase.size()) != grid_.steps)
      throw ConfigError("carrier envelopes must have " + std::to_string(grid_.steps) +
                        " samples");
    if (!std::isfinite(c.frequency) || !std::isfinite(c.weight))
      throw ConfigError("carrier frequency and weight must be finite");
  }
}

ControlField ControlField::sampled(double step, std::vector<double> samples) {
  const int n = static_cast<int>(samples.size());
  Carrier c;
  c.amplitude = std::move(samples);
  c.phase.assign(n, 0.0);
  return ControlField(TimeGrid{n, step}, {std::move(c)});
}

ControlField ControlField::zero(TimeGrid grid) {
  return sampled(grid.step, std::vector<double>(grid.steps, 0.0));
}

double ControlField::value(int p) const {
  const double t = grid_.time(p);
  double e = 0.0;
  for (const auto& c : carriers_)
    e += c.weight * c.amplitude[p] * std::cos(c.phase[p] + c.frequency * t);
  return modulation_ * e;
}

std::vector<double> ControlField::values() const {
  std::vector<double> out(grid_.steps);
  for (int p = 0; p < grid_.steps; ++p) out[p] = value(p);
  return out;
}

bool ControlField::is_raw() const {
  if (carriers_.size() != 1) return false;
  const auto& c = carriers_.front();
  if (c.frequency != 0.0 || c.weight != 1.0) return false;
  for (double phi : c.phase)
    if (phi != 0.0) return false;
  return true;
}

std::span<const double> ControlField::raw_samples() const {
  if (!is_raw()) throw std::logic_error("field is not a raw sampled field");
  return carriers_.front().amplitude;
}

ControlField ControlField::with_modulation(double m) const {
  ControlField out = *this;
  if (!std::isfinite(m) || m < 0.0) throw ConfigError("modulation must be non-negative");
  out.modulation_ = m;
  return out;
}

ControlField ControlField::refined(int factor) const {
  if (factor < 1) throw ConfigError("refinement factor must be >= 1");
  std::vector<Carrier> fine;
  fine.reserve(carriers_.size());
  for (const auto& c : carriers_) {
    Carrier f{{}, {}, c.frequency, c.weight};
    f.amplitude.reserve(grid_.steps * factor);
    f.phase.reserve(grid_.steps * factor);
    for (int p = 0; p < grid_.steps; ++p) {
      for (int k = 0; k < factor; ++k) {
        f.amplitude.push_back(c.amplitude[p]);
        f.phase.push_back(c.phase[p]);
      }
    }
    fine.push_back(std::move(f));
  }
  return ControlField(TimeGrid{grid_.steps * factor, grid_.step / factor}, std::move(fine),
                      modulation_);
}

ControlField ControlField::decimated(int factor) const {
  if (factor < 1 || grid_.steps % factor != 0)
    throw ConfigError("decimation factor must divide the step count");
  const auto samples = raw_samples();
  std::vector<double> coarse;
  for (int p = 0; p < grid_.steps; p += factor) coarse.push_back(samples[p]);
  return sampled(grid_.step * factor, std::move(coarse)).with_modulation(modulation_);
}

}  // namespace beable
