#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "otdro/experiments.hpp"
#include "otdro/model.hpp"

namespace otdro {

/// Problem configuration. Keys may be written flat ("step.alpha") or nested
/// ({"step": {"alpha": ...}}); relative paths resolve against the directory
/// of the configuration file.
class Config {
 public:
  /// Throws ConfigError when the file is missing, is not valid JSON, or
  /// contains unknown top-level keys.
  static Config load(const std::string& path);
  static Config from_json(nlohmann::json doc, std::string base_dir = ".");

  const nlohmann::json& doc() const { return doc_; }
  /// nullptr when the key is absent or null.
  const nlohmann::json* find(const std::string& key) const;
  bool has(const std::string& key) const { return find(key) != nullptr; }

  double number(const std::string& key, double fallback) const;
  std::optional<double> number(const std::string& key) const;
  double required_number(const std::string& key) const;
  long integer(const std::string& key, long fallback) const;
  bool boolean(const std::string& key, bool fallback) const;
  std::string string(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const;
  std::string resolve_path(const std::string& path) const;

 private:
  nlohmann::json doc_;
  std::string base_dir_;
};

/// Data from "data" ({"csv", "features", "label"}) or "synthetic"
/// ({"kind": "classification" | "regression", "n", "d", "separation", "noise", "seed"}).
SampleSet build_data(const Config& config);
CostField build_cost(const Config& config, const SampleSet& data);
LossSpec build_loss(const Config& config, const SampleSet& data);
DroProblem build_problem(const Config& config);
SupervisedSetup build_setup(const Config& config);
/// "beta" as a vector of the data dimension, when present.
std::optional<Vector> build_beta(const Config& config, int dim);
FrontierSetup build_frontier_setup(const Config& config);
/// Return and volatility series from "frontier.returns_csv" / "frontier.vol_csv",
/// or the synthetic generator under "frontier.synthetic".
MarketData build_market(const Config& config);

}  // namespace otdro
