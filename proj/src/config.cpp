#include "otdro/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "otdro/error.hpp"

namespace otdro {

namespace {

using nlohmann::json;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "delta",     "r_beta",      "loss",       "cost",          "step",         "eta",
      "seed",      "iterations",  "batch_size", "trace_points",  "geometric_checkpoints",
      "method",    "data",        "synthetic",  "L_lower",       "L_upper",      "nondegeneracy",
      "beta",      "delta_grid",  "frontier",   "timing",        "sphere_samples", "refine_steps",
      "cuts",      "eval_cuts",   "check_seed", "worstcase"};
  return keys;
}

const json* find_in(const json& node, const std::string& key) {
  if (!node.is_object()) return nullptr;
  const auto it = node.find(key);
  if (it != node.end()) return it->is_null() ? nullptr : &*it;
  const auto dot = key.find('.');
  if (dot == std::string::npos) return nullptr;
  const auto head = node.find(key.substr(0, dot));
  if (head == node.end()) return nullptr;
  return find_in(*head, key.substr(dot + 1));
}

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw ConfigError("config key '" + key + "' must be " + expected);
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  const auto parent = std::filesystem::path(path).parent_path();
  return from_json(std::move(doc), parent.empty() ? "." : parent.string());
}

Config Config::from_json(json doc, std::string base_dir) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const std::string head = key.substr(0, key.find('.'));
    if (known_keys().count(head) == 0) throw ConfigError("unknown config key '" + key + "'");
  }
  Config c;
  c.doc_ = std::move(doc);
  c.base_dir_ = std::move(base_dir);
  return c;
}

const json* Config::find(const std::string& key) const { return find_in(doc_, key); }

std::optional<double> Config::number(const std::string& key) const {
  const json* v = find(key);
  if (!v) return std::nullopt;
  if (!v->is_number()) type_error(key, "a number");
  return v->get<double>();
}

double Config::number(const std::string& key, double fallback) const {
  return number(key).value_or(fallback);
}

double Config::required_number(const std::string& key) const {
  const auto v = number(key);
  if (!v) throw ConfigError("config key '" + key + "' is required");
  return *v;
}

long Config::integer(const std::string& key, long fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_number_integer()) type_error(key, "an integer");
  return v->get<long>();
}

bool Config::boolean(const std::string& key, bool fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_boolean()) type_error(key, "true or false");
  return v->get<bool>();
}

std::string Config::string(const std::string& key, const std::string& fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_string()) type_error(key, "a string");
  return v->get<std::string>();
}

std::vector<double> Config::numbers(const std::string& key, const std::vector<double>& fallback) const {
  const json* v = find(key);
  if (!v) return fallback;
  if (!v->is_array()) type_error(key, "an array of numbers");
  std::vector<double> out;
  for (const auto& e : *v) {
    if (!e.is_number()) type_error(key, "an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

std::string Config::resolve_path(const std::string& path) const {
  const std::filesystem::path p(path);
  if (p.is_absolute()) return p.string();
  return (std::filesystem::path(base_dir_) / p).string();
}

SampleSet build_data(const Config& config) {
  if (config.has("data") && config.has("synthetic")) {
    throw ConfigError("config has both 'data' and 'synthetic'; pick one");
  }
  if (config.has("data")) {
    const std::string csv = config.string("data.csv", "");
    if (csv.empty()) throw ConfigError("config key 'data.csv' is required");
    CsvSchema schema;
    if (const json* f = config.find("data.features")) {
      if (!f->is_array()) throw ConfigError("config key 'data.features' must be an array of column names");
      for (const auto& name : *f) {
        if (!name.is_string()) throw ConfigError("config key 'data.features' must be an array of column names");
        schema.features.push_back(name.get<std::string>());
      }
    }
    if (config.has("data.label")) schema.label = config.string("data.label", "");
    return load_csv(config.resolve_path(csv), schema);
  }
  if (!config.has("synthetic")) throw ConfigError("config needs 'data' or 'synthetic'");
  const std::string kind = config.string("synthetic.kind", "classification");
  const long n = config.integer("synthetic.n", 64);
  const long d = config.integer("synthetic.d", 2);
  const auto seed = static_cast<std::uint64_t>(config.integer("synthetic.seed", config.integer("seed", 1)));
  if (kind == "classification") {
    return generate_classification(static_cast<int>(n), static_cast<int>(d), config.number("synthetic.separation", 1.0),
                                   config.number("synthetic.noise", 1.0), seed);
  }
  if (kind == "regression") {
    return generate_regression(static_cast<int>(n), static_cast<int>(d), config.number("synthetic.noise", 0.5), seed);
  }
  throw ConfigError("unknown synthetic kind '" + kind + "' (expected classification or regression)");
}

CostField build_cost(const Config& config, const SampleSet& data) {
  const json* node = config.find("cost");
  if (!node) return CostField::identity(data.dim());
  std::string kind;
  if (node->is_string()) {
    kind = node->get<std::string>();
  } else if (node->is_object()) {
    kind = config.string("cost.kind", "");
  } else {
    throw ConfigError("config key 'cost' must be a string or an object");
  }
  auto matrix_of = [&](const std::string& key) {
    const json* m = config.find(key);
    if (!m || !m->is_array() || m->empty()) throw ConfigError("config key '" + key + "' must be a square matrix");
    const auto rows = static_cast<Eigen::Index>(m->size());
    Matrix out(rows, rows);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = (*m)[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows) {
        throw ConfigError("config key '" + key + "' must be a square matrix");
      }
      for (Eigen::Index c = 0; c < rows; ++c) {
        if (!row[static_cast<std::size_t>(c)].is_number()) throw ConfigError("config key '" + key + "' must be numeric");
        out(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
    }
    return out;
  };
  auto vector_of = [&](const std::string& key) {
    const auto values = config.numbers(key, {});
    Vector v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t j = 0; j < values.size(); ++j) v(static_cast<Eigen::Index>(j)) = values[j];
    return v;
  };

  if (kind == "identity") return CostField::identity(data.dim());
  if (kind == "constant") {
    const Matrix a = matrix_of("cost.matrix");
    if (a.rows() != data.dim()) throw ConfigError("cost matrix dimension does not match the data");
    return CostField::constant(a);
  }
  if (kind == "scaled_identity") return CostField::scaled_identity(data.dim(), vector_of("cost.scales"));
  if (kind == "implied_vol") {
    Vector vol;
    if (config.has("cost.volatility")) {
      vol = vector_of("cost.volatility");
    } else {
      const std::string csv = config.string("cost.csv", "");
      if (csv.empty()) throw ConfigError("implied_vol cost needs 'cost.volatility' or 'cost.csv'");
      const CsvTable table = read_csv_table(config.resolve_path(csv));
      const int col = table.column(config.string("cost.column", table.header.front()));
      vol.resize(static_cast<Eigen::Index>(table.rows.size()));
      for (std::size_t r = 0; r < table.rows.size(); ++r) {
        vol(static_cast<Eigen::Index>(r)) = table.rows[r][static_cast<std::size_t>(col)];
      }
    }
    return CostField::from_implied_volatility(data.dim(), vol);
  }
  throw ConfigError("unknown cost kind '" + kind + "' (expected identity, constant, scaled_identity or implied_vol)");
}

LossSpec build_loss(const Config& config, const SampleSet& data) {
  const json* node = config.find("loss");
  LossSpec loss;
  if (!node) {
    loss = make_logistic_loss();
  } else if (node->is_string()) {
    loss = make_loss(node->get<std::string>());
  } else if (node->is_object()) {
    const std::string name = config.string("loss.name", "");
    loss = name == "mean_variance" ? make_mean_variance_loss(config.number("loss.zeta", 0.0)) : make_loss(name);
  } else {
    throw ConfigError("config key 'loss' must be a string or an object");
  }
  if ((loss.name == "logistic" || loss.name == "hinge") && !data.has_labels()) {
    throw ConfigError("loss '" + loss.name + "' needs a label column");
  }
  return bind_loss(std::move(loss), data);
}

DroProblem build_problem(const Config& config) {
  SampleSet data = build_data(config);
  CostField cost = build_cost(config, data);
  LossSpec loss = build_loss(config, data);
  std::optional<Nondegeneracy> nd;
  if (config.has("nondegeneracy")) {
    nd = Nondegeneracy{config.required_number("nondegeneracy.c1"), config.required_number("nondegeneracy.c2"),
                       config.required_number("nondegeneracy.p")};
  }
  return DroProblem(std::move(data), std::move(cost), std::move(loss), config.required_number("delta"),
                    config.required_number("r_beta"), nd);
}

SupervisedSetup build_setup(const Config& config) {
  SupervisedSetup s;
  s.method = parse_method(config.string("method", "auto"));
  s.schedule = StepSchedule{config.number("step.alpha", 1.0), config.number("step.tau", 0.55)};
  s.lambda_schedule = StepSchedule{config.number("step.lambda_alpha", s.schedule.alpha),
                                   config.number("step.lambda_tau", 0.6)};
  s.sgd.iterations = config.integer("iterations", 10000);
  s.sgd.seed = static_cast<std::uint64_t>(config.integer("seed", 1));
  s.sgd.xi = config.number("step.xi", 0.0);
  s.sgd.batch_size = static_cast<int>(config.integer("batch_size", 1));
  s.sgd.trace_points = static_cast<int>(config.integer("trace_points", 200));
  s.sgd.geometric_checkpoints = config.boolean("geometric_checkpoints", false);
  s.sgd.eval_cuts = static_cast<int>(config.integer("eval_cuts", 60));
  if (config.has("cuts")) s.sgd.cuts = static_cast<int>(config.integer("cuts", 60));
  s.eta = config.number("eta", 0.05);
  s.sphere_samples = static_cast<int>(config.integer("sphere_samples", 64));
  s.refine_steps = static_cast<int>(config.integer("refine_steps", 50));
  const auto lo = config.number("L_lower");
  const auto hi = config.number("L_upper");
  if (lo.has_value() != hi.has_value()) throw ConfigError("L_lower and L_upper must be given together");
  if (lo) s.L = supplied_L_bounds(*lo, *hi);
  return s;
}

std::optional<Vector> build_beta(const Config& config, int dim) {
  if (!config.has("beta")) return std::nullopt;
  const auto values = config.numbers("beta", {});
  if (static_cast<int>(values.size()) != dim) {
    throw ConfigError("config key 'beta' has " + std::to_string(values.size()) + " entries, data dimension is " +
                      std::to_string(dim));
  }
  Vector beta(dim);
  for (int j = 0; j < dim; ++j) beta(j) = values[static_cast<std::size_t>(j)];
  return beta;
}

FrontierSetup build_frontier_setup(const Config& config) {
  FrontierSetup s;
  s.window = static_cast<int>(config.integer("frontier.window", s.window));
  s.zeta_grid = config.numbers("frontier.zeta_grid", s.zeta_grid);
  s.delta_grid = config.numbers("frontier.delta_grid", s.delta_grid);
  if (const json* kinds = config.find("frontier.cost_kinds")) {
    if (!kinds->is_array()) throw ConfigError("config key 'frontier.cost_kinds' must be an array of names");
    s.cost_kinds.clear();
    for (const auto& k : *kinds) {
      if (!k.is_string()) throw ConfigError("config key 'frontier.cost_kinds' must be an array of names");
      s.cost_kinds.push_back(parse_portfolio_cost(k.get<std::string>()));
    }
  }
  s.solver.r_beta = config.number("frontier.r_beta", config.number("r_beta", s.solver.r_beta));
  s.solver.max_iterations = static_cast<int>(config.integer("frontier.max_iterations", s.solver.max_iterations));
  s.periods_per_year = config.number("frontier.periods_per_year", s.periods_per_year);
  for (double z : s.zeta_grid) {
    if (!(z >= 0.0)) throw ConfigError("zeta grid entries must be >= 0");
  }
  for (double d : s.delta_grid) {
    if (!(d >= 0.0)) throw ConfigError("delta grid entries must be >= 0");
  }
  return s;
}

MarketData build_market(const Config& config) {
  if (config.has("frontier.returns_csv")) {
    const CsvTable returns = read_csv_table(config.resolve_path(config.string("frontier.returns_csv", "")));
    const std::string vol_path = config.string("frontier.vol_csv", "");
    if (vol_path.empty()) throw ConfigError("config key 'frontier.vol_csv' is required with 'frontier.returns_csv'");
    const CsvTable vol = read_csv_table(config.resolve_path(vol_path));
    if (vol.rows.size() != returns.rows.size()) {
      throw ConfigError("return and volatility files have different row counts (" +
                        std::to_string(returns.rows.size()) + " vs " + std::to_string(vol.rows.size()) + ")");
    }
    const int vol_col = vol.column(config.string("frontier.vol_column", vol.header.back()));
    std::vector<int> asset_cols;
    const std::string date_col = config.string("frontier.date_column", "");
    for (int c = 0; c < static_cast<int>(returns.header.size()); ++c) {
      if (returns.header[static_cast<std::size_t>(c)] != date_col) asset_cols.push_back(c);
    }
    MarketData m;
    m.returns.resize(static_cast<Eigen::Index>(returns.rows.size()), static_cast<Eigen::Index>(asset_cols.size()));
    m.vol.resize(static_cast<Eigen::Index>(vol.rows.size()));
    for (std::size_t r = 0; r < returns.rows.size(); ++r) {
      for (std::size_t j = 0; j < asset_cols.size(); ++j) {
        m.returns(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
            returns.rows[r][static_cast<std::size_t>(asset_cols[j])];
      }
      m.vol(static_cast<Eigen::Index>(r)) = vol.rows[r][static_cast<std::size_t>(vol_col)];
    }
    return m;
  }
  return generate_market(static_cast<int>(config.integer("frontier.synthetic.months", 72)),
                         static_cast<int>(config.integer("frontier.synthetic.assets", 3)),
                         static_cast<std::uint64_t>(config.integer("frontier.synthetic.seed", config.integer("seed", 1))));
}

}  // namespace otdro
