// Command line front end: ot-dro <command> --config <json> --out <dir>.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "otdro/config.hpp"
#include "otdro/error.hpp"
#include "otdro/experiments.hpp"
#include "otdro/optimizer.hpp"
#include "otdro/regions.hpp"
#include "otdro/worstcase.hpp"

namespace {

using nlohmann::json;
using namespace otdro;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string joined(const Vector& v) {
  std::string out;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (j > 0) out += ';';
    out += num(v(j));
  }
  return out;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index j = 0; j < v.size(); ++j) a.push_back(v(j));
  return a;
}

json to_json(const Decision& t) { return json{{"beta", to_json(t.beta)}, {"lambda", t.lambda}}; }

json to_json(const ConstantsBundle& c, const DroProblem& problem) {
  json j = {{"L_lower", c.L_lower},
            {"L_upper", c.L_upper},
            {"K1", c.K1},
            {"K2", c.K2},
            {"K2_table", c.K2_table},
            {"delta0", c.delta0},
            {"delta1", c.delta1 ? json(*c.delta1) : json(nullptr)},
            {"phi_min", c.phi_min},
            {"kappa0", c.kappa0},
            {"R_beta", c.r_beta},
            {"lambda_cap", c.lambda_cap()},
            {"rho_min", problem.cost().rho_min()},
            {"rho_max", problem.cost().rho_max()},
            {"kappa", problem.loss().kappa},
            {"M", problem.loss().M ? json(*problem.loss().M) : json(nullptr)},
            {"delta", problem.delta()},
            {"estimated", c.estimated},
            {"smooth_regime", c.smooth_regime}};
  if (problem.loss().kappa > 0.0) j["kappa1"] = problem.loss().kappa;
  return j;
}

struct Output {
  std::filesystem::path dir;
  bool timing = false;

  void write(const std::string& name, const std::string& content) const {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + (dir / name).string() + "'");
    out << content;
  }
  void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }
};

json trace_summary(const RunTrace& trace, bool timing) {
  json j = {{"method", trace.method},
            {"seed", trace.seed},
            {"iterations", trace.iterations},
            {"theta", to_json(trace.final_theta)},
            {"theta_bar", to_json(trace.final_theta_bar)},
            {"f_delta", trace.checkpoints.empty() ? json(nullptr) : json(trace.checkpoints.back().f_delta)},
            {"total_cuts", trace.total_cuts},
            {"region_violations", trace.region_violations},
            {"uncertified_solves", trace.uncertified_solves},
            {"warnings", trace.warnings}};
  if (timing) j["elapsed_ms"] = trace.elapsed_ms;
  return j;
}

/// One row per checkpoint; β vectors are ';'-joined within a column.
std::string trace_csv(const RunTrace& trace, bool timing) {
  std::string out = "k,beta,lambda,beta_bar,lambda_bar,f_delta,cuts";
  out += timing ? ",elapsed_ms\n" : "\n";
  for (const auto& c : trace.checkpoints) {
    out += std::to_string(c.k) + "," + joined(c.theta.beta) + "," + num(c.theta.lambda) + "," +
           joined(c.theta_bar.beta) + "," + num(c.theta_bar.lambda) + "," + num(c.f_delta) + "," +
           std::to_string(c.cuts);
    if (timing) out += "," + num(c.elapsed_ms);
    out += "\n";
  }
  return out;
}

int cmd_train(const Config& config, const Output& out) {
  const DroProblem problem = build_problem(config);
  const SupervisedSetup setup = build_setup(config);
  std::optional<ConstantsBundle> consts;
  const RunTrace trace = train(problem, setup, &consts);
  out.write("trace.csv", trace_csv(trace, out.timing));
  json summary = trace_summary(trace, out.timing);
  if (consts) summary["constants"] = to_json(*consts, problem);
  out.write_json("summary.json", summary);
  return kExitOk;
}

int cmd_compare(const Config& config, const Output& out) {
  const DroProblem problem = build_problem(config);
  const SupervisedSetup setup = build_setup(config);
  const SupervisedComparison cmp = run_supervised_experiment(problem, setup);
  std::string csv = "k,f_dro,gap_dro,f_nonrobust,gap_nonrobust\n";
  const std::size_t rows = std::min(cmp.dro.checkpoints.size(), cmp.plain.checkpoints.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& a = cmp.dro.checkpoints[r];
    const auto& b = cmp.plain.checkpoints[r];
    csv += std::to_string(a.k) + "," + num(a.f_delta) + "," + num(a.f_delta - cmp.f_star_dro) + "," + num(b.f_delta) +
           "," + num(b.f_delta - cmp.f_star_plain) + "\n";
  }
  out.write("compare.csv", csv);
  const long last = cmp.dro.iterations;
  const RateFit dro_fit = rate_diagnostic(cmp.dro, cmp.f_star_dro, std::max(1L, last / 100), last);
  const RateFit plain_fit = rate_diagnostic(cmp.plain, cmp.f_star_plain, std::max(1L, last / 100), last);
  json summary = {{"dro", trace_summary(cmp.dro, out.timing)},
                  {"nonrobust", trace_summary(cmp.plain, out.timing)},
                  {"f_star_dro", cmp.f_star_dro},
                  {"f_star_nonrobust", cmp.f_star_plain},
                  {"slope_dro", dro_fit.slope},
                  {"slope_nonrobust", plain_fit.slope}};
  if (cmp.consts) summary["constants"] = to_json(*cmp.consts, problem);
  out.write_json("summary.json", summary);
  return kExitOk;
}

int cmd_worstcase(const Config& config, const Output& out) {
  const DroProblem problem = build_problem(config);
  std::optional<Vector> beta = build_beta(config, problem.dim());
  std::optional<double> delta1;
  json source;
  if (!beta) {
    const SupervisedSetup setup = build_setup(config);
    std::optional<ConstantsBundle> consts;
    const RunTrace trace = train(problem, setup, &consts);
    beta = trace.final_theta_bar.beta;
    source = "trained";
  } else {
    source = "config";
  }
  if (problem.loss().smooth() && problem.nondegeneracy()) {
    const SupervisedSetup setup = build_setup(config);
    delta1 = constants_for(problem, setup).delta1;
  }
  std::vector<double> grid = config.numbers("delta_grid", {0.0, 0.01, 0.04, 0.09, 0.16, 0.25});
  const WorstCaseSweep sweep = run_worstcase_trace(problem, *beta, grid, delta1);

  std::string csv = "delta,i,X,G,X_star,displacement,loss_before,loss_after\n";
  for (const auto& r : sweep.rows) {
    csv += num(r.delta) + "," + std::to_string(r.i) + "," + joined(r.x) + "," + num(r.g) + "," + joined(r.x_star) + "," +
           num(r.displacement) + "," + num(r.loss_before) + "," + num(r.loss_after) + "\n";
  }
  out.write("worstcase.csv", csv);

  std::string summary_csv = "delta,lambda_star,regime,budget,g2a,worst_value,dual_value,misclassification,certified\n";
  json per_delta = json::array();
  for (std::size_t k = 0; k < sweep.statics.transports.size(); ++k) {
    const auto& t = sweep.statics.transports[k];
    const std::string mis = sweep.misclassification.empty() ? "" : num(sweep.misclassification[k]);
    summary_csv += num(t.delta) + "," + num(t.lambda_star) + "," + to_string(t.regime) + "," + num(t.budget) + "," +
                   num(t.g2a) + "," + num(t.worst_value) + "," + num(t.dual_value) + "," + mis + "," +
                   (t.certified ? "true" : "false") + "\n";
    json entry = {{"delta", t.delta}, {"regime", to_string(t.regime)}, {"interpretation", t.interpretation}};
    if (t.randomization) {
      entry["bernoulli_p"] = t.randomization->p;
      entry["c_lower"] = t.randomization->c_lower;
      entry["c_upper"] = t.randomization->c_upper;
    }
    per_delta.push_back(entry);
  }
  out.write("worstcase_summary.csv", summary_csv);
  json flagged = json::array();
  for (double d : sweep.statics.flagged) flagged.push_back(d);
  out.write_json("worstcase.json", {{"beta", to_json(*beta)},
                                    {"beta_source", source},
                                    {"monotonicity_violations", sweep.statics.monotonicity_violations},
                                    {"min_cosine", sweep.statics.min_cosine},
                                    {"delta1", delta1 ? json(*delta1) : json(nullptr)},
                                    {"flagged_deltas", flagged},
                                    {"grid", per_delta}});
  return kExitOk;
}

int cmd_frontier(const Config& config, const Output& out) {
  const MarketData market = build_market(config);
  const FrontierSetup setup = build_frontier_setup(config);
  const auto points = run_portfolio_frontier(market.returns, market.vol, setup);
  std::string csv = "zeta,delta,cost_kind,mean_return,std_return,months\n";
  for (const auto& p : points) {
    csv += num(p.zeta) + "," + num(p.delta) + "," + to_string(p.cost_kind) + "," + num(p.mean_return) + "," +
           num(p.std_return) + "," + std::to_string(p.months) + "\n";
  }
  out.write("frontier.csv", csv);
  return kExitOk;
}

int cmd_constants(const Config& config, const Output& out) {
  const DroProblem problem = build_problem(config);
  const SupervisedSetup setup = build_setup(config);
  const ConstantsBundle consts = constants_for(problem, setup);
  out.write_json("constants.json", to_json(consts, problem));
  return kExitOk;
}

int cmd_check(const Config& config, const Output& out) {
  const auto results = run_check_suite(static_cast<std::uint64_t>(config.integer("check_seed", config.integer("seed", 1))));
  json list = json::array();
  bool all = true;
  for (const auto& r : results) {
    all = all && r.passed;
    list.push_back({{"name", r.name},
                    {"passed", r.passed},
                    {"oracle", r.oracle_value},
                    {"fast", r.fast_value},
                    {"error", r.error},
                    {"tolerance", r.tolerance}});
  }
  out.write_json("check.json", {{"passed", all}, {"checks", list}});
  for (const auto& r : results) std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "\n";
  return all ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optimal-transport distributionally robust learning with affine decision rules"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Config&, const Output&);
  };
  const Command commands[] = {
      {"train", "run the SGD variant matching the loss", cmd_train},
      {"compare", "DRO against non-robust SGD on the same sample stream", cmd_compare},
      {"worstcase", "worst-case transports along a delta grid", cmd_worstcase},
      {"frontier", "rolling-window mean-variance frontier", cmd_frontier},
      {"constants", "derived constants and regions", cmd_constants},
      {"check", "oracle suite", cmd_check},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON configuration")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const Config config = Config::load(config_path);
    Output out{out_dir, config.boolean("timing", false)};
    std::filesystem::create_directories(out.dir);
    for (const auto& c : commands) {
      if (app.got_subcommand(c.name)) return c.run(config, out);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
