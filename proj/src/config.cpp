#include "perfnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <string_view>

#include "perfnet/dataset.hpp"

namespace perfnet {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::string_view section,
                std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) {
    throw Error(Errc::config, "config section '" + std::string(section) + "' must be an object");
  }
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw Error(Errc::config, "unknown key '" + item.key() + "' in section '" +
                                    std::string(section) + "'");
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

json step_to_json(const StepSchedule& s) {
  if (s.kind == StepSchedule::Kind::constant) {
    return {{"kind", "constant"}, {"gamma", s.gamma}};
  }
  return {{"kind", "inverse_time"}, {"a0", s.a0}, {"a1", s.a1}};
}

StepSchedule step_from_json(const json& j) {
  check_keys(j, "step", {"kind", "gamma", "a0", "a1"});
  const std::string kind = j.value("kind", std::string("inverse_time"));
  if (kind == "constant") return StepSchedule::constant_step(j.at("gamma").get<double>());
  if (kind == "inverse_time") {
    return StepSchedule::inverse_time(j.at("a0").get<double>(), j.value("a1", 0.0));
  }
  throw Error(Errc::config, "unknown step kind '" + kind + "'");
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  const auto& t = c.topology;
  const auto& e = c.environment;
  const auto& g = e.gaussian;
  const auto& s = e.strategic;
  json out;
  out["config_version"] = c.config_version;
  out["name"] = c.name;
  out["topology"] = {{"kind", t.kind},           {"n", t.n},
                     {"weights", t.weights},     {"edge_file", t.edge_file},
                     {"schedule_file", t.schedule_file}, {"window", t.window}};
  out["environment"] = {
      {"kind", e.kind},
      {"eps_avg", e.eps_avg},
      {"spread", e.spread},
      {"eps_grid", e.eps_grid},
      {"eps_list", e.eps_list},
      {"homogeneous", e.homogeneous},
      {"gaussian",
       {{"zbar", g.zbar},
        {"sigma2", g.sigma2},
        {"dim", g.dim},
        {"mean_dispersion", g.mean_dispersion},
        {"mean_seed", g.mean_seed}}},
      {"strategic",
       {{"dataset", s.dataset},
        {"source", s.source},
        {"beta", s.beta},
        {"per_agent", s.per_agent},
        {"test_split", s.test_split},
        {"columns", s.columns},
        {"standardize", s.standardize},
        {"partition_seed", s.partition_seed},
        {"synthetic_rows", s.synthetic_rows},
        {"synthetic_dim", s.synthetic_dim},
        {"positive_rate", s.positive_rate},
        {"heterogeneity", s.heterogeneity},
        {"data_seed", s.data_seed}}}};
  out["run"] = {{"T", c.run.T},
                {"batch", c.run.batch},
                {"record_every", c.run.record_every},
                {"seed", c.run.seed},
                {"theta0", c.run.theta0},
                {"divergence_threshold", c.run.divergence_threshold}};
  out["step"] = step_to_json(c.step);
  out["metrics"] = {{"risk_mc", c.metrics.risk_mc},
                    {"accuracy", c.metrics.accuracy},
                    {"grad_norm", c.metrics.grad_norm},
                    {"rate_window", c.metrics.rate_window},
                    {"rate_min_t", c.metrics.rate_min_t},
                    {"risk_blowup", c.metrics.risk_blowup}};
  out["seeds"] = c.seeds;
  out["sweep"] = {{"axis", c.sweep.axis}, {"values", c.sweep.values}};
  out["theory"] = {{"delta", c.theory.delta}, {"curve_points", c.theory.curve_points}};
  return out;
}

ExperimentConfig config_from_json(const json& j) {
  try {
    check_keys(j, "root",
               {"config_version", "name", "topology", "environment", "run", "step",
                "metrics", "seeds", "sweep", "theory"});
    ExperimentConfig c;
    read(j, "config_version", c.config_version);
    if (c.config_version != kConfigVersion) {
      throw Error(Errc::config, "unsupported config_version " +
                                    std::to_string(c.config_version) + " (expected " +
                                    std::to_string(kConfigVersion) + ")");
    }
    read(j, "name", c.name);
    if (auto it = j.find("topology"); it != j.end()) {
      check_keys(*it, "topology",
                 {"kind", "n", "weights", "edge_file", "schedule_file", "window"});
      auto& t = c.topology;
      read(*it, "kind", t.kind);
      read(*it, "n", t.n);
      read(*it, "weights", t.weights);
      read(*it, "edge_file", t.edge_file);
      read(*it, "schedule_file", t.schedule_file);
      read(*it, "window", t.window);
    }
    if (auto it = j.find("environment"); it != j.end()) {
      check_keys(*it, "environment",
                 {"kind", "n", "eps_avg", "spread", "eps_grid", "eps_list", "homogeneous",
                  "gaussian", "strategic"});
      auto& e = c.environment;
      read(*it, "kind", e.kind);
      if (auto n = it->find("n"); n != it->end()) c.topology.n = n->get<std::size_t>();
      read(*it, "eps_avg", e.eps_avg);
      read(*it, "spread", e.spread);
      read(*it, "eps_grid", e.eps_grid);
      read(*it, "eps_list", e.eps_list);
      read(*it, "homogeneous", e.homogeneous);
      if (auto g = it->find("gaussian"); g != it->end()) {
        check_keys(*g, "environment.gaussian",
                   {"zbar", "sigma2", "dim", "mean_dispersion", "mean_seed"});
        read(*g, "zbar", e.gaussian.zbar);
        read(*g, "sigma2", e.gaussian.sigma2);
        read(*g, "dim", e.gaussian.dim);
        read(*g, "mean_dispersion", e.gaussian.mean_dispersion);
        read(*g, "mean_seed", e.gaussian.mean_seed);
      }
      if (auto s = it->find("strategic"); s != it->end()) {
        check_keys(*s, "environment.strategic",
                   {"dataset", "source", "beta", "per_agent", "test_split", "columns",
                    "standardize", "partition_seed", "synthetic_rows", "synthetic_dim",
                    "positive_rate", "heterogeneity", "data_seed"});
        auto& st = e.strategic;
        read(*s, "dataset", st.dataset);
        read(*s, "source", st.source);
        read(*s, "beta", st.beta);
        read(*s, "per_agent", st.per_agent);
        read(*s, "test_split", st.test_split);
        read(*s, "columns", st.columns);
        read(*s, "standardize", st.standardize);
        read(*s, "partition_seed", st.partition_seed);
        read(*s, "synthetic_rows", st.synthetic_rows);
        read(*s, "synthetic_dim", st.synthetic_dim);
        read(*s, "positive_rate", st.positive_rate);
        read(*s, "heterogeneity", st.heterogeneity);
        read(*s, "data_seed", st.data_seed);
      }
    }
    if (auto it = j.find("run"); it != j.end()) {
      check_keys(*it, "run",
                 {"T", "batch", "record_every", "seed", "theta0", "divergence_threshold"});
      read(*it, "T", c.run.T);
      read(*it, "batch", c.run.batch);
      read(*it, "record_every", c.run.record_every);
      read(*it, "seed", c.run.seed);
      read(*it, "theta0", c.run.theta0);
      read(*it, "divergence_threshold", c.run.divergence_threshold);
    }
    if (auto it = j.find("step"); it != j.end()) c.step = step_from_json(*it);
    if (auto it = j.find("metrics"); it != j.end()) {
      check_keys(*it, "metrics",
                 {"risk_mc", "accuracy", "grad_norm", "rate_window", "rate_min_t",
                  "risk_blowup"});
      read(*it, "risk_mc", c.metrics.risk_mc);
      read(*it, "accuracy", c.metrics.accuracy);
      read(*it, "grad_norm", c.metrics.grad_norm);
      read(*it, "rate_window", c.metrics.rate_window);
      read(*it, "rate_min_t", c.metrics.rate_min_t);
      read(*it, "risk_blowup", c.metrics.risk_blowup);
    }
    read(j, "seeds", c.seeds);
    if (auto it = j.find("sweep"); it != j.end()) {
      check_keys(*it, "sweep", {"axis", "values"});
      read(*it, "axis", c.sweep.axis);
      read(*it, "values", c.sweep.values);
    }
    if (auto it = j.find("theory"); it != j.end()) {
      check_keys(*it, "theory", {"delta", "curve_points"});
      read(*it, "delta", c.theory.delta);
      read(*it, "curve_points", c.theory.curve_points);
    }
    if (c.run.batch == 0 || c.run.record_every == 0) {
      throw Error(Errc::config, "run.batch and run.record_every must be >= 1");
    }
    if (c.topology.n == 0) throw Error(Errc::config, "topology.n must be >= 1");
    return c;
  } catch (const json::exception& ex) {
    throw Error(Errc::config, std::string("config: ") + ex.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::config, "cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw Error(Errc::config, path.string() + ": " + ex.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::config, "cannot write " + path.string());
  out << to_json(config).dump(2) << '\n';
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : to_json(config).dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::string> preset_names() {
  return {"gaussian_mean", "spam_logistic", "hetero_vs_homo"};
}

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.topology = TopologyConfig{"ring", 25, "uniform", "", "", 0};
  for (std::uint64_t s = 0; s < 10; ++s) c.seeds.push_back(s);
  if (name == "gaussian_mean") {
    c.environment.kind = "gaussian_mean";
    c.environment.eps_avg = 0.9;
    c.environment.spread = 0.6;
    c.environment.gaussian = GaussianConfig{10.0, 50.0, 1, 0.0, 0};
    c.run.T = 200000;
    c.run.batch = 1;
    c.run.record_every = 100;
    c.step = StepSchedule::inverse_time(50.0, 1e4);
    c.metrics.risk_mc = 0;
    c.sweep = SweepConfig{"eps_avg", {0.9, 1.01, 1.05, 1.1}};
    return c;
  }
  if (name == "spam_logistic") {
    c.environment.kind = "strategic_shift";
    c.environment.eps_avg = 1.0;
    c.environment.spread = 0.6;
    c.environment.strategic.source = "spam";
    c.environment.strategic.beta = 1e-4;
    c.environment.strategic.per_agent = 138;
    c.environment.strategic.test_split = 1150;
    c.run.T = 500000;
    c.run.batch = 32;
    c.run.record_every = 1000;
    c.step = StepSchedule::inverse_time(50.0, 1e5);
    c.metrics.risk_mc = 256;
    c.metrics.accuracy = true;
    c.metrics.rate_min_t = 1000;
    c.sweep = SweepConfig{"eps_avg", {0.01, 0.1, 1.0}};
    return c;
  }
  if (name == "hetero_vs_homo") {
    c.environment.kind = "strategic_shift";
    c.environment.eps_avg = 0.1;
    c.environment.spread = 0.0;
    c.environment.strategic.source = "leaf";
    c.environment.strategic.beta = 1e-3;
    c.environment.strategic.per_agent = 100;
    c.environment.strategic.test_split = 0;
    c.environment.strategic.synthetic_dim = 60;
    c.environment.strategic.heterogeneity = 1.0;
    c.environment.strategic.standardize = false;
    c.run.T = 100000;
    c.run.batch = 32;
    c.run.record_every = 500;
    c.step = StepSchedule::inverse_time(200.0, 1000.0);
    c.metrics.risk_mc = 0;
    c.metrics.rate_min_t = 1000;
    c.sweep = SweepConfig{"homogeneous", {0.0, 1.0}};
    return c;
  }
  throw Error(Errc::config, "unknown preset '" + name + "'");
}

ExperimentConfig with_axis(const ExperimentConfig& config, const std::string& axis,
                           double value) {
  ExperimentConfig c = config;
  auto as_count = [&](const char* what) {
    if (!(value >= 1.0) || value != std::floor(value)) {
      throw Error(Errc::config, std::string(what) + " sweep values must be positive integers");
    }
    return static_cast<std::uint64_t>(value);
  };
  if (axis == "eps_avg") {
    c.environment.eps_avg = value;
  } else if (axis == "spread") {
    c.environment.spread = value;
  } else if (axis == "homogeneous") {
    c.environment.homogeneous = value != 0.0;
  } else if (axis == "a0" || axis == "a1") {
    if (c.step.kind != StepSchedule::Kind::inverse_time) {
      throw Error(Errc::config, "a0/a1 sweeps need an inverse_time step");
    }
    c.step = axis == "a0" ? StepSchedule::inverse_time(value, c.step.a1)
                          : StepSchedule::inverse_time(c.step.a0, value);
  } else if (axis == "gamma") {
    c.step = StepSchedule::constant_step(value);
  } else if (axis == "batch") {
    c.run.batch = as_count("batch");
  } else if (axis == "T") {
    c.run.T = as_count("T");
  } else if (axis == "n") {
    c.topology.n = as_count("n");
  } else {
    throw Error(Errc::config, "unknown sweep axis '" + axis + "'");
  }
  return c;
}

Environment build_environment(const ExperimentConfig& config) {
  const auto& e = config.environment;
  const std::size_t n = config.topology.n;
  SuiteOptions options;
  options.n = n;
  options.eps_avg = e.eps_avg;
  options.spread = e.spread;
  options.homogeneous = e.homogeneous;
  if (!e.eps_grid.empty()) {
    if (e.eps_grid.size() != n) throw Error(Errc::config, "eps_grid needs one entry per agent");
    options.multipliers = e.eps_grid;
  }
  if (!e.eps_list.empty()) {
    if (e.eps_list.size() != n) throw Error(Errc::config, "eps_list needs one entry per agent");
    options.spread = 0.0;
    options.multipliers.reset();
  }
  std::variant<GaussianSuiteParams, LogisticSuiteParams> params;
  if (e.kind == "gaussian_mean") {
    const auto& g = e.gaussian;
    if (g.dim == 0) throw Error(Errc::config, "gaussian.dim must be >= 1");
    const Vector center = Vector::Constant(static_cast<Eigen::Index>(g.dim), g.zbar);
    GaussianSuiteParams gp;
    gp.noise_var = g.sigma2;
    if (g.mean_dispersion > 0.0) {
      gp.means = heterogeneous_means(n, center, g.mean_dispersion, g.mean_seed);
    } else {
      gp.means = {center};
    }
    params = std::move(gp);
  } else if (e.kind == "strategic_shift") {
    const auto& s = e.strategic;
    LogisticSuiteParams lp;
    lp.beta = s.beta;
    if (s.source == "leaf" && s.dataset.empty()) {
      lp.shards = synthetic_logistic_shards(n, s.per_agent, s.synthetic_dim, s.heterogeneity,
                                            s.data_seed);
    } else {
      LabeledData table;
      if (!s.dataset.empty()) {
        table = load_dataset(s.dataset, LoadOptions{s.columns});
      } else if (s.source == "spam") {
        table = synthetic_spam_corpus(s.synthetic_rows, s.synthetic_dim, s.positive_rate,
                                      s.data_seed);
      } else {
        throw Error(Errc::config, "unknown strategic source '" + s.source + "'");
      }
      DatasetBundle bundle =
          partition_agents(table, n, s.per_agent, s.test_split, s.partition_seed);
      if (s.standardize) bundle = standardize(bundle);
      lp.shards = std::move(bundle.shards);
      if (s.test_split > 0) lp.test_data = bundle.test;
    }
    params = std::move(lp);
  } else {
    throw Error(Errc::config, "unknown environment kind '" + e.kind + "'");
  }
  Environment env = make_heterogeneous_suite(options, params);
  if (!e.eps_list.empty()) env = env.with_sensitivities(e.eps_list);
  return env;
}

Mixing build_mixing(const TopologyConfig& t) {
  const bool metropolis = t.weights == "metropolis";
  if (!metropolis && t.weights != "uniform") {
    throw Error(Errc::config, "unknown weights '" + t.weights + "'");
  }
  auto weigh = [&](const Graph& g) {
    return metropolis ? metropolis_weights(g) : uniform_neighbor_weights(g);
  };
  if (t.kind == "ring") return Mixing(weigh(build_ring(t.n)));
  if (t.kind == "complete") return Mixing(weigh(build_complete(t.n)));
  if (t.kind == "star") return Mixing(weigh(build_star(t.n)));
  if (t.kind == "edge_list") {
    if (t.edge_file.empty()) throw Error(Errc::config, "edge_list topology needs edge_file");
    const auto edges = read_edge_list(t.edge_file);
    return Mixing(weigh(Graph(t.n, edges)));
  }
  if (t.kind == "schedule") {
    const auto w = metropolis ? GraphSchedule::Weights::metropolis
                              : GraphSchedule::Weights::uniform;
    std::vector<Graph> graphs;
    if (t.schedule_file.empty()) {
      graphs = alternating_ring_schedule(t.n).graphs();
    } else {
      for (const auto& edges : read_schedule_file(t.schedule_file)) {
        graphs.emplace_back(t.n, edges);
      }
    }
    const std::size_t window = t.window == 0 ? graphs.size() : t.window;
    return Mixing(GraphSchedule(std::move(graphs), window, w));
  }
  throw Error(Errc::config, "unknown topology kind '" + t.kind + "'");
}

RunConfig build_run_config(const ExperimentConfig& config, std::uint64_t seed) {
  RunConfig rc;
  rc.iterations = config.run.T;
  rc.batch = config.run.batch;
  rc.record_every = config.run.record_every;
  rc.seed = seed;
  rc.divergence_threshold = config.run.divergence_threshold;
  if (!config.run.theta0.empty()) {
    rc.theta0 = Eigen::Map<const Vector>(config.run.theta0.data(),
                                         static_cast<Eigen::Index>(config.run.theta0.size()));
  }
  return rc;
}

}  // namespace perfnet
