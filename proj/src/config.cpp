#include "geoinpaint/config.hpp"

#include <fstream>
#include <set>

#include "geoinpaint/error.hpp"

namespace geoinpaint {

namespace {

// Reads an object field by field and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j.is_object(), ErrorCode::Config, where_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& item : j_.items())
      require(used_.count(item.key()) > 0, ErrorCode::Config, "unknown key '" + item.key() + "' in " + where_);
  }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }
  const Json& at(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }
  std::string path(const std::string& key) const { return where_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::Config, path(key) + ": " + e.what());
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (!has(key)) return;
    const Json& v = j_.at(key);
    require(v.is_number_integer() && (v.is_number_unsigned() || v.get<std::int64_t>() >= 0), ErrorCode::Config,
            path(key) + " must be a nonnegative integer");
    out = v.get<std::uint64_t>();
  }
  void get(const std::string& key, int& out) {
    if (!has(key)) return;
    const Json& v = j_.at(key);
    require(v.is_number_integer(), ErrorCode::Config, path(key) + " must be an integer");
    out = v.get<int>();
  }
  void get(const std::string& key, double& out) {
    if (!has(key)) return;
    const Json& v = j_.at(key);
    require(v.is_number(), ErrorCode::Config, path(key) + " must be a number");
    out = v.get<double>();
  }
  void get(const std::string& key, bool& out) {
    if (!has(key)) return;
    const Json& v = j_.at(key);
    require(v.is_boolean(), ErrorCode::Config, path(key) + " must be true or false");
    out = v.get<bool>();
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> used_;
};

const char* kernel_name(KernelType k) {
  return k == KernelType::Exponential ? "exponential" : "squared_exponential";
}

KernelType kernel_from(const std::string& s) {
  if (s == "exponential") return KernelType::Exponential;
  if (s == "squared_exponential") return KernelType::SquaredExponential;
  fail(ErrorCode::Config, "unknown covariance kernel '" + s + "'");
}

const char* side_name(int s) {
  static const char* names[] = {"left", "right", "bottom", "top"};
  return names[s];
}

GridSpec grid_from(const Json& j, const GridSpec& base) {
  Reader r(j, "grid");
  int nx = base.nx(), ny = base.ny();
  double lx = base.lx(), ly = base.ly();
  r.get("nx", nx);
  r.get("ny", ny);
  r.get("lx", lx);
  r.get("ly", ly);
  try {
    return make_grid(nx, ny, lx, ly);
  } catch (const Error& e) {
    fail(ErrorCode::Config, std::string("grid: ") + e.what());
  }
}

CovarianceSpec covariance_from(const Json& j, CovarianceSpec c) {
  Reader r(j, "covariance");
  r.get("mu", c.mu);
  r.get("sigma2", c.sigma2);
  r.get("l1", c.l1);
  r.get("l2", c.l2);
  std::string kernel = kernel_name(c.kernel);
  r.get("kernel", kernel);
  c.kernel = kernel_from(kernel);
  return c;
}

BoundarySpec boundary_from(const Json& j, BoundarySpec b) {
  Reader r(j, "boundary");
  for (int s = 0; s < 4; ++s) {
    if (!r.has(side_name(s))) continue;
    Reader side(r.at(side_name(s)), std::string("boundary.") + side_name(s));
    std::string type = b.sides[s].type == BoundaryType::Dirichlet ? "dirichlet" : "neumann";
    side.get("type", type);
    side.get("value", b.sides[s].value);
    if (type == "dirichlet")
      b.sides[s].type = BoundaryType::Dirichlet;
    else if (type == "neumann")
      b.sides[s].type = BoundaryType::Neumann;
    else
      fail(ErrorCode::Config, "boundary type must be dirichlet or neumann, got '" + type + "'");
  }
  return b;
}

SolverConfig solver_from(const Json& j, SolverConfig s) {
  Reader r(j, "solver");
  std::string method = s.method == SolverMethod::Direct ? "direct" : "cg";
  r.get("method", method);
  r.get("tolerance", s.tolerance);
  r.get("max_iterations", s.max_iterations);
  if (method == "direct")
    s.method = SolverMethod::Direct;
  else if (method == "cg")
    s.method = SolverMethod::ConjugateGradient;
  else
    fail(ErrorCode::Config, "solver method must be direct or cg, got '" + method + "'");
  return s;
}

PhysicsLossConfig physics_from(const Json& j, PhysicsLossConfig p) {
  Reader r(j, "physics");
  r.get("lambda_r", p.lambda_r);
  r.get("lambda_b", p.lambda_b);
  r.get("interior_crop", p.interior_crop);
  return p;
}

InpaintConfig inpaint_from(const Json& j, InpaintConfig c) {
  Reader r(j, "inpaint");
  r.get("lambda_p", c.lambda_p);
  r.get("learning_rate", c.learning_rate);
  r.get("final_learning_rate", c.final_learning_rate);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("max_iterations", c.max_iterations);
  r.get("restarts", c.restarts);
  r.get("seed", c.seed);
  return c;
}

std::vector<MeasurementCase> cases_from(const Json& j, const std::string& where) {
  require(j.is_array(), ErrorCode::Config, where + " must be a list of [n_k, n_h] pairs");
  std::vector<MeasurementCase> out;
  for (const Json& c : j) {
    require(c.is_array() && c.size() == 2 && c[0].is_number_integer() && c[1].is_number_integer() &&
                c[0].get<std::int64_t>() >= 0 && c[1].get<std::int64_t>() >= 0,
            ErrorCode::Config, where + " entries must be [n_k, n_h] with nonnegative integers");
    out.push_back({c[0].get<int>(), c[1].get<int>()});
  }
  return out;
}

Json case_json(const MeasurementCase& c) { return Json::array({c.n_k, c.n_h}); }

NetworkConfig network_fields(Reader& r, NetworkConfig n, bool with_grid) {
  if (with_grid) {
    r.get("nx", n.nx);
    r.get("ny", n.ny);
  }
  r.get("z_dim", n.z_dim);
  r.get("base_channels", n.base_channels);
  r.get("kernel_size", n.kernel_size);
  r.get("stride", n.stride);
  r.get("layers", n.layers);
  r.get("dropout_rate", n.dropout_rate);
  r.get("leaky_slope", n.leaky_slope);
  r.get("bn_momentum", n.bn_momentum);
  r.get("bn_eps", n.bn_eps);
  return n;
}

TrainConfig train_fields(Reader& r, TrainConfig t, bool with_weights) {
  r.get("gp_lambda", t.gp_lambda);
  if (with_weights) {
    r.get("lambda_r", t.lambda_r);
    r.get("lambda_b", t.lambda_b);
  }
  r.get("d_steps_per_g", t.d_steps_per_g);
  r.get("batch_size", t.batch_size);
  r.get("learning_rate", t.learning_rate);
  r.get("adam_beta1", t.adam_beta1);
  r.get("adam_beta2", t.adam_beta2);
  r.get("total_g_iterations", t.total_g_iterations);
  r.get("seed", t.seed);
  return t;
}

Json network_json(const NetworkConfig& n, bool with_grid) {
  Json j;
  if (with_grid) {
    j["nx"] = n.nx;
    j["ny"] = n.ny;
  }
  j["z_dim"] = n.z_dim;
  j["base_channels"] = n.base_channels;
  j["kernel_size"] = n.kernel_size;
  j["stride"] = n.stride;
  j["layers"] = n.layers;
  j["dropout_rate"] = n.dropout_rate;
  j["leaky_slope"] = n.leaky_slope;
  j["bn_momentum"] = n.bn_momentum;
  j["bn_eps"] = n.bn_eps;
  return j;
}

Json train_json(const TrainConfig& t, bool with_weights) {
  Json j;
  j["gp_lambda"] = t.gp_lambda;
  if (with_weights) {
    j["lambda_r"] = t.lambda_r;
    j["lambda_b"] = t.lambda_b;
  }
  j["d_steps_per_g"] = t.d_steps_per_g;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.learning_rate;
  j["adam_beta1"] = t.adam_beta1;
  j["adam_beta2"] = t.adam_beta2;
  j["total_g_iterations"] = t.total_g_iterations;
  j["seed"] = t.seed;
  return j;
}

std::vector<MeasurementCase> paper_cases() {
  return {{10, 0}, {10, 20}, {20, 0}, {20, 40}, {40, 0}, {40, 80}, {40, 120}, {60, 120}};
}

}  // namespace

void ExperimentConfig::finalize() {
  network.nx = grid.nx();
  network.ny = grid.ny();
  train.lambda_r = physics.lambda_r;
  train.lambda_b = physics.lambda_b;
  auto check = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Config) throw;
      fail(ErrorCode::Config, e.what());
    }
  };
  check([&] { covariance.validate(); });
  check([&] { solver.validate(); });
  check([&] { network.validate(); });
  check([&] { train.validate(); });
  check([&] { physics.validate(); });
  check([&] { inpaint.validate(); });
  require(kl_terms >= 1 && static_cast<std::size_t>(kl_terms) <= grid.size(), ErrorCode::Config,
          "kl_terms must lie in [1, nx*ny]");
  require(grid.nx() % (1 << network.layers) == 0 && grid.ny() % (1 << network.layers) == 0, ErrorCode::Config,
          "grid must be divisible by 2^layers");
  require(checkpoint_every >= 1, ErrorCode::Config, "checkpoint_every must be positive");
  require(eval_samples >= 1 && truths >= 1, ErrorCode::Config, "eval_samples and truths must be positive");
  for (const MeasurementCase& c : cases) {
    require(c.n_k > 0 || c.n_h > 0, ErrorCode::Config, "a measurement case needs at least one observation");
    require(static_cast<std::size_t>(c.n_k) <= grid.size() && static_cast<std::size_t>(c.n_h) <= grid.size(),
            ErrorCode::Config, "measurement counts exceed the grid");
  }
  for (int z : zdim_study) require(z >= 1, ErrorCode::Config, "zdim_study entries must be positive");
}

ExperimentConfig toy_config() {
  ExperimentConfig c;
  c.name = "toy";
  c.network.z_dim = 32;
  c.network.base_channels = 8;
  c.network.layers = 3;
  c.train.batch_size = 16;
  c.train.total_g_iterations = 20000;
  c.cases = paper_cases();
  c.zdim_study = {8, 16, 32, 64};
  c.finalize();
  return c;
}

ExperimentConfig paper_config() {
  ExperimentConfig c;
  c.name = "paper";
  c.grid = make_grid(64, 64, 2.0, 2.0);
  c.covariance.kernel = KernelType::Exponential;
  c.kl_terms = 512;
  c.dataset_size = 10000;
  c.network.z_dim = 100;
  c.network.base_channels = 32;
  c.network.layers = 4;
  c.train.batch_size = 50;
  c.train.total_g_iterations = 150000;
  c.checkpoint_every = 5000;
  c.eval_samples = 10000;
  c.cases = paper_cases();
  c.zdim_study = {20, 50, 100, 150, 200};
  c.finalize();
  return c;
}

ExperimentConfig parse_config(const Json& j, ExperimentConfig c) {
  {
    Reader r(j, "config");
    r.get("name", c.name);
    if (r.has("grid")) c.grid = grid_from(r.at("grid"), c.grid);
    if (r.has("covariance")) c.covariance = covariance_from(r.at("covariance"), c.covariance);
    if (r.has("boundary")) c.boundary = boundary_from(r.at("boundary"), c.boundary);
    r.get("kl_terms", c.kl_terms);
    if (r.has("dataset_size")) {
      std::uint64_t n = 0;
      r.get("dataset_size", n);
      c.dataset_size = n;
    }
    r.get("data_seed", c.data_seed);
    if (r.has("solver")) c.solver = solver_from(r.at("solver"), c.solver);
    if (r.has("network")) {
      Reader n(r.at("network"), "network");
      c.network = network_fields(n, c.network, false);
    }
    if (r.has("train")) {
      Reader t(r.at("train"), "train");
      c.train = train_fields(t, c.train, false);
    }
    if (r.has("physics")) c.physics = physics_from(r.at("physics"), c.physics);
    if (r.has("inpaint")) c.inpaint = inpaint_from(r.at("inpaint"), c.inpaint);
    r.get("checkpoint_every", c.checkpoint_every);
    r.get("eval_samples", c.eval_samples);
    r.get("eval_seed", c.eval_seed);
    if (r.has("cases")) c.cases = cases_from(r.at("cases"), "cases");
    r.get("truths", c.truths);
    r.get("truth_seed", c.truth_seed);
    if (r.has("zdim_study")) {
      const Json& z = r.at("zdim_study");
      require(z.is_array(), ErrorCode::Config, "zdim_study must be a list of integers");
      c.zdim_study.clear();
      for (const Json& v : z) {
        require(v.is_number_integer(), ErrorCode::Config, "zdim_study must be a list of integers");
        c.zdim_study.push_back(v.get<int>());
      }
    }
    if (r.has("zdim_case")) {
      const auto one = cases_from(Json::array({r.at("zdim_case")}), "zdim_case");
      c.zdim_case = one.front();
    }
  }
  c.finalize();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Config, "cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Config, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, base);
}

Json to_json(const GridSpec& g) { return Json{{"nx", g.nx()}, {"ny", g.ny()}, {"lx", g.lx()}, {"ly", g.ly()}}; }

Json to_json(const CovarianceSpec& c) {
  return Json{{"mu", c.mu}, {"sigma2", c.sigma2}, {"l1", c.l1}, {"l2", c.l2}, {"kernel", kernel_name(c.kernel)}};
}

Json to_json(const BoundarySpec& b) {
  Json j;
  for (int s = 0; s < 4; ++s)
    j[side_name(s)] = Json{{"type", b.sides[s].type == BoundaryType::Dirichlet ? "dirichlet" : "neumann"},
                           {"value", b.sides[s].value}};
  return j;
}

Json to_json(const NetworkConfig& n) { return network_json(n, true); }
Json to_json(const TrainConfig& t) { return train_json(t, true); }

Json to_json(const ChannelStats& s) {
  return Json{{"mean", std::vector<double>(s.mean.begin(), s.mean.end())},
              {"std", std::vector<double>(s.stddev.begin(), s.stddev.end())}};
}

NetworkConfig network_from_json(const Json& j, NetworkConfig base) {
  Reader r(j, "network");
  return network_fields(r, base, true);
}

TrainConfig train_from_json(const Json& j, TrainConfig base) {
  Reader r(j, "train");
  return train_fields(r, base, true);
}

ChannelStats stats_from_json(const Json& j) {
  Reader r(j, "stats");
  std::vector<double> mean, sd;
  r.get("mean", mean);
  r.get("std", sd);
  require(mean.size() == kChannels && sd.size() == kChannels, ErrorCode::Config, "stats need 4 means and 4 stds");
  ChannelStats s;
  std::copy(mean.begin(), mean.end(), s.mean.begin());
  std::copy(sd.begin(), sd.end(), s.stddev.begin());
  return s;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  j["grid"] = to_json(c.grid);
  j["covariance"] = to_json(c.covariance);
  j["boundary"] = to_json(c.boundary);
  j["kl_terms"] = c.kl_terms;
  j["dataset_size"] = static_cast<std::uint64_t>(c.dataset_size);
  j["data_seed"] = c.data_seed;
  j["solver"] = Json{{"method", c.solver.method == SolverMethod::Direct ? "direct" : "cg"},
                     {"tolerance", c.solver.tolerance},
                     {"max_iterations", c.solver.max_iterations}};
  j["network"] = network_json(c.network, false);
  j["train"] = train_json(c.train, false);
  j["physics"] = Json{{"lambda_r", c.physics.lambda_r},
                      {"lambda_b", c.physics.lambda_b},
                      {"interior_crop", c.physics.interior_crop}};
  j["inpaint"] = Json{{"lambda_p", c.inpaint.lambda_p},
                      {"learning_rate", c.inpaint.learning_rate},
                      {"final_learning_rate", c.inpaint.final_learning_rate},
                      {"adam_beta1", c.inpaint.adam_beta1},
                      {"adam_beta2", c.inpaint.adam_beta2},
                      {"max_iterations", c.inpaint.max_iterations},
                      {"restarts", c.inpaint.restarts},
                      {"seed", c.inpaint.seed}};
  j["checkpoint_every"] = c.checkpoint_every;
  j["eval_samples"] = c.eval_samples;
  j["eval_seed"] = c.eval_seed;
  Json cases = Json::array();
  for (const MeasurementCase& m : c.cases) cases.push_back(case_json(m));
  j["cases"] = cases;
  j["truths"] = c.truths;
  j["truth_seed"] = c.truth_seed;
  j["zdim_study"] = c.zdim_study;
  j["zdim_case"] = case_json(c.zdim_case);
  return j;
}

}  // namespace geoinpaint
