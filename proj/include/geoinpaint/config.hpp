#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "geoinpaint/darcy.hpp"
#include "geoinpaint/discrete_ops.hpp"
#include "geoinpaint/inpaint.hpp"
#include "geoinpaint/kl_sampler.hpp"
#include "geoinpaint/nn.hpp"
#include "geoinpaint/wgan.hpp"

namespace geoinpaint {

using Json = nlohmann::ordered_json;

struct MeasurementCase {
  int n_k = 0;
  int n_h = 0;
  bool operator==(const MeasurementCase&) const = default;
};

/// Everything one experiment needs. Network grid sizes follow `grid`, and the
/// physics weights are shared by the trainer and the loss.
struct ExperimentConfig {
  std::string name = "toy";
  GridSpec grid = make_grid(16, 16, 2.0, 2.0);
  CovarianceSpec covariance;
  BoundarySpec boundary = BoundarySpec::left_right_dirichlet(1.0, 0.0);
  int kl_terms = 64;
  std::size_t dataset_size = 2000;
  std::uint64_t data_seed = 1;
  SolverConfig solver;
  NetworkConfig network;
  TrainConfig train;
  PhysicsLossConfig physics;
  InpaintConfig inpaint;
  int checkpoint_every = 1000;
  int eval_samples = 500;
  std::uint64_t eval_seed = 7;
  std::vector<MeasurementCase> cases;
  int truths = 5;
  /// Held-out ground truths are KL draws seeded from here, far from the
  /// dataset's per-sample seeds.
  std::uint64_t truth_seed = 1000003;
  std::vector<int> zdim_study;
  MeasurementCase zdim_case{20, 40};

  /// Syncs network grid and trainer weights with the rest, then validates.
  void finalize();
};

/// 16 x 16 desk-scale defaults.
ExperimentConfig toy_config();
/// 64 x 64 settings of the original study; long-running.
ExperimentConfig paper_config();

/// Strict parsing: unknown keys, wrong types and invalid values throw Config.
/// Missing keys keep the defaults of `base`.
ExperimentConfig parse_config(const Json& j, ExperimentConfig base = toy_config());
ExperimentConfig load_config(const std::filesystem::path& path, const ExperimentConfig& base = toy_config());
Json to_json(const ExperimentConfig& cfg);

Json to_json(const GridSpec& g);
Json to_json(const CovarianceSpec& c);
Json to_json(const BoundarySpec& b);
Json to_json(const NetworkConfig& n);
Json to_json(const TrainConfig& t);
Json to_json(const ChannelStats& s);
NetworkConfig network_from_json(const Json& j, NetworkConfig base);
TrainConfig train_from_json(const Json& j, TrainConfig base);
ChannelStats stats_from_json(const Json& j);

}  // namespace geoinpaint
