#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "geoinpaint/config.hpp"
#include "geoinpaint/io.hpp"
#include "geoinpaint/metrics.hpp"

namespace geoinpaint::pipeline {

namespace fs = std::filesystem;
using Logger = std::function<void(const std::string&)>;

/// Zero recharge; the experiments have no sources or sinks.
Field zero_source(const GridSpec& grid);
KLBasis kl_basis(const ExperimentConfig& cfg, bool with_vectors = true);

/// m standard-normal KL coefficients from a 64-bit Mersenne Twister seeded
/// with `seed`.
std::vector<double> kl_coefficients(int m, std::uint64_t seed);

/// Paired samples for seeds first_seed, first_seed + 1, ... Solver failures are
/// rethrown with the failing sample index.
FieldStack generate_samples_kl(const ExperimentConfig& cfg, const KLBasis& basis, std::uint64_t first_seed,
                               std::size_t count);

/// Ground truths for inpainting: fresh draws seeded from cfg.truth_seed.
FieldStack held_out_truths(const ExperimentConfig& cfg, const KLBasis& basis, int count);

Json dataset_manifest(const ExperimentConfig& cfg, const io::DatasetFile& file);

/// Writes dataset.gifs and dataset.json into out_dir.
io::DatasetFile cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out_dir, const Logger& log = {});

/// A generator/critic pair with the physics loss it was trained against.
struct Session {
  ExperimentConfig cfg;
  std::unique_ptr<PhysicsLoss> physics;
  std::unique_ptr<Trainer> trainer;

  Generator& generator() { return trainer->generator(); }
  Discriminator& critic() { return trainer->discriminator(); }
  const ChannelStats& stats() const { return trainer->stats(); }
};

Session make_session(const ExperimentConfig& cfg, const ChannelStats& stats);
/// Rebuilds the session from a checkpoint. The checkpoint's network must match
/// the config's grid (GridMismatch otherwise).
Session load_session(const ExperimentConfig& cfg, const io::Checkpoint& ckpt);

struct TrainOptions {
  std::optional<fs::path> resume;
  /// Stop after this many new generator iterations (-1: run to the end).
  int max_new = -1;
  Logger log;
};

/// Trains on a dataset file and writes checkpoint.gick (atomically, every
/// checkpoint_every iterations and at the start) and train_log.csv into
/// out_dir. On divergence the last checkpoint stays in place and the error is
/// rethrown. Returns the checkpoint path.
fs::path cmd_train(const ExperimentConfig& cfg, const fs::path& dataset, const fs::path& out_dir,
                   const TrainOptions& opts = {});

struct UncondReport {
  int n = 0;
  std::vector<double> residual;  // L_r per generated sample
  std::vector<double> boundary;  // L_b per generated sample
  double mean_residual = 0.0;
  double mean_boundary = 0.0;
  ConsistencyReport consistency;
  std::optional<SpectrumReport> lnk_spectrum;
  std::optional<SpectrumReport> h_spectrum;
};

/// Generates n samples, scores their physics losses and solver consistency,
/// and, when n >= 2, the lnK and h spectra with the training data's spectra
/// as reference.
UncondReport evaluate_unconditional(Session& s, int n, std::uint64_t seed, const FieldStack* reference,
                                    int spectrum_terms = 40);
void write_uncond_report(const UncondReport& r, const fs::path& out_dir);
UncondReport cmd_eval_uncond(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& dataset,
                             int n, const fs::path& out_dir, const Logger& log = {});

struct CaseRun {
  int truth = 0;
  int restart = 0;
  double rmse = 0.0;  // lnK
  double r2 = 0.0;    // lnK
  double context = 0.0;
};

struct CaseReport {
  MeasurementCase measurement;
  std::vector<CaseRun> runs;  // successful restarts of every truth
  int failures = 0;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  double r2_mean = 0.0;
  double r2_std = 0.0;
  /// lnK RMSE of the restart-averaged reconstruction, averaged over truths.
  double mean_field_rmse = 0.0;
};

/// Truth t is observed with measurement seed truth_seed + t and inpainted with
/// restart seed inpaint.seed + t, so every case sees the same truths, starting
/// latents and (where counts allow) nested observation sites.
CaseReport run_case(Session& s, const FieldStack& truths, const MeasurementCase& c, const InpaintConfig& icfg,
                    const Logger& log = {});
std::vector<CaseReport> cmd_inpaint(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir,
                                    const Logger& log = {});
void write_case_reports(const std::vector<CaseReport>& reports, const fs::path& path);

struct ZdimRow {
  int z_dim = 0;
  /// Retained KL energy over the m-term total; NaN when z_dim exceeds m.
  double energy_truncated = 0.0;
  double energy_full = 0.0;
  CaseReport report;
};

std::vector<double> retained_energy_column(const KLBasis& basis, const std::vector<int>& dims,
                                           EnergyDenominator denominator);
std::vector<ZdimRow> cmd_zdim_study(const ExperimentConfig& cfg, const fs::path& dataset, const fs::path& out_dir,
                                    const Logger& log = {});

/// One KL draw and its Darcy solve; writes fields as CSV and PGM.
void cmd_solve(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out_dir);
/// Eigenvalues and retained energy of the configured KL prior.
void cmd_spectrum(const ExperimentConfig& cfg, const fs::path& out_dir, const Logger& log = {});

}  // namespace geoinpaint::pipeline
