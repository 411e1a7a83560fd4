#include "geoinpaint/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <sstream>

#include "geoinpaint/error.hpp"
#include "geoinpaint/linalg.hpp"

namespace geoinpaint::pipeline {

namespace {

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation; zero for a single value.
double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

Field channel_field(std::span<const double> sample, const GridSpec& grid, Channel c) {
  const auto off = static_cast<std::ptrdiff_t>(static_cast<int>(c) * grid.size());
  return Field(grid, std::vector<double>(sample.begin() + off, sample.begin() + off + static_cast<std::ptrdiff_t>(grid.size())));
}

void write_pgms(std::span<const double> sample, const GridSpec& grid, const fs::path& dir, const std::string& stem) {
  static const char* names[] = {"lnk", "h", "f1", "f2"};
  for (int c = 0; c < kChannels; ++c)
    io::write_atomic(dir / (stem + "_" + names[c] + ".pgm"),
                     io::encode_pgm(channel_field(sample, grid, static_cast<Channel>(c))));
}

std::string spectrum_csv(const SpectrumReport& r) {
  std::ostringstream out;
  out << "k,eigenvalue,cumulative";
  if (r.reference) out << ",reference_eigenvalue";
  out << '\n';
  for (std::size_t k = 0; k < r.eigenvalues.size(); ++k) {
    out << k + 1 << ',' << num(r.eigenvalues[k]) << ',' << num(r.cumulative[k]);
    if (r.reference) out << ',' << (k < r.reference->size() ? num((*r.reference)[k]) : "");
    out << '\n';
  }
  return out.str();
}

}  // namespace

Field zero_source(const GridSpec& grid) { return Field(grid, 0.0); }

KLBasis kl_basis(const ExperimentConfig& cfg, bool with_vectors) {
  if (with_vectors) return build_kl_basis(cfg.grid, cfg.covariance, cfg.kl_terms);
  KLBasis b;
  b.grid = cfg.grid;
  Eigen::MatrixXd c = build_covariance(cfg.grid, cfg.covariance);
  b.trace = c.trace();
  b.eigenvalues = linalg::top_eigenpairs(std::move(c), cfg.kl_terms, false).values.cwiseMax(0.0);
  return b;
}

std::vector<double> kl_coefficients(int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> z(static_cast<std::size_t>(m));
  for (double& v : z) v = normal(rng);
  return z;
}

FieldStack generate_samples_kl(const ExperimentConfig& cfg, const KLBasis& basis, std::uint64_t first_seed,
                               std::size_t count) {
  const Field source = zero_source(cfg.grid);
  FieldStack out(cfg.grid, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::vector<double> z = kl_coefficients(basis.truncation(), first_seed + i);
    try {
      out.push_back(generate_pair(basis, cfg.covariance, cfg.boundary, z, source, cfg.solver));
    } catch (const Error& e) {
      fail(e.code(), "sample " + std::to_string(i) + " (seed " + std::to_string(first_seed + i) + "): " + e.what());
    }
  }
  return out;
}

FieldStack held_out_truths(const ExperimentConfig& cfg, const KLBasis& basis, int count) {
  return generate_samples_kl(cfg, basis, cfg.truth_seed, static_cast<std::size_t>(count));
}

Json dataset_manifest(const ExperimentConfig& cfg, const io::DatasetFile& file) {
  Json j;
  j["format"] = "GIFS";
  j["version"] = io::kDatasetVersion;
  j["count"] = file.count;
  j["grid"] = to_json(cfg.grid);
  j["covariance"] = to_json(cfg.covariance);
  j["boundary"] = to_json(cfg.boundary);
  j["kl_terms"] = cfg.kl_terms;
  j["seed"] = cfg.data_seed;
  j["sample_seeds"] = "seed + index";
  if (file.stats)
    j["stats"] = to_json(*file.stats);
  else
    j["stats"] = nullptr;
  return j;
}

io::DatasetFile cmd_gen_data(const ExperimentConfig& cfg, const fs::path& out_dir, const Logger& log) {
  say(log, "building the " + std::to_string(cfg.kl_terms) + "-term KL basis");
  const KLBasis basis = kl_basis(cfg);
  say(log, "generating " + std::to_string(cfg.dataset_size) + " samples");
  const FieldStack data = generate_samples_kl(cfg, basis, cfg.data_seed, cfg.dataset_size);
  std::optional<ChannelStats> stats;
  if (data.count() > 0) stats = ChannelStats::from_data(data);
  const io::DatasetFile file = io::make_dataset(data, stats);
  io::write_dataset(out_dir / "dataset.gifs", file);
  io::write_atomic(out_dir / "dataset.json", dataset_manifest(cfg, file).dump(2) + "\n");
  return file;
}

Session make_session(const ExperimentConfig& cfg, const ChannelStats& stats) {
  Session s;
  s.cfg = cfg;
  s.physics = std::make_unique<PhysicsLoss>(cfg.grid, cfg.boundary, zero_source(cfg.grid), cfg.physics);
  s.trainer = std::make_unique<Trainer>(cfg.network, cfg.train, *s.physics, stats);
  return s;
}

Session load_session(const ExperimentConfig& cfg, const io::Checkpoint& ckpt) {
  require(ckpt.network.nx == cfg.grid.nx() && ckpt.network.ny == cfg.grid.ny(), ErrorCode::GridMismatch,
          "checkpoint was trained on a " + std::to_string(ckpt.network.nx) + "x" + std::to_string(ckpt.network.ny) +
              " grid");
  ExperimentConfig c = cfg;
  c.network = ckpt.network;
  c.train = ckpt.train;
  Session s = make_session(c, ckpt.stats);
  io::restore(ckpt, *s.trainer);
  return s;
}

fs::path cmd_train(const ExperimentConfig& cfg, const fs::path& dataset, const fs::path& out_dir,
                   const TrainOptions& opts) {
  const io::DatasetFile file = io::read_dataset(dataset);
  require(file.stats.has_value(), ErrorCode::InsufficientSamples, "dataset " + dataset.string() + " is empty");
  FieldStack data = file.to_stack(cfg.grid);
  file.stats->standardize(data);

  Session s = make_session(cfg, *file.stats);
  const fs::path ckpt_path = out_dir / "checkpoint.gick";
  const fs::path log_path = out_dir / "train_log.csv";
  std::string log_text = "iteration,d_loss,d_fake,d_real,gp,g_loss,g_adversarial,residual,boundary\n";
  if (opts.resume) {
    const io::Checkpoint ck = io::read_checkpoint(*opts.resume);
    require(ck.network == s.trainer->network_config(), ErrorCode::ShapeMismatch,
            "resume checkpoint does not match the configured network");
    io::restore(ck, *s.trainer);
    if (fs::exists(log_path)) log_text = io::read_file(log_path);
  }

  auto save = [&] {
    io::write_checkpoint(ckpt_path, io::capture(*s.trainer));
    io::write_atomic(log_path, log_text);
  };
  if (!opts.resume) save();

  const auto on_iteration = [&](const IterationLog& e) {
    log_text += std::to_string(e.iteration) + ',' + num(e.d_loss) + ',' + num(e.d_fake) + ',' + num(e.d_real) + ',' +
                num(e.gp) + ',' + num(e.g_loss) + ',' + num(e.g_adversarial) + ',' + num(e.residual) + ',' +
                num(e.boundary) + '\n';
  };
  int done = 0;
  while (s.trainer->iteration() < cfg.train.total_g_iterations && (opts.max_new < 0 || done < opts.max_new)) {
    int chunk = cfg.checkpoint_every - s.trainer->iteration() % cfg.checkpoint_every;
    if (opts.max_new >= 0) chunk = std::min(chunk, opts.max_new - done);
    const int before = s.trainer->iteration();
    try {
      s.trainer->run(data, chunk, on_iteration);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Divergence) {
        io::write_atomic(log_path, log_text);
        say(opts.log, std::string("training diverged; keeping the checkpoint at ") + ckpt_path.string());
      }
      throw;
    }
    done += s.trainer->iteration() - before;
    save();
    const IterationLog& last = s.trainer->log().back();
    say(opts.log, "iteration " + std::to_string(last.iteration) + "  d " + num(last.d_loss) + "  g " +
                      num(last.g_loss) + "  L_r " + num(last.residual) + "  L_b " + num(last.boundary));
  }
  return ckpt_path;
}

UncondReport evaluate_unconditional(Session& s, int n, std::uint64_t seed, const FieldStack* reference,
                                    int spectrum_terms) {
  require(n >= 1, ErrorCode::InvalidArgument, "need at least one sample");
  const GridSpec& grid = s.cfg.grid;
  const Field source = zero_source(grid);
  UncondReport r;
  r.n = n;
  const FieldStack samples = generate_samples(s.generator(), s.stats(), grid, n, seed);
  for (std::size_t i = 0; i < samples.count(); ++i) {
    r.residual.push_back(residual_loss(samples.sample(i), grid, source, s.cfg.physics));
    r.boundary.push_back(boundary_loss(samples.sample(i), grid, s.cfg.boundary));
  }
  r.mean_residual = mean_of(r.residual);
  r.mean_boundary = mean_of(r.boundary);
  r.consistency = consistency_check(s.generator(), s.stats(), grid, n, s.cfg.boundary, source, s.cfg.solver, seed);
  if (n >= 2) {
    const int k = std::min<int>(spectrum_terms, static_cast<int>(grid.size()));
    r.lnk_spectrum = dataset_spectrum(samples, Channel::LnK, k);
    r.h_spectrum = dataset_spectrum(samples, Channel::Head, k);
    if (reference && reference->count() >= 2) {
      r.lnk_spectrum->reference = dataset_spectrum(*reference, Channel::LnK, k).eigenvalues;
      r.h_spectrum->reference = dataset_spectrum(*reference, Channel::Head, k).eigenvalues;
    }
  }
  return r;
}

void write_uncond_report(const UncondReport& r, const fs::path& out_dir) {
  std::ostringstream res;
  res << "sample,residual,boundary\n";
  for (std::size_t i = 0; i < r.residual.size(); ++i)
    res << i << ',' << num(r.residual[i]) << ',' << num(r.boundary[i]) << '\n';
  io::write_atomic(out_dir / "residual.csv", res.str());

  std::ostringstream con;
  con << "sample,h_rmse,h_ssim,solver_failed\n";
  for (std::size_t i = 0; i < r.consistency.rmse.size(); ++i)
    con << i << ',' << num(r.consistency.rmse[i]) << ',' << num(r.consistency.ssim[i]) << ','
        << (r.consistency.failed[i] ? 1 : 0) << '\n';
  io::write_atomic(out_dir / "consistency.csv", con.str());

  if (r.lnk_spectrum) io::write_atomic(out_dir / "spectrum_lnk.csv", spectrum_csv(*r.lnk_spectrum));
  if (r.h_spectrum) io::write_atomic(out_dir / "spectrum_h.csv", spectrum_csv(*r.h_spectrum));

  Json summary;
  summary["samples"] = r.n;
  summary["mean_residual"] = r.mean_residual;
  summary["mean_boundary"] = r.mean_boundary;
  summary["mean_h_rmse"] = r.consistency.mean_rmse;
  summary["mean_h_ssim"] = r.consistency.mean_ssim;
  if (r.h_spectrum && !r.h_spectrum->cumulative.empty())
    summary["h_top_k_energy"] = r.h_spectrum->cumulative.back();
  io::write_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
}

UncondReport cmd_eval_uncond(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& dataset, int n,
                             const fs::path& out_dir, const Logger& log) {
  Session s = load_session(cfg, io::read_checkpoint(checkpoint));
  std::optional<FieldStack> reference;
  if (!dataset.empty()) reference = io::read_dataset(dataset).to_stack(cfg.grid);
  say(log, "evaluating " + std::to_string(n) + " generated samples");
  UncondReport r = evaluate_unconditional(s, n, cfg.eval_seed, reference ? &*reference : nullptr);
  write_uncond_report(r, out_dir);
  const FieldStack shown = generate_samples(s.generator(), s.stats(), cfg.grid, std::min(n, 4), cfg.eval_seed);
  for (std::size_t i = 0; i < shown.count(); ++i)
    write_pgms(shown.sample(i), cfg.grid, out_dir / "images", "sample" + std::to_string(i));
  return r;
}

CaseReport run_case(Session& s, const FieldStack& truths, const MeasurementCase& c, const InpaintConfig& icfg,
                    const Logger& log) {
  require(c.n_k > 0 || c.n_h > 0, ErrorCode::EmptyMeasurements, "a case needs at least one observation");
  const GridSpec& grid = s.cfg.grid;
  CaseReport rep;
  rep.measurement = c;
  std::vector<double> rmses, r2s, field_rmses;
  for (std::size_t t = 0; t < truths.count(); ++t) {
    const MeasurementSet meas = sample_measurements(truths.sample(t), grid, static_cast<std::size_t>(c.n_k),
                                                    static_cast<std::size_t>(c.n_h), s.cfg.truth_seed + t);
    InpaintConfig tc = icfg;
    tc.seed = icfg.seed + t;
    const InpaintResult res = inpaint(s.generator(), s.critic(), s.stats(), meas, tc);
    const Field truth_lnk = truths.field(t, Channel::LnK);
    for (std::size_t r = 0; r < res.restarts.size(); ++r) {
      const RestartResult& rr = res.restarts[r];
      if (rr.failed) continue;
      const Field pred = channel_field(rr.sample, grid, Channel::LnK);
      CaseRun run{static_cast<int>(t), static_cast<int>(r), rmse(truth_lnk, pred), r_squared(truth_lnk, pred),
                  rr.context};
      rmses.push_back(run.rmse);
      r2s.push_back(run.r2);
      rep.runs.push_back(run);
    }
    rep.failures += static_cast<int>(res.failures);
    field_rmses.push_back(rmse(truth_lnk, channel_field(res.mean, grid, Channel::LnK)));
  }
  rep.rmse_mean = mean_of(rmses);
  rep.rmse_std = std_of(rmses);
  rep.r2_mean = mean_of(r2s);
  rep.r2_std = std_of(r2s);
  rep.mean_field_rmse = mean_of(field_rmses);
  say(log, "case (" + std::to_string(c.n_k) + "," + std::to_string(c.n_h) + "): lnK RMSE " + num(rep.rmse_mean) +
               " +- " + num(rep.rmse_std) + ", R2 " + num(rep.r2_mean) + " +- " + num(rep.r2_std));
  return rep;
}

void write_case_reports(const std::vector<CaseReport>& reports, const fs::path& path) {
  std::ostringstream out;
  out << "n_k,n_h,runs,failures,rmse_mean,rmse_std,r2_mean,r2_std,mean_field_rmse\n";
  for (const CaseReport& r : reports)
    out << r.measurement.n_k << ',' << r.measurement.n_h << ',' << r.runs.size() << ',' << r.failures << ','
        << num(r.rmse_mean) << ',' << num(r.rmse_std) << ',' << num(r.r2_mean) << ',' << num(r.r2_std) << ','
        << num(r.mean_field_rmse) << '\n';
  io::write_atomic(path, out.str());

  std::ostringstream runs;
  runs << "n_k,n_h,truth,restart,rmse,r2,context\n";
  for (const CaseReport& r : reports)
    for (const CaseRun& run : r.runs)
      runs << r.measurement.n_k << ',' << r.measurement.n_h << ',' << run.truth << ',' << run.restart << ','
           << num(run.rmse) << ',' << num(run.r2) << ',' << num(run.context) << '\n';
  fs::path runs_path = path;
  runs_path.replace_extension(".runs.csv");
  io::write_atomic(runs_path, runs.str());
}

std::vector<CaseReport> cmd_inpaint(const ExperimentConfig& cfg, const fs::path& checkpoint, const fs::path& out_dir,
                                    const Logger& log) {
  require(!cfg.cases.empty(), ErrorCode::Config, "no measurement cases configured");
  Session s = load_session(cfg, io::read_checkpoint(checkpoint));
  say(log, "drawing " + std::to_string(cfg.truths) + " held-out truths");
  const FieldStack truths = held_out_truths(cfg, kl_basis(cfg), cfg.truths);
  std::vector<CaseReport> reports;
  for (const MeasurementCase& c : cfg.cases) reports.push_back(run_case(s, truths, c, cfg.inpaint, log));
  write_case_reports(reports, out_dir / "cases.csv");
  write_pgms(truths.sample(0), cfg.grid, out_dir / "images", "truth0");
  return reports;
}

std::vector<double> retained_energy_column(const KLBasis& basis, const std::vector<int>& dims,
                                           EnergyDenominator denominator) {
  std::vector<double> out;
  for (int d : dims)
    out.push_back(d >= 1 && d <= basis.truncation() ? retained_energy(basis, d, denominator)
                                                     : std::numeric_limits<double>::quiet_NaN());
  return out;
}

std::vector<ZdimRow> cmd_zdim_study(const ExperimentConfig& cfg, const fs::path& dataset, const fs::path& out_dir,
                                    const Logger& log) {
  require(!cfg.zdim_study.empty(), ErrorCode::Config, "zdim_study is empty");
  const KLBasis basis = kl_basis(cfg);
  const auto trunc = retained_energy_column(basis, cfg.zdim_study, EnergyDenominator::TruncatedTotal);
  const auto full = retained_energy_column(basis, cfg.zdim_study, EnergyDenominator::FullTrace);
  const FieldStack truths = held_out_truths(cfg, basis, cfg.truths);
  std::vector<ZdimRow> rows;
  for (std::size_t i = 0; i < cfg.zdim_study.size(); ++i) {
    ExperimentConfig c = cfg;
    c.network.z_dim = cfg.zdim_study[i];
    c.finalize();
    const fs::path dir = out_dir / ("z" + std::to_string(c.network.z_dim));
    say(log, "training with z_dim " + std::to_string(c.network.z_dim));
    const fs::path ck = cmd_train(c, dataset, dir, TrainOptions{std::nullopt, -1, log});
    Session s = load_session(c, io::read_checkpoint(ck));
    ZdimRow row;
    row.z_dim = c.network.z_dim;
    row.energy_truncated = trunc[i];
    row.energy_full = full[i];
    row.report = run_case(s, truths, cfg.zdim_case, cfg.inpaint, log);
    rows.push_back(row);
  }
  std::ostringstream out;
  out << "z_dim,energy_truncated,energy_full,rmse_mean,rmse_std,r2_mean,r2_std\n";
  for (const ZdimRow& r : rows)
    out << r.z_dim << ',' << num(r.energy_truncated) << ',' << num(r.energy_full) << ',' << num(r.report.rmse_mean)
        << ',' << num(r.report.rmse_std) << ',' << num(r.report.r2_mean) << ',' << num(r.report.r2_std) << '\n';
  io::write_atomic(out_dir / "zdim_study.csv", out.str());
  return rows;
}

void cmd_solve(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out_dir) {
  const FieldStack one = generate_samples_kl(cfg, kl_basis(cfg), seed, 1);
  static const char* names[] = {"lnk", "h", "f1", "f2"};
  for (int c = 0; c < kChannels; ++c) {
    const Field f = one.field(0, static_cast<Channel>(c));
    std::ostringstream csv;
    for (int j = cfg.grid.ny() - 1; j >= 0; --j) {
      for (int i = 0; i < cfg.grid.nx(); ++i) csv << (i ? "," : "") << num(f.at(i, j));
      csv << '\n';
    }
    io::write_atomic(out_dir / (std::string(names[c]) + ".csv"), csv.str());
  }
  write_pgms(one.sample(0), cfg.grid, out_dir, "solve");
}

void cmd_spectrum(const ExperimentConfig& cfg, const fs::path& out_dir, const Logger& log) {
  const KLBasis basis = kl_basis(cfg, false);
  std::ostringstream out;
  out << "k,eigenvalue,energy_full_trace,energy_truncated_total\n";
  for (int k = 1; k <= basis.truncation(); ++k)
    out << k << ',' << num(basis.eigenvalues[k - 1]) << ','
        << num(retained_energy(basis, k, EnergyDenominator::FullTrace)) << ','
        << num(retained_energy(basis, k, EnergyDenominator::TruncatedTotal)) << '\n';
  io::write_atomic(out_dir / "kl_spectrum.csv", out.str());
  say(log, "top-" + std::to_string(basis.truncation()) + " energy over the full trace: " +
               num(100.0 * retained_energy(basis, basis.truncation(), EnergyDenominator::FullTrace)) + "%");
  for (int d : cfg.zdim_study)
    if (d <= basis.truncation())
      say(log, "k = " + std::to_string(d) + ": " +
                   num(100.0 * retained_energy(basis, d, EnergyDenominator::TruncatedTotal)) + "% of the " +
                   std::to_string(basis.truncation()) + "-term total, " +
                   num(100.0 * retained_energy(basis, d, EnergyDenominator::FullTrace)) + "% of the trace");
}

}  // namespace geoinpaint::pipeline
