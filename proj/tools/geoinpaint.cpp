#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "geoinpaint/config.hpp"
#include "geoinpaint/error.hpp"
#include "geoinpaint/pipeline.hpp"

using namespace geoinpaint;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string scale = "toy";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config");
  cmd->add_option("--scale", c.scale, "defaults to start from")->check(CLI::IsMember({"toy", "paper"}));
  cmd->add_option("--seed", c.seed, "override this command's seed");
  cmd->add_option("--out", c.out, "output directory");
}

ExperimentConfig resolve(const Common& c) {
  const ExperimentConfig base = c.scale == "paper" ? paper_config() : toy_config();
  return c.config.empty() ? base : load_config(c.config, base);
}

void log_line(const std::string& msg) { std::cerr << msg << std::endl; }

fs::path dataset_or_default(const std::string& given, const Common& c) {
  return given.empty() ? fs::path(c.out) / "dataset.gifs" : fs::path(given);
}

fs::path checkpoint_or_default(const std::string& given, const Common& c) {
  return given.empty() ? fs::path(c.out) / "checkpoint.gick" : fs::path(given);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed GAN inpainting of conductivity and head fields"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, inp_c, zd_c, solve_c, spec_c;
  std::string train_dataset, train_resume, eval_dataset, eval_ckpt, inp_ckpt, zd_dataset;
  int train_iters = -1;
  int eval_n = 0;

  auto* gen = app.add_subcommand("gen-data", "generate the paired training dataset");
  add_common(gen, gen_c);

  auto* train = app.add_subcommand("train", "train the generator and critic");
  add_common(train, train_c);
  train->add_option("--dataset", train_dataset, "dataset file (default OUT/dataset.gifs)");
  train->add_option("--checkpoint", train_resume, "resume from this checkpoint");
  train->add_option("--iterations", train_iters, "stop after this many new generator iterations");

  auto* eval = app.add_subcommand("eval-uncond", "spectra, residuals and solver consistency of generated samples");
  add_common(eval, eval_c);
  eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint (default OUT/checkpoint.gick)");
  eval->add_option("--dataset", eval_dataset, "training data for reference spectra");
  eval->add_option("-n,--samples", eval_n, "number of generated samples (default from config)");

  auto* inp = app.add_subcommand("inpaint", "reconstruct held-out fields from sparse measurements");
  add_common(inp, inp_c);
  inp->add_option("--checkpoint", inp_ckpt, "trained checkpoint (default OUT/checkpoint.gick)");

  auto* zd = app.add_subcommand("zdim-study", "train and inpaint for every latent size in zdim_study");
  add_common(zd, zd_c);
  zd->add_option("--dataset", zd_dataset, "dataset file (default OUT/dataset.gifs)");

  auto* solve = app.add_subcommand("solve", "solve the flow problem for one random conductivity field");
  add_common(solve, solve_c);

  auto* spec = app.add_subcommand("spectrum", "eigenvalues and retained energy of the conductivity prior");
  add_common(spec, spec_c);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ExperimentConfig cfg = resolve(gen_c);
      if (gen_c.seed) cfg.data_seed = *gen_c.seed;
      const io::DatasetFile f = pipeline::cmd_gen_data(cfg, gen_c.out, log_line);
      std::cout << "wrote " << f.count << " samples to " << (fs::path(gen_c.out) / "dataset.gifs").string() << '\n';
    } else if (train->parsed()) {
      ExperimentConfig cfg = resolve(train_c);
      if (train_c.seed) cfg.train.seed = *train_c.seed;
      pipeline::TrainOptions opts;
      if (!train_resume.empty()) opts.resume = train_resume;
      opts.max_new = train_iters;
      opts.log = log_line;
      const fs::path ck = pipeline::cmd_train(cfg, dataset_or_default(train_dataset, train_c), train_c.out, opts);
      std::cout << "checkpoint " << ck.string() << '\n';
    } else if (eval->parsed()) {
      ExperimentConfig cfg = resolve(eval_c);
      if (eval_c.seed) cfg.eval_seed = *eval_c.seed;
      const int n = eval_n > 0 ? eval_n : cfg.eval_samples;
      const auto r = pipeline::cmd_eval_uncond(cfg, checkpoint_or_default(eval_ckpt, eval_c),
                                               eval_dataset.empty() ? fs::path() : fs::path(eval_dataset), n,
                                               eval_c.out, log_line);
      std::cout << "mean L_r " << r.mean_residual << "  mean L_b " << r.mean_boundary << "  h RMSE "
                << r.consistency.mean_rmse << "  h SSIM " << r.consistency.mean_ssim << '\n';
    } else if (inp->parsed()) {
      ExperimentConfig cfg = resolve(inp_c);
      if (inp_c.seed) cfg.inpaint.seed = *inp_c.seed;
      const auto reports = pipeline::cmd_inpaint(cfg, checkpoint_or_default(inp_ckpt, inp_c), inp_c.out, log_line);
      std::cout << "n_k n_h  rmse_mean rmse_std  r2_mean r2_std\n";
      for (const auto& r : reports)
        std::cout << r.measurement.n_k << ' ' << r.measurement.n_h << "  " << r.rmse_mean << ' ' << r.rmse_std
                  << "  " << r.r2_mean << ' ' << r.r2_std << '\n';
    } else if (zd->parsed()) {
      ExperimentConfig cfg = resolve(zd_c);
      if (zd_c.seed) cfg.train.seed = *zd_c.seed;
      const auto rows = pipeline::cmd_zdim_study(cfg, dataset_or_default(zd_dataset, zd_c), zd_c.out, log_line);
      std::cout << "z_dim energy rmse_mean r2_mean\n";
      for (const auto& r : rows)
        std::cout << r.z_dim << ' ' << r.energy_truncated << ' ' << r.report.rmse_mean << ' ' << r.report.r2_mean
                  << '\n';
    } else if (solve->parsed()) {
      const ExperimentConfig cfg = resolve(solve_c);
      pipeline::cmd_solve(cfg, solve_c.seed.value_or(cfg.data_seed), solve_c.out);
      std::cout << "wrote fields to " << solve_c.out << '\n';
    } else if (spec->parsed()) {
      const ExperimentConfig cfg = resolve(spec_c);
      pipeline::cmd_spectrum(cfg, spec_c.out, [](const std::string& m) { std::cout << m << '\n'; });
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return classify(e.code()) == ErrorClass::Config ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
