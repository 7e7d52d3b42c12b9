#include "gdd/commands.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "gdd/error.hpp"
#include "gdd/imaging.hpp"

namespace gdd::cli {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<GrayImage> load_dir(const fs::path& dir) {
  std::vector<GrayImage> images;
  for (const auto& path : list_images(dir)) images.push_back(load_image(path));
  if (images.empty()) throw IoError("no .pgm/.ppm images in '" + dir.string() + "'");
  return images;
}

std::string fmt_real(double v) { return fmt::format("{:.17g}", v); }

std::string join(std::span<const double> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? " " : "") + fmt_real(values[i]);
  return out;
}

fs::path checkpoint_path(const RunConfig& config) {
  return config.checkpoint.empty() ? config.output_dir / "checkpoint.txt" : config.checkpoint;
}

ParamVector calibrated_initial(const RunConfig& config, const Hyper& hyper,
                               const std::vector<Vector>& noisy_patches) {
  std::vector<Vector> first(noisy_patches.begin(),
                            noisy_patches.begin() + std::min<std::ptrdiff_t>(
                                                        std::max(config.batch_size, 1),
                                                        static_cast<std::ptrdiff_t>(noisy_patches.size())));
  return calibrate(ParamVector::initial(hyper, config.metric_init()), first, hyper);
}

}  // namespace

std::size_t cmd_corrupt(const RunConfig& config, std::ostream& log) {
  if (config.input.empty()) throw InvalidInput("corrupt: --input directory is required");
  const auto files = list_images(config.input);
  ensure_dir(config.output_dir);
  std::string manifest = "file,seed,sigma\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::uint64_t seed = config.seed + i;
    const GrayImage clean = load_image(files[i]);
    const GrayImage noisy = add_awgn(clean, config.sigma_test, seed);
    const fs::path out = config.output_dir / files[i].filename().replace_extension(".pgm");
    save_image(noisy, out);
    manifest += fmt::format("{},{},{}\n", out.filename().string(), seed, config.sigma_test);
    log << "corrupt " << files[i].filename().string() << " -> " << out.string() << '\n';
  }
  write_text(config.output_dir / "manifest.csv", manifest);
  return files.size();
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
  if (config.train_dir.empty()) throw InvalidInput("train: --train_dir is required");
  const std::vector<GrayImage> train_images = load_dir(config.train_dir);
  std::vector<GrayImage> val_images;
  if (!config.test_dir.empty()) val_images = load_dir(config.test_dir);

  TrainOptions options = config.train_options();
  const Dataset data =
      make_dataset(train_images, val_images, config.sigma_train, config.patch_side, config.seed);
  log << fmt::format("train: {} patches, {} validation images, {} parameters\n", data.train.size(),
                     data.validation.size(), ParamVector::packed_size(options.hyper));

  TrainResult result = train_loop(data, options, [&log](const EpochRecord& r) {
    log << fmt::format("epoch {:3d}  loss {:.6f}  val_psnr {:.3f}\n", r.epoch, r.train_loss, r.val_psnr);
  });

  ensure_dir(config.output_dir);
  Checkpoint cp{options.hyper, result.state.params};
  const fs::path cp_path = checkpoint_path(config);
  if (cp_path.has_parent_path()) ensure_dir(cp_path.parent_path());
  write_checkpoint(cp, cp_path);

  std::string history = "epoch,train_loss,val_psnr\n";
  for (const EpochRecord& r : result.history) {
    history += fmt::format("{},{},{}\n", r.epoch, fmt_real(r.train_loss), fmt_real(r.val_psnr));
  }
  write_text(config.output_dir / "history.csv", history);
  write_text(config.output_dir / "train_run.cfg", format_config(config));
  log << "checkpoint written to " << cp_path.string() << '\n';
  return result;
}

DenoiseReport cmd_denoise(const RunConfig& config, std::ostream& log) {
  if (config.input.empty()) throw InvalidInput("denoise: --input image is required");
  const GrayImage noisy = load_image(config.input);

  Hyper hyper;
  ParamVector params;
  if (!config.checkpoint.empty()) {
    const Checkpoint cp = read_checkpoint(config.checkpoint);
    hyper = cp.hyper;
    params = cp.params;
  } else {
    hyper = config.hyper();
    params = calibrated_initial(config, hyper, partition(noisy, config.patch_side).patches);
  }
  hyper.cg_mode = config.cg_mode;

  const GrayImage denoised = denoise_image(params, noisy, config.patch_side, hyper);
  ensure_dir(config.output_dir);
  DenoiseReport report;
  report.output = config.output_dir / (config.input.stem().string() + "_denoised.pgm");
  save_image(denoised, report.output);
  log << "denoised image written to " << report.output.string() << '\n';

  if (!config.ground_truth.empty()) {
    const GrayImage truth = load_image(config.ground_truth);
    report.has_psnr = true;
    report.psnr = psnr(crop(truth, denoised.width, denoised.height), denoised);
    log << fmt::format("psnr = {:.4f}\n", report.psnr);
  }
  return report;
}

std::vector<EvalRow> cmd_eval(const RunConfig& config, std::ostream& log) {
  if (config.test_dir.empty()) throw InvalidInput("eval: --test_dir is required");
  if (config.checkpoint.empty()) throw InvalidInput("eval: --checkpoint is required");
  const Checkpoint cp = read_checkpoint(config.checkpoint);
  Hyper hyper = cp.hyper;
  hyper.cg_mode = config.cg_mode;
  const std::vector<GrayImage> images = load_dir(config.test_dir);
  const MetricFactor bf_metric = ParamVector::initial(hyper, config.metric_init()).metric(hyper.feature_dim);

  std::vector<EvalRow> rows;
  for (const double sigma : config.eval_sigmas) {
    std::vector<GrayImage> noisy;
    std::vector<Vector> noisy_patches;
    for (std::size_t i = 0; i < images.size(); ++i) {
      noisy.push_back(add_awgn(images[i], sigma, config.seed + i));
      for (auto& p : partition(noisy.back(), config.patch_side).patches) noisy_patches.push_back(std::move(p));
    }
    const ParamVector init = calibrated_initial(config, hyper, noisy_patches);

    EvalRow row;
    row.sigma = sigma;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const GrayImage bf = bilateral_filter_image(bf_metric, noisy[i], config.patch_side, hyper);
      const GrayImage clean = crop(images[i], bf.width, bf.height);
      row.noisy_psnr += psnr(clean, crop(noisy[i], bf.width, bf.height));
      row.bf_psnr += psnr(clean, bf);
      row.gdd_init_psnr += psnr(clean, denoise_image(init, noisy[i], config.patch_side, hyper));
      row.gdd_trained_psnr += psnr(clean, denoise_image(cp.params, noisy[i], config.patch_side, hyper));
    }
    const double count = static_cast<double>(images.size());
    row.noisy_psnr /= count;
    row.bf_psnr /= count;
    row.gdd_init_psnr /= count;
    row.gdd_trained_psnr /= count;
    log << fmt::format("sigma {:5.1f}  noisy {:.3f}  bf {:.3f}  gdd_init {:.3f}  gdd_trained {:.3f}\n",
                       sigma, row.noisy_psnr, row.bf_psnr, row.gdd_init_psnr, row.gdd_trained_psnr);
    rows.push_back(row);
  }

  ensure_dir(config.output_dir);
  std::string csv = "sigma,noisy_psnr,bf_psnr,gdd_init_psnr,gdd_trained_psnr\n";
  for (const EvalRow& r : rows) {
    csv += fmt::format("{},{},{},{},{}\n", fmt_real(r.sigma), fmt_real(r.noisy_psnr), fmt_real(r.bf_psnr),
                       fmt_real(r.gdd_init_psnr), fmt_real(r.gdd_trained_psnr));
  }
  write_text(config.output_dir / "eval.csv", csv);
  write_text(config.output_dir / "eval_run.cfg", format_config(config));
  return rows;
}

std::string cmd_inspect(const RunConfig& config, std::ostream& log) {
  if (config.checkpoint.empty()) throw InvalidInput("inspect: --checkpoint is required");
  const Checkpoint cp = read_checkpoint(config.checkpoint);
  const Hyper& h = cp.hyper;
  const MetricFactor c = cp.params.metric(h.feature_dim);

  std::string out;
  auto kv = [&out](const std::string& key, const std::string& value) {
    out += key + " = " + value + "\n";
  };
  kv("format", "gdd-inspect 1");
  kv("feature_dim", std::to_string(h.feature_dim));
  kv("K", std::to_string(h.tse_degree));
  kv("T", std::to_string(h.cg_depth));
  kv("window_radius", std::to_string(h.window_radius));
  kv("s", fmt_real(h.expansion_point));
  kv("parameter_count", std::to_string(cp.params.size()));
  for (int r = 0; r < c.dim(); ++r) {
    Vector row(c.dim());
    for (int col = 0; col < c.dim(); ++col) row[col] = c(r, col);
    kv(fmt::format("metric_factor.row{}", r), join(row));
  }
  const Vector m = c.metric();
  for (int r = 0; r < c.dim(); ++r) {
    kv(fmt::format("metric.row{}", r), join(std::span<const double>(m).subspan(r * c.dim(), c.dim())));
  }
  const Vector eig = c.metric_eigenvalues();
  kv("metric.eigenvalues", join(eig));
  kv("metric.psd", eig.front() >= -1e-10 ? "true" : "false");
  kv("tse_coeffs", join(cp.params.tse_coeffs));
  kv("cg_alpha", join(cp.params.cg_alpha));
  kv("cg_beta", join(cp.params.cg_beta));

  if (!config.input.empty()) {
    const GrayImage image = load_image(config.input);
    const PatchGrid grid = partition(image, config.patch_side);
    std::size_t non_pd = 0;
    for (std::size_t p = 0; p < grid.patches.size(); ++p) {
      const DenoiserOperator psi = build_denoiser(c, grid.patches[p], config.patch_side, h);
      const SpectrumEstimate est = estimate_spectrum(psi, 300);
      if (!est.positive_definite()) ++non_pd;
      kv(fmt::format("patch{}.origin", p), fmt::format("{} {}", grid.origins[p].row, grid.origins[p].col));
      kv(fmt::format("patch{}.lambda_min", p), fmt_real(est.lambda_min));
      kv(fmt::format("patch{}.lambda_max", p), fmt_real(est.lambda_max));
      kv(fmt::format("patch{}.positive_definite", p), est.positive_definite() ? "true" : "false");
    }
    kv("patches", std::to_string(grid.patches.size()));
    kv("patches_not_positive_definite", std::to_string(non_pd));
  }

  ensure_dir(config.output_dir);
  write_text(config.output_dir / "inspect.txt", out);
  log << out;
  return out;
}

std::vector<fs::path> cmd_synth(const RunConfig& config, int count, int size, std::ostream& log) {
  if (count <= 0 || size <= 0) throw InvalidInput("synth: count and size must be positive");
  ensure_dir(config.output_dir);
  std::vector<fs::path> written;
  for (int i = 0; i < count; ++i) {
    const fs::path path = config.output_dir / fmt::format("synthetic_{:02d}.pgm", i);
    save_image(make_synthetic_image(size, size, config.seed + static_cast<std::uint64_t>(i)), path);
    written.push_back(path);
    log << "wrote " << path.string() << '\n';
  }
  return written;
}

}  // namespace gdd::cli
