// Command-line front end: staged training, sampling, interpolation,
// evaluation, and the embedding-size ablation.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "aegan/aegan.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

using namespace aegan;
namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::string data = "synthetic";
  std::string checkpoint_path;
  std::string out = ".";
  int64_t seed = -1;  // -1: keep config value
  int64_t data_count = 2000;
};

void apply_thread_env() {
  if (const char* env = std::getenv("AEGAN_THREADS")) {
    int n = std::atoi(env);
    if (n < 1)
      throw UsageError("AEGAN_THREADS must be a positive integer, got '" +
                       std::string(env) + "'");
    openblas_set_num_threads(n);
  } else {
    openblas_set_num_threads(1);
  }
}

AppConfig resolve_config(const CommonArgs& args) {
  AppConfig cfg = args.config_path.empty() ? AppConfig{}
                                           : load_config(args.config_path);
  if (args.seed >= 0) {
    cfg.ae.seed = cfg.gan.seed = cfg.finetune.seed =
        static_cast<uint64_t>(args.seed);
  }
  return cfg;
}

void echo_config(const AppConfig& cfg) {
  std::cout << "# resolved configuration\n" << serialize_config(cfg)
            << std::flush;
}

DatasetHandle open_dataset(const CommonArgs& args, int resolution,
                           uint64_t seed) {
  if (args.data == "synthetic" || args.data.rfind("synthetic:", 0) == 0) {
    auto kind = SyntheticDataset::Kind::Shapes;
    if (args.data.rfind("synthetic:", 0) == 0)
      kind = SyntheticDataset::parse_kind(args.data.substr(10));
    return synthetic_dataset(kind, args.data_count, resolution, seed);
  }
  return load_dataset(args.data, resolution, seed);
}

void require_same_geometry(const NetworkConfig& a, const NetworkConfig& b) {
  if (a.resolution != b.resolution ||
      a.embedding_spatial != b.embedding_spatial ||
      a.embedding_channels != b.embedding_channels ||
      a.noise_dim != b.noise_dim || a.base_channels != b.base_channels ||
      a.generator_seed_spatial != b.generator_seed_spatial ||
      a.denoiser_downscale != b.denoiser_downscale)
    throw UsageError("config geometry does not match checkpoint geometry");
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out))
    throw DataError("cannot create output directory " + out);
}

LoadedCheckpoint require_checkpoint(const CommonArgs& args,
                                    const char* needed_for) {
  if (args.checkpoint_path.empty())
    throw UsageError(std::string(needed_for) + " requires --checkpoint");
  return load_checkpoint(args.checkpoint_path);
}

// One stage of Algorithm 1, shared driver.
int run_stage(const CommonArgs& args, Stage stage) {
  AppConfig cfg = resolve_config(args);

  Model model;
  TrainState state;
  if (stage == Stage::AE) {
    if (!args.checkpoint_path.empty()) {
      auto loaded = load_checkpoint(args.checkpoint_path);
      if (!args.config_path.empty())
        require_same_geometry(cfg.net, loaded.model.cfg);
      model = std::move(loaded.model);
      state = std::move(loaded.state);
    } else {
      model = Model(cfg.net, cfg.stage_config(stage).seed);
    }
  } else {
    auto loaded = require_checkpoint(
        args, stage == Stage::GAN ? "train-gan" : "finetune");
    if (!args.config_path.empty())
      require_same_geometry(cfg.net, loaded.model.cfg);
    model = std::move(loaded.model);
    state = std::move(loaded.state);
  }
  cfg.net = model.cfg;  // checkpoint geometry is authoritative
  echo_config(cfg);
  ensure_out_dir(args.out);
  TrainConfig tc = cfg.stage_config(stage);

  const std::string name = stage_name(stage);
  const std::string latest = args.out + "/" + name + "_latest.ckpt";
  size_t last_reported = 0;
  auto on_epoch = [&](const TrainState& s) {
    if (!s.history.empty()) {
      const auto& r = s.history.back();
      std::cerr << name << " epoch " << s.epoch << " step " << r.step << " "
                << r.name << "=" << r.value << "\n";
    }
    if (tc.checkpoint_every > 0 && s.epoch % tc.checkpoint_every == 0)
      save_checkpoint(model, s, latest);
    (void)last_reported;
  };
  switch (stage) {
    case Stage::AE: train_autoencoder(model, *open_dataset(args, cfg.net.resolution, tc.seed), tc, state, on_epoch); break;
    case Stage::GAN: train_gan(model, *open_dataset(args, cfg.net.resolution, tc.seed), tc, state, on_epoch); break;
    case Stage::FINETUNE: finetune_joint(model, *open_dataset(args, cfg.net.resolution, tc.seed), tc, state, on_epoch); break;
  }
  save_checkpoint(model, state, args.out + "/" + name + ".ckpt");
  write_loss_history(state.history, args.out + "/" + name + "_losses.csv");
  std::cout << "wrote " << args.out << "/" << name << ".ckpt\n";
  return 0;
}

int run_sample(const CommonArgs& args, int count, bool no_denoiser) {
  auto loaded = require_checkpoint(args, "sample");
  ensure_out_dir(args.out);
  uint64_t seed = args.seed >= 0 ? args.seed : 0;
  auto images = sample_images(loaded.model, count, seed, !no_denoiser);
  for (int i = 0; i < count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%05d.png", i);
    write_image(images, i, args.out + "/" + buf);
  }
  int columns = std::max(1, static_cast<int>(std::ceil(std::sqrt(count))));
  write_grid(images, columns, args.out + "/grid.png");
  std::cout << "wrote " << count << " samples + grid to " << args.out << "\n";
  return 0;
}

int run_interpolate(const CommonArgs& args, int steps, bool no_denoiser) {
  auto loaded = require_checkpoint(args, "interpolate");
  ensure_out_dir(args.out);
  uint64_t seed = args.seed >= 0 ? args.seed : 0;
  std::mt19937_64 rng(seed);
  const int d = loaded.model.cfg.noise_dim;
  auto z_a = TensorF::randn({d}, rng);
  auto z_b = TensorF::randn({d}, rng);
  auto strip = interpolate(loaded.model, z_a, z_b, steps, !no_denoiser);
  write_grid(strip, steps, args.out + "/interpolation.png");
  std::cout << "wrote " << args.out << "/interpolation.png\n";
  return 0;
}

int run_evaluate(const CommonArgs& args, int count, bool no_denoiser) {
  auto loaded = require_checkpoint(args, "evaluate");
  ensure_out_dir(args.out);
  const auto& net = loaded.model.cfg;
  uint64_t seed = args.seed >= 0 ? args.seed : 0;
  auto data = open_dataset(args, net.resolution, seed);
  if (data->size() < count)
    throw DataError("evaluate: need " + std::to_string(count) +
                    " real images, dataset has " +
                    std::to_string(data->size()));

  ConvFeatureExtractor extractor(net.resolution, data->num_classes(),
                                 net.base_channels / 2 > 0 ? net.base_channels / 2 : 8,
                                 64, seed + 17);
  std::cerr << "training feature extractor...\n";
  extractor.train(*data, 3, 32, 1e-3f, seed + 18);

  EvalProtocol proto;
  proto.sample_count = count;
  proto.seed = seed + 19;
  // cap scale count so the window fits the resolution
  int max_scales = 1;
  while (max_scales < 5 &&
         net.resolution / (1 << max_scales) >= 11)
    ++max_scales;
  proto.msssim_scales = std::min(proto.msssim_scales, max_scales);

  Sampler sampler(loaded.model, seed + 20, !no_denoiser);
  auto report = evaluate([&](int n) { return sampler.next(n); },
                         dataset_source(data, seed + 21), extractor, proto);
  std::cout << report.table(true);
  report.write_csv(args.out + "/metrics.csv");
  std::cout << "wrote " << args.out << "/metrics.csv\n";
  return 0;
}

// Mean absolute high-frequency residual (image minus 2x box blur).
double high_freq_residual(const TensorF& images) {
  const auto& s = images.shape();
  const int n = static_cast<int>(s[0]), r = static_cast<int>(s[2]);
  const float* v = images.values().data();
  double total = 0;
  int64_t count = 0;
  for (int i = 0; i < n * 3; ++i) {
    const float* plane = v + static_cast<int64_t>(i) * r * r;
    for (int y = 0; y + 1 < r; y += 2)
      for (int x = 0; x + 1 < r; x += 2) {
        float mean = 0.25f * (plane[y * r + x] + plane[y * r + x + 1] +
                              plane[(y + 1) * r + x] +
                              plane[(y + 1) * r + x + 1]);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            total += std::abs(plane[(y + dy) * r + x + dx] - mean);
            ++count;
          }
      }
  }
  return total / count;
}

int run_ablate(const CommonArgs& args, int embedding_spatial) {
  AppConfig cfg = resolve_config(args);
  cfg.net.embedding_spatial = embedding_spatial;
  if (cfg.net.generator_seed_spatial > embedding_spatial)
    cfg.net.generator_seed_spatial = embedding_spatial;
  cfg.net.validate();
  echo_config(cfg);
  ensure_out_dir(args.out);
  TrainConfig tc = cfg.ae;

  auto data = open_dataset(args, cfg.net.resolution, tc.seed);
  Model model(cfg.net, tc.seed);
  TrainState state;
  train_autoencoder(model, *data, tc, state, [&](const TrainState& s) {
    std::cerr << "ablate epoch " << s.epoch << " L_AE="
              << s.history.back().value << "\n";
  });

  // held-out reconstruction and decoded high-frequency energy
  auto held = synthetic_dataset(SyntheticDataset::Kind::Shapes, 64,
                                cfg.net.resolution, tc.seed + 999);
  auto order = epoch_order(held->size(), 0, 0);
  auto x = make_batch(*held, order, 0, 64);
  auto recon = detach(model.decode(model.encode(x)));
  double l1 = l1_loss(recon, x).item();
  double residual = high_freq_residual(recon);
  std::ofstream out(args.out + "/ablation.csv");
  if (!out) throw DataError("cannot write " + args.out + "/ablation.csv");
  out << "embedding_spatial,held_out_l1,high_freq_residual\n";
  out << embedding_spatial << "," << l1 << "," << residual << "\n";
  std::cout << "embedding_spatial=" << embedding_spatial
            << " held_out_l1=" << l1 << " high_freq_residual=" << residual
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"auto-embedding GAN trainer and evaluator"};
  app.require_subcommand(1);

  CommonArgs args;
  int count = 16, steps = 10, embedding_spatial = 8;
  bool no_denoiser = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "configuration file");
    cmd->add_option("--data", args.data,
                    "image folder, or synthetic[:shapes|:gradients]");
    cmd->add_option("--checkpoint", args.checkpoint_path, "checkpoint to load");
    cmd->add_option("--out", args.out, "output directory");
    cmd->add_option("--seed", args.seed, "seed override");
    cmd->add_option("--data-count", args.data_count,
                    "synthetic dataset size");
  };

  auto* train_ae = app.add_subcommand("train-ae", "Step 1: autoencoder");
  add_common(train_ae);
  auto* train_gan = app.add_subcommand(
      "train-gan", "Step 2: embedding GAN + denoiser (requires Step 1 checkpoint)");
  add_common(train_gan);
  auto* finetune = app.add_subcommand("finetune", "Step 3: joint fine-tuning");
  add_common(finetune);

  auto* sample = app.add_subcommand("sample", "generate images");
  add_common(sample);
  sample->add_option("--count", count, "number of samples");
  sample->add_flag("--no-denoiser", no_denoiser, "skip the denoiser");

  auto* interp = app.add_subcommand("interpolate", "latent interpolation strip");
  add_common(interp);
  interp->add_option("--steps", steps, "frames including endpoints");
  interp->add_flag("--no-denoiser", no_denoiser, "skip the denoiser");

  auto* evaluate = app.add_subcommand("evaluate", "FID / IS / MS-SSIM report");
  add_common(evaluate);
  evaluate->add_option("--count", count, "samples per population");
  evaluate->add_flag("--no-denoiser", no_denoiser, "skip the denoiser");

  auto* ablate = app.add_subcommand("ablate-embedding",
                                    "autoencoder quality vs embedding size");
  add_common(ablate);
  ablate->add_option("--embedding-spatial", embedding_spatial,
                     "embedding spatial extent");

  try {
    app.parse(argc, argv);
    apply_thread_env();
    if (train_ae->parsed()) return run_stage(args, Stage::AE);
    if (train_gan->parsed()) return run_stage(args, Stage::GAN);
    if (finetune->parsed()) return run_stage(args, Stage::FINETUNE);
    if (sample->parsed()) return run_sample(args, count, no_denoiser);
    if (interp->parsed()) return run_interpolate(args, steps, no_denoiser);
    if (evaluate->parsed()) return run_evaluate(args, count, no_denoiser);
    if (ablate->parsed()) return run_ablate(args, embedding_spatial);
    return 2;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 3;
  } catch (const NumericalAbort& e) {
    std::cerr << "error: numerical: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
}
