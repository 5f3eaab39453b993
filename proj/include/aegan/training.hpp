#pragma once
// Staged training: autoencoder reconstruction, alternating embedding-GAN and
// denoiser adversarial training with the autoencoder frozen, and joint
// end-to-end fine-tuning with accumulated generator-side gradients.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "aegan/adam.hpp"
#include "aegan/data.hpp"
#include "aegan/errors.hpp"
#include "aegan/networks.hpp"
#include "aegan/tensor.hpp"

namespace aegan {

enum class Stage { AE, GAN, FINETUNE };

inline std::string stage_name(Stage s) {
  switch (s) {
    case Stage::AE: return "ae";
    case Stage::GAN: return "gan";
    default: return "finetune";
  }
}

struct TrainConfig {
  Stage stage = Stage::AE;
  float learning_rate = 1e-5f;
  int epochs = 100;
  int batch_size = 16;
  float lambda_pixel = 100.f;
  uint64_t seed = 0;
  int checkpoint_every = 10;
  // The minimax generator loss from the objective is available behind this
  // flag; the default follows the DCGAN-style non-saturating surrogate.
  bool saturating_generator_loss = false;

  static TrainConfig defaults_for(Stage s) {
    TrainConfig c;
    c.stage = s;
    switch (s) {
      case Stage::AE:
        c.learning_rate = 1e-5f;
        c.epochs = 100;
        break;
      case Stage::GAN:
        c.learning_rate = 2e-4f;
        c.epochs = 200;
        break;
      case Stage::FINETUNE:
        c.learning_rate = 1e-7f;
        c.epochs = 100;
        break;
    }
    return c;
  }
};

struct LossRecord {
  int64_t step = 0;
  std::string name;
  float value = 0;
};

struct TrainState {
  int64_t epoch = 0;
  int64_t global_step = 0;
  std::map<std::string, AdamF> optimizers;
  std::vector<LossRecord> history;

  void record(int64_t step, const std::string& name, float value) {
    if (!std::isfinite(value))
      throw NumericalAbort("non-finite " + name + " at step " +
                           std::to_string(step));
    history.push_back({step, name, value});
  }
};

using EpochCallback = std::function<void(const TrainState&)>;

inline void write_loss_history(const std::vector<LossRecord>& history,
                               const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write loss history to " + path);
  out << "step,name,value\n";
  for (const auto& r : history)
    out << r.step << "," << r.name << "," << r.value << "\n";
}

inline void zero_all_grads(const Model& model) {
  auto reg = model.all_params();
  for (auto& [name, t] : reg.params) t.zero_grad();
}

inline AdamF make_optimizer(const Model& model,
                            const std::vector<std::string>& subnets,
                            float lr) {
  AdamF opt(AdamConfig<float>{lr, 0.9f, 0.999f, 1e-8f});
  for (const auto& key : subnets) {
    auto reg = model.subnet_params(key);
    for (const auto& [name, t] : reg.params) opt.add_param(name, t);
  }
  return opt;
}

inline TensorF sample_noise(const NetworkConfig& cfg, int count,
                            std::mt19937_64& rng) {
  return TensorF::randn({count, cfg.noise_dim}, rng);
}

// -- Step 1: autoencoder ----------------------------------------------------

inline void train_autoencoder(Model& model, const Dataset& data,
                              const TrainConfig& cfg, TrainState& state,
                              const EpochCallback& on_epoch = {}) {
  check(cfg.stage == Stage::AE, "train_autoencoder: config stage must be AE");
  check(data.size() >= 1, "train_autoencoder: empty dataset");
  if (!state.optimizers.count("AE"))
    state.optimizers.emplace(
        "AE", make_optimizer(model, {"H", "F"}, cfg.learning_rate));
  auto& opt = state.optimizers.at("AE");
  for (int e = 0; e < cfg.epochs; ++e) {
    auto order = epoch_order(data.size(), cfg.seed, state.epoch);
    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      size_t count = std::min<size_t>(cfg.batch_size, order.size() - b);
      auto x = make_batch(data, order, b, count);
      auto recon = model.decode(model.encode(x, true), true);
      auto loss = l1_loss(recon, x);
      state.record(state.global_step, "L_AE", loss.item());
      loss.backward();
      opt.step();
      zero_all_grads(model);
      ++state.global_step;
    }
    ++state.epoch;
    if (on_epoch) on_epoch(state);
  }
}

// -- Step 2: embedding GAN + denoiser ---------------------------------------

// One discriminator update then one generator update in the embedding space.
// The autoencoder is frozen: real embeddings are computed in eval mode and
// detached, and no optimizer covers H or F here.
inline void gan_step(Model& model, const TensorF& real_batch,
                     const TrainConfig& cfg, TrainState& state,
                     std::mt19937_64& rng) {
  const int batch = static_cast<int>(real_batch.shape()[0]);
  auto& opt_d = state.optimizers.at("D_E");
  auto& opt_g = state.optimizers.at("G_E");

  auto e_real = detach(model.encode(real_batch, false));
  auto e_fake = detach(
      model.generate_embedding(sample_noise(model.cfg, batch, rng), true));
  auto d_loss = add(bce_with_logits(model.discriminate_embedding(e_real, true), 1.f),
                    bce_with_logits(model.discriminate_embedding(e_fake, true), 0.f));
  state.record(state.global_step, "L_DE", d_loss.item());
  d_loss.backward();
  opt_d.step();
  zero_all_grads(model);

  auto e_gen =
      model.generate_embedding(sample_noise(model.cfg, batch, rng), true);
  auto logits = model.discriminate_embedding(e_gen, true);
  auto g_loss = cfg.saturating_generator_loss
                    ? scale(bce_with_logits(logits, 0.f), -1.f)
                    : bce_with_logits(logits, 1.f);
  state.record(state.global_step, "L_GE", g_loss.item());
  g_loss.backward();
  opt_g.step();
  zero_all_grads(model);
}

// One D_R update then one denoiser update. The generation pipeline
// x_hat = F(G_E(z)) is frozen and detached.
inline void denoiser_step(Model& model, const TensorF& real_batch,
                          const TrainConfig& cfg, TrainState& state,
                          std::mt19937_64& rng) {
  const int batch = static_cast<int>(real_batch.shape()[0]);
  auto& opt_d = state.optimizers.at("D_R");
  auto& opt_phi = state.optimizers.at("phi");

  auto xhat = detach(model.decode(
      model.generate_embedding(sample_noise(model.cfg, batch, rng), false),
      false));
  auto denoised = model.denoise(xhat, true);

  auto d_loss = add(bce_with_logits(model.discriminate_image(real_batch, true), 1.f),
                    bce_with_logits(model.discriminate_image(detach(denoised), true), 0.f));
  state.record(state.global_step, "L_DR", d_loss.item());
  d_loss.backward();
  opt_d.step();
  zero_all_grads(model);

  auto logits = model.discriminate_image(denoised, true);
  auto adv = cfg.saturating_generator_loss
                 ? scale(bce_with_logits(logits, 0.f), -1.f)
                 : bce_with_logits(logits, 1.f);
  auto pixel = l1_loss(denoised, xhat);
  auto phi_loss = add(adv, scale(pixel, cfg.lambda_pixel));
  state.record(state.global_step, "L_phi", phi_loss.item());
  state.record(state.global_step, "L_phi_pixel", pixel.item());
  phi_loss.backward();
  opt_phi.step();
  zero_all_grads(model);
}

inline void train_gan(Model& model, const Dataset& data,
                      const TrainConfig& cfg, TrainState& state,
                      const EpochCallback& on_epoch = {}) {
  check(cfg.stage == Stage::GAN, "train_gan: config stage must be GAN");
  check(data.size() >= 1, "train_gan: empty dataset");
  for (const char* key : {"D_E", "G_E", "D_R", "phi"})
    if (!state.optimizers.count(key))
      state.optimizers.emplace(
          key, make_optimizer(model, {key}, cfg.learning_rate));
  const uint64_t frozen = param_checksum(model.subnet_params("H")) ^
                          param_checksum(model.subnet_params("F"));
  std::mt19937_64 rng(cfg.seed + 0x51ED270B8A1C63C5ull);
  for (int e = 0; e < cfg.epochs; ++e) {
    auto order = epoch_order(data.size(), cfg.seed, state.epoch);
    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      size_t count = std::min<size_t>(cfg.batch_size, order.size() - b);
      auto x = make_batch(data, order, b, count);
      gan_step(model, x, cfg, state, rng);
      denoiser_step(model, x, cfg, state, rng);
      ++state.global_step;
    }
    const uint64_t now = param_checksum(model.subnet_params("H")) ^
                         param_checksum(model.subnet_params("F"));
    if (now != frozen)
      throw std::logic_error(
          "train_gan: frozen autoencoder parameters changed");
    ++state.epoch;
    if (on_epoch) on_epoch(state);
  }
}

// -- Step 3: joint fine-tuning ----------------------------------------------

// Per iteration: the discriminators ascend their terms, then one accumulated
// backward pass through L_AE + L_E + L_phi drives a single Adam step over
// P = {G_E, F, phi, H}.
inline void finetune_joint(Model& model, const Dataset& data,
                           const TrainConfig& cfg, TrainState& state,
                           const EpochCallback& on_epoch = {}) {
  check(cfg.stage == Stage::FINETUNE,
        "finetune_joint: config stage must be FINETUNE");
  check(data.size() >= 1, "finetune_joint: empty dataset");
  if (!state.optimizers.count("P"))
    state.optimizers.emplace(
        "P", make_optimizer(model, {"G_E", "F", "phi", "H"}, cfg.learning_rate));
  for (const char* key : {"D_E", "D_R"})
    if (!state.optimizers.count(key))
      state.optimizers.emplace(
          key, make_optimizer(model, {key}, cfg.learning_rate));
  auto& opt_p = state.optimizers.at("P");
  auto& opt_de = state.optimizers.at("D_E");
  auto& opt_dr = state.optimizers.at("D_R");
  std::mt19937_64 rng(cfg.seed + 0x2545F4914F6CDD1Dull);
  for (int e = 0; e < cfg.epochs; ++e) {
    auto order = epoch_order(data.size(), cfg.seed, state.epoch);
    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      size_t count = std::min<size_t>(cfg.batch_size, order.size() - b);
      auto x = make_batch(data, order, b, count);
      const int batch = static_cast<int>(count);

      // discriminators first
      auto z_d = sample_noise(model.cfg, batch, rng);
      auto e_real = detach(model.encode(x, false));
      auto e_fake = detach(model.generate_embedding(z_d, false));
      auto de_loss =
          add(bce_with_logits(model.discriminate_embedding(e_real, true), 1.f),
              bce_with_logits(model.discriminate_embedding(e_fake, true), 0.f));
      auto x_fake = detach(model.denoise(
          model.decode(model.generate_embedding(z_d, false), false), false));
      auto dr_loss =
          add(bce_with_logits(model.discriminate_image(x, true), 1.f),
              bce_with_logits(model.discriminate_image(x_fake, true), 0.f));
      state.record(state.global_step, "L_DE", de_loss.item());
      state.record(state.global_step, "L_DR", dr_loss.item());
      de_loss.backward();
      dr_loss.backward();
      opt_de.step();
      opt_dr.step();
      zero_all_grads(model);

      // accumulated generator-side pass
      auto z = sample_noise(model.cfg, batch, rng);
      auto l_ae = l1_loss(model.decode(model.encode(x, true), true), x);
      auto e_gen = model.generate_embedding(z, true);
      auto g_logits = model.discriminate_embedding(e_gen, true);
      auto l_gan = cfg.saturating_generator_loss
                       ? scale(bce_with_logits(g_logits, 0.f), -1.f)
                       : bce_with_logits(g_logits, 1.f);
      auto xhat = model.decode(e_gen, true);
      auto den = model.denoise(xhat, true);
      auto adv = cfg.saturating_generator_loss
                     ? scale(bce_with_logits(model.discriminate_image(den, true), 0.f), -1.f)
                     : bce_with_logits(model.discriminate_image(den, true), 1.f);
      auto l_phi = add(adv, scale(l1_loss(den, xhat), cfg.lambda_pixel));
      auto joint = add(add(l_ae, l_gan), l_phi);
      state.record(state.global_step, "L_AE", l_ae.item());
      state.record(state.global_step, "L_joint", joint.item());
      joint.backward();
      opt_p.step();
      zero_all_grads(model);
      ++state.global_step;
    }
    ++state.epoch;
    if (on_epoch) on_epoch(state);
  }
}

// -- loss evaluation (no updates, eval mode) --------------------------------

inline float ae_loss_value(const Model& model, const TensorF& x) {
  return l1_loss(model.decode(model.encode(x)), x).item();
}

inline float embedding_gan_value(const Model& model, const TensorF& x,
                                 const TensorF& z) {
  auto real = bce_with_logits(model.discriminate_embedding(model.encode(x)), 1.f);
  auto fake = bce_with_logits(
      model.discriminate_embedding(model.generate_embedding(z)), 0.f);
  return add(real, fake).item();
}

inline float denoiser_value(const Model& model, const TensorF& x,
                            const TensorF& z, float lambda_pixel) {
  auto xhat = model.decode(model.generate_embedding(z));
  auto den = model.denoise(xhat);
  auto real = bce_with_logits(model.discriminate_image(x), 1.f);
  auto fake = bce_with_logits(model.discriminate_image(den), 0.f);
  return add(add(real, fake), scale(l1_loss(den, xhat), lambda_pixel)).item();
}

// Joint objective evaluated in one pass over shared intermediates.
inline float joint_loss_value(const Model& model, const TensorF& x,
                              const TensorF& z, float lambda_pixel) {
  auto e_real = model.encode(x);
  auto l_ae = l1_loss(model.decode(e_real), x);
  auto e_fake = model.generate_embedding(z);
  auto l_e = add(bce_with_logits(model.discriminate_embedding(e_real), 1.f),
                 bce_with_logits(model.discriminate_embedding(e_fake), 0.f));
  auto xhat = model.decode(e_fake);
  auto den = model.denoise(xhat);
  auto l_phi = add(add(bce_with_logits(model.discriminate_image(x), 1.f),
                       bce_with_logits(model.discriminate_image(den), 0.f)),
                   scale(l1_loss(den, xhat), lambda_pixel));
  return add(add(l_ae, l_e), l_phi).item();
}

// -- inference --------------------------------------------------------------

// Streams batches of phi(F(G_E(z))) in eval mode; deterministic given seed.
class Sampler {
 public:
  Sampler(const Model& model, uint64_t seed, bool use_denoiser = true)
      : model_(model), rng_(seed), use_denoiser_(use_denoiser) {}

  TensorF next(int count) {
    check(count >= 1, "sample: count must be positive");
    auto z = sample_noise(model_.cfg, count, rng_);
    auto img = model_.decode(model_.generate_embedding(z));
    if (use_denoiser_) img = model_.denoise(img);
    return detach(img);
  }

 private:
  const Model& model_;
  std::mt19937_64 rng_;
  bool use_denoiser_;
};

inline TensorF sample_images(const Model& model, int count, uint64_t seed,
                             bool use_denoiser = true, int batch = 16) {
  check(count >= 1, "sample: count must be positive");
  Sampler s(model, seed, use_denoiser);
  const int r = model.cfg.resolution;
  std::vector<float> out;
  out.reserve(static_cast<size_t>(count) * 3 * r * r);
  for (int done = 0; done < count;) {
    int n = std::min(batch, count - done);
    auto imgs = s.next(n);
    out.insert(out.end(), imgs.values().begin(), imgs.values().end());
    done += n;
  }
  return TensorF::from({count, 3, r, r}, std::move(out));
}

// Full inference pipeline for one noise vector.
inline TensorF generate_at(const Model& model, const TensorF& z,
                           bool use_denoiser = true) {
  check(z.shape() == Shape{model.cfg.noise_dim},
        "generate_at: z must have noise_dim " +
            std::to_string(model.cfg.noise_dim) + ", got " +
            shape_str(z.shape()));
  auto img = model.decode(
      model.generate_embedding(reshape(z, {1, model.cfg.noise_dim})));
  if (use_denoiser) img = model.denoise(img);
  return detach(img);
}

// Images along the straight line between z_a and z_b, endpoints included.
// Frames are generated one at a time so the endpoints reproduce direct
// single-sample generation exactly.
inline TensorF interpolate(const Model& model, const TensorF& z_a,
                           const TensorF& z_b, int steps,
                           bool use_denoiser = true) {
  check(steps >= 2, "interpolate: steps must be >= 2");
  check(z_a.shape() == Shape{model.cfg.noise_dim} &&
            z_b.shape() == Shape{model.cfg.noise_dim},
        "interpolate: endpoints must have noise_dim " +
            std::to_string(model.cfg.noise_dim));
  const int d = model.cfg.noise_dim;
  const int r = model.cfg.resolution;
  std::vector<float> out;
  out.reserve(static_cast<size_t>(steps) * 3 * r * r);
  for (int s = 0; s < steps; ++s) {
    float t = static_cast<float>(s) / (steps - 1);
    std::vector<float> z(d);
    for (int i = 0; i < d; ++i)
      z[i] = (1.f - t) * z_a.values()[i] + t * z_b.values()[i];
    auto img = generate_at(model, TensorF::from({d}, std::move(z)),
                           use_denoiser);
    out.insert(out.end(), img.values().begin(), img.values().end());
  }
  return TensorF::from({steps, 3, r, r}, std::move(out));
}

}  // namespace aegan
