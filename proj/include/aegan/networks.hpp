#pragma once
// The six sub-networks: encoder H, decoder F, embedding generator G_E,
// embedding discriminator D_E, denoiser phi, image discriminator D_R.
// All are instantiated from one NetworkConfig; block counts follow from the
// power-of-two ratios between resolution, embedding size and seed size.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "aegan/tensor.hpp"

namespace aegan {

constexpr float kLeakySlope = 0.2f;

struct NetworkConfig {
  int resolution = 512;
  int embedding_spatial = 32;
  int embedding_channels = 64;
  int noise_dim = 100;
  int base_channels = 64;
  int generator_seed_spatial = 4;
  int denoiser_downscale = 8;

  static bool pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

  void validate() const {
    check(pow2(resolution) && pow2(embedding_spatial) &&
              pow2(generator_seed_spatial) && pow2(denoiser_downscale),
          "config: resolution, embedding_spatial, generator_seed_spatial and "
          "denoiser_downscale must be powers of two");
    check(embedding_channels > 0 && noise_dim > 0 && base_channels > 0,
          "config: channel and noise dimensions must be positive");
    check(resolution > embedding_spatial,
          "config: resolution must exceed embedding_spatial");
    check(embedding_spatial >= generator_seed_spatial,
          "config: embedding_spatial must be >= generator_seed_spatial");
    check(static_cast<int64_t>(embedding_spatial) * embedding_spatial *
                  embedding_channels <
              static_cast<int64_t>(resolution) * resolution * 3,
          "config: embedding must compress the image");
    check(denoiser_downscale <= resolution,
          "config: denoiser_downscale exceeds resolution");
  }

  int encoder_blocks() const {
    return static_cast<int>(std::log2(resolution / embedding_spatial));
  }
  int decoder_blocks() const { return encoder_blocks(); }
  int generator_blocks() const {
    return static_cast<int>(std::log2(embedding_spatial / generator_seed_spatial));
  }
  int denoiser_blocks() const {
    return static_cast<int>(std::log2(denoiser_downscale));
  }
  double compression_ratio() const {
    return static_cast<double>(resolution) * resolution * 3 /
           (static_cast<double>(embedding_spatial) * embedding_spatial *
            embedding_channels);
  }
  // Channels double each halving, clamped to [base, 8*base].
  int channels_at(int level) const {
    int64_t c = static_cast<int64_t>(base_channels) << level;
    return static_cast<int>(std::min<int64_t>(c, 8LL * base_channels));
  }
};

// -- parameter registry -----------------------------------------------------

struct ParamRegistry {
  std::vector<std::pair<std::string, TensorF>> params;
  std::vector<std::pair<std::string, RunningStats<float>*>> stats;

  void add(const std::string& name, const TensorF& t) {
    params.emplace_back(name, t);
  }
  void add_stats(const std::string& name, RunningStats<float>* s) {
    stats.emplace_back(name, s);
  }
};

// -- layers -----------------------------------------------------------------

namespace layers {

struct Conv {
  TensorF w, b;
  int stride = 1, pad = 0;

  Conv() = default;
  Conv(int cin, int cout, int k, int stride_, int pad_, std::mt19937_64& rng)
      : w(TensorF::randn({cout, cin, k, k}, rng, 0.f, 0.02f, true)),
        b(TensorF::zeros({cout}, true)),
        stride(stride_),
        pad(pad_) {}

  TensorF forward(const TensorF& x) const { return conv2d(x, w, b, stride, pad); }
  void reg(ParamRegistry& r, const std::string& p) const {
    r.add(p + ".w", w);
    r.add(p + ".b", b);
  }
};

struct ConvT {
  TensorF w, b;
  int stride = 1, pad = 0;

  ConvT() = default;
  ConvT(int cin, int cout, int k, int stride_, int pad_, std::mt19937_64& rng)
      : w(TensorF::randn({cin, cout, k, k}, rng, 0.f, 0.02f, true)),
        b(TensorF::zeros({cout}, true)),
        stride(stride_),
        pad(pad_) {}

  TensorF forward(const TensorF& x) const {
    return conv_transpose2d(x, w, b, stride, pad);
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    r.add(p + ".w", w);
    r.add(p + ".b", b);
  }
};

struct BatchNorm {
  TensorF gamma, beta;
  std::shared_ptr<RunningStats<float>> rs;

  BatchNorm() = default;
  explicit BatchNorm(int channels)
      : gamma(TensorF::full({channels}, 1.f, true)),
        beta(TensorF::zeros({channels}, true)),
        rs(std::make_shared<RunningStats<float>>(channels)) {}

  TensorF forward(const TensorF& x, bool train) const {
    return batch_norm(x, gamma, beta, *rs, train);
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    r.add(p + ".gamma", gamma);
    r.add(p + ".beta", beta);
    r.add_stats(p, rs.get());
  }
};

struct Linear {
  TensorF w, b;

  Linear() = default;
  Linear(int in, int out, std::mt19937_64& rng)
      : w(TensorF::randn({out, in}, rng, 0.f, 0.02f, true)),
        b(TensorF::zeros({out}, true)) {}

  TensorF forward(const TensorF& x) const { return linear(x, w, b); }
  void reg(ParamRegistry& r, const std::string& p) const {
    r.add(p + ".w", w);
    r.add(p + ".b", b);
  }
};

// Two 3x3 convolutions with an identity skip; slope 0 gives the ReLU flavor.
struct Residual {
  Conv c1, c2;
  BatchNorm b1, b2;
  float slope = 0.f;

  Residual() = default;
  Residual(int ch, float slope_, std::mt19937_64& rng)
      : c1(ch, ch, 3, 1, 1, rng),
        c2(ch, ch, 3, 1, 1, rng),
        b1(ch),
        b2(ch),
        slope(slope_) {}

  TensorF forward(const TensorF& x, bool train) const {
    auto h = leaky_relu(b1.forward(c1.forward(x), train), slope);
    h = b2.forward(c2.forward(h), train);
    return leaky_relu(add(x, h), slope);
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    c1.reg(r, p + ".c1");
    b1.reg(r, p + ".b1");
    c2.reg(r, p + ".c2");
    b2.reg(r, p + ".b2");
  }
};

// Strided conv (/2), BN, activation, then one residual block.
struct DownBlock {
  Conv conv;
  BatchNorm bn;
  Residual res;
  float slope = kLeakySlope;

  DownBlock() = default;
  DownBlock(int cin, int cout, float slope_, std::mt19937_64& rng)
      : conv(cin, cout, 4, 2, 1, rng), bn(cout), res(cout, slope_, rng),
        slope(slope_) {}

  TensorF forward(const TensorF& x, bool train) const {
    auto h = leaky_relu(bn.forward(conv.forward(x), train), slope);
    return res.forward(h, train);
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    conv.reg(r, p + ".conv");
    bn.reg(r, p + ".bn");
    res.reg(r, p + ".res");
  }
};

// Strided transposed conv (x2), BN, activation, then one residual block.
struct UpBlock {
  ConvT deconv;
  BatchNorm bn;
  Residual res;
  float slope = 0.f;

  UpBlock() = default;
  UpBlock(int cin, int cout, float slope_, std::mt19937_64& rng)
      : deconv(cin, cout, 4, 2, 1, rng), bn(cout), res(cout, slope_, rng),
        slope(slope_) {}

  TensorF forward(const TensorF& x, bool train) const {
    auto h = leaky_relu(bn.forward(deconv.forward(x), train), slope);
    return res.forward(h, train);
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    deconv.reg(r, p + ".deconv");
    bn.reg(r, p + ".bn");
    res.reg(r, p + ".res");
  }
};

}  // namespace layers

// -- encoder H --------------------------------------------------------------

struct Encoder {
  std::vector<layers::DownBlock> blocks;
  layers::Conv head;
  NetworkConfig cfg;

  Encoder() = default;
  Encoder(const NetworkConfig& c, std::mt19937_64& rng) : cfg(c) {
    int n = c.encoder_blocks();
    for (int i = 0; i < n; ++i)
      blocks.emplace_back(i == 0 ? 3 : c.channels_at(i - 1), c.channels_at(i),
                          kLeakySlope, rng);
    head = layers::Conv(c.channels_at(n - 1), c.embedding_channels, 3, 1, 1, rng);
  }

  TensorF forward(const TensorF& image, bool train) const {
    check(image.shape().size() == 4 && image.shape()[1] == 3 &&
              image.shape()[2] == cfg.resolution &&
              image.shape()[3] == cfg.resolution,
          "encode: expected (B,3," + std::to_string(cfg.resolution) + "," +
              std::to_string(cfg.resolution) + "), got " +
              shape_str(image.shape()));
    auto h = image;
    for (const auto& b : blocks) h = b.forward(h, train);
    return head.forward(h);
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].reg(r, p + ".down" + std::to_string(i));
    head.reg(r, p + ".head");
  }
};

// -- decoder F --------------------------------------------------------------

struct Decoder {
  layers::Conv stem;
  layers::BatchNorm stem_bn;
  std::vector<layers::UpBlock> blocks;
  layers::Conv head;
  NetworkConfig cfg;

  Decoder() = default;
  Decoder(const NetworkConfig& c, std::mt19937_64& rng) : cfg(c) {
    int n = c.decoder_blocks();
    stem = layers::Conv(c.embedding_channels, c.channels_at(n - 1), 3, 1, 1, rng);
    stem_bn = layers::BatchNorm(c.channels_at(n - 1));
    for (int j = 0; j < n; ++j) {
      int cin = c.channels_at(n - 1 - j);
      int cout = c.channels_at(std::max(0, n - 2 - j));
      blocks.emplace_back(cin, cout, 0.f, rng);
    }
    head = layers::Conv(c.channels_at(0), 3, 3, 1, 1, rng);
  }

  TensorF forward(const TensorF& embedding, bool train) const {
    check(embedding.shape().size() == 4 &&
              embedding.shape()[1] == cfg.embedding_channels &&
              embedding.shape()[2] == cfg.embedding_spatial &&
              embedding.shape()[3] == cfg.embedding_spatial,
          "decode: expected (B," + std::to_string(cfg.embedding_channels) +
              "," + std::to_string(cfg.embedding_spatial) + "," +
              std::to_string(cfg.embedding_spatial) + "), got " +
              shape_str(embedding.shape()));
    auto h = relu(stem_bn.forward(stem.forward(embedding), train));
    for (const auto& b : blocks) h = b.forward(h, train);
    return tanh_act(head.forward(h));
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    stem.reg(r, p + ".stem");
    stem_bn.reg(r, p + ".stem_bn");
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].reg(r, p + ".up" + std::to_string(i));
    head.reg(r, p + ".head");
  }
};

// -- embedding generator G_E ------------------------------------------------

struct EmbeddingGenerator {
  layers::Linear stem;
  layers::BatchNorm stem_bn;
  std::vector<layers::UpBlock> blocks;
  layers::Conv head;
  NetworkConfig cfg;
  int seed_channels = 0;

  EmbeddingGenerator() = default;
  EmbeddingGenerator(const NetworkConfig& c, std::mt19937_64& rng) : cfg(c) {
    int n = c.generator_blocks();
    seed_channels = c.channels_at(n);
    stem = layers::Linear(
        c.noise_dim,
        seed_channels * c.generator_seed_spatial * c.generator_seed_spatial,
        rng);
    stem_bn = layers::BatchNorm(seed_channels);
    for (int j = 0; j < n; ++j)
      blocks.emplace_back(c.channels_at(n - j), c.channels_at(n - 1 - j), 0.f,
                          rng);
    head = layers::Conv(c.channels_at(0), c.embedding_channels, 3, 1, 1, rng);
  }

  TensorF forward(const TensorF& z, bool train) const {
    check(z.shape().size() == 2 && z.shape()[1] == cfg.noise_dim,
          "generate_embedding: expected (B," + std::to_string(cfg.noise_dim) +
              "), got " + shape_str(z.shape()));
    auto h = stem.forward(z);
    h = reshape(h, {z.shape()[0], seed_channels, cfg.generator_seed_spatial,
                    cfg.generator_seed_spatial});
    h = relu(stem_bn.forward(h, train));
    for (const auto& b : blocks) h = b.forward(h, train);
    return head.forward(h);
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    stem.reg(r, p + ".stem");
    stem_bn.reg(r, p + ".stem_bn");
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].reg(r, p + ".up" + std::to_string(i));
    head.reg(r, p + ".head");
  }
};

// -- discriminators ---------------------------------------------------------

// Stride-2 stack down to 4x4 (or a plain 3x3 conv when already small), then a
// single linear map to one logit per batch element.
struct Discriminator {
  struct Block {
    layers::Conv conv;
    layers::BatchNorm bn;
  };
  std::vector<Block> body;
  layers::Linear head;
  int in_channels = 0, in_spatial = 0;
  std::string role;

  Discriminator() = default;
  Discriminator(int cin, int spatial, const NetworkConfig& c, std::string role_,
                std::mt19937_64& rng)
      : in_channels(cin), in_spatial(spatial), role(std::move(role_)) {
    int sp = spatial, level = 0, ch = cin;
    if (sp <= 4) {
      Block b;
      b.conv = layers::Conv(ch, c.channels_at(0), 3, 1, 1, rng);
      b.bn = layers::BatchNorm(c.channels_at(0));
      body.push_back(std::move(b));
      ch = c.channels_at(0);
    } else {
      while (sp > 4) {
        Block b;
        b.conv = layers::Conv(ch, c.channels_at(level), 4, 2, 1, rng);
        b.bn = layers::BatchNorm(c.channels_at(level));
        body.push_back(std::move(b));
        ch = c.channels_at(level);
        sp /= 2;
        ++level;
      }
    }
    head = layers::Linear(ch * sp * sp, 1, rng);
  }

  TensorF forward(const TensorF& x, bool train) const {
    check(x.shape().size() == 4 && x.shape()[1] == in_channels &&
              x.shape()[2] == in_spatial && x.shape()[3] == in_spatial,
          role + ": expected (B," + std::to_string(in_channels) + "," +
              std::to_string(in_spatial) + "," + std::to_string(in_spatial) +
              "), got " + shape_str(x.shape()));
    auto h = x;
    for (const auto& b : body)
      h = leaky_relu(b.bn.forward(b.conv.forward(h), train), kLeakySlope);
    int64_t flat = h.shape()[1] * h.shape()[2] * h.shape()[3];
    h = head.forward(reshape(h, {h.shape()[0], flat}));
    return reshape(h, {x.shape()[0]});
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    for (size_t i = 0; i < body.size(); ++i) {
      body[i].conv.reg(r, p + ".body" + std::to_string(i) + ".conv");
      body[i].bn.reg(r, p + ".body" + std::to_string(i) + ".bn");
    }
    head.reg(r, p + ".head");
  }
};

// -- denoiser phi -----------------------------------------------------------

// Encoder-decoder refiner: strided conv modules down by cfg.denoiser_downscale,
// mirrored transposed-conv modules back up, bounded output.
struct Denoiser {
  struct Down {
    layers::Conv conv;
    layers::BatchNorm bn;
  };
  struct Up {
    layers::ConvT deconv;
    layers::BatchNorm bn;
  };
  std::vector<Down> downs;
  std::vector<Up> ups;
  layers::Conv head;
  NetworkConfig cfg;

  Denoiser() = default;
  Denoiser(const NetworkConfig& c, std::mt19937_64& rng) : cfg(c) {
    int n = c.denoiser_blocks();
    for (int i = 0; i < n; ++i) {
      Down d;
      d.conv = layers::Conv(i == 0 ? 3 : c.channels_at(i - 1), c.channels_at(i),
                            4, 2, 1, rng);
      d.bn = layers::BatchNorm(c.channels_at(i));
      downs.push_back(std::move(d));
    }
    for (int j = 0; j < n; ++j) {
      Up u;
      int cin = c.channels_at(n - 1 - j);
      int cout = c.channels_at(std::max(0, n - 2 - j));
      u.deconv = layers::ConvT(cin, cout, 4, 2, 1, rng);
      u.bn = layers::BatchNorm(cout);
      ups.push_back(std::move(u));
    }
    head = layers::Conv(n > 0 ? c.channels_at(0) : 3, 3, 3, 1, 1, rng);
  }

  TensorF forward(const TensorF& image, bool train) const {
    check(image.shape().size() == 4 && image.shape()[1] == 3 &&
              image.shape()[2] == cfg.resolution &&
              image.shape()[3] == cfg.resolution,
          "denoise: expected (B,3," + std::to_string(cfg.resolution) + "," +
              std::to_string(cfg.resolution) + "), got " +
              shape_str(image.shape()));
    auto h = image;
    for (const auto& d : downs)
      h = leaky_relu(d.bn.forward(d.conv.forward(h), train), kLeakySlope);
    for (const auto& u : ups)
      h = relu(u.bn.forward(u.deconv.forward(h), train));
    return tanh_act(head.forward(h));
  }
  void reg(ParamRegistry& r, const std::string& p) const {
    for (size_t i = 0; i < downs.size(); ++i) {
      downs[i].conv.reg(r, p + ".down" + std::to_string(i) + ".conv");
      downs[i].bn.reg(r, p + ".down" + std::to_string(i) + ".bn");
    }
    for (size_t i = 0; i < ups.size(); ++i) {
      ups[i].deconv.reg(r, p + ".up" + std::to_string(i) + ".deconv");
      ups[i].bn.reg(r, p + ".up" + std::to_string(i) + ".bn");
    }
    head.reg(r, p + ".head");
  }
};

// -- the whole model --------------------------------------------------------

struct Model {
  NetworkConfig cfg;
  Encoder encoder;
  Decoder decoder;  // shared between reconstruction and generation paths
  EmbeddingGenerator generator;
  Discriminator disc_embedding;
  Denoiser denoiser;
  Discriminator disc_image;

  Model() = default;
  Model(const NetworkConfig& c, uint64_t seed) : cfg(c) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    encoder = Encoder(cfg, rng);
    decoder = Decoder(cfg, rng);
    generator = EmbeddingGenerator(cfg, rng);
    disc_embedding = Discriminator(cfg.embedding_channels,
                                   cfg.embedding_spatial, cfg, "D_E", rng);
    denoiser = Denoiser(cfg, rng);
    disc_image = Discriminator(3, cfg.resolution, cfg, "D_R", rng);
  }

  TensorF encode(const TensorF& image, bool train = false) const {
    return encoder.forward(image, train);
  }
  TensorF decode(const TensorF& embedding, bool train = false) const {
    return decoder.forward(embedding, train);
  }
  TensorF generate_embedding(const TensorF& z, bool train = false) const {
    return generator.forward(z, train);
  }
  TensorF discriminate_embedding(const TensorF& e, bool train = false) const {
    return disc_embedding.forward(e, train);
  }
  TensorF denoise(const TensorF& image, bool train = false) const {
    return denoiser.forward(image, train);
  }
  TensorF discriminate_image(const TensorF& image, bool train = false) const {
    return disc_image.forward(image, train);
  }

  // Named parameters of one sub-network. Sub-network keys: H, F, G_E, D_E,
  // phi, D_R.
  ParamRegistry subnet_params(const std::string& key) const {
    ParamRegistry r;
    if (key == "H")
      encoder.reg(r, "H");
    else if (key == "F")
      decoder.reg(r, "F");
    else if (key == "G_E")
      generator.reg(r, "G_E");
    else if (key == "D_E")
      disc_embedding.reg(r, "D_E");
    else if (key == "phi")
      denoiser.reg(r, "phi");
    else if (key == "D_R")
      disc_image.reg(r, "D_R");
    else
      throw std::invalid_argument("unknown sub-network " + key);
    return r;
  }

  static const std::vector<std::string>& subnet_keys() {
    static const std::vector<std::string> keys = {"H",   "F",   "G_E",
                                                  "D_E", "phi", "D_R"};
    return keys;
  }

  ParamRegistry all_params() const {
    ParamRegistry r;
    for (const auto& k : subnet_keys()) {
      auto sub = subnet_params(k);
      for (auto& p : sub.params) r.params.push_back(std::move(p));
      for (auto& s : sub.stats) r.stats.push_back(std::move(s));
    }
    return r;
  }
};

// FNV-1a over raw parameter bytes; used by the stage-freezing assertions.
inline uint64_t param_checksum(const ParamRegistry& r) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, t] : r.params) {
    mix(name.data(), name.size());
    mix(t.values().data(), t.values().size() * sizeof(float));
  }
  return h;
}

}  // namespace aegan
