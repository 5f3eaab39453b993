#pragma once
// Line-oriented `key = value` configuration covering the network geometry and
// all three training stages. Unknown keys are rejected by name.

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "aegan/errors.hpp"
#include "aegan/networks.hpp"
#include "aegan/training.hpp"

namespace aegan {

struct AppConfig {
  NetworkConfig net;
  TrainConfig ae = TrainConfig::defaults_for(Stage::AE);
  TrainConfig gan = TrainConfig::defaults_for(Stage::GAN);
  TrainConfig finetune = TrainConfig::defaults_for(Stage::FINETUNE);

  TrainConfig& stage_config(Stage s) {
    switch (s) {
      case Stage::AE: return ae;
      case Stage::GAN: return gan;
      default: return finetune;
    }
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out;
  is >> out;
  if (is.fail() || !(is >> std::ws).eof())
    throw UsageError("config: bad value for " + key + ": '" + value + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw UsageError("config: bad value for " + key + ": '" + value +
                   "' (expected true/false)");
}

}  // namespace config_detail

inline void apply_config_entry(AppConfig& cfg, const std::string& key,
                               const std::string& value) {
  using config_detail::parse_bool;
  using config_detail::parse_number;
  auto& n = cfg.net;
  if (key == "resolution") n.resolution = parse_number<int>(key, value);
  else if (key == "embedding_spatial")
    n.embedding_spatial = parse_number<int>(key, value);
  else if (key == "embedding_channels")
    n.embedding_channels = parse_number<int>(key, value);
  else if (key == "noise_dim") n.noise_dim = parse_number<int>(key, value);
  else if (key == "base_channels")
    n.base_channels = parse_number<int>(key, value);
  else if (key == "generator_seed_spatial")
    n.generator_seed_spatial = parse_number<int>(key, value);
  else if (key == "denoiser_downscale")
    n.denoiser_downscale = parse_number<int>(key, value);
  else {
    // stage-prefixed training keys
    TrainConfig* t = nullptr;
    std::string field;
    for (auto [prefix, stage] :
         {std::pair<const char*, Stage>{"ae_", Stage::AE},
          {"gan_", Stage::GAN},
          {"finetune_", Stage::FINETUNE}}) {
      const std::string p(prefix);
      if (key.rfind(p, 0) == 0) {
        t = &cfg.stage_config(stage);
        field = key.substr(p.size());
        break;
      }
    }
    if (!t) throw UsageError("config: unknown key '" + key + "'");
    if (field == "learning_rate")
      t->learning_rate = parse_number<float>(key, value);
    else if (field == "epochs") t->epochs = parse_number<int>(key, value);
    else if (field == "batch_size")
      t->batch_size = parse_number<int>(key, value);
    else if (field == "lambda_pixel")
      t->lambda_pixel = parse_number<float>(key, value);
    else if (field == "seed") t->seed = parse_number<uint64_t>(key, value);
    else if (field == "checkpoint_every")
      t->checkpoint_every = parse_number<int>(key, value);
    else if (field == "saturating_generator_loss")
      t->saturating_generator_loss = parse_bool(key, value);
    else
      throw UsageError("config: unknown key '" + key + "'");
  }
}

// Lines are `key = value`; blank lines and `#` comments are skipped.
inline AppConfig parse_config(std::istream& in, const std::string& origin) {
  AppConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto stripped = config_detail::trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw UsageError("config: " + origin + ":" + std::to_string(lineno) +
                       ": expected 'key = value', got '" + stripped + "'");
    auto key = config_detail::trim(stripped.substr(0, eq));
    auto value = config_detail::trim(stripped.substr(eq + 1));
    if (key.empty())
      throw UsageError("config: " + origin + ":" + std::to_string(lineno) +
                       ": empty key");
    apply_config_entry(cfg, key, value);
  }
  cfg.net.validate();
  return cfg;
}

inline AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path);
  return parse_config(in, path);
}

inline std::string serialize_config(const AppConfig& cfg) {
  std::ostringstream os;
  const auto& n = cfg.net;
  os << "resolution = " << n.resolution << "\n";
  os << "embedding_spatial = " << n.embedding_spatial << "\n";
  os << "embedding_channels = " << n.embedding_channels << "\n";
  os << "noise_dim = " << n.noise_dim << "\n";
  os << "base_channels = " << n.base_channels << "\n";
  os << "generator_seed_spatial = " << n.generator_seed_spatial << "\n";
  os << "denoiser_downscale = " << n.denoiser_downscale << "\n";
  auto stage = [&os](const char* prefix, const TrainConfig& t) {
    os << prefix << "learning_rate = " << t.learning_rate << "\n";
    os << prefix << "epochs = " << t.epochs << "\n";
    os << prefix << "batch_size = " << t.batch_size << "\n";
    os << prefix << "lambda_pixel = " << t.lambda_pixel << "\n";
    os << prefix << "seed = " << t.seed << "\n";
    os << prefix << "checkpoint_every = " << t.checkpoint_every << "\n";
    os << prefix << "saturating_generator_loss = "
       << (t.saturating_generator_loss ? "true" : "false") << "\n";
  };
  stage("ae_", cfg.ae);
  stage("gan_", cfg.gan);
  stage("finetune_", cfg.finetune);
  return os.str();
}

}  // namespace aegan
