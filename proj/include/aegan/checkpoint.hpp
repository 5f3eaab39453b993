#pragma once
// Binary checkpoint format: "AEGN" magic, u32 version, network geometry,
// training-state scalars, optimizer metadata, a named tensor table (params,
// batch-norm running statistics, Adam moments), and a trailing CRC32.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "aegan/errors.hpp"
#include "aegan/networks.hpp"
#include "aegan/training.hpp"

namespace aegan {

inline constexpr char kCheckpointMagic[4] = {'A', 'E', 'G', 'N'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace ckpt_detail {

struct Writer {
  std::string buf;

  template <class T>
  void raw(T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    raw<uint32_t>(static_cast<uint32_t>(s.size()));
    buf.append(s);
  }
  void floats(const std::vector<float>& v) {
    buf.append(reinterpret_cast<const char*>(v.data()),
               v.size() * sizeof(float));
  }
  void tensor(const std::string& name, const Shape& shape,
              const std::vector<float>& values) {
    str(name);
    raw<uint32_t>(static_cast<uint32_t>(shape.size()));
    for (int64_t d : shape) raw<int64_t>(d);
    floats(values);
  }
};

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  template <class T>
  T raw() {
    if (pos + sizeof(T) > buf.size())
      throw DataError("checkpoint: truncated file");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string str() {
    uint32_t n = raw<uint32_t>();
    if (pos + n > buf.size()) throw DataError("checkpoint: truncated file");
    std::string s(buf.data() + pos, n);
    pos += n;
    return s;
  }
  std::vector<float> floats(size_t count) {
    if (pos + count * sizeof(float) > buf.size())
      throw DataError("checkpoint: truncated file");
    std::vector<float> v(count);
    std::memcpy(v.data(), buf.data() + pos, count * sizeof(float));
    pos += count * sizeof(float);
    return v;
  }
};

inline uint32_t crc(const std::string& buf, size_t len) {
  return static_cast<uint32_t>(
      crc32(crc32(0L, Z_NULL, 0),
            reinterpret_cast<const Bytef*>(buf.data()),
            static_cast<uInt>(len)));
}

}  // namespace ckpt_detail

inline void save_checkpoint(const Model& model, const TrainState& state,
                            const std::string& path) {
  ckpt_detail::Writer w;
  w.buf.append(kCheckpointMagic, 4);
  w.raw<uint32_t>(kCheckpointVersion);

  const auto& n = model.cfg;
  for (int v : {n.resolution, n.embedding_spatial, n.embedding_channels,
                n.noise_dim, n.base_channels, n.generator_seed_spatial,
                n.denoiser_downscale})
    w.raw<int32_t>(v);

  w.raw<int64_t>(state.epoch);
  w.raw<int64_t>(state.global_step);

  w.raw<uint32_t>(static_cast<uint32_t>(state.optimizers.size()));
  for (const auto& [name, opt] : state.optimizers) {
    w.str(name);
    const auto& c = opt.config();
    w.raw<float>(c.learning_rate);
    w.raw<float>(c.beta1);
    w.raw<float>(c.beta2);
    w.raw<float>(c.epsilon);
    w.raw<int64_t>(opt.step_count());
    w.raw<uint32_t>(static_cast<uint32_t>(opt.slots().size()));
    for (const auto& [pname, slot] : opt.slots()) w.str(pname);
  }

  auto reg = model.all_params();
  uint32_t tensor_count = static_cast<uint32_t>(reg.params.size());
  tensor_count += 2 * static_cast<uint32_t>(reg.stats.size());
  for (const auto& [name, opt] : state.optimizers)
    tensor_count += 2 * static_cast<uint32_t>(opt.slots().size());
  w.raw<uint32_t>(tensor_count);
  for (const auto& [name, t] : reg.params)
    w.tensor(name, t.shape(), t.values());
  for (const auto& [name, rs] : reg.stats) {
    Shape shape{static_cast<int64_t>(rs->mean.size())};
    w.tensor(name + ".running_mean", shape, rs->mean);
    w.tensor(name + ".running_var", shape, rs->var);
  }
  for (const auto& [oname, opt] : state.optimizers)
    for (const auto& [pname, slot] : opt.slots()) {
      Shape shape{static_cast<int64_t>(slot.m.size())};
      w.tensor("opt." + oname + "." + pname + ".m", shape, slot.m);
      w.tensor("opt." + oname + "." + pname + ".v", shape, slot.v);
    }

  w.raw<uint32_t>(ckpt_detail::crc(w.buf, w.buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot write " + path);
  out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

struct LoadedCheckpoint {
  Model model;
  TrainState state;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  if (buf.size() < 8 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0)
    throw DataError("checkpoint: " + path + " is not a checkpoint (bad magic)");
  ckpt_detail::Reader r{buf, 4};
  uint32_t version = r.raw<uint32_t>();
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  if (buf.size() < 12) throw DataError("checkpoint: truncated file");
  uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  if (ckpt_detail::crc(buf, buf.size() - 4) != stored_crc)
    throw DataError("checkpoint: checksum mismatch in " + path);

  NetworkConfig cfg;
  cfg.resolution = r.raw<int32_t>();
  cfg.embedding_spatial = r.raw<int32_t>();
  cfg.embedding_channels = r.raw<int32_t>();
  cfg.noise_dim = r.raw<int32_t>();
  cfg.base_channels = r.raw<int32_t>();
  cfg.generator_seed_spatial = r.raw<int32_t>();
  cfg.denoiser_downscale = r.raw<int32_t>();

  LoadedCheckpoint out{Model(cfg, 0), TrainState{}};
  out.state.epoch = r.raw<int64_t>();
  out.state.global_step = r.raw<int64_t>();

  struct OptMeta {
    std::string name;
    AdamConfig<float> config;
    int64_t steps;
    std::vector<std::string> params;
  };
  std::vector<OptMeta> opts(r.raw<uint32_t>());
  for (auto& o : opts) {
    o.name = r.str();
    o.config.learning_rate = r.raw<float>();
    o.config.beta1 = r.raw<float>();
    o.config.beta2 = r.raw<float>();
    o.config.epsilon = r.raw<float>();
    o.steps = r.raw<int64_t>();
    o.params.resize(r.raw<uint32_t>());
    for (auto& p : o.params) p = r.str();
  }

  auto reg = out.model.all_params();
  std::map<std::string, TensorF> params;
  for (const auto& [name, t] : reg.params) params.emplace(name, t);
  std::map<std::string, RunningStats<float>*> stats;
  for (const auto& [name, rs] : reg.stats) stats.emplace(name, rs);

  for (auto& o : opts) {
    AdamF opt(o.config);
    for (const auto& p : o.params) {
      auto it = params.find(p);
      if (it == params.end())
        throw DataError("checkpoint: optimizer " + o.name +
                        " references unknown parameter " + p);
      opt.add_param(p, it->second);
    }
    opt.set_step_count(o.steps);
    out.state.optimizers.emplace(o.name, std::move(opt));
  }

  const uint32_t tensor_count = r.raw<uint32_t>();
  for (uint32_t i = 0; i < tensor_count; ++i) {
    std::string name = r.str();
    uint32_t ndim = r.raw<uint32_t>();
    Shape shape(ndim);
    int64_t count = 1;
    for (auto& d : shape) {
      d = r.raw<int64_t>();
      count *= d;
    }
    auto values = r.floats(static_cast<size_t>(count));

    auto assign = [&](std::vector<float>& dst) {
      if (static_cast<int64_t>(dst.size()) != count)
        throw DataError("checkpoint: size mismatch for tensor " + name);
      dst = std::move(values);
    };
    if (name.rfind("opt.", 0) == 0) {
      // opt.<optimizer>.<param>.{m,v}
      const bool is_m = name.size() > 2 && name.compare(name.size() - 2, 2, ".m") == 0;
      const bool is_v = name.size() > 2 && name.compare(name.size() - 2, 2, ".v") == 0;
      if (!is_m && !is_v)
        throw DataError("checkpoint: malformed moment tensor " + name);
      std::string rest = name.substr(4, name.size() - 6);
      auto dot = rest.find('.');
      if (dot == std::string::npos)
        throw DataError("checkpoint: malformed moment tensor " + name);
      auto oit = out.state.optimizers.find(rest.substr(0, dot));
      if (oit == out.state.optimizers.end())
        throw DataError("checkpoint: moment for unknown optimizer in " + name);
      auto sit = oit->second.slots().find(rest.substr(dot + 1));
      if (sit == oit->second.slots().end())
        throw DataError("checkpoint: moment for unknown parameter in " + name);
      assign(is_m ? sit->second.m : sit->second.v);
    } else if (name.size() > 13 &&
               name.compare(name.size() - 13, 13, ".running_mean") == 0) {
      auto it = stats.find(name.substr(0, name.size() - 13));
      if (it == stats.end())
        throw DataError("checkpoint: unknown running stats " + name);
      assign(it->second->mean);
    } else if (name.size() > 12 &&
               name.compare(name.size() - 12, 12, ".running_var") == 0) {
      auto it = stats.find(name.substr(0, name.size() - 12));
      if (it == stats.end())
        throw DataError("checkpoint: unknown running stats " + name);
      assign(it->second->var);
    } else {
      auto it = params.find(name);
      if (it == params.end())
        throw DataError("checkpoint: unknown parameter " + name);
      if (it->second.shape() != shape)
        throw DataError("checkpoint: shape mismatch for " + name);
      assign(it->second.values());
    }
  }
  if (r.pos != buf.size() - 4)
    throw DataError("checkpoint: trailing bytes in " + path);
  return out;
}

}  // namespace aegan
