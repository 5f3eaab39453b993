#pragma once
// Evaluation suite: Frechet distance between fitted Gaussians, Inception
// Score over probability splits, multi-scale SSIM, and the desk-scale
// feature extractor standing in for the pretrained reference classifier.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "aegan/adam.hpp"
#include "aegan/data.hpp"
#include "aegan/errors.hpp"
#include "aegan/networks.hpp"
#include "aegan/tensor.hpp"

namespace aegan {

// -- Gaussian population statistics -----------------------------------------

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  int64_t count = 0;
};

// Sample mean and unbiased sample covariance of an N x d row-major matrix.
inline GaussianStats fit_gaussian(const std::vector<double>& features,
                                  int64_t n, int d) {
  check(n >= 2, "fit_gaussian: need at least 2 samples, got " +
                    std::to_string(n));
  check(static_cast<int64_t>(features.size()) == n * d,
        "fit_gaussian: feature buffer does not match N*d");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      m(features.data(), n, d);
  GaussianStats s;
  s.mean = m.colwise().mean();
  Eigen::MatrixXd centered = m.rowwise() - s.mean.transpose();
  s.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
  s.count = n;
  return s;
}

namespace detail {

// Symmetric PSD square root via eigendecomposition, negative eigenvalues
// clamped to zero.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      (m + m.transpose()) * 0.5);
  Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// d^2 = |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the cross
// term computed through the symmetric form (S_a^{1/2} S_b S_a^{1/2})^{1/2}.
inline double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  check(a.mean.size() == b.mean.size(),
        "frechet_distance: dimension mismatch " +
            std::to_string(a.mean.size()) + " vs " +
            std::to_string(b.mean.size()));
  const Eigen::MatrixXd sa = (a.covariance + a.covariance.transpose()) * 0.5;
  const Eigen::MatrixXd sb = (b.covariance + b.covariance.transpose()) * 0.5;
  const Eigen::MatrixXd ra = detail::psd_sqrt(sa);
  const Eigen::MatrixXd cross = detail::psd_sqrt(ra * sb * ra);
  double d2 = (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() -
              2.0 * cross.trace();
  if (d2 < 0) {
    if (d2 < -1e-6)
      std::cerr << "frechet_distance: clamped negative value " << d2 << "\n";
    d2 = 0;
  }
  return d2;
}

// -- Inception Score --------------------------------------------------------

// probs: N x K row-major conditional class distributions. Per split:
// exp(mean_x KL(p(y|x) || marginal)). Returns (mean, population std) over
// splits; the final split absorbs any remainder.
inline std::pair<double, double> inception_score(
    const std::vector<double>& probs, int64_t n, int k, int splits,
    std::vector<double>* per_split = nullptr) {
  check(n >= 1 && k >= 1, "inception_score: empty probability matrix");
  check(splits >= 1 && splits <= n,
        "inception_score: splits must be in [1, N]");
  for (int64_t i = 0; i < n; ++i) {
    double row_sum = 0;
    for (int j = 0; j < k; ++j) {
      double p = probs[i * k + j];
      check(p >= -1e-9, "inception_score: negative probability in row " +
                            std::to_string(i));
      row_sum += p;
    }
    check(std::abs(row_sum - 1.0) <= 1e-5,
          "inception_score: row " + std::to_string(i) + " sums to " +
              std::to_string(row_sum));
  }
  std::vector<double> scores;
  const int64_t base = n / splits;
  for (int s = 0; s < splits; ++s) {
    const int64_t begin = s * base;
    const int64_t end = (s == splits - 1) ? n : begin + base;
    const int64_t cnt = end - begin;
    std::vector<double> marginal(k, 0.0);
    for (int64_t i = begin; i < end; ++i)
      for (int j = 0; j < k; ++j) marginal[j] += probs[i * k + j];
    for (auto& m : marginal) m /= static_cast<double>(cnt);
    double mean_kl = 0;
    for (int64_t i = begin; i < end; ++i) {
      double kl = 0;
      for (int j = 0; j < k; ++j) {
        double p = probs[i * k + j];
        if (p > 0 && marginal[j] > 0) kl += p * std::log(p / marginal[j]);
      }
      mean_kl += kl;
    }
    scores.push_back(std::exp(mean_kl / static_cast<double>(cnt)));
  }
  if (per_split) *per_split = scores;
  double mean = 0;
  for (double s : scores) mean += s;
  mean /= scores.size();
  double var = 0;
  for (double s : scores) var += (s - mean) * (s - mean);
  return {mean, std::sqrt(var / scores.size())};
}

// -- MS-SSIM ----------------------------------------------------------------

namespace msssim_detail {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
inline const double kWeights5[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

inline std::vector<double> gaussian_kernel() {
  std::vector<double> w(kWindow);
  double sum = 0;
  for (int i = 0; i < kWindow; ++i) {
    double d = i - (kWindow - 1) / 2.0;
    w[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    sum += w[i];
  }
  for (auto& x : w) x /= sum;
  return w;
}

// Separable valid-mode Gaussian filter.
inline std::vector<double> blur(const std::vector<double>& img, int h, int w,
                                int& oh, int& ow) {
  const auto kern = gaussian_kernel();
  oh = h - kWindow + 1;
  ow = w - kWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWindow; ++i) acc += kern[i] * img[y * w + x + i];
      tmp[y * ow + x] = acc;
    }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWindow; ++i) acc += kern[i] * tmp[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

// Per-scale mean luminance term and mean contrast-structure term.
inline void ssim_terms(const std::vector<double>& a,
                       const std::vector<double>& b, int h, int w,
                       double& lum, double& cs) {
  const double c1 = kK1 * kK1, c2 = kK2 * kK2;  // dynamic range 1
  int oh, ow;
  auto mua = blur(a, h, w, oh, ow);
  auto mub = blur(b, h, w, oh, ow);
  std::vector<double> aa(a.size()), bb(b.size()), ab(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  auto saa = blur(aa, h, w, oh, ow);
  auto sbb = blur(bb, h, w, oh, ow);
  auto sab = blur(ab, h, w, oh, ow);
  double lsum = 0, csum = 0;
  for (size_t i = 0; i < mua.size(); ++i) {
    const double ma = mua[i], mb = mub[i];
    const double va = saa[i] - ma * ma;
    const double vb = sbb[i] - mb * mb;
    const double cov = sab[i] - ma * mb;
    lsum += (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    csum += (2 * cov + c2) / (va + vb + c2);
  }
  lum = lsum / mua.size();
  cs = csum / mua.size();
}

inline std::vector<double> downsample2(const std::vector<double>& img, int h,
                                       int w, int& oh, int& ow) {
  oh = h / 2;
  ow = w / 2;
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      out[y * ow + x] = 0.25 * (img[2 * y * w + 2 * x] +
                                img[2 * y * w + 2 * x + 1] +
                                img[(2 * y + 1) * w + 2 * x] +
                                img[(2 * y + 1) * w + 2 * x + 1]);
  return out;
}

inline double signed_pow(double base, double e) {
  return base < 0 ? -std::pow(-base, e) : std::pow(base, e);
}

// One grayscale plane in [0,1].
inline double ms_ssim_plane(std::vector<double> a, std::vector<double> b,
                            int h, int w, int scales) {
  std::vector<double> weights(msssim_detail::kWeights5,
                              msssim_detail::kWeights5 + 5);
  if (scales != 5) {
    weights.assign(msssim_detail::kWeights5,
                   msssim_detail::kWeights5 + scales);
    double sum = 0;
    for (double x : weights) sum += x;
    for (auto& x : weights) x /= sum;
  }
  double result = 1.0;
  for (int s = 0; s < scales; ++s) {
    double lum, cs;
    ssim_terms(a, b, h, w, lum, cs);
    if (s == scales - 1)
      result *= signed_pow(lum, weights[s]) * signed_pow(cs, weights[s]);
    else
      result *= signed_pow(cs, weights[s]);
    if (s != scales - 1) {
      int oh, ow;
      a = downsample2(a, h, w, oh, ow);
      b = downsample2(b, h, w, oh, ow);
      h = oh;
      w = ow;
    }
  }
  return result;
}

}  // namespace msssim_detail

// Multi-scale structural similarity between two images of identical shape
// ((3,R,R) or (R,R), values in [-1,1]); returns the raw value, which can be
// marginally negative for adversarial inputs. Channels are averaged.
inline double ms_ssim_raw(const TensorF& a, const TensorF& b, int scales = 5) {
  check(a.shape() == b.shape(), "ms_ssim: shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  check(scales >= 1 && scales <= 5, "ms_ssim: scales must be in [1,5]");
  int channels, h, w;
  if (a.shape().size() == 3) {
    channels = static_cast<int>(a.shape()[0]);
    h = static_cast<int>(a.shape()[1]);
    w = static_cast<int>(a.shape()[2]);
  } else if (a.shape().size() == 2) {
    channels = 1;
    h = static_cast<int>(a.shape()[0]);
    w = static_cast<int>(a.shape()[1]);
  } else {
    throw std::invalid_argument("ms_ssim: expected (C,H,W) or (H,W), got " +
                                shape_str(a.shape()));
  }
  const int min_extent = (1 << (scales - 1)) * msssim_detail::kWindow;
  check(std::min(h, w) >= min_extent,
        "ms_ssim: image " + shape_str(a.shape()) + " too small for " +
            std::to_string(scales) + " scales; minimum extent is " +
            std::to_string(min_extent));
  double total = 0;
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int c = 0; c < channels; ++c) {
    std::vector<double> pa(plane), pb(plane);
    for (int64_t i = 0; i < plane; ++i) {
      pa[i] = (a.values()[c * plane + i] + 1.0) * 0.5;  // [-1,1] -> [0,1]
      pb[i] = (b.values()[c * plane + i] + 1.0) * 0.5;
    }
    total += msssim_detail::ms_ssim_plane(std::move(pa), std::move(pb), h, w,
                                          scales);
  }
  return total / channels;
}

// Clamped to the documented [0,1] range.
inline double ms_ssim(const TensorF& a, const TensorF& b, int scales = 5) {
  return std::clamp(ms_ssim_raw(a, b, scales), 0.0, 1.0);
}

// -- feature extractor ------------------------------------------------------

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int feature_dim() const = 0;
  virtual int num_classes() const = 0;
  // N x feature_dim, row-major.
  virtual std::vector<double> features(const TensorF& images) const = 0;
  // N x num_classes, rows are probability distributions.
  virtual std::vector<double> probabilities(const TensorF& images) const = 0;
};

// Small convolutional classifier trained on the synthetic dataset's labels.
// FID/IS computed with it are internally consistent across runs of this
// artifact but not comparable to published numbers from the pretrained
// reference network.
class ConvFeatureExtractor : public FeatureExtractor {
 public:
  ConvFeatureExtractor(int resolution, int num_classes, int base_channels,
                       int feature_dim, uint64_t seed)
      : res_(resolution), classes_(num_classes), fdim_(feature_dim) {
    std::mt19937_64 rng(seed);
    NetworkConfig cfg;
    cfg.base_channels = base_channels;
    int sp = resolution, level = 0, ch = 3;
    while (sp > 4) {
      Block b;
      b.conv = layers::Conv(ch, cfg.channels_at(level), 4, 2, 1, rng);
      b.bn = layers::BatchNorm(cfg.channels_at(level));
      body_.push_back(std::move(b));
      ch = cfg.channels_at(level);
      sp /= 2;
      ++level;
    }
    embed_ = layers::Linear(ch * sp * sp, fdim_, rng);
    head_ = layers::Linear(fdim_, classes_, rng);
  }

  int feature_dim() const override { return fdim_; }
  int num_classes() const override { return classes_; }

  TensorF feature_forward(const TensorF& images, bool train) const {
    auto h = images;
    for (const auto& b : body_)
      h = leaky_relu(b.bn.forward(b.conv.forward(h), train), kLeakySlope);
    int64_t flat = h.shape()[1] * h.shape()[2] * h.shape()[3];
    h = embed_.forward(reshape(h, {h.shape()[0], flat}));
    return leaky_relu(h, kLeakySlope);
  }

  void train(const Dataset& data, int epochs, int batch_size, float lr,
             uint64_t seed) {
    AdamF opt(AdamConfig<float>{lr, 0.9f, 0.999f, 1e-8f});
    ParamRegistry reg;
    register_params(reg);
    for (const auto& [name, t] : reg.params) opt.add_param(name, t);
    int64_t epoch = 0;
    for (int e = 0; e < epochs; ++e, ++epoch) {
      auto order = epoch_order(data.size(), seed, epoch);
      for (size_t b = 0; b < order.size(); b += batch_size) {
        size_t count = std::min<size_t>(batch_size, order.size() - b);
        auto x = make_batch(data, order, b, count);
        std::vector<int> labels(count);
        for (size_t i = 0; i < count; ++i)
          labels[i] = data.label(order[b + i]);
        auto logits = head_.forward(feature_forward(x, true));
        auto loss = softmax_cross_entropy(logits, labels);
        if (!std::isfinite(loss.item()))
          throw NumericalAbort("feature extractor training diverged");
        loss.backward();
        opt.step();
        for (auto& [name, t] : reg.params) t.zero_grad();
      }
    }
  }

  std::vector<double> features(const TensorF& images) const override {
    auto f = feature_forward(images, false);
    return std::vector<double>(f.values().begin(), f.values().end());
  }

  std::vector<double> probabilities(const TensorF& images) const override {
    auto logits = head_.forward(feature_forward(images, false));
    const int n = static_cast<int>(logits.shape()[0]);
    std::vector<double> out(static_cast<size_t>(n) * classes_);
    for (int i = 0; i < n; ++i) {
      const float* row = logits.values().data() + i * classes_;
      double mx = *std::max_element(row, row + classes_);
      double z = 0;
      for (int j = 0; j < classes_; ++j) z += std::exp(row[j] - mx);
      for (int j = 0; j < classes_; ++j)
        out[static_cast<size_t>(i) * classes_ + j] = std::exp(row[j] - mx) / z;
    }
    return out;
  }

  double classification_accuracy(const Dataset& data, int batch_size) const {
    auto order = epoch_order(data.size(), 0, 0);
    int64_t correct = 0;
    for (size_t b = 0; b < order.size(); b += batch_size) {
      size_t count = std::min<size_t>(batch_size, order.size() - b);
      auto x = make_batch(data, order, b, count);
      auto probs = probabilities(x);
      for (size_t i = 0; i < count; ++i) {
        const double* row = probs.data() + i * classes_;
        int arg = static_cast<int>(
            std::max_element(row, row + classes_) - row);
        if (arg == data.label(order[b + i])) ++correct;
      }
    }
    return static_cast<double>(correct) / data.size();
  }

  void register_params(ParamRegistry& r) const {
    for (size_t i = 0; i < body_.size(); ++i) {
      body_[i].conv.reg(r, "fx.body" + std::to_string(i) + ".conv");
      body_[i].bn.reg(r, "fx.body" + std::to_string(i) + ".bn");
    }
    embed_.reg(r, "fx.embed");
    head_.reg(r, "fx.head");
  }

 private:
  struct Block {
    layers::Conv conv;
    layers::BatchNorm bn;
  };
  std::vector<Block> body_;
  layers::Linear embed_, head_;
  int res_, classes_, fdim_;
};

// -- evaluation protocol ----------------------------------------------------

struct EvalProtocol {
  int64_t sample_count = 10000;  // Table-1 protocol population
  int is_splits = 10;
  int msssim_pairs = 2000;
  int msssim_scales = 5;
  int batch = 32;
  uint64_t seed = 1234;
};

struct MetricReport {
  double fid = 0;
  double inception_score_mean = 0;
  double inception_score_std = 0;
  double ms_ssim_mean = 0;       // clamped to [0,1]
  double ms_ssim_raw_mean = 0;   // unclamped
  int64_t sample_count = 0;
  int msssim_pair_count = 0;
  std::vector<double> is_per_split;
  std::string note;

  std::string table(bool verbose = false) const {
    std::ostringstream os;
    if (!note.empty()) os << "# " << note << "\n";
    os << "samples            " << sample_count << "\n";
    os << "FID                " << fid << "\n";
    os << "Inception Score    " << inception_score_mean << " +- "
       << inception_score_std << "\n";
    os << "MS-SSIM            " << ms_ssim_mean << "  (" << msssim_pair_count
       << " pairs)\n";
    if (verbose) {
      os << "MS-SSIM raw        " << ms_ssim_raw_mean << "\n";
      os << "IS per split      ";
      for (double s : is_per_split) os << " " << s;
      os << "\n";
    }
    return os.str();
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metric report to " + path);
    if (!note.empty()) out << "# " << note << "\n";
    out << "metric,value\n";
    out << "fid," << fid << "\n";
    out << "inception_score_mean," << inception_score_mean << "\n";
    out << "inception_score_std," << inception_score_std << "\n";
    out << "ms_ssim_mean," << ms_ssim_mean << "\n";
    out << "ms_ssim_raw_mean," << ms_ssim_raw_mean << "\n";
    out << "sample_count," << sample_count << "\n";
  }
};

// Yields the next batch of at most n images, or an undefined tensor when the
// source is exhausted.
using BatchSource = std::function<TensorF(int)>;

inline BatchSource dataset_source(DatasetHandle data, uint64_t seed) {
  auto order = std::make_shared<std::vector<int64_t>>(
      epoch_order(data->size(), seed, 0));
  auto pos = std::make_shared<size_t>(0);
  return [data, order, pos](int n) -> TensorF {
    if (*pos >= order->size()) return {};
    size_t count = std::min<size_t>(n, order->size() - *pos);
    auto batch = make_batch(*data, *order, *pos, count);
    *pos += count;
    return batch;
  };
}

inline MetricReport evaluate(const BatchSource& fake_source,
                             const BatchSource& real_source,
                             const FeatureExtractor& extractor,
                             const EvalProtocol& proto) {
  const int d = extractor.feature_dim();
  const int k = extractor.num_classes();
  std::mt19937_64 rng(proto.seed);

  struct Accum {
    Eigen::VectorXd sum;
    Eigen::MatrixXd outer;
    int64_t n = 0;
  };
  auto accumulate = [&](Accum& acc, const std::vector<double>& feats,
                        int64_t rows) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        m(feats.data(), rows, d);
    acc.sum += m.colwise().sum().transpose();
    acc.outer += m.transpose() * m;
    acc.n += rows;
  };
  auto finish = [&](const Accum& acc) {
    GaussianStats s;
    s.count = acc.n;
    s.mean = acc.sum / static_cast<double>(acc.n);
    s.covariance = (acc.outer - acc.n * s.mean * s.mean.transpose()) /
                   static_cast<double>(acc.n - 1);
    return s;
  };

  Accum fake_acc{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d), 0};
  Accum real_acc{Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(d, d), 0};
  std::vector<double> fake_probs;
  fake_probs.reserve(proto.sample_count * k);

  // Reservoir of fake images for MS-SSIM pairing.
  const int pool_cap =
      std::max(16, std::min<int>(2 * proto.msssim_pairs, 4096));
  std::vector<std::vector<float>> pool;
  int64_t pool_seen = 0;
  int res = 0;

  for (int64_t got = 0; got < proto.sample_count;) {
    auto batch = fake_source(
        static_cast<int>(std::min<int64_t>(proto.batch, proto.sample_count - got)));
    if (!batch.defined() || batch.shape()[0] == 0)
      throw DataError("evaluate: fake source exhausted after " +
                      std::to_string(got) + " of " +
                      std::to_string(proto.sample_count) + " samples");
    const int64_t rows = batch.shape()[0];
    res = static_cast<int>(batch.shape()[2]);
    accumulate(fake_acc, extractor.features(batch), rows);
    auto probs = extractor.probabilities(batch);
    fake_probs.insert(fake_probs.end(), probs.begin(), probs.end());
    const int64_t per = batch.size() / rows;
    for (int64_t i = 0; i < rows; ++i, ++pool_seen) {
      std::vector<float> img(batch.values().begin() + i * per,
                             batch.values().begin() + (i + 1) * per);
      if (static_cast<int>(pool.size()) < pool_cap) {
        pool.push_back(std::move(img));
      } else {
        std::uniform_int_distribution<int64_t> pick(0, pool_seen);
        int64_t j = pick(rng);
        if (j < pool_cap) pool[j] = std::move(img);
      }
    }
    got += rows;
  }
  for (int64_t got = 0; got < proto.sample_count;) {
    auto batch = real_source(
        static_cast<int>(std::min<int64_t>(proto.batch, proto.sample_count - got)));
    if (!batch.defined() || batch.shape()[0] == 0)
      throw DataError("evaluate: real source exhausted after " +
                      std::to_string(got) + " of " +
                      std::to_string(proto.sample_count) + " samples");
    accumulate(real_acc, extractor.features(batch), batch.shape()[0]);
    got += batch.shape()[0];
  }

  MetricReport report;
  report.sample_count = proto.sample_count;
  report.fid = frechet_distance(finish(real_acc), finish(fake_acc));
  auto [ism, iss] = inception_score(fake_probs, proto.sample_count, k,
                                    proto.is_splits, &report.is_per_split);
  report.inception_score_mean = ism;
  report.inception_score_std = iss;

  double raw_sum = 0, clamped_sum = 0;
  int pairs = 0;
  if (pool.size() >= 2) {
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    for (int p = 0; p < proto.msssim_pairs; ++p) {
      size_t i = pick(rng), j = pick(rng);
      while (j == i) j = pick(rng);
      auto a = TensorF::from({3, res, res}, pool[i]);
      auto b = TensorF::from({3, res, res}, pool[j]);
      double raw = ms_ssim_raw(a, b, proto.msssim_scales);
      raw_sum += raw;
      clamped_sum += std::clamp(raw, 0.0, 1.0);
      ++pairs;
    }
  }
  report.msssim_pair_count = pairs;
  report.ms_ssim_raw_mean = pairs ? raw_sum / pairs : 0;
  report.ms_ssim_mean = pairs ? clamped_sum / pairs : 0;
  report.note =
      "desk-scale feature extractor; FID/IS are internally consistent, not "
      "comparable to published reference-network numbers";
  return report;
}

}  // namespace aegan
