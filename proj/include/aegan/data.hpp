#pragma once
// Datasets (image folders and procedural synthetics), batch assembly, and
// PNG grid emission. Samples are always (3,R,R) RGB in [-1,1].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "aegan/errors.hpp"
#include "aegan/tensor.hpp"

namespace aegan {

class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual int64_t size() const = 0;
  virtual int resolution() const = 0;
  // Writes one sample (3*R*R floats, channel-major RGB, values in [-1,1]).
  virtual void fill(int64_t index, float* out) const = 0;
  virtual int label(int64_t /*index*/) const { return 0; }
  virtual int num_classes() const { return 1; }
};

using DatasetHandle = std::shared_ptr<Dataset>;

// Seeded shuffled index order for one epoch; exhaustive and non-repeating.
inline std::vector<int64_t> epoch_order(int64_t n, uint64_t seed,
                                        int64_t epoch) {
  std::vector<int64_t> idx(n);
  for (int64_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * (epoch + 1)));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

inline TensorF make_batch(const Dataset& data, const std::vector<int64_t>& order,
                          size_t begin, size_t count) {
  const int r = data.resolution();
  const int64_t per = 3LL * r * r;
  std::vector<float> values(count * per);
  for (size_t i = 0; i < count; ++i)
    data.fill(order[begin + i], values.data() + i * per);
  return TensorF::from({static_cast<int64_t>(count), 3, r, r},
                       std::move(values));
}

// -- synthetic procedural datasets ------------------------------------------

// shapes: a colored ellipse or rectangle on a gradient-plus-texture
// background; 8 classes = {ellipse, rectangle} x 4 colors, assigned
// round-robin so classes stay balanced within +-1.
// gradients: pure linear color gradients, 4 direction classes.
class SyntheticDataset : public Dataset {
 public:
  enum class Kind { Shapes, Gradients };

  SyntheticDataset(Kind kind, int64_t count, int resolution, uint64_t seed)
      : kind_(kind), count_(count), res_(resolution), seed_(seed) {
    check(count >= 1, "synthetic_dataset: count must be >= 1");
    check(resolution >= 8, "synthetic_dataset: resolution too small");
  }

  static Kind parse_kind(const std::string& s) {
    if (s == "shapes") return Kind::Shapes;
    if (s == "gradients") return Kind::Gradients;
    throw UsageError("unknown synthetic dataset kind: " + s);
  }

  int64_t size() const override { return count_; }
  int resolution() const override { return res_; }
  int num_classes() const override { return kind_ == Kind::Shapes ? 8 : 4; }
  int label(int64_t index) const override {
    return static_cast<int>(index % num_classes());
  }

  void fill(int64_t index, float* out) const override {
    std::mt19937_64 rng(seed_ * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull +
                        static_cast<uint64_t>(index));
    std::uniform_real_distribution<float> uni(0.f, 1.f);
    const int r = res_;
    const int cls = label(index);
    if (kind_ == Kind::Gradients) {
      // class = gradient direction; endpoints random
      float c0[3], c1[3];
      for (int c = 0; c < 3; ++c) {
        c0[c] = uni(rng) * 2.f - 1.f;
        c1[c] = uni(rng) * 2.f - 1.f;
      }
      for (int y = 0; y < r; ++y)
        for (int x = 0; x < r; ++x) {
          float t = 0;
          switch (cls) {
            case 0: t = static_cast<float>(x) / (r - 1); break;
            case 1: t = static_cast<float>(y) / (r - 1); break;
            case 2: t = static_cast<float>(x + y) / (2 * (r - 1)); break;
            default: t = static_cast<float>((r - 1 - x) + y) / (2 * (r - 1));
          }
          for (int c = 0; c < 3; ++c)
            out[(c * r + y) * r + x] = c0[c] + (c1[c] - c0[c]) * t;
        }
      return;
    }
    // shapes
    static const float palette[4][3] = {{0.9f, -0.7f, -0.7f},
                                        {-0.7f, 0.9f, -0.6f},
                                        {-0.7f, -0.6f, 0.9f},
                                        {0.9f, 0.8f, -0.8f}};
    const bool ellipse = cls < 4;
    const float* color = palette[cls % 4];
    float bg0[3], bg1[3];
    for (int c = 0; c < 3; ++c) {
      bg0[c] = uni(rng) * 0.8f - 0.9f;  // darker background band
      bg1[c] = uni(rng) * 0.8f - 0.4f;
    }
    const float phase = uni(rng) * 6.2831853f;
    const float freq = 2.f + uni(rng) * 4.f;
    const float cx = (0.3f + 0.4f * uni(rng)) * r;
    const float cy = (0.3f + 0.4f * uni(rng)) * r;
    const float ax = (0.10f + 0.15f * uni(rng)) * r;
    const float ay = (0.10f + 0.15f * uni(rng)) * r;
    const float shade = 0.85f + 0.3f * uni(rng);
    for (int y = 0; y < r; ++y) {
      const float ty = static_cast<float>(y) / (r - 1);
      for (int x = 0; x < r; ++x) {
        const float tex =
            0.06f * std::sin(freq * 6.2831853f * x / r + phase) *
            std::cos(freq * 6.2831853f * y / r);
        const float dx = (x - cx) / ax, dy = (y - cy) / ay;
        const bool inside = ellipse ? (dx * dx + dy * dy <= 1.f)
                                    : (std::abs(dx) <= 1.f && std::abs(dy) <= 1.f);
        for (int c = 0; c < 3; ++c) {
          float v = inside ? color[c] * shade
                           : bg0[c] + (bg1[c] - bg0[c]) * ty + tex;
          out[(c * r + y) * r + x] = std::clamp(v, -1.f, 1.f);
        }
      }
    }
  }

 private:
  Kind kind_;
  int64_t count_;
  int res_;
  uint64_t seed_;
};

// -- image folders ----------------------------------------------------------

inline void mat_to_sample(const cv::Mat& bgr, int resolution, float* out) {
  cv::Mat img = bgr;
  if (img.rows != resolution || img.cols != resolution) {
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(resolution, resolution), 0, 0,
               cv::INTER_LINEAR);
    img = resized;
  }
  const int r = resolution;
  for (int y = 0; y < r; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < r; ++x) {
      // OpenCV loads BGR; emit RGB
      out[(0 * r + y) * r + x] = row[x][2] / 127.5f - 1.f;
      out[(1 * r + y) * r + x] = row[x][1] / 127.5f - 1.f;
      out[(2 * r + y) * r + x] = row[x][0] / 127.5f - 1.f;
    }
  }
}

class FolderDataset : public Dataset {
 public:
  FolderDataset(const std::string& path, int resolution, uint64_t /*seed*/)
      : res_(resolution) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(path))
      throw DataError("dataset path is not a directory: " + path);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    std::string bad;
    samples_.reserve(files.size());
    for (const auto& f : files) {
      cv::Mat img = cv::imread(f, cv::IMREAD_COLOR);
      if (img.empty()) {
        bad += (bad.empty() ? "" : ", ") + f;
        continue;
      }
      std::vector<float> s(3LL * res_ * res_);
      mat_to_sample(img, res_, s.data());
      samples_.push_back(std::move(s));
    }
    if (samples_.empty())
      throw DataError("no decodable images in " + path +
                      (bad.empty() ? " (folder is empty)"
                                   : "; offending files: " + bad));
  }

  int64_t size() const override { return static_cast<int64_t>(samples_.size()); }
  int resolution() const override { return res_; }
  void fill(int64_t index, float* out) const override {
    std::copy(samples_[index].begin(), samples_[index].end(), out);
  }

 private:
  int res_;
  std::vector<std::vector<float>> samples_;
};

inline DatasetHandle load_dataset(const std::string& path, int resolution,
                                  uint64_t seed) {
  return std::make_shared<FolderDataset>(path, resolution, seed);
}

inline DatasetHandle synthetic_dataset(SyntheticDataset::Kind kind,
                                       int64_t count, int resolution,
                                       uint64_t seed) {
  return std::make_shared<SyntheticDataset>(kind, count, resolution, seed);
}

// -- image emission ---------------------------------------------------------

inline uint8_t to_byte(float v) {
  return static_cast<uint8_t>(
      std::clamp(std::lround((v + 1.f) * 127.5f), 0L, 255L));
}

// images: (N,3,R,R) in [-1,1], tiled row-major.
inline void write_grid(const TensorF& images, int columns,
                       const std::string& path) {
  check(images.shape().size() == 4 && images.shape()[1] == 3,
        "write_grid: expected (N,3,R,R), got " + shape_str(images.shape()));
  check(columns >= 1, "write_grid: columns must be >= 1");
  const int n = static_cast<int>(images.shape()[0]);
  check(n >= 1, "write_grid: need at least one image");
  const int r = static_cast<int>(images.shape()[2]);
  const int rows = (n + columns - 1) / columns;
  cv::Mat grid(rows * r, columns * r, CV_8UC3, cv::Scalar(0, 0, 0));
  const float* v = images.values().data();
  for (int i = 0; i < n; ++i) {
    const int oy = (i / columns) * r, ox = (i % columns) * r;
    for (int y = 0; y < r; ++y) {
      cv::Vec3b* row = grid.ptr<cv::Vec3b>(oy + y);
      for (int x = 0; x < r; ++x) {
        const int64_t base = (static_cast<int64_t>(i) * 3) * r * r + y * r + x;
        row[ox + x][2] = to_byte(v[base]);                         // R
        row[ox + x][1] = to_byte(v[base + static_cast<int64_t>(r) * r]);
        row[ox + x][0] = to_byte(v[base + 2LL * r * r]);           // B
      }
    }
  }
  if (!cv::imwrite(path, grid))
    throw DataError("write_grid: cannot write " + path);
}

inline void write_image(const TensorF& images, int64_t index,
                        const std::string& path) {
  const int r = static_cast<int>(images.shape()[2]);
  cv::Mat img(r, r, CV_8UC3);
  const float* v =
      images.values().data() + index * 3LL * r * r;
  for (int y = 0; y < r; ++y) {
    cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < r; ++x) {
      row[x][2] = to_byte(v[y * r + x]);
      row[x][1] = to_byte(v[static_cast<int64_t>(r) * r + y * r + x]);
      row[x][0] = to_byte(v[2LL * r * r + y * r + x]);
    }
  }
  if (!cv::imwrite(path, img))
    throw DataError("write_image: cannot write " + path);
}

}  // namespace aegan
