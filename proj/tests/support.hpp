#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>

#include <torch/torch.h>

#include "panogan/dataio.hpp"
#include "panogan/image.hpp"
#include "panogan/training.hpp"

namespace panogan::testing {

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "panogan") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void touch(const std::filesystem::path& p) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p).put('\0');
}

inline ImageTensor random_image(int64_t c, int64_t h, int64_t w) {
  return ImageTensor(torch::rand({c, h, w}) * 2.0 - 1.0);
}

/// 3-layer model on 8 x 32 inputs with three feedback / pyramid levels.
inline train::ModelConfig tiny_model(int base = 4) {
  train::ModelConfig m;
  m.image_height = 8;
  m.generator.num_layers = 3;
  m.generator.base_channels = base;
  m.generator.feedback_layers = 3;
  m.generator.alpha = {0.5, 0.5, 0.5};
  m.generator.discriminator_channels = base;
  m.discriminator.num_scales = 3;
  m.discriminator.base_channels = base;
  return m;
}

inline data::Batch random_batch(int64_t n, int64_t h, int64_t w) {
  data::Batch b;
  for (int64_t i = 0; i < n; ++i) b.ids.push_back(std::to_string(i));
  b.aerial = torch::rand({n, 3, h, w}) * 2.0 - 1.0;
  b.panorama = torch::rand({n, 3, h, w}) * 2.0 - 1.0;
  b.segmentation = torch::rand({n, 3, h, w}) * 2.0 - 1.0;
  return b;
}

inline bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
  return a.sizes() == b.sizes() && a.scalar_type() == b.scalar_type() && torch::equal(a, b);
}

}  // namespace panogan::testing
