#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "panogan/generator.hpp"

namespace panogan::nn {

struct DiscriminatorConfig {
  int num_scales = 5;
  int base_channels = 64;
  Normalization normalization = Normalization::kInstance;

  void validate() const;
  int64_t level_channels(int level) const;  // 1-based, fine -> coarse
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Per-scale feature maps, finest first. levels[i] is N x C_i x H/2^(i+1) x W/2^(i+1).
struct PyramidFeatures {
  std::vector<torch::Tensor> levels;

  std::size_t size() const { return levels.size(); }
  const torch::Tensor& operator[](std::size_t i) const { return levels[i]; }
};

/// Conditional feature-pyramid discriminator. Input is the preprocessed
/// aerial image concatenated with a candidate panorama or segmentation map.
/// A bottom-up stride-2 path produces bottleneck maps b_i; the top-down path
/// sets h_r = b_r and h_i = b_i + conv1x1(upsample(h_{i+1})).
class PyramidDiscriminatorImpl : public torch::nn::Module {
 public:
  explicit PyramidDiscriminatorImpl(DiscriminatorConfig config);

  PyramidFeatures extract_pyramid(const torch::Tensor& aerial, const torch::Tensor& candidate);
  /// One raw-logit map per scale, same spatial size as the level.
  std::vector<torch::Tensor> realfake_scores(const PyramidFeatures& feats);

  const DiscriminatorConfig& config() const { return config_; }
  torch::nn::Conv2d score_head(int level) { return heads_.at(level - 1); }

 private:
  DiscriminatorConfig config_;
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::Conv2d> lateral_;  // lateral_[i-1] projects level i+1 onto level i
  std::vector<torch::nn::Conv2d> heads_;
};
TORCH_MODULE(PyramidDiscriminator);

/// Level-wise alignment maps: channel mean of a[i] * b[i], kept as N x 1 x H x W.
std::vector<torch::Tensor> alignment_scores(const PyramidFeatures& a, const PyramidFeatures& b);

}  // namespace panogan::nn
