#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "panogan/image.hpp"

namespace panogan::nn {

enum class Normalization { kInstance };

struct GeneratorConfig {
  int num_layers = 8;
  int base_channels = 64;
  int feedback_layers = 5;
  std::vector<double> alpha = std::vector<double>(5, 0.5);
  int discriminator_channels = 64;  // base width of the discriminator feeding back
  Normalization normalization = Normalization::kInstance;

  void validate() const;
  /// Width of encoder layer i (1-based): base * min(2^(i-1), 8).
  int64_t encoder_channels(int layer) const;
  /// Output width of decoder layer i; 6 for the outermost layer.
  int64_t decoder_channels(int layer) const;
  /// Width of the discriminator pyramid level i that feeds AFM layer i.
  int64_t feedback_channels(int layer) const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

/// Discriminator pyramid features of the previous iteration's outputs,
/// indexed like the AFM layers (entry i-1 feeds AFM layer i).
struct FeedbackState {
  std::vector<torch::Tensor> image_feats;
  std::vector<torch::Tensor> seg_feats;
  int iteration = 0;
};

/// Batched 6-channel generator output: panorama in channels 0-2,
/// segmentation in channels 3-5.
struct GeneratorOutput {
  torch::Tensor raw;  // N x 6 x H x W

  torch::Tensor panorama() const { return raw.slice(1, 0, 3); }
  torch::Tensor segmentation() const { return raw.slice(1, 3, 6); }
  ImageTensor panorama_image(int64_t index) const;
  ImageTensor segmentation_image(int64_t index) const;
};

/// d = alpha * transform(e ++ d_prev ++ h_g ++ h_s) + (e ++ d_prev), where ++
/// is channel concatenation. `decoded` may be undefined (bottleneck layer).
torch::Tensor afm_fuse(const torch::Tensor& encoded, const torch::Tensor& decoded, const torch::Tensor& image_feedback,
                       const torch::Tensor& seg_feedback, double alpha,
                       const std::function<torch::Tensor(const torch::Tensor&)>& transform);

/// Two stacked conv3x3-instance-norm-ReLU blocks mapping the concatenated
/// (skip, feedback) features back to the skip width.
class AfmLayerImpl : public torch::nn::Module {
 public:
  AfmLayerImpl(int64_t skip_channels, int64_t feedback_channels);
  torch::Tensor forward(const torch::Tensor& encoded, const torch::Tensor& decoded, const torch::Tensor& image_feedback,
                        const torch::Tensor& seg_feedback, double alpha);
  torch::Tensor transform(const torch::Tensor& x) { return blocks_->forward(x); }

 private:
  torch::nn::Sequential blocks_{nullptr};
};
TORCH_MODULE(AfmLayer);

/// U-shaped encoder-decoder with adversarial feedback fused into the r
/// finest decoder inputs.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);

  std::vector<torch::Tensor> encode(const torch::Tensor& input);
  /// Without feedback every AFM layer is bypassed.
  GeneratorOutput decode(const std::vector<torch::Tensor>& encoded, const FeedbackState* feedback);
  GeneratorOutput forward(const torch::Tensor& input, const FeedbackState* feedback = nullptr);

  const GeneratorConfig& config() const { return config_; }
  torch::nn::Sequential encoder_layer(int layer) { return encoders_.at(layer - 1); }
  torch::nn::Sequential decoder_layer(int layer) { return decoders_.at(layer - 1); }
  AfmLayer afm_layer(int layer) { return afms_.at(layer - 1); }
  std::vector<torch::Tensor> afm_parameters();

 private:
  GeneratorConfig config_;
  std::vector<torch::nn::Sequential> encoders_;
  std::vector<torch::nn::Sequential> decoders_;
  std::vector<AfmLayer> afms_;
};
TORCH_MODULE(Generator);

/// Matches `x` to the spatial size of `like` by nearest-neighbour resizing
/// (no-op when sizes agree).
torch::Tensor match_spatial(const torch::Tensor& x, const torch::Tensor& like);

/// N(0, 0.02) weights and zero biases for every conv in `module`.
void init_weights(torch::nn::Module& module);

}  // namespace panogan::nn
