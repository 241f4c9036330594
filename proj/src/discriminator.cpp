#include "panogan/discriminator.hpp"

#include <algorithm>
#include <string>

#include "panogan/errors.hpp"

namespace panogan::nn {

void DiscriminatorConfig::validate() const {
  if (num_scales < 1) throw ConfigError("discriminator num_scales must be >= 1");
  if (base_channels < 1) throw ConfigError("discriminator base_channels must be positive");
}

int64_t DiscriminatorConfig::level_channels(int level) const {
  return base_channels * std::min<int64_t>(int64_t{1} << (level - 1), 8);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = nlohmann::json{{"num_scales", c.num_scales}, {"base_channels", c.base_channels}, {"normalization", "instance"}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key != "num_scales" && key != "base_channels" && key != "normalization") {
      throw ConfigError("unknown discriminator config key '" + key + "'");
    }
  }
  c.num_scales = j.value("num_scales", c.num_scales);
  c.base_channels = j.value("base_channels", c.base_channels);
  if (j.value("normalization", std::string("instance")) != "instance") {
    throw ConfigError("only instance normalization is supported");
  }
}

PyramidDiscriminatorImpl::PyramidDiscriminatorImpl(DiscriminatorConfig config) : config_(config) {
  using namespace torch::nn;
  config_.validate();
  const int r = config_.num_scales;
  for (int i = 1; i <= r; ++i) {
    const int64_t in = i == 1 ? 6 : config_.level_channels(i - 1);
    const int64_t out = config_.level_channels(i);
    down_.push_back(register_module(
        "down" + std::to_string(i),
        Sequential(Conv2d(Conv2dOptions(in, out, 4).stride(2).padding(1).bias(false)),
                   InstanceNorm2d(InstanceNorm2dOptions(out)), LeakyReLU(LeakyReLUOptions().negative_slope(0.2)))));
    heads_.push_back(register_module("head" + std::to_string(i), Conv2d(Conv2dOptions(out, 1, 3).padding(1))));
  }
  for (int i = 1; i < r; ++i) {
    lateral_.push_back(register_module(
        "lateral" + std::to_string(i),
        Conv2d(Conv2dOptions(config_.level_channels(i + 1), config_.level_channels(i), 1))));
  }
  init_weights(*this);
}

PyramidFeatures PyramidDiscriminatorImpl::extract_pyramid(const torch::Tensor& aerial, const torch::Tensor& candidate) {
  if (aerial.dim() != 4 || candidate.dim() != 4 || aerial.size(1) != 3 || candidate.size(1) != 3 ||
      aerial.size(0) != candidate.size(0) || aerial.size(2) != candidate.size(2) ||
      aerial.size(3) != candidate.size(3)) {
    throw ShapeError("discriminator needs matching N x 3 x H x W aerial and candidate tensors");
  }
  const int r = config_.num_scales;
  const int64_t reduction = int64_t{1} << r;
  if (aerial.size(2) < reduction || aerial.size(3) < reduction ||
      (aerial.size(2) / reduction) * (aerial.size(3) / reduction) < 2) {
    throw ShapeError("input too small for a " + std::to_string(r) + "-level pyramid");
  }
  std::vector<torch::Tensor> bottom_up;
  torch::Tensor x = torch::cat({aerial, candidate}, 1);
  for (auto& layer : down_) {
    x = layer->forward(x);
    bottom_up.push_back(x);
  }
  PyramidFeatures feats;
  feats.levels.resize(static_cast<std::size_t>(r));
  feats.levels[r - 1] = bottom_up[r - 1];
  for (int i = r - 1; i >= 1; --i) {
    const auto& coarse = feats.levels[i];
    feats.levels[i - 1] = bottom_up[i - 1] + lateral_[i - 1]->forward(match_spatial(coarse, bottom_up[i - 1]));
  }
  return feats;
}

std::vector<torch::Tensor> PyramidDiscriminatorImpl::realfake_scores(const PyramidFeatures& feats) {
  if (static_cast<int>(feats.size()) != config_.num_scales) {
    throw ShapeError("expected " + std::to_string(config_.num_scales) + " pyramid levels, got " +
                     std::to_string(feats.size()));
  }
  std::vector<torch::Tensor> scores;
  scores.reserve(feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) scores.push_back(heads_[i]->forward(feats[i]));
  return scores;
}

std::vector<torch::Tensor> alignment_scores(const PyramidFeatures& a, const PyramidFeatures& b) {
  if (a.size() != b.size()) {
    throw ShapeError("alignment needs pyramids of equal depth, got " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  std::vector<torch::Tensor> maps;
  maps.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].sizes() != b[i].sizes()) {
      throw ShapeError("alignment level " + std::to_string(i + 1) + " shape mismatch");
    }
    maps.push_back((a[i] * b[i]).mean(1, /*keepdim=*/true));
  }
  return maps;
}

}  // namespace panogan::nn
