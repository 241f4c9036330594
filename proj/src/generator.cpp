#include "panogan/generator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "panogan/errors.hpp"

namespace F = torch::nn::functional;

namespace panogan::nn {

namespace {

int64_t pyramid_width(int64_t base, int layer) { return base * std::min<int64_t>(int64_t{1} << (layer - 1), 8); }

std::string shape_string(const torch::Tensor& t) {
  std::string s = "[";
  for (int64_t d = 0; d < t.dim(); ++d) s += (d ? "," : "") + std::to_string(t.size(d));
  return s + "]";
}

}  // namespace

void GeneratorConfig::validate() const {
  if (num_layers < 1) throw ConfigError("generator num_layers must be >= 1");
  if (feedback_layers < 1 || feedback_layers > num_layers) {
    throw ConfigError("generator needs 1 <= feedback_layers <= num_layers, got feedback_layers=" +
                      std::to_string(feedback_layers) + " num_layers=" + std::to_string(num_layers));
  }
  if (static_cast<int>(alpha.size()) != feedback_layers) {
    throw ConfigError("alpha must hold one weight per feedback layer (" + std::to_string(feedback_layers) + "), got " +
                      std::to_string(alpha.size()));
  }
  for (double a : alpha) {
    if (!std::isfinite(a)) throw ConfigError("alpha values must be finite");
  }
  if (base_channels < 1 || discriminator_channels < 1) throw ConfigError("channel widths must be positive");
}

int64_t GeneratorConfig::encoder_channels(int layer) const { return pyramid_width(base_channels, layer); }

int64_t GeneratorConfig::decoder_channels(int layer) const { return layer == 1 ? 6 : encoder_channels(layer - 1); }

int64_t GeneratorConfig::feedback_channels(int layer) const { return pyramid_width(discriminator_channels, layer); }

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"num_layers", c.num_layers},
                     {"base_channels", c.base_channels},
                     {"feedback_layers", c.feedback_layers},
                     {"alpha", c.alpha},
                     {"discriminator_channels", c.discriminator_channels},
                     {"normalization", "instance"}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  static const std::vector<std::string> kKeys = {"num_layers",   "base_channels",          "feedback_layers",
                                                 "alpha",        "discriminator_channels", "normalization"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("unknown generator config key '" + key + "'");
    }
  }
  c.num_layers = j.value("num_layers", c.num_layers);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.feedback_layers = j.value("feedback_layers", c.feedback_layers);
  c.discriminator_channels = j.value("discriminator_channels", c.discriminator_channels);
  if (j.contains("alpha")) {
    c.alpha = j.at("alpha").get<std::vector<double>>();
  } else if (static_cast<int>(c.alpha.size()) != c.feedback_layers) {
    c.alpha.assign(static_cast<std::size_t>(std::max(c.feedback_layers, 0)), 0.5);
  }
  if (j.value("normalization", std::string("instance")) != "instance") {
    throw ConfigError("only instance normalization is supported");
  }
}

ImageTensor GeneratorOutput::panorama_image(int64_t index) const {
  return ImageTensor(panorama()[index].detach());
}

ImageTensor GeneratorOutput::segmentation_image(int64_t index) const {
  return ImageTensor(segmentation()[index].detach());
}

torch::Tensor match_spatial(const torch::Tensor& x, const torch::Tensor& like) {
  if (x.size(-2) == like.size(-2) && x.size(-1) == like.size(-1)) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<int64_t>{like.size(-2), like.size(-1)})
                               .mode(torch::kNearest));
}

void init_weights(torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* deconv = m->as<torch::nn::ConvTranspose2d>()) {
      deconv->weight.normal_(0.0, 0.02);
      if (deconv->bias.defined()) deconv->bias.zero_();
    }
  }
}

torch::Tensor afm_fuse(const torch::Tensor& encoded, const torch::Tensor& decoded, const torch::Tensor& image_feedback,
                       const torch::Tensor& seg_feedback, double alpha,
                       const std::function<torch::Tensor(const torch::Tensor&)>& transform) {
  auto same_grid = [&](const torch::Tensor& t) {
    return t.dim() == 4 && t.size(0) == encoded.size(0) && t.size(2) == encoded.size(2) &&
           t.size(3) == encoded.size(3);
  };
  if (encoded.dim() != 4) throw ShapeError("AFM expects N x C x H x W features, got " + shape_string(encoded));
  if ((decoded.defined() && !same_grid(decoded)) || !same_grid(image_feedback) || !same_grid(seg_feedback)) {
    throw ShapeError("AFM inputs disagree in batch or spatial size: e=" + shape_string(encoded) +
                     " d=" + (decoded.defined() ? shape_string(decoded) : "none") + " h_g=" +
                     shape_string(image_feedback) + " h_s=" + shape_string(seg_feedback));
  }
  const torch::Tensor skip = decoded.defined() ? torch::cat({encoded, decoded}, 1) : encoded;
  const torch::Tensor correction = transform(torch::cat({skip, image_feedback, seg_feedback}, 1));
  if (correction.sizes() != skip.sizes()) {
    throw ShapeError("AFM transform must return the skip shape " + shape_string(skip) + ", got " +
                     shape_string(correction));
  }
  return alpha * correction + skip;
}

AfmLayerImpl::AfmLayerImpl(int64_t skip_channels, int64_t feedback_channels) {
  using namespace torch::nn;
  const int64_t in = skip_channels + 2 * feedback_channels;
  blocks_ = register_module(
      "blocks", Sequential(Conv2d(Conv2dOptions(in, skip_channels, 3).padding(1).bias(false)),
                           InstanceNorm2d(InstanceNorm2dOptions(skip_channels)), ReLU(),
                           Conv2d(Conv2dOptions(skip_channels, skip_channels, 3).padding(1).bias(false)),
                           InstanceNorm2d(InstanceNorm2dOptions(skip_channels)), ReLU()));
}

torch::Tensor AfmLayerImpl::forward(const torch::Tensor& encoded, const torch::Tensor& decoded,
                                    const torch::Tensor& image_feedback, const torch::Tensor& seg_feedback,
                                    double alpha) {
  return afm_fuse(encoded, decoded, image_feedback, seg_feedback, alpha,
                  [this](const torch::Tensor& x) { return blocks_->forward(x); });
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
  using namespace torch::nn;
  config_.validate();
  const int layers = config_.num_layers;
  for (int i = 1; i <= layers; ++i) {
    const int64_t in = i == 1 ? 3 : config_.encoder_channels(i - 1);
    const int64_t out = config_.encoder_channels(i);
    encoders_.push_back(register_module(
        "encoder" + std::to_string(i),
        Sequential(Conv2d(Conv2dOptions(in, out, 4).stride(2).padding(1).bias(false)),
                   InstanceNorm2d(InstanceNorm2dOptions(out)), ReLU())));
  }
  for (int i = 1; i <= layers; ++i) {
    const int64_t skip = config_.encoder_channels(i) + (i < layers ? config_.decoder_channels(i + 1) : 0);
    const int64_t out = config_.decoder_channels(i);
    Sequential block;
    if (i == 1) {
      block->push_back(ConvTranspose2d(ConvTranspose2dOptions(skip, out, 4).stride(2).padding(1)));
      block->push_back(Tanh());
    } else {
      block->push_back(ConvTranspose2d(ConvTranspose2dOptions(skip, out, 4).stride(2).padding(1).bias(false)));
      block->push_back(InstanceNorm2d(InstanceNorm2dOptions(out)));
      block->push_back(ReLU());
    }
    decoders_.push_back(register_module("decoder" + std::to_string(i), block));
  }
  for (int i = 1; i <= config_.feedback_layers; ++i) {
    const int64_t skip = config_.encoder_channels(i) + (i < layers ? config_.decoder_channels(i + 1) : 0);
    afms_.push_back(register_module("afm" + std::to_string(i), AfmLayer(skip, config_.feedback_channels(i))));
  }
  init_weights(*this);
}

std::vector<torch::Tensor> GeneratorImpl::encode(const torch::Tensor& input) {
  if (input.dim() != 4 || input.size(1) != 3) {
    throw ShapeError("generator expects N x 3 x H x W input, got " + shape_string(input));
  }
  const int64_t reduction = int64_t{1} << config_.num_layers;
  if (input.size(2) < reduction || input.size(3) < reduction ||
      (input.size(2) / reduction) * (input.size(3) / reduction) < 2) {
    throw ShapeError("input " + shape_string(input) + " too small for " + std::to_string(config_.num_layers) +
                     " stride-2 layers (bottleneck needs >= 2 spatial elements)");
  }
  std::vector<torch::Tensor> feats;
  feats.reserve(encoders_.size());
  torch::Tensor x = input;
  for (auto& layer : encoders_) {
    x = layer->forward(x);
    feats.push_back(x);
  }
  return feats;
}

GeneratorOutput GeneratorImpl::decode(const std::vector<torch::Tensor>& encoded, const FeedbackState* feedback) {
  const int layers = config_.num_layers;
  const int r = config_.feedback_layers;
  if (static_cast<int>(encoded.size()) != layers) {
    throw ShapeError("decode expects " + std::to_string(layers) + " encoder features, got " +
                     std::to_string(encoded.size()));
  }
  if (feedback) {
    if (static_cast<int>(feedback->image_feats.size()) != r || static_cast<int>(feedback->seg_feats.size()) != r) {
      throw ShapeError("feedback must carry " + std::to_string(r) + " image and segmentation maps");
    }
    for (int i = 1; i <= r; ++i) {
      for (const auto* maps : {&feedback->image_feats, &feedback->seg_feats}) {
        const auto& h = (*maps)[i - 1];
        if (!h.defined() || h.dim() != 4 || h.size(0) != encoded[i - 1].size(0) ||
            h.size(1) != config_.feedback_channels(i)) {
          throw ShapeError("feedback map for layer " + std::to_string(i) + " has shape " +
                           (h.defined() ? shape_string(h) : "undefined") + ", expected batch " +
                           std::to_string(encoded[i - 1].size(0)) + " and " +
                           std::to_string(config_.feedback_channels(i)) + " channels");
        }
      }
    }
  }

  torch::Tensor d;  // output of the previous (coarser) decoder layer
  for (int i = layers; i >= 1; --i) {
    const auto& e = encoded[i - 1];
    torch::Tensor x;
    if (feedback && i <= r) {
      x = afms_[i - 1]->forward(e, d, match_spatial(feedback->image_feats[i - 1], e),
                                match_spatial(feedback->seg_feats[i - 1], e), config_.alpha[i - 1]);
    } else {
      x = d.defined() ? torch::cat({e, d}, 1) : e;
    }
    d = decoders_[i - 1]->forward(x);
    if (i > 1) d = match_spatial(d, encoded[i - 2]);
  }
  return GeneratorOutput{d};
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& input, const FeedbackState* feedback) {
  auto out = decode(encode(input), feedback);
  out.raw = match_spatial(out.raw, input);
  return out;
}

std::vector<torch::Tensor> GeneratorImpl::afm_parameters() {
  std::vector<torch::Tensor> params;
  for (auto& afm : afms_) {
    for (auto& p : afm->parameters()) params.push_back(p);
  }
  return params;
}

}  // namespace panogan::nn
