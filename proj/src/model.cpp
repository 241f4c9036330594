#include "panogan/model.hpp"

#include "panogan/errors.hpp"

namespace panogan::nn {

PanoGanImpl::PanoGanImpl(GeneratorConfig generator_config, DiscriminatorConfig discriminator_config) {
  if (generator_config.feedback_layers != discriminator_config.num_scales) {
    throw ConfigError("generator feedback_layers (" + std::to_string(generator_config.feedback_layers) +
                      ") must equal discriminator num_scales (" + std::to_string(discriminator_config.num_scales) +
                      ")");
  }
  if (generator_config.discriminator_channels != discriminator_config.base_channels) {
    throw ConfigError("generator discriminator_channels must equal discriminator base_channels");
  }
  generator = register_module("G", Generator(generator_config));
  image_disc = register_module("D_g", PyramidDiscriminator(discriminator_config));
  seg_disc = register_module("D_s", PyramidDiscriminator(discriminator_config));
}

FeedbackState make_feedback(const Iteration& previous, int iteration) {
  return FeedbackState{previous.image_feats.levels, previous.seg_feats.levels, iteration};
}

std::vector<Iteration> PanoGanImpl::unroll(const torch::Tensor& aerial, int loops, bool features_for_last) {
  if (loops < 0) throw ConfigError("feedback loop count must be >= 0");
  std::vector<Iteration> iterations;
  iterations.reserve(static_cast<std::size_t>(loops) + 1);
  const auto encoded = generator->encode(aerial);
  for (int t = 0; t <= loops; ++t) {
    Iteration it;
    if (t == 0) {
      it.output = generator->decode(encoded, nullptr);
    } else {
      const FeedbackState feedback = make_feedback(iterations.back(), t);
      it.output = generator->decode(encoded, &feedback);
    }
    it.output.raw = match_spatial(it.output.raw, aerial);
    if (t < loops || features_for_last) {
      it.image_feats = image_disc->extract_pyramid(aerial, it.output.panorama());
      it.seg_feats = seg_disc->extract_pyramid(aerial, it.output.segmentation());
    }
    iterations.push_back(std::move(it));
  }
  return iterations;
}

std::vector<GeneratorOutput> PanoGanImpl::generate_iterative(const torch::Tensor& aerial, int loops) {
  std::vector<GeneratorOutput> outputs;
  for (auto& it : unroll(aerial, loops, false)) outputs.push_back(std::move(it.output));
  return outputs;
}

}  // namespace panogan::nn
