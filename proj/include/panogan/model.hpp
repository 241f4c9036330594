#pragma once

#include <vector>

#include <torch/torch.h>

#include "panogan/discriminator.hpp"
#include "panogan/generator.hpp"

namespace panogan::nn {

/// One unrolled generation step together with the discriminator pyramids of
/// its outputs (the feedback for the next step). The pyramids of the last
/// step are only filled when requested.
struct Iteration {
  GeneratorOutput output;
  PyramidFeatures image_feats;
  PyramidFeatures seg_feats;
};

/// Generator plus the image (D_g) and segmentation (D_s) discriminators.
/// Both discriminators share the architecture but own separate weights.
class PanoGanImpl : public torch::nn::Module {
 public:
  PanoGanImpl(GeneratorConfig generator_config, DiscriminatorConfig discriminator_config);

  /// loops + 1 iterations: iteration 0 is the feedback-free pass, iteration
  /// t >= 1 decodes with the pyramids of iteration t-1's outputs.
  std::vector<Iteration> unroll(const torch::Tensor& aerial, int loops, bool features_for_last);
  std::vector<GeneratorOutput> generate_iterative(const torch::Tensor& aerial, int loops);

  Generator generator{nullptr};
  PyramidDiscriminator image_disc{nullptr};
  PyramidDiscriminator seg_disc{nullptr};
};
TORCH_MODULE(PanoGan);

FeedbackState make_feedback(const Iteration& previous, int iteration);

}  // namespace panogan::nn
