#pragma once

#include <span>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

namespace panogan::loss {

/// Logits are clamped to +-kLogitCap before the log-sigmoid.
inline constexpr double kLogitCap = 30.0;

enum class Side { kGenerator, kDiscriminator };

/// Discriminator side: the GAN value sum_i [mean log s(real_i) + mean log(1 - s(fake_i))],
/// which the discriminator ascends. Generator side: the non-saturating loss
/// -sum_i mean log s(fake_i), which the generator descends; `real` is ignored
/// and may be empty. Throws NumericError on NaN scores.
torch::Tensor adversarial_loss(std::span<const torch::Tensor> real, std::span<const torch::Tensor> fake, Side side);

/// Same form as adversarial_loss, applied to alignment score maps.
torch::Tensor alignment_loss(std::span<const torch::Tensor> aligned_real, std::span<const torch::Tensor> aligned_fake,
                             Side side);

/// Mean absolute error of the image pair plus that of the segmentation pair.
torch::Tensor reconstruction_loss(const torch::Tensor& fake_img, const torch::Tensor& real_img,
                                  const torch::Tensor& fake_seg, const torch::Tensor& real_seg);

struct LossWeights {
  double adversarial = 1.0;
  double alignment = 1.0;
  double reconstruction = 1.0;
};

struct IterationLosses {
  double adv_g = 0.0;
  double adv_s = 0.0;
  double align_g = 0.0;
  double align_s = 0.0;
  double recon_img = 0.0;
  double recon_seg = 0.0;
};

struct LossBreakdown {
  std::vector<IterationLosses> per_iteration;
  double L_adv = 0.0;
  double L_fa = 0.0;
  double L_re = 0.0;
  double L_total = 0.0;

  nlohmann::json to_json() const;
};

/// Averages each family over the iterations and sums them with `weights`.
/// Throws ConfigError on an empty list.
LossBreakdown total_objective(std::span<const IterationLosses> per_iteration, LossWeights weights = {});

/// Throws NumericError describing every non-finite entry of `named`.
void require_finite(const std::vector<std::pair<std::string, torch::Tensor>>& named, const std::string& context);

}  // namespace panogan::loss
