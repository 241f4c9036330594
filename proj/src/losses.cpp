#include "panogan/losses.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "panogan/errors.hpp"

namespace F = torch::nn::functional;

namespace panogan::loss {

namespace {

void check_scores(std::span<const torch::Tensor> maps, const char* what) {
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (torch::isnan(maps[i]).any().item<bool>()) {
      throw NumericError(std::string("NaN in ") + what + " score map at scale " + std::to_string(i + 1));
    }
  }
}

torch::Tensor gan_value(std::span<const torch::Tensor> real, std::span<const torch::Tensor> fake, Side side,
                        const char* what) {
  if (fake.empty()) throw ShapeError(std::string(what) + " loss needs at least one scale");
  check_scores(fake, what);
  if (side == Side::kGenerator) {
    torch::Tensor total = torch::zeros({}, fake.front().options());
    for (const auto& f : fake) total = total - F::logsigmoid(f.clamp(-kLogitCap, kLogitCap)).mean();
    return total;
  }
  if (real.size() != fake.size()) {
    throw ShapeError(std::string(what) + " loss needs equally many real and fake scales, got " +
                     std::to_string(real.size()) + " and " + std::to_string(fake.size()));
  }
  check_scores(real, what);
  torch::Tensor total = torch::zeros({}, fake.front().options());
  for (std::size_t i = 0; i < fake.size(); ++i) {
    // log(1 - s(x)) == log s(-x)
    total = total + F::logsigmoid(real[i].clamp(-kLogitCap, kLogitCap)).mean() +
            F::logsigmoid(-fake[i].clamp(-kLogitCap, kLogitCap)).mean();
  }
  return total;
}

}  // namespace

torch::Tensor adversarial_loss(std::span<const torch::Tensor> real, std::span<const torch::Tensor> fake, Side side) {
  return gan_value(real, fake, side, "adversarial");
}

torch::Tensor alignment_loss(std::span<const torch::Tensor> aligned_real, std::span<const torch::Tensor> aligned_fake,
                             Side side) {
  return gan_value(aligned_real, aligned_fake, side, "alignment");
}

torch::Tensor reconstruction_loss(const torch::Tensor& fake_img, const torch::Tensor& real_img,
                                  const torch::Tensor& fake_seg, const torch::Tensor& real_seg) {
  if (fake_img.sizes() != real_img.sizes() || fake_seg.sizes() != real_seg.sizes()) {
    throw ShapeError("reconstruction loss needs shape-matched fake/real pairs");
  }
  return (fake_img - real_img).abs().mean() + (fake_seg - real_seg).abs().mean();
}

LossBreakdown total_objective(std::span<const IterationLosses> per_iteration, LossWeights weights) {
  if (per_iteration.empty()) throw ConfigError("total_objective needs at least one iteration");
  LossBreakdown out;
  out.per_iteration.assign(per_iteration.begin(), per_iteration.end());
  for (const auto& it : per_iteration) {
    out.L_adv += it.adv_g + it.adv_s;
    out.L_fa += it.align_g + it.align_s;
    out.L_re += it.recon_img + it.recon_seg;
  }
  const auto n = static_cast<double>(per_iteration.size());
  out.L_adv /= n;
  out.L_fa /= n;
  out.L_re /= n;
  out.L_total = weights.adversarial * out.L_adv + weights.alignment * out.L_fa + weights.reconstruction * out.L_re;
  return out;
}

nlohmann::json LossBreakdown::to_json() const {
  nlohmann::json iterations = nlohmann::json::array();
  for (const auto& it : per_iteration) {
    iterations.push_back({{"adv_g", it.adv_g},
                          {"adv_s", it.adv_s},
                          {"align_g", it.align_g},
                          {"align_s", it.align_s},
                          {"recon_img", it.recon_img},
                          {"recon_seg", it.recon_seg}});
  }
  return {{"L_adv", L_adv}, {"L_fa", L_fa}, {"L_re", L_re}, {"L_total", L_total}, {"per_iteration", iterations}};
}

void require_finite(const std::vector<std::pair<std::string, torch::Tensor>>& named, const std::string& context) {
  std::ostringstream report;
  bool bad = false;
  for (const auto& [name, t] : named) {
    if (!t.defined()) continue;
    auto d = t.detach().to(torch::kFloat64);
    const auto nonfinite = (~torch::isfinite(d)).sum().item<int64_t>();
    if (nonfinite == 0) continue;
    bad = true;
    auto finite = d.masked_select(torch::isfinite(d));
    report << "\n  " << name << ": " << nonfinite << "/" << d.numel() << " non-finite";
    if (finite.numel() > 0) {
      report << ", finite min " << finite.min().item<double>() << " max " << finite.max().item<double>()
             << " mean " << finite.mean().item<double>();
    }
  }
  if (bad) throw NumericError("non-finite values during " + context + ":" + report.str());
}

}  // namespace panogan::loss
