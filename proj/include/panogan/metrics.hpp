#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "panogan/image.hpp"

namespace panogan::metrics {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kProbabilityFloor = 1e-12;

using Distribution = std::vector<double>;

/// Scene classifier used by the inception score, KL score and prediction
/// accuracy. Implementations must be deterministic per image.
class ClassifierOracle {
 public:
  virtual ~ClassifierOracle() = default;
  virtual std::size_t num_classes() const = 0;
  virtual Distribution predict(const ImageTensor& image) const = 0;
  virtual std::vector<double> features(const ImageTensor& image) const = 0;
};

/// Fixed random linear classifier over pooled colour/gradient statistics.
/// Stands in for a pretrained scene network at desk scale.
class SyntheticClassifier : public ClassifierOracle {
 public:
  SyntheticClassifier(std::size_t num_classes, std::uint64_t seed, double temperature = 1.0);
  std::size_t num_classes() const override { return num_classes_; }
  Distribution predict(const ImageTensor& image) const override;
  std::vector<double> features(const ImageTensor& image) const override;

 private:
  std::size_t num_classes_;
  double temperature_;
  std::vector<double> weights_;  // num_classes x feature_dim
  std::vector<double> bias_;
};

/// "synthetic" or "synthetic:K=<classes>,seed=<n>,T=<temperature>".
std::unique_ptr<ClassifierOracle> make_oracle(const std::string& spec);

// Pixel metrics. Inputs are [-1,1] images, evaluated on the [0,1] range.

/// Mean SSIM over channels and windows: Gaussian window 11x11, sigma 1.5,
/// C1 = (0.01)^2, C2 = (0.03)^2, valid windows only. For images narrower than
/// 11 px the window shrinks to the largest odd size that fits.
double ssim(const ImageTensor& x, const ImageTensor& y);

/// 10 log10(1 / MSE); +inf for identical images.
double psnr(const ImageTensor& x, const ImageTensor& y);

/// 10 log10(1 / mean |G(x) - G(y)|) with G = |dx| + |dy| (forward
/// differences, last row/column excluded); +inf when gradients agree.
double sharpness_difference(const ImageTensor& x, const ImageTensor& y);

// Classifier-based metrics.

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Sum p log(p / q) with both sides floored at kProbabilityFloor.
double kl_divergence(const Distribution& p, const Distribution& q);

/// Per pair KL(p_fake_i || p_real_i); mean and population std over pairs.
MeanStd kl_score(std::span<const Distribution> fake, std::span<const Distribution> real);
MeanStd kl_score(std::span<const ImageTensor> fake, std::span<const ImageTensor> real, const ClassifierOracle& oracle);

enum class InceptionMode { kAll, kTop1, kTop5 };

/// Keeps the k largest entries and renormalizes.
Distribution restrict_top_k(const Distribution& p, std::size_t k);

/// exp(mean_i KL(p(y|x_i) || p(y))), p(y) the mean of the (restricted) rows.
double inception_score(std::span<const Distribution> predictions, InceptionMode mode);
double inception_score(std::span<const ImageTensor> images, const ClassifierOracle& oracle, InceptionMode mode);

enum class ConfidenceFilter { kAll, kConfident };  // kConfident: real top-1 prob > 0.5

/// Percentage of pairs whose real top-1 class is among the fake's top-k.
/// NaN when the filter leaves no pairs.
double prediction_accuracy(std::span<const Distribution> fake, std::span<const Distribution> real, std::size_t top_k,
                           ConfidenceFilter filter);

struct MetricsReport {
  std::size_t count = 0;
  double inception_all = 0.0;
  double inception_top1 = 0.0;
  double inception_top5 = 0.0;
  double accuracy_top1_all = 0.0;
  double accuracy_top5_all = 0.0;
  double accuracy_top1_05 = 0.0;
  double accuracy_top5_05 = 0.0;
  MeanStd kl;
  double ssim = 0.0;
  double psnr = 0.0;  // mean over finite values; +inf when none are finite
  double sd = 0.0;
  std::size_t psnr_infinite = 0;
  std::size_t sd_infinite = 0;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Aligned by index: fake[i] is the generated counterpart of real[i].
MetricsReport evaluate(std::span<const ImageTensor> fake, std::span<const ImageTensor> real,
                       const ClassifierOracle& oracle);

}  // namespace panogan::metrics
