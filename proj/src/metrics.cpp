#include "panogan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <torch/torch.h>

#include "panogan/errors.hpp"

namespace panogan::metrics {

namespace {

constexpr double kPeak = 1.0;
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

void require_same_shape(const ImageTensor& x, const ImageTensor& y, const char* metric) {
  if (!x.defined() || !y.defined() || x.tensor().sizes() != y.tensor().sizes()) {
    throw ShapeError(std::string(metric) + " needs two images of identical shape");
  }
}

torch::Tensor unit_range(const ImageTensor& image) { return (image.tensor().to(torch::kFloat64) + 1.0) / 2.0; }

int fitted_window(int64_t extent) {
  const int64_t odd = extent % 2 == 1 ? extent : extent - 1;
  return static_cast<int>(std::min<int64_t>(kSsimWindow, std::max<int64_t>(odd, 1)));
}

torch::Tensor gaussian_1d(int size) {
  auto k = torch::arange(size, torch::kFloat64) - static_cast<double>(size - 1) / 2.0;
  auto g = torch::exp(-(k * k) / (2.0 * kSsimSigma * kSsimSigma));
  return g / g.sum();
}

double log_ratio_db(double denominator) {
  if (denominator <= 0.0) return kInfinity;
  return 10.0 * std::log10(kPeak * kPeak / denominator);
}

Distribution validated(const Distribution& p, std::size_t classes) {
  if (p.size() != classes) throw ShapeError("class distributions differ in length");
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

double ssim(const ImageTensor& x, const ImageTensor& y) {
  require_same_shape(x, y, "ssim");
  const auto a = unit_range(x).unsqueeze(1);  // C x 1 x H x W: channels as batch
  const auto b = unit_range(y).unsqueeze(1);
  const int wh = fitted_window(x.height());
  const int ww = fitted_window(x.width());
  const auto window = torch::outer(gaussian_1d(wh), gaussian_1d(ww)).view({1, 1, wh, ww});
  auto filter = [&](const torch::Tensor& t) { return torch::conv2d(t, window); };

  const auto mu_a = filter(a);
  const auto mu_b = filter(b);
  const auto var_a = filter(a * a) - mu_a * mu_a;
  const auto var_b = filter(b * b) - mu_b * mu_b;
  const auto cov = filter(a * b) - mu_a * mu_b;
  const double c1 = (0.01 * kPeak) * (0.01 * kPeak);
  const double c2 = (0.03 * kPeak) * (0.03 * kPeak);
  const auto map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  // mean over windows per channel, then over channels
  return map.mean({1, 2, 3}).mean().item<double>();
}

double psnr(const ImageTensor& x, const ImageTensor& y) {
  require_same_shape(x, y, "psnr");
  const auto diff = unit_range(x) - unit_range(y);
  return log_ratio_db((diff * diff).mean().item<double>());
}

double sharpness_difference(const ImageTensor& x, const ImageTensor& y) {
  require_same_shape(x, y, "sharpness difference");
  if (x.height() < 2 || x.width() < 2) throw ShapeError("sharpness difference needs images of at least 2x2");
  auto gradient = [](const torch::Tensor& t) {
    const int64_t h = t.size(1) - 1;
    const int64_t w = t.size(2) - 1;
    const auto base = t.slice(1, 0, h).slice(2, 0, w);
    const auto dx = t.slice(1, 0, h).slice(2, 1, w + 1) - base;
    const auto dy = t.slice(1, 1, h + 1).slice(2, 0, w) - base;
    return dx.abs() + dy.abs();
  };
  const auto g = (gradient(unit_range(x)) - gradient(unit_range(y))).abs();
  return log_ratio_db(g.mean().item<double>());
}

// ---------------------------------------------------------------------------

double kl_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size() || p.empty()) throw ShapeError("KL divergence needs equal-length, non-empty distributions");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p[i], kProbabilityFloor);
    const double qi = std::max(q[i], kProbabilityFloor);
    sum += pi * std::log(pi / qi);
  }
  return sum;
}

MeanStd kl_score(std::span<const Distribution> fake, std::span<const Distribution> real) {
  if (fake.empty() || real.empty()) throw ConfigError("KL score needs non-empty image sets");
  if (fake.size() != real.size()) throw ShapeError("KL score needs index-aligned sets of equal size");
  std::vector<double> values;
  values.reserve(fake.size());
  for (std::size_t i = 0; i < fake.size(); ++i) values.push_back(kl_divergence(fake[i], real[i]));
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / n)};
}

namespace {

std::vector<Distribution> predict_all(std::span<const ImageTensor> images, const ClassifierOracle& oracle) {
  std::vector<Distribution> out;
  out.reserve(images.size());
  for (const auto& image : images) out.push_back(validated(oracle.predict(image), oracle.num_classes()));
  return out;
}

std::vector<std::size_t> ranked(const Distribution& p) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  return idx;
}

}  // namespace

MeanStd kl_score(std::span<const ImageTensor> fake, std::span<const ImageTensor> real, const ClassifierOracle& oracle) {
  if (fake.empty() || real.empty()) throw ConfigError("KL score needs non-empty image sets");
  const auto pf = predict_all(fake, oracle);
  const auto pr = predict_all(real, oracle);
  return kl_score(pf, pr);
}

Distribution restrict_top_k(const Distribution& p, std::size_t k) {
  if (k == 0) throw ConfigError("top-k needs k >= 1");
  if (k >= p.size()) return p;
  const auto order = ranked(p);
  Distribution out(p.size(), 0.0);
  double mass = 0.0;
  for (std::size_t i = 0; i < k; ++i) mass += p[order[i]];
  for (std::size_t i = 0; i < k; ++i) out[order[i]] = mass > 0.0 ? p[order[i]] / mass : 1.0 / static_cast<double>(k);
  return out;
}

double inception_score(std::span<const Distribution> predictions, InceptionMode mode) {
  if (predictions.empty()) throw ConfigError("inception score needs a non-empty image set");
  const std::size_t classes = predictions.front().size();
  std::vector<Distribution> rows;
  rows.reserve(predictions.size());
  for (const auto& p : predictions) {
    validated(p, classes);
    switch (mode) {
      case InceptionMode::kAll:
        rows.push_back(p);
        break;
      case InceptionMode::kTop1:
        rows.push_back(restrict_top_k(p, 1));
        break;
      case InceptionMode::kTop5:
        rows.push_back(restrict_top_k(p, 5));
        break;
    }
  }
  Distribution marginal(classes, 0.0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < classes; ++c) marginal[c] += row[c];
  }
  for (auto& m : marginal) m /= static_cast<double>(rows.size());
  double mean_kl = 0.0;
  for (const auto& row : rows) mean_kl += kl_divergence(row, marginal);
  mean_kl /= static_cast<double>(rows.size());
  return std::exp(mean_kl);
}

double inception_score(std::span<const ImageTensor> images, const ClassifierOracle& oracle, InceptionMode mode) {
  if (images.empty()) throw ConfigError("inception score needs a non-empty image set");
  return inception_score(predict_all(images, oracle), mode);
}

double prediction_accuracy(std::span<const Distribution> fake, std::span<const Distribution> real, std::size_t top_k,
                           ConfidenceFilter filter) {
  if (fake.size() != real.size()) throw ShapeError("prediction accuracy needs index-aligned sets of equal size");
  if (top_k == 0) throw ConfigError("top-k needs k >= 1");
  std::size_t considered = 0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < fake.size(); ++i) {
    validated(fake[i], real[i].size());
    const auto real_rank = ranked(real[i]);
    const std::size_t truth = real_rank.front();
    if (filter == ConfidenceFilter::kConfident && !(real[i][truth] > 0.5)) continue;
    ++considered;
    const auto fake_rank = ranked(fake[i]);
    const std::size_t k = std::min(top_k, fake_rank.size());
    if (std::find(fake_rank.begin(), fake_rank.begin() + static_cast<std::ptrdiff_t>(k), truth) !=
        fake_rank.begin() + static_cast<std::ptrdiff_t>(k)) {
      ++hits;
    }
  }
  if (considered == 0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * static_cast<double>(hits) / static_cast<double>(considered);
}

// ---------------------------------------------------------------------------

SyntheticClassifier::SyntheticClassifier(std::size_t num_classes, std::uint64_t seed, double temperature)
    : num_classes_(num_classes), temperature_(temperature) {
  if (num_classes < 2) throw ConfigError("synthetic classifier needs at least 2 classes");
  if (!(temperature > 0.0)) throw ConfigError("synthetic classifier temperature must be positive");
  const std::size_t dim = 21;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 4.0);
  weights_.resize(num_classes * dim);
  bias_.resize(num_classes);
  for (auto& w : weights_) w = normal(rng);
  for (auto& b : bias_) b = normal(rng) * 0.25;
}

std::vector<double> SyntheticClassifier::features(const ImageTensor& image) const {
  if (image.channels() != 3) throw ShapeError("synthetic classifier expects 3-channel images");
  const auto x = unit_range(image);
  std::vector<double> f;
  f.reserve(21);
  const auto mean = x.mean({1, 2});
  const auto std = x.std({1, 2}, /*unbiased=*/false);
  torch::Tensor grad = torch::zeros({3}, torch::kFloat64);
  if (image.width() > 1) grad = (x.slice(2, 1) - x.slice(2, 0, image.width() - 1)).abs().mean({1, 2});
  for (int c = 0; c < 3; ++c) f.push_back(mean[c].item<double>());
  for (int c = 0; c < 3; ++c) f.push_back(std[c].item<double>());
  for (int c = 0; c < 3; ++c) f.push_back(grad[c].item<double>());
  const int64_t w = image.width();
  for (int q = 0; q < 4; ++q) {
    const int64_t lo = q * w / 4;
    const int64_t hi = std::max(lo + 1, (q + 1) * w / 4);
    const auto part = x.slice(2, lo, std::min(hi, w)).mean({1, 2});
    for (int c = 0; c < 3; ++c) f.push_back(part[c].item<double>());
  }
  return f;
}

Distribution SyntheticClassifier::predict(const ImageTensor& image) const {
  const auto f = features(image);
  const std::size_t dim = f.size();
  std::vector<double> logits(num_classes_);
  for (std::size_t k = 0; k < num_classes_; ++k) {
    double z = bias_[k];
    for (std::size_t d = 0; d < dim; ++d) z += weights_[k * dim + d] * f[d];
    logits[k] = z / temperature_;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double norm = 0.0;
  for (auto& z : logits) {
    z = std::exp(z - top);
    norm += z;
  }
  for (auto& z : logits) z /= norm;
  return logits;
}

std::unique_ptr<ClassifierOracle> make_oracle(const std::string& spec) {
  const std::string kind = spec.substr(0, spec.find(':'));
  if (kind != "synthetic") throw ConfigError("unknown classifier oracle '" + spec + "' (available: synthetic)");
  std::size_t classes = 10;
  std::uint64_t seed = 7;
  double temperature = 1.0;
  if (const auto colon = spec.find(':'); colon != std::string::npos) {
    std::stringstream options(spec.substr(colon + 1));
    std::string item;
    while (std::getline(options, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("malformed oracle option '" + item + "'");
      const std::string key = item.substr(0, eq);
      const std::string value = item.substr(eq + 1);
      try {
        if (key == "K") {
          classes = std::stoul(value);
        } else if (key == "seed") {
          seed = std::stoull(value);
        } else if (key == "T") {
          temperature = std::stod(value);
        } else {
          throw ConfigError("unknown oracle option '" + key + "'");
        }
      } catch (const std::logic_error&) {
        throw ConfigError("bad value for oracle option '" + key + "'");
      }
    }
  }
  return std::make_unique<SyntheticClassifier>(classes, seed, temperature);
}

// ---------------------------------------------------------------------------

MetricsReport evaluate(std::span<const ImageTensor> fake, std::span<const ImageTensor> real,
                       const ClassifierOracle& oracle) {
  if (fake.empty() || real.empty()) throw ConfigError("evaluation needs non-empty image sets");
  if (fake.size() != real.size()) {
    throw ShapeError("evaluation needs equally many fake and real images (" + std::to_string(fake.size()) + " vs " +
                     std::to_string(real.size()) + ")");
  }
  MetricsReport report;
  report.count = fake.size();
  const auto pf = predict_all(fake, oracle);
  const auto pr = predict_all(real, oracle);
  report.inception_all = inception_score(pf, InceptionMode::kAll);
  report.inception_top1 = inception_score(pf, InceptionMode::kTop1);
  report.inception_top5 = inception_score(pf, InceptionMode::kTop5);
  report.accuracy_top1_all = prediction_accuracy(pf, pr, 1, ConfidenceFilter::kAll);
  report.accuracy_top5_all = prediction_accuracy(pf, pr, 5, ConfidenceFilter::kAll);
  report.accuracy_top1_05 = prediction_accuracy(pf, pr, 1, ConfidenceFilter::kConfident);
  report.accuracy_top5_05 = prediction_accuracy(pf, pr, 5, ConfidenceFilter::kConfident);
  report.kl = kl_score(pf, pr);

  double ssim_sum = 0.0, psnr_sum = 0.0, sd_sum = 0.0;
  std::size_t psnr_finite = 0, sd_finite = 0;
  for (std::size_t i = 0; i < fake.size(); ++i) {
    ssim_sum += ssim(fake[i], real[i]);
    const double p = psnr(fake[i], real[i]);
    const double s = sharpness_difference(fake[i], real[i]);
    if (std::isinf(p)) {
      ++report.psnr_infinite;
    } else {
      psnr_sum += p;
      ++psnr_finite;
    }
    if (std::isinf(s)) {
      ++report.sd_infinite;
    } else {
      sd_sum += s;
      ++sd_finite;
    }
  }
  report.ssim = ssim_sum / static_cast<double>(fake.size());
  report.psnr = psnr_finite ? psnr_sum / static_cast<double>(psnr_finite) : kInfinity;
  report.sd = sd_finite ? sd_sum / static_cast<double>(sd_finite) : kInfinity;
  return report;
}

namespace {

nlohmann::json number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

std::string cell(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  return {{"count", count},
          {"inception_score", {{"all", number(inception_all)}, {"top1", number(inception_top1)}, {"top5", number(inception_top5)}}},
          {"accuracy",
           {{"top1_all", number(accuracy_top1_all)},
            {"top5_all", number(accuracy_top5_all)},
            {"top1_05", number(accuracy_top1_05)},
            {"top5_05", number(accuracy_top5_05)}}},
          {"kl", {{"mean", number(kl.mean)}, {"std", number(kl.std)}}},
          {"ssim", number(ssim)},
          {"psnr", number(psnr)},
          {"sd", number(sd)},
          {"psnr_infinite_count", psnr_infinite},
          {"sd_infinite_count", sd_infinite}};
}

std::string MetricsReport::csv_header() {
  return "inception_all,inception_top1,inception_top5,accuracy_top1_all,accuracy_top5_all,accuracy_top1_05,"
         "accuracy_top5_05,kl_mean,kl_std,ssim,psnr,sd";
}

std::string MetricsReport::csv_row() const {
  const double values[] = {inception_all,     inception_top1,    inception_top5, accuracy_top1_all,
                           accuracy_top5_all, accuracy_top1_05,  accuracy_top5_05, kl.mean,
                           kl.std,            ssim,              psnr,             sd};
  std::string row;
  for (std::size_t i = 0; i < std::size(values); ++i) row += (i ? "," : "") + cell(values[i]);
  return row;
}

}  // namespace panogan::metrics
