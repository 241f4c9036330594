#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "panogan/errors.hpp"
#include "panogan/metrics.hpp"
#include "support.hpp"

using namespace panogan;
using namespace panogan::metrics;

namespace {

class UniformOracle : public ClassifierOracle {
 public:
  explicit UniformOracle(std::size_t k) : k_(k) {}
  std::size_t num_classes() const override { return k_; }
  Distribution predict(const ImageTensor&) const override { return Distribution(k_, 1.0 / static_cast<double>(k_)); }
  std::vector<double> features(const ImageTensor&) const override { return {}; }

 private:
  std::size_t k_;
};

/// Image values on a 1/256 grid so that unit-range arithmetic is exact.
ImageTensor grid_image(int64_t c, int64_t h, int64_t w, double lo, double hi) {
  auto t = torch::randint(0, static_cast<int64_t>((hi - lo) * 256) + 1, {c, h, w}).to(torch::kFloat32) / 256.0 + lo;
  return ImageTensor(t);
}

Distribution random_distribution(std::size_t k) {
  auto t = torch::softmax(torch::randn({static_cast<int64_t>(k)}, torch::kFloat64) * 2.0, 0);
  return Distribution(t.data_ptr<double>(), t.data_ptr<double>() + k);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("ssim") {
  torch::manual_seed(1);
  const auto x = testing::random_image(3, 16, 48);
  const auto y = testing::random_image(3, 16, 48);
  CHECK(std::abs(ssim(x, x) - 1.0) <= 1e-6);
  CHECK(std::abs(ssim(x, y) - ssim(y, x)) <= 1e-7);
  CHECK(std::abs(ssim(x, y) - oracle::ssim(x, y)) <= 1e-6);
  CHECK(ssim(x, y) >= -1.0);
  CHECK(ssim(x, y) <= 1.0);

  const double c1 = 1e-4;
  const auto black = ImageTensor::filled(3, 16, 16, -1.0f);
  const auto white = ImageTensor::filled(3, 16, 16, 1.0f);
  CHECK(ssim(black, white) == doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-9));
  CHECK_THROWS_AS(ssim(x, testing::random_image(3, 16, 47)), ShapeError);
}

TEST_CASE("pixel metrics agree with loop oracles on 8x8 images") {
  torch::manual_seed(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = testing::random_image(3, 8, 8);
    const auto y = testing::random_image(3, 8, 8);
    CHECK(std::abs(ssim(x, y) - oracle::ssim(x, y)) <= 1e-6);
    CHECK(std::abs(psnr(x, y) - oracle::psnr(x, y)) <= 1e-6);
    CHECK(std::abs(sharpness_difference(x, y) - oracle::sharpness_difference(x, y)) <= 1e-6);
  }
}

TEST_CASE("psnr") {
  torch::manual_seed(3);
  const auto x = grid_image(3, 8, 32, -1.0, 0.75);
  CHECK(std::isinf(psnr(x, x)));
  CHECK(psnr(x, x) > 0);
  // +0.2 in [-1, 1] is +0.1 on the unit range: MSE 0.01
  const ImageTensor shifted(x.tensor() + 0.2f);
  CHECK(std::abs(psnr(x, shifted) - 20.0) <= 1e-3);

  const auto noise = torch::rand({3, 8, 32}) * 2 - 1;
  double previous = kInfinity;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const double value = psnr(x, ImageTensor(x.tensor() + noise * amp));
    CHECK(value < previous);
    previous = value;
  }
}

TEST_CASE("sharpness difference") {
  torch::manual_seed(4);
  const auto x = grid_image(3, 8, 8, -1.0, 0.5);
  CHECK(std::isinf(sharpness_difference(x, x)));
  CHECK(std::isinf(sharpness_difference(x, ImageTensor(x.tensor() + 0.25f))));
  const auto y = testing::random_image(3, 8, 8);
  CHECK(std::isfinite(sharpness_difference(x, y)));
  CHECK_THROWS_AS(sharpness_difference(ImageTensor::filled(3, 1, 5, 0.0f), ImageTensor::filled(3, 1, 5, 0.0f)),
                  ShapeError);
}

TEST_CASE("kl divergence and score") {
  CHECK(kl_divergence({0.5, 0.5}, {0.25, 0.75}) ==
        doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-12));
  CHECK(kl_divergence({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(std::log(1e12)).epsilon(1e-9));
  torch::manual_seed(5);
  std::vector<Distribution> p, q;
  for (int i = 0; i < 20; ++i) {
    p.push_back(random_distribution(6));
    q.push_back(random_distribution(6));
    CHECK(kl_divergence(p.back(), q.back()) >= 0.0);
  }
  const auto same = kl_score(p, p);
  CHECK(std::abs(same.mean) <= 1e-9);
  CHECK(std::abs(same.std) <= 1e-9);

  const std::vector<Distribution> a = {{0.5, 0.5}, {0.9, 0.1}};
  const std::vector<Distribution> b = {{0.25, 0.75}, {0.9, 0.1}};
  const auto ab = kl_score(a, b);
  const double k0 = kl_divergence(a[0], b[0]);
  CHECK(ab.mean == doctest::Approx(k0 / 2));
  CHECK(ab.std == doctest::Approx(k0 / 2));
  CHECK_THROWS_AS(kl_score(std::vector<Distribution>{}, std::vector<Distribution>{}), ConfigError);

  const auto oracle = make_oracle("synthetic");
  std::vector<ImageTensor> images = {testing::random_image(3, 8, 32), testing::random_image(3, 8, 32)};
  CHECK(std::abs(kl_score(images, images, *oracle).mean) <= 1e-9);
}

TEST_CASE("inception score") {
  const UniformOracle uniform(10);
  std::vector<ImageTensor> images(4, ImageTensor::filled(3, 4, 4, 0.0f));
  for (auto mode : {InceptionMode::kAll, InceptionMode::kTop1, InceptionMode::kTop5}) {
    CHECK(std::abs(inception_score(images, uniform, mode) - 1.0) <= 1e-6);
  }
  const std::vector<Distribution> split = {{1, 0}, {0, 1}, {1, 0}, {0, 1}};
  CHECK(inception_score(split, InceptionMode::kAll) == doctest::Approx(2.0).epsilon(1e-9));

  torch::manual_seed(6);
  std::vector<Distribution> preds;
  for (int i = 0; i < 30; ++i) preds.push_back(random_distribution(8));
  for (auto mode : {InceptionMode::kAll, InceptionMode::kTop1, InceptionMode::kTop5}) {
    const double s = inception_score(preds, mode);
    CHECK(s >= 1.0 - 1e-12);
    CHECK(s <= 8.0 + 1e-9);
  }
  CHECK_THROWS_AS(inception_score(std::vector<Distribution>{}, InceptionMode::kAll), ConfigError);

  const auto top2 = restrict_top_k({0.1, 0.5, 0.3, 0.1}, 2);
  CHECK(top2[0] == 0.0);
  CHECK(top2[1] == doctest::Approx(0.625));
  CHECK(top2[2] == doctest::Approx(0.375));
  CHECK(top2[3] == 0.0);
}

TEST_CASE("prediction accuracy") {
  torch::manual_seed(7);
  std::vector<Distribution> real;
  for (int i = 0; i < 6; ++i) {
    auto p = Distribution(7, 0.05);
    p[static_cast<std::size_t>(i)] = 0.7;
    real.push_back(p);
  }
  for (std::size_t k : {1u, 5u}) {
    CHECK(prediction_accuracy(real, real, k, ConfidenceFilter::kAll) == 100.0);
    CHECK(prediction_accuracy(real, real, k, ConfidenceFilter::kConfident) == 100.0);
  }
  // exactly one of four pairs agrees on the top-1 class
  const std::vector<Distribution> r4 = {{0.8, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.1, 0.1, 0.8}, {0.8, 0.1, 0.1}};
  const std::vector<Distribution> f4 = {{0.8, 0.1, 0.1}, {0.6, 0.1, 0.3}, {0.1, 0.6, 0.3}, {0.1, 0.3, 0.6}};
  CHECK(prediction_accuracy(f4, r4, 1, ConfidenceFilter::kAll) == 25.0);
  CHECK(prediction_accuracy(f4, r4, 2, ConfidenceFilter::kAll) == 50.0);
  // the confidence filter drops the unsure real sample
  const std::vector<Distribution> r2 = {{0.4, 0.35, 0.25}, {0.9, 0.05, 0.05}};
  const std::vector<Distribution> f2 = {{0.4, 0.35, 0.25}, {0.1, 0.8, 0.1}};
  CHECK(prediction_accuracy(f2, r2, 1, ConfidenceFilter::kAll) == 50.0);
  CHECK(prediction_accuracy(f2, r2, 1, ConfidenceFilter::kConfident) == 0.0);
  CHECK(std::isnan(prediction_accuracy({r2.data(), 1}, {r2.data(), 1}, 1, ConfidenceFilter::kConfident)));
  CHECK_THROWS_AS(prediction_accuracy(f4, r2, 1, ConfidenceFilter::kAll), ShapeError);
}

TEST_CASE("synthetic classifier") {
  const auto a = make_oracle("synthetic:K=12,seed=3,T=0.5");
  const auto b = make_oracle("synthetic:K=12,seed=3,T=0.5");
  CHECK(a->num_classes() == 12);
  torch::manual_seed(8);
  const auto img = testing::random_image(3, 8, 32);
  const auto p = a->predict(img);
  double sum = 0.0;
  for (double v : p) sum += v;
  CHECK(std::abs(sum - 1.0) <= 1e-5);
  CHECK(p == b->predict(img));
  CHECK(a->features(img).size() == 21);
  CHECK(make_oracle("synthetic")->num_classes() == 10);
  CHECK_THROWS_AS(make_oracle("alexnet"), ConfigError);
  CHECK_THROWS_AS(make_oracle("synthetic:K=x"), ConfigError);
  CHECK_THROWS_AS(make_oracle("synthetic:depth=3"), ConfigError);
}

TEST_CASE("evaluate on identical sets") {
  torch::manual_seed(9);
  std::vector<ImageTensor> images;
  for (int i = 0; i < 4; ++i) images.push_back(testing::random_image(3, 16, 64));
  const auto oracle = make_oracle("synthetic:T=0.02");
  const auto r = evaluate(images, images, *oracle);
  CHECK(r.count == 4);
  CHECK(std::abs(r.ssim - 1.0) <= 1e-6);
  CHECK(std::abs(r.kl.mean) <= 1e-9);
  CHECK(r.accuracy_top1_all == 100.0);
  CHECK(r.accuracy_top5_all == 100.0);
  CHECK(r.accuracy_top1_05 == 100.0);
  CHECK(r.accuracy_top5_05 == 100.0);
  CHECK(std::isinf(r.psnr));
  CHECK(std::isinf(r.sd));
  CHECK(r.psnr_infinite == 4);
  CHECK(r.sd_infinite == 4);
  CHECK(r.to_json()["psnr"] == "inf");

  const std::vector<ImageTensor> three(images.begin(), images.begin() + 3);
  CHECK_THROWS_AS(evaluate(three, images, *oracle), ShapeError);
}

TEST_CASE("evaluate on a 4-image fixture matches the per-metric oracles") {
  torch::manual_seed(10);
  std::vector<ImageTensor> fake, real;
  for (int i = 0; i < 4; ++i) {
    fake.push_back(testing::random_image(3, 8, 32));
    real.push_back(testing::random_image(3, 8, 32));
  }
  const auto oracle = make_oracle("synthetic");
  const auto r = evaluate(fake, real, *oracle);
  double s = 0, p = 0, d = 0;
  std::vector<Distribution> pf, pr;
  for (int i = 0; i < 4; ++i) {
    s += oracle::ssim(fake[i], real[i]);
    p += oracle::psnr(fake[i], real[i]);
    d += oracle::sharpness_difference(fake[i], real[i]);
    pf.push_back(oracle->predict(fake[i]));
    pr.push_back(oracle->predict(real[i]));
  }
  CHECK(r.ssim == doctest::Approx(s / 4).epsilon(1e-9));
  CHECK(r.psnr == doctest::Approx(p / 4).epsilon(1e-9));
  CHECK(r.sd == doctest::Approx(d / 4).epsilon(1e-9));
  double kl = 0;
  for (int i = 0; i < 4; ++i) kl += kl_divergence(pf[i], pr[i]);
  CHECK(r.kl.mean == doctest::Approx(kl / 4).epsilon(1e-12));
  CHECK(r.inception_all == doctest::Approx(inception_score(pf, InceptionMode::kAll)));
}

TEST_CASE("csv columns follow the benchmark table order") {
  CHECK(MetricsReport::csv_header() ==
        "inception_all,inception_top1,inception_top5,accuracy_top1_all,accuracy_top5_all,accuracy_top1_05,"
        "accuracy_top5_05,kl_mean,kl_std,ssim,psnr,sd");
  MetricsReport r;
  r.inception_all = 1;
  r.inception_top1 = 2;
  r.inception_top5 = 3;
  r.accuracy_top1_all = 4;
  r.accuracy_top5_all = 5;
  r.accuracy_top1_05 = 6;
  r.accuracy_top5_05 = 7;
  r.kl = {8, 9};
  r.ssim = 10;
  r.psnr = kInfinity;
  r.sd = 12;
  CHECK(r.csv_row() == "1,2,3,4,5,6,7,8,9,10,inf,12");
}

}  // TEST_SUITE
