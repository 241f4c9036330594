#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "panogan/dataio.hpp"
#include "panogan/errors.hpp"
#include "panogan/synthetic.hpp"
#include "support.hpp"

using namespace panogan;
using panogan::testing::TempDir;
namespace fs = std::filesystem;

namespace {

torch::Tensor quarter(const ImageTensor& image, int k) {
  const int64_t s = image.height();
  return image.tensor().slice(2, k * s, (k + 1) * s);
}

void make_fixture(const fs::path& root, const std::string& split, int triples) {
  for (int i = 0; i < triples; ++i) {
    const std::string id = "00" + std::to_string(i);
    for (const char* sub : {"aerial", "panorama", "segmentation"}) {
      write_image(root / split / sub / (id + ".png"), ImageTensor::filled(3, 4, sub[0] == 'a' ? 4 : 16, 0.0f));
    }
  }
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("normalization round trip is exact at 8-bit precision") {
  for (int c = 0; c < 256; ++c) {
    const auto code = static_cast<std::uint8_t>(c);
    const float v = normalize_code(code);
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
    CHECK(denormalize_code(v) == code);
  }
  CHECK(normalize_code(0) == -1.0f);
  CHECK(normalize_code(255) == 1.0f);
}

TEST_CASE("image files survive a PNG round trip") {
  TempDir dir;
  torch::manual_seed(3);
  const auto image = quantize(testing::random_image(3, 5, 7));
  write_image(dir.path() / "x.png", image);
  CHECK(read_image(dir.path() / "x.png").bit_equal(image));
}

TEST_CASE("duplicate_rotate quarters are successive counter-clockwise turns") {
  torch::manual_seed(11);
  for (int trial = 0; trial < 5; ++trial) {
    const auto aerial = testing::random_image(3, 16, 16);
    const auto out = data::preprocess_duplicate_rotate(aerial, 16);
    REQUIRE(out.height() == 16);
    REQUIRE(out.width() == 64);
    CHECK(torch::equal(quarter(out, 0), aerial.tensor()));
    auto expected = aerial.tensor().contiguous();
    for (int k = 1; k < 4; ++k) {
      expected = oracle::rotate_ccw(expected);
      CHECK(torch::equal(quarter(out, k).contiguous(), expected));
    }
  }
}

TEST_CASE("duplicate_rotate of a single marked pixel") {
  const int64_t s = 8;
  auto t = torch::zeros({3, s, s});
  t.index_put_({torch::indexing::Slice(), 0, 0}, 1.0);
  const auto out = data::preprocess_duplicate_rotate(ImageTensor(t), s);
  CHECK(out.tensor().eq(1.0f).sum().item<int64_t>() == 4 * 3);
  // (0,0) under successive ccw turns: (0,0) -> (S-1,0) -> (S-1,S-1) -> (0,S-1)
  const std::pair<int64_t, int64_t> marks[] = {{0, 0}, {s - 1, 0}, {s - 1, s - 1}, {0, s - 1}};
  for (int k = 0; k < 4; ++k) {
    CHECK(out.at(0, marks[k].first, k * s + marks[k].second) == 1.0f);
  }
}

TEST_CASE("duplicate tiles the input unchanged") {
  torch::manual_seed(5);
  const auto aerial = testing::random_image(3, 12, 12);
  const auto out = data::preprocess_duplicate(aerial, 12);
  for (int k = 0; k < 4; ++k) CHECK(torch::equal(quarter(out, k), aerial.tensor()));

  auto t = torch::zeros({3, 12, 12});
  t.index_put_({torch::indexing::Slice(), 3, 7}, 1.0);
  const auto marked = data::preprocess_duplicate(ImageTensor(t), 12);
  CHECK(marked.tensor().eq(1.0f).sum().item<int64_t>() == 12);
  for (int k = 0; k < 4; ++k) CHECK(marked.at(1, 3, k * 12 + 7) == 1.0f);
}

TEST_CASE("constant images stay constant under every format") {
  const auto aerial = ImageTensor::filled(3, 16, 16, 0.5f);
  for (auto f : {data::InputFormat::kDuplicate, data::InputFormat::kDuplicateRotate, data::InputFormat::kPolar}) {
    const auto out = data::preprocess(f, aerial, 16);
    CHECK(out.width() == 64);
    CHECK((out.tensor() - 0.5f).abs().max().item<float>() < 1e-6f);
  }
}

TEST_CASE("full-size preprocessing shapes") {
  const auto aerial = ImageTensor::filled(3, 256, 256, 0.0f);
  for (auto f : {data::InputFormat::kDuplicate, data::InputFormat::kDuplicateRotate, data::InputFormat::kPolar}) {
    const auto out = data::preprocess(f, aerial, 256);
    CHECK(out.channels() == 3);
    CHECK(out.height() == 256);
    CHECK(out.width() == 1024);
  }
}

TEST_CASE("aerial inputs are rescaled before duplication") {
  const auto out = data::preprocess_duplicate_rotate(ImageTensor::filled(3, 32, 32, 0.25f), 16);
  CHECK(out.height() == 16);
  CHECK(out.width() == 64);
}

TEST_CASE("non-square aerial input is a shape error") {
  const auto bad = ImageTensor::filled(3, 8, 9, 0.0f);
  CHECK_THROWS_AS(data::preprocess_duplicate_rotate(bad, 8), ShapeError);
  CHECK_THROWS_AS(data::preprocess_duplicate(bad, 8), ShapeError);
  CHECK_THROWS_AS(data::preprocess_polar(bad, 8), ShapeError);
}

TEST_CASE("polar transform matches the per-pixel resampler") {
  SUBCASE("checkerboard") {
    auto t = torch::zeros({3, 32, 32});
    for (int64_t y = 0; y < 32; ++y)
      for (int64_t x = 0; x < 32; ++x) t.index_put_({torch::indexing::Slice(), y, x}, ((x / 4 + y / 4) % 2) ? 1.0 : -1.0);
    const ImageTensor board(t);
    const auto out = data::preprocess_polar(board, 32);
    CHECK(oracle::max_abs_diff(oracle::polar(board, 32), out.tensor()) <= 1e-6);
  }
  SUBCASE("random, different output height") {
    torch::manual_seed(21);
    const auto image = testing::random_image(3, 24, 24);
    const auto out = data::preprocess_polar(image, 10);
    CHECK(out.width() == 40);
    CHECK(oracle::max_abs_diff(oracle::polar(image, 10), out.tensor()) <= 1e-6);
  }
}

TEST_CASE("polar transform of concentric rings gives constant rows") {
  const int64_t s = 33;
  auto t = torch::zeros({3, s, s});
  const double c = (s - 1) / 2.0;
  for (int64_t y = 0; y < s; ++y)
    for (int64_t x = 0; x < s; ++x) {
      const double r2 = (x - c) * (x - c) + (y - c) * (y - c);
      t.index_put_({torch::indexing::Slice(), y, x}, std::cos(r2 / 200.0));
    }
  const auto out = data::preprocess_polar(ImageTensor(t), 16);
  const int64_t w = out.width();
  for (int64_t v = 0; v < 16; ++v) {
    const auto row = out.tensor()[0][v];
    // the four axis bearings sample mirror-image grid positions
    const float north = row[0].item<float>();
    CHECK(row[w / 4].item<float>() == doctest::Approx(north).epsilon(1e-5));
    CHECK(row[w / 2].item<float>() == doctest::Approx(north).epsilon(1e-5));
    CHECK(row[3 * w / 4].item<float>() == doctest::Approx(north).epsilon(1e-5));
    // elsewhere only bilinear interpolation error separates the samples
    CHECK((row.max() - row.min()).item<float>() < 0.02f);
  }
  const auto flat = data::preprocess_polar(ImageTensor::filled(3, s, s, -0.3f), 16);
  CHECK((flat.tensor() - flat.tensor().select(2, 0).unsqueeze(2)).abs().max().item<float>() == 0.0f);
}

TEST_CASE("manifest of 4 triples and 1 orphan aerial") {
  TempDir dir;
  make_fixture(dir.path(), "train", 4);
  write_image(dir.path() / "train" / "aerial" / "orphan.png", ImageTensor::filled(3, 4, 4, 0.0f));
  const auto m = data::load_manifest(dir.path(), data::Split::kTrain);
  CHECK(m.records.size() == 4);
  REQUIRE(m.orphans.size() == 1);
  CHECK(m.orphans[0].filename() == "orphan.png");
  CHECK_THROWS_AS(data::load_manifest(dir.path(), data::Split::kTrain, /*strict=*/true), IntegrityError);

  const auto j = m.to_json();
  CHECK(j["records"].size() == 4);
  CHECK(j["records"][0]["aerial"].get<std::string>().rfind("train/aerial/", 0) == 0);

  std::set<std::string> ids;
  for (const auto& r : m.records) ids.insert(r.id);
  CHECK(ids.size() == m.records.size());
  CHECK(std::is_sorted(m.records.begin(), m.records.end(),
                       [](const auto& a, const auto& b) { return a.id < b.id; }));
}

TEST_CASE("manifest errors") {
  TempDir dir;
  CHECK_THROWS_AS(data::load_manifest(dir.path() / "missing", data::Split::kTrain), ConfigError);
  for (const char* sub : {"aerial", "panorama", "segmentation"}) fs::create_directories(dir.path() / "train" / sub);
  CHECK_THROWS_AS(data::load_manifest(dir.path(), data::Split::kTrain), IntegrityError);
}

TEST_CASE("test split records may lack segmentation") {
  TempDir dir;
  for (const char* sub : {"aerial", "panorama"}) {
    write_image(dir.path() / "test" / sub / "a.png", ImageTensor::filled(3, 4, 4, 0.0f));
  }
  const auto m = data::load_manifest(dir.path(), data::Split::kTest);
  REQUIRE(m.records.size() == 1);
  CHECK_FALSE(m.records[0].segmentation.has_value());
}

TEST_CASE("CVUSA-shaped train split yields 35,532 records") {
  TempDir dir("cvusa");
  for (std::size_t i = 0; i < data::kCvusaTrainPairs; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "%07zu", i);
    testing::touch(dir.path() / "train" / "aerial" / (std::string(id) + ".jpg"));
    testing::touch(dir.path() / "train" / "panorama" / (std::string(id) + ".jpg"));
    testing::touch(dir.path() / "train" / "segmentation" / (std::string(id) + ".png"));
  }
  const auto m = data::load_manifest(dir.path(), data::Split::kTrain, /*strict=*/true);
  CHECK(m.records.size() == data::kCvusaTrainPairs);
  CHECK(m.orphans.empty());
}

TEST_CASE("batch iterator arithmetic and determinism") {
  CHECK(data::BatchIterator(4, 2, 0, true).batches_per_epoch() == 2);
  const auto five = data::BatchIterator(5, 2, 0, true).epoch_batches(0);
  REQUIRE(five.size() == 3);
  CHECK(five[0].size() == 2);
  CHECK(five[1].size() == 2);
  CHECK(five[2].size() == 1);

  data::BatchIterator a(37, 4, 99, true), b(37, 4, 99, true);
  for (int i = 0; i < 25; ++i) CHECK(a.next() == b.next());

  data::BatchIterator c(37, 4, 99, true);
  for (int epoch = 0; epoch < 3; ++epoch) {
    auto order = c.epoch_order(epoch);
    std::sort(order.begin(), order.end());
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(order[i] == i);
  }
  CHECK(c.epoch_order(0) != c.epoch_order(1));
  CHECK(data::BatchIterator(37, 4, 100, true).epoch_order(0) != c.epoch_order(0));
  const auto plain = data::BatchIterator(6, 4, 1, false).epoch_order(2);
  CHECK(plain == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});

  data::BatchIterator d(37, 4, 99, true);
  for (int i = 0; i < 13; ++i) d.next();
  data::BatchIterator e(37, 4, 99, true);
  e.seek(1, 3);
  CHECK(d.next() == e.next());

  CHECK_THROWS_AS(data::BatchIterator(4, 0, 0, true), ConfigError);
}

TEST_CASE("collate stacks preprocessed inputs") {
  data::SyntheticSpec spec;
  spec.count = 3;
  spec.panorama_height = 16;
  data::InMemoryDataset ds(data::make_synthetic_pairs(spec));
  const auto batch = data::collate(ds, {2, 0}, data::InputFormat::kDuplicateRotate, 16);
  CHECK(batch.ids == std::vector<std::string>{ds.get(2).id, ds.get(0).id});
  CHECK(batch.aerial.sizes() == torch::IntArrayRef({2, 3, 16, 64}));
  CHECK(batch.panorama.sizes() == torch::IntArrayRef({2, 3, 16, 64}));
  CHECK(batch.segmentation.sizes() == torch::IntArrayRef({2, 3, 16, 64}));
  CHECK(torch::equal(batch.aerial[1], data::preprocess_duplicate_rotate(ds.get(0).aerial, 16).tensor()));
}

TEST_CASE("synthetic scenes are deterministic and in range") {
  data::SyntheticSpec spec;
  spec.count = 2;
  spec.panorama_height = 16;
  spec.seed = 4;
  const auto a = data::make_synthetic_pairs(spec);
  const auto b = data::make_synthetic_pairs(spec);
  REQUIRE(a.size() == 2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].aerial.bit_equal(b[i].aerial));
    CHECK(a[i].panorama.bit_equal(b[i].panorama));
    CHECK(a[i].aerial.in_range());
    CHECK(a[i].panorama.width() == 64);
    CHECK(a[i].segmentation->width() == 64);
  }
}

}  // TEST_SUITE
