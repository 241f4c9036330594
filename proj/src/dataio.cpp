#include "panogan/dataio.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "panogan/errors.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace panogan::data {

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(text) + "' (expected train|test)");
}

std::string to_string(InputFormat format) {
  switch (format) {
    case InputFormat::kPolar:
      return "polar";
    case InputFormat::kDuplicate:
      return "duplicate";
    case InputFormat::kDuplicateRotate:
      return "duplicate_rotate";
  }
  return "?";
}

InputFormat parse_input_format(std::string_view text) {
  if (text == "polar") return InputFormat::kPolar;
  if (text == "duplicate") return InputFormat::kDuplicate;
  if (text == "duplicate_rotate") return InputFormat::kDuplicateRotate;
  throw ConfigError("unknown input format '" + std::string(text) +
                    "' (expected polar|duplicate|duplicate_rotate)");
}

bool is_image_file(const fs::path& path) {
  static const std::set<std::string> kExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".tif",
                                                    ".tiff", ".webp", ".ppm", ".pgm"};
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return kExtensions.count(ext) > 0;
}

namespace {

std::map<std::string, fs::path> index_directory(const fs::path& dir) {
  std::map<std::string, fs::path> by_id;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_image_file(entry.path())) continue;
    const std::string id = entry.path().stem().string();
    auto [it, inserted] = by_id.emplace(id, entry.path());
    if (!inserted) {
      throw IntegrityError("duplicate id '" + id + "' in " + dir.string() + ": " + it->second.filename().string() +
                           " and " + entry.path().filename().string());
    }
  }
  return by_id;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& root, Split split, bool strict) {
  const fs::path split_dir = root / to_string(split);
  const fs::path aerial_dir = split_dir / "aerial";
  const fs::path panorama_dir = split_dir / "panorama";
  const fs::path segmentation_dir = split_dir / "segmentation";
  const bool need_segmentation = split == Split::kTrain;

  for (const auto& dir : {aerial_dir, panorama_dir}) {
    if (!fs::is_directory(dir)) throw ConfigError("missing dataset directory: " + dir.string());
  }
  if (need_segmentation && !fs::is_directory(segmentation_dir)) {
    throw ConfigError("missing dataset directory: " + segmentation_dir.string());
  }

  const auto aerials = index_directory(aerial_dir);
  const auto panoramas = index_directory(panorama_dir);
  const auto segmentations =
      fs::is_directory(segmentation_dir) ? index_directory(segmentation_dir) : std::map<std::string, fs::path>{};

  DatasetManifest manifest;
  manifest.root = root;
  manifest.split = split;
  std::set<fs::path> used;
  for (const auto& [id, aerial] : aerials) {
    auto pano = panoramas.find(id);
    auto seg = segmentations.find(id);
    if (pano == panoramas.end()) continue;
    if (need_segmentation && seg == segmentations.end()) continue;
    RecordPaths record{id, aerial, pano->second, std::nullopt};
    if (seg != segmentations.end()) record.segmentation = seg->second;
    used.insert(aerial);
    used.insert(pano->second);
    if (record.segmentation) used.insert(*record.segmentation);
    manifest.records.push_back(std::move(record));
  }
  for (const auto* files : {&aerials, &panoramas, &segmentations}) {
    for (const auto& [id, path] : *files) {
      if (!used.count(path)) manifest.orphans.push_back(path);
    }
  }
  std::sort(manifest.orphans.begin(), manifest.orphans.end());

  if (manifest.records.empty()) {
    throw IntegrityError("no matched records under " + split_dir.string() + " (" +
                         std::to_string(manifest.orphans.size()) + " unmatched files)");
  }
  if (strict && split == Split::kTrain && !manifest.orphans.empty()) {
    throw IntegrityError(std::to_string(manifest.orphans.size()) + " unmatched files in " + split_dir.string() +
                         ", first: " + manifest.orphans.front().string());
  }
  return manifest;
}

nlohmann::json DatasetManifest::to_json() const {
  auto rel = [this](const fs::path& p) { return p.lexically_relative(root).generic_string(); };
  nlohmann::json j;
  j["root"] = root.generic_string();
  j["split"] = to_string(split);
  j["records"] = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json rec{{"id", r.id}, {"aerial", rel(r.aerial)}, {"panorama", rel(r.panorama)}};
    rec["segmentation"] = r.segmentation ? nlohmann::json(rel(*r.segmentation)) : nlohmann::json(nullptr);
    j["records"].push_back(std::move(rec));
  }
  j["orphans"] = nlohmann::json::array();
  for (const auto& o : orphans) j["orphans"].push_back(rel(o));
  return j;
}

// ---------------------------------------------------------------------------

ImageTensor resize_bilinear(const ImageTensor& image, int64_t height, int64_t width) {
  if (height < 1 || width < 1) throw ShapeError("resize target must be positive");
  if (image.height() == height && image.width() == width) return image;
  auto out = F::interpolate(image.tensor().unsqueeze(0), F::InterpolateFuncOptions()
                                                             .size(std::vector<int64_t>{height, width})
                                                             .mode(torch::kBilinear)
                                                             .align_corners(false));
  return ImageTensor(out.squeeze(0));
}

ImageTensor rotate90_ccw(const ImageTensor& image, int k) {
  return ImageTensor(torch::rot90(image.tensor(), k, {1, 2}));
}

namespace {

ImageTensor square_aerial(const ImageTensor& aerial, int64_t target_height) {
  if (aerial.height() != aerial.width()) {
    throw ShapeError("aerial image must be square, got " + std::to_string(aerial.height()) + "x" +
                     std::to_string(aerial.width()));
  }
  if (target_height < 1) throw ShapeError("target height must be positive");
  return resize_bilinear(aerial, target_height, target_height);
}

}  // namespace

ImageTensor preprocess_duplicate_rotate(const ImageTensor& aerial, int64_t target_height) {
  std::array<torch::Tensor, 4> quarters;
  ImageTensor quarter = square_aerial(aerial, target_height);
  for (int k = 0; k < 4; ++k) {
    quarters[k] = quarter.tensor();
    quarter = rotate90_ccw(quarter, 1);
  }
  return ImageTensor(torch::cat(quarters, 2));
}

ImageTensor preprocess_duplicate(const ImageTensor& aerial, int64_t target_height) {
  const auto quarter = square_aerial(aerial, target_height).tensor();
  return ImageTensor(torch::cat({quarter, quarter, quarter, quarter}, 2));
}

ImageTensor preprocess_polar(const ImageTensor& aerial, int64_t target_height) {
  if (aerial.height() != aerial.width()) {
    throw ShapeError("aerial image must be square, got " + std::to_string(aerial.height()) + "x" +
                     std::to_string(aerial.width()));
  }
  if (aerial.height() < 2) throw ShapeError("polar transform needs an aerial side of at least 2");
  if (target_height < 1) throw ShapeError("target height must be positive");

  const int64_t side = aerial.height();
  const int64_t out_h = target_height;
  const int64_t out_w = 4 * target_height;
  const double center = (static_cast<double>(side) - 1.0) / 2.0;
  const double rho_max = static_cast<double>(side) / 2.0;

  // Sampling positions in pixel-index coordinates, then mapped to the
  // [-1, 1] align_corners convention.
  auto v = torch::arange(out_h, torch::kFloat64).view({out_h, 1});
  auto u = torch::arange(out_w, torch::kFloat64).view({1, out_w});
  auto rho = v / static_cast<double>(out_h) * rho_max;
  auto theta = u * (2.0 * std::numbers::pi / static_cast<double>(out_w));
  auto x = center + rho * torch::sin(theta);
  auto y = center - rho * torch::cos(theta);
  const double scale = 2.0 / (static_cast<double>(side) - 1.0);
  auto grid = torch::stack({x * scale - 1.0, y * scale - 1.0}, -1).unsqueeze(0);

  auto input = aerial.tensor().to(torch::kFloat64).unsqueeze(0);
  auto out = F::grid_sample(input, grid, F::GridSampleFuncOptions()
                                             .mode(torch::kBilinear)
                                             .padding_mode(torch::kBorder)
                                             .align_corners(true));
  return ImageTensor(out.squeeze(0));
}

ImageTensor preprocess(InputFormat format, const ImageTensor& aerial, int64_t target_height) {
  switch (format) {
    case InputFormat::kPolar:
      return preprocess_polar(aerial, target_height);
    case InputFormat::kDuplicate:
      return preprocess_duplicate(aerial, target_height);
    case InputFormat::kDuplicateRotate:
      return preprocess_duplicate_rotate(aerial, target_height);
  }
  throw ConfigError("unknown input format");
}

// ---------------------------------------------------------------------------

SamplePair FolderDataset::get(std::size_t index) const {
  if (auto it = cache_.find(index); it != cache_.end()) return it->second;
  const auto& rec = manifest_.records.at(index);
  SamplePair pair{rec.id, read_image(rec.aerial), read_image(rec.panorama), std::nullopt};
  if (rec.segmentation) pair.segmentation = read_image(*rec.segmentation);
  if (pair.segmentation && (pair.segmentation->height() != pair.panorama.height() ||
                            pair.segmentation->width() != pair.panorama.width())) {
    throw IntegrityError("segmentation and panorama sizes differ for record " + rec.id);
  }
  cache_.emplace(index, pair);
  return pair;
}

BatchIterator::BatchIterator(std::size_t num_records, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : num_records_(num_records), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::size_t BatchIterator::batches_per_epoch() const { return (num_records_ + batch_size_ - 1) / batch_size_; }

std::vector<std::size_t> BatchIterator::epoch_order(std::int64_t epoch) const {
  std::vector<std::size_t> order(num_records_);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle_) {
    const auto e = static_cast<std::uint64_t>(epoch);
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(e >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  return order;
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch_batches(std::int64_t epoch) const {
  const auto order = epoch_order(epoch);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size_) {
    const std::size_t end = std::min(order.size(), start + batch_size_);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

std::vector<std::size_t> BatchIterator::next() {
  if (num_records_ == 0) return {};
  if (current_.empty()) current_ = epoch_batches(epoch_);
  if (cursor_ >= current_.size()) {
    ++epoch_;
    cursor_ = 0;
    current_ = epoch_batches(epoch_);
  }
  return current_[cursor_++];
}

void BatchIterator::seek(std::int64_t epoch, std::size_t batch_in_epoch) {
  epoch_ = epoch;
  cursor_ = batch_in_epoch;
  current_ = epoch_batches(epoch_);
}

Batch collate(const Dataset& dataset, const std::vector<std::size_t>& indices, InputFormat format,
              int64_t target_height) {
  if (indices.empty()) throw ConfigError("cannot collate an empty batch");
  Batch batch;
  std::vector<torch::Tensor> aerials, panoramas, segmentations;
  bool all_segmented = true;
  for (auto index : indices) {
    SamplePair pair = dataset.get(index);
    if (pair.panorama.height() != target_height || pair.panorama.width() != 4 * target_height) {
      pair.panorama = resize_bilinear(pair.panorama, target_height, 4 * target_height);
      if (pair.segmentation) {
        pair.segmentation = resize_bilinear(*pair.segmentation, target_height, 4 * target_height);
      }
    }
    batch.ids.push_back(pair.id);
    aerials.push_back(preprocess(format, pair.aerial, target_height).tensor());
    panoramas.push_back(pair.panorama.tensor());
    if (pair.segmentation) {
      segmentations.push_back(pair.segmentation->tensor());
    } else {
      all_segmented = false;
    }
  }
  batch.aerial = torch::stack(aerials);
  batch.panorama = torch::stack(panoramas);
  if (all_segmented) batch.segmentation = torch::stack(segmentations);
  return batch;
}

}  // namespace panogan::data
