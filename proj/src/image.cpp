#include "panogan/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "panogan/errors.hpp"

namespace panogan {

ImageTensor::ImageTensor(torch::Tensor data) {
  if (!data.defined() || data.dim() != 3) {
    throw ShapeError("ImageTensor expects a rank-3 C x H x W tensor");
  }
  if (data.size(0) < 1 || data.size(1) < 1 || data.size(2) < 1) {
    throw ShapeError("ImageTensor dimensions must be positive");
  }
  data_ = data.to(torch::kFloat32).contiguous();
}

ImageTensor ImageTensor::filled(int64_t channels, int64_t height, int64_t width, float value) {
  return ImageTensor(torch::full({channels, height, width}, value, torch::kFloat32));
}

bool ImageTensor::in_range() const {
  return data_.ge(-1.0).all().item<bool>() && data_.le(1.0).all().item<bool>();
}

float ImageTensor::at(int64_t c, int64_t y, int64_t x) const {
  return data_.accessor<float, 3>()[c][y][x];
}

bool ImageTensor::bit_equal(const ImageTensor& other) const {
  return data_.sizes() == other.data_.sizes() && torch::equal(data_, other.data_);
}

float normalize_code(std::uint8_t code) { return static_cast<float>(code) / 127.5f - 1.0f; }

std::uint8_t denormalize_code(float value) {
  const float scaled = std::round((std::clamp(value, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(scaled);
}

torch::Tensor normalize_unit(const torch::Tensor& unit) { return unit * 2.0 - 1.0; }

torch::Tensor denormalize_unit(const torch::Tensor& normalized) { return (normalized + 1.0) / 2.0; }

ImageTensor read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw IoError("cannot decode image: " + path.string());
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  const int64_t h = rgb.rows;
  const int64_t w = rgb.cols;
  auto out = torch::empty({3, h, w}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (int64_t y = 0; y < h; ++y) {
    const auto* row = rgb.ptr<cv::Vec3b>(static_cast<int>(y));
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        acc[c][y][x] = normalize_code(row[x][static_cast<int>(c)]);
      }
    }
  }
  return ImageTensor(out);
}

namespace {

cv::Mat to_bgr8(const ImageTensor& image) {
  if (image.channels() != 3) {
    throw ShapeError("expected a 3-channel image, got " + std::to_string(image.channels()));
  }
  const int h = static_cast<int>(image.height());
  const int w = static_cast<int>(image.width());
  cv::Mat rgb(h, w, CV_8UC3);
  auto acc = image.tensor().accessor<float, 3>();
  for (int y = 0; y < h; ++y) {
    auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[x][c] = denormalize_code(acc[c][y][x]);
      }
    }
  }
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

}  // namespace

std::vector<std::uint8_t> encode_image(const ImageTensor& image, const std::string& extension) {
  std::vector<std::uint8_t> bytes;
  try {
    if (!cv::imencode(extension, to_bgr8(image), bytes)) throw IoError("cannot encode image as " + extension);
  } catch (const cv::Exception& e) {
    throw IoError("cannot encode image as " + extension + ": " + e.what());
  }
  return bytes;
}

void write_image(const std::filesystem::path& path, const ImageTensor& image) {
  const auto bytes = encode_image(image, path.extension().string());
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write image: " + path.string());
}

ImageTensor quantize(const ImageTensor& image) {
  auto out = image.tensor().clone().contiguous();
  float* data = out.data_ptr<float>();
  for (int64_t i = 0; i < out.numel(); ++i) data[i] = normalize_code(denormalize_code(data[i]));
  return ImageTensor(out);
}

}  // namespace panogan
