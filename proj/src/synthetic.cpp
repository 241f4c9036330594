#include "panogan/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "panogan/errors.hpp"

namespace panogan::data {

namespace {

enum Cls : int { kGrass = 0, kRoad = 1, kBuilding = 2, kTree = 3, kSky = 4 };

using Rgb = std::array<float, 3>;

// Colours in [0,1]; aerial (top view) and ground view differ per class.
constexpr std::array<Rgb, 4> kAerialColour = {Rgb{0.35f, 0.60f, 0.25f}, Rgb{0.50f, 0.50f, 0.52f},
                                              Rgb{0.72f, 0.36f, 0.30f}, Rgb{0.10f, 0.38f, 0.12f}};
constexpr std::array<Rgb, 5> kGroundColour = {Rgb{0.30f, 0.55f, 0.20f}, Rgb{0.45f, 0.45f, 0.47f},
                                              Rgb{0.78f, 0.72f, 0.60f}, Rgb{0.16f, 0.34f, 0.10f},
                                              Rgb{0.55f, 0.75f, 0.95f}};
constexpr std::array<Rgb, 5> kSegColour = {Rgb{0.0f, 0.8f, 0.0f}, Rgb{0.5f, 0.5f, 0.5f}, Rgb{0.8f, 0.0f, 0.0f},
                                           Rgb{0.0f, 0.4f, 0.0f}, Rgb{0.27f, 0.51f, 0.71f}};

struct Scene {
  int64_t side = 0;
  std::vector<int> classes;  // side x side
  float tint = 0.0f;         // global brightness shift
  float sky_shift = 0.0f;

  int at(double x, double y) const {
    const auto xi = std::clamp<int64_t>(static_cast<int64_t>(std::lround(x)), 0, side - 1);
    const auto yi = std::clamp<int64_t>(static_cast<int64_t>(std::lround(y)), 0, side - 1);
    return classes[static_cast<std::size_t>(yi * side + xi)];
  }
};

Scene make_scene(int64_t side, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scene s;
  s.side = side;
  s.classes.assign(static_cast<std::size_t>(side * side), kGrass);
  s.tint = static_cast<float>(unit(rng) * 0.2 - 0.1);
  s.sky_shift = static_cast<float>(unit(rng) * 0.2 - 0.1);
  const double c = (static_cast<double>(side) - 1.0) / 2.0;
  const double n = static_cast<double>(side);

  const double road_angle = unit(rng) * std::numbers::pi;
  const double road_offset = (unit(rng) - 0.5) * 0.3 * n;
  const double road_half_width = n * (0.05 + 0.04 * unit(rng));
  const int buildings = 1 + static_cast<int>(unit(rng) * 3);
  const int trees = 2 + static_cast<int>(unit(rng) * 4);
  struct Box {
    double x0, y0, x1, y1;
  };
  std::vector<Box> boxes;
  for (int b = 0; b < buildings; ++b) {
    const double w = n * (0.10 + 0.12 * unit(rng));
    const double h = n * (0.10 + 0.12 * unit(rng));
    const double x0 = unit(rng) * (n - w);
    const double y0 = unit(rng) * (n - h);
    boxes.push_back({x0, y0, x0 + w, y0 + h});
  }
  struct Disk {
    double x, y, r;
  };
  std::vector<Disk> disks;
  for (int t = 0; t < trees; ++t) disks.push_back({unit(rng) * n, unit(rng) * n, n * (0.04 + 0.05 * unit(rng))});

  const double nx = std::cos(road_angle);
  const double ny = std::sin(road_angle);
  for (int64_t y = 0; y < side; ++y) {
    for (int64_t x = 0; x < side; ++x) {
      const double px = static_cast<double>(x);
      const double py = static_cast<double>(y);
      int cls = kGrass;
      if (std::abs((px - c) * nx + (py - c) * ny - road_offset) < road_half_width) cls = kRoad;
      for (const auto& b : boxes) {
        if (px >= b.x0 && px < b.x1 && py >= b.y0 && py < b.y1) cls = kBuilding;
      }
      for (const auto& d : disks) {
        if ((px - d.x) * (px - d.x) + (py - d.y) * (py - d.y) < d.r * d.r) cls = kTree;
      }
      s.classes[static_cast<std::size_t>(y * side + x)] = cls;
    }
  }
  return s;
}

torch::Tensor to_normalized(const std::vector<float>& unit, int64_t h, int64_t w) {
  return torch::from_blob(const_cast<float*>(unit.data()), {3, h, w}, torch::kFloat32).clone() * 2.0f - 1.0f;
}

}  // namespace

std::vector<SamplePair> make_synthetic_pairs(const SyntheticSpec& spec) {
  if (spec.panorama_height < 4) throw ConfigError("synthetic panorama height must be >= 4");
  const int64_t side = spec.aerial_side > 0 ? spec.aerial_side : spec.panorama_height;
  const int64_t ph = spec.panorama_height;
  const int64_t pw = 4 * ph;
  const int64_t horizon = ph / 2;
  std::mt19937_64 rng(spec.seed);
  std::vector<SamplePair> pairs;
  pairs.reserve(spec.count);

  for (std::size_t n = 0; n < spec.count; ++n) {
    const Scene scene = make_scene(side, rng);
    std::vector<float> aerial(static_cast<std::size_t>(3 * side * side));
    for (int64_t y = 0; y < side; ++y) {
      for (int64_t x = 0; x < side; ++x) {
        const auto& colour = kAerialColour[static_cast<std::size_t>(scene.classes[static_cast<std::size_t>(y * side + x)])];
        for (int64_t ch = 0; ch < 3; ++ch) {
          aerial[static_cast<std::size_t>((ch * side + y) * side + x)] =
              std::clamp(colour[static_cast<std::size_t>(ch)] + scene.tint, 0.0f, 1.0f);
        }
      }
    }

    std::vector<float> pano(static_cast<std::size_t>(3 * ph * pw));
    std::vector<float> seg(pano.size());
    auto put = [&](int64_t v, int64_t u, int cls, float shade) {
      const auto& g = kGroundColour[static_cast<std::size_t>(cls)];
      const auto& sc = kSegColour[static_cast<std::size_t>(cls)];
      const float shift = cls == kSky ? scene.sky_shift : scene.tint;
      for (int64_t ch = 0; ch < 3; ++ch) {
        const auto idx = static_cast<std::size_t>((ch * ph + v) * pw + u);
        pano[idx] = std::clamp(g[static_cast<std::size_t>(ch)] * shade + shift, 0.0f, 1.0f);
        seg[idx] = sc[static_cast<std::size_t>(ch)];
      }
    };
    const double c = (static_cast<double>(side) - 1.0) / 2.0;
    const double rho_max = static_cast<double>(side) / 2.0;
    for (int64_t u = 0; u < pw; ++u) {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(u) / static_cast<double>(pw);
      const double sx = std::sin(theta);
      const double sy = -std::cos(theta);
      // nearest tall object along the bearing
      int hit = -1;
      double hit_rho = rho_max;
      for (double rho = 1.0; rho < rho_max; rho += 0.5) {
        const int cls = scene.at(c + rho * sx, c + rho * sy);
        if (cls == kBuilding || cls == kTree) {
          hit = cls;
          hit_rho = rho;
          break;
        }
      }
      const int64_t object_rows =
          hit < 0 ? 0
                  : std::min<int64_t>(horizon, static_cast<int64_t>(static_cast<double>(horizon) /
                                                                     (1.0 + 3.0 * hit_rho / rho_max)));
      for (int64_t v = 0; v < horizon; ++v) {
        if (v >= horizon - object_rows) {
          put(v, u, hit, 1.0f);
        } else {
          put(v, u, kSky, 1.0f - 0.3f * static_cast<float>(v) / static_cast<float>(horizon));
        }
      }
      for (int64_t v = horizon; v < ph; ++v) {
        const double frac = static_cast<double>(v - horizon) / static_cast<double>(ph - horizon);
        const double rho = rho_max * (1.0 - frac);
        put(v, u, scene.at(c + rho * sx, c + rho * sy), 0.8f + 0.2f * static_cast<float>(frac));
      }
    }

    char id[32];
    std::snprintf(id, sizeof(id), "%06zu", n);
    pairs.push_back(SamplePair{id, ImageTensor(to_normalized(aerial, side, side)),
                               ImageTensor(to_normalized(pano, ph, pw)), ImageTensor(to_normalized(seg, ph, pw))});
  }
  return pairs;
}

void write_dataset(const std::filesystem::path& root, Split split, std::span<const SamplePair> pairs) {
  const auto dir = root / to_string(split);
  for (const auto& pair : pairs) {
    write_image(dir / "aerial" / (pair.id + ".png"), pair.aerial);
    write_image(dir / "panorama" / (pair.id + ".png"), pair.panorama);
    if (pair.segmentation) write_image(dir / "segmentation" / (pair.id + ".png"), *pair.segmentation);
  }
}

}  // namespace panogan::data
