#include "fastprio/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "fastprio/errors.hpp"
#include "fastprio/rng.hpp"

namespace fastprio {

CorruptionKind parse_corruption_kind(std::string_view name) {
  if (name == "gaussian-noise") return CorruptionKind::gaussian_noise;
  if (name == "shot-noise") return CorruptionKind::shot_noise;
  if (name == "box-blur") return CorruptionKind::box_blur;
  if (name == "brightness") return CorruptionKind::brightness;
  if (name == "contrast") return CorruptionKind::contrast;
  throw ParameterError("unknown corruption kind '" + std::string(name) + "'");
}

std::string_view to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::gaussian_noise: return "gaussian-noise";
    case CorruptionKind::shot_noise: return "shot-noise";
    case CorruptionKind::box_blur: return "box-blur";
    case CorruptionKind::brightness: return "brightness";
    case CorruptionKind::contrast: return "contrast";
  }
  return "?";
}

namespace {

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

struct ImageGeometry {
  std::size_t channels, height, width;
};

ImageGeometry image_geometry(const Shape& sample) {
  if (sample.size() == 2) return {1, sample[0], sample[1]};
  if (sample.size() == 3) return {sample[0], sample[1], sample[2]};
  throw ShapeError("corruption kind needs image-shaped samples ([h,w] or [c,h,w]), got " +
                   shape_to_string(sample));
}

// Separable mean filter with clamped borders; a constant image is a fixed point.
void box_blur_plane(std::span<float> plane, std::size_t h, std::size_t w, std::size_t radius) {
  std::vector<double> tmp(h * w);
  const auto clamp_idx = [](std::ptrdiff_t v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  const double norm = 1.0 / static_cast<double>(2 * radius + 1);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        s += plane[y * w + clamp_idx(static_cast<std::ptrdiff_t>(x) + d, w)];
      }
      tmp[y * w + x] = s * norm;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (std::ptrdiff_t d = -r; d <= r; ++d) {
        s += tmp[clamp_idx(static_cast<std::ptrdiff_t>(y) + d, h) * w + x];
      }
      plane[y * w + x] = clip01(s * norm);
    }
  }
}

}  // namespace

Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec) {
  if (!(spec.severity >= 0.0 && spec.severity <= 1.0)) {
    throw ParameterError("corruption severity must lie in [0, 1]");
  }
  const Shape sample = ds.sample_shape();
  const bool needs_image = spec.kind == CorruptionKind::box_blur ||
                           spec.kind == CorruptionKind::brightness ||
                           spec.kind == CorruptionKind::contrast;
  ImageGeometry geo{};
  if (needs_image) geo = image_geometry(sample);

  if (spec.severity == 0.0) return ds;

  std::vector<float> data(ds.inputs().storage());
  const std::size_t per_sample = shape_size(sample);
  RngStream rng(spec.seed, 0xc0ff);

  switch (spec.kind) {
    case CorruptionKind::gaussian_noise: {
      const double sigma = kGaussianSigmaMax * spec.severity;
      for (auto& v : data) v = clip01(v + sigma * rng.normal());
      break;
    }
    case CorruptionKind::shot_noise: {
      const double p = kShotFlipMax * spec.severity;
      for (auto& v : data) {
        const bool flip = rng.bernoulli(p);
        const bool salt = rng.bernoulli(0.5);
        v = flip ? (salt ? 1.0f : 0.0f) : clip01(v);
      }
      break;
    }
    case CorruptionKind::box_blur: {
      const auto radius = static_cast<std::size_t>(std::ceil(3.0 * spec.severity));
      const std::size_t plane = geo.height * geo.width;
      for (std::size_t s = 0; s < ds.size(); ++s) {
        for (std::size_t c = 0; c < geo.channels; ++c) {
          box_blur_plane(std::span<float>(data).subspan(s * per_sample + c * plane, plane),
                         geo.height, geo.width, radius);
        }
      }
      break;
    }
    case CorruptionKind::brightness: {
      const double shift = 0.5 * spec.severity;
      for (auto& v : data) v = clip01(v + shift);
      break;
    }
    case CorruptionKind::contrast: {
      const double factor = 1.0 - 0.8 * spec.severity;
      for (std::size_t s = 0; s < ds.size(); ++s) {
        auto img = std::span<float>(data).subspan(s * per_sample, per_sample);
        double mean = 0.0;
        for (float v : img) mean += v;
        mean /= static_cast<double>(per_sample);
        for (auto& v : img) v = clip01(mean + (v - mean) * factor);
      }
      break;
    }
  }
  return Dataset(Tensor(ds.inputs().shape(), std::move(data)), ds.labels(), ds.classes());
}

}  // namespace fastprio
