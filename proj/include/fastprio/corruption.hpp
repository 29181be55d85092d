#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "fastprio/dataset.hpp"

namespace fastprio {

enum class CorruptionKind { gaussian_noise, shot_noise, box_blur, brightness, contrast };

CorruptionKind parse_corruption_kind(std::string_view name);
std::string_view to_string(CorruptionKind kind);

// Severity in [0, 1]; 0 is the identity for every kind.
//   gaussian-noise: additive N(0, (0.3 * severity)^2)
//   shot-noise:     salt-and-pepper, each pixel flipped with p = 0.1 * severity
//   box-blur:       mean filter of radius ceil(3 * severity), edge-clamped
//   brightness:     x + 0.5 * severity
//   contrast:       mean + (x - mean) * (1 - 0.8 * severity), per image
// Outputs are clipped to [0, 1]; labels are untouched.
struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian_noise;
  double severity = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr double kGaussianSigmaMax = 0.3;
inline constexpr double kShotFlipMax = 0.1;

// Blur, brightness and contrast need image-shaped samples ([h, w] or
// [channels, h, w]); noise kinds accept any sample shape.
Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec);

}  // namespace fastprio
