#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fastprio/tensor.hpp"

namespace fastprio {

// Labeled examples: inputs [n, ...sample dims], one label per example.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Tensor inputs, std::vector<std::size_t> labels, std::size_t classes);

  const Tensor& inputs() const noexcept { return inputs_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  std::size_t classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return labels_.size(); }
  Shape sample_shape() const;

  Tensor sample(std::size_t i) const { return inputs_.item(i); }
  std::size_t label(std::size_t i) const { return labels_.at(i); }

  Dataset subset(std::span<const std::size_t> indices) const;
  // Examples of `other` appended after this dataset's.
  Dataset concat(const Dataset& other) const;

 private:
  Tensor inputs_;
  std::vector<std::size_t> labels_;
  std::size_t classes_ = 0;
};

// IDX pair (unsigned-byte images 0x00000803, labels 0x00000801). Pixels are
// scaled to [0, 1]; images come back as [n, 1, rows, cols]. `classes`
// defaults to max(label) + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> classes = std::nullopt);

// JSON header {"inputs": path, "labels": path, "classes": C}; paths are
// tensor files relative to the header. Labels are stored as a rank-1 tensor.
Dataset load_dataset(const std::filesystem::path& header);
void save_dataset(const Dataset& ds, const std::filesystem::path& header);

struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t per_class = 100;
  std::size_t dims = 2;
  double spread = 0.5;       // per-coordinate std of each cluster
  double label_noise = 0.0;  // fraction of labels moved to another class
  std::uint64_t seed = 0;
};

// Gaussian clusters with unit-radius means: a centered regular simplex when
// classes <= dims, otherwise a regular polygon in the first two coordinates
// (a line when dims == 1). Examples are emitted cluster by cluster.
Dataset make_synthetic(const SyntheticSpec& spec);

// Seeded partition into (kept, held) where held has round(fraction * n)
// examples. Indices are disjoint and cover the dataset.
struct SplitIndices {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};
SplitIndices split_indices(std::size_t n, double second_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& ds, double second_fraction, std::uint64_t seed);

}  // namespace fastprio
