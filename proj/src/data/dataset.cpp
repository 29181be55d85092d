#include "fastprio/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fastprio/errors.hpp"
#include "fastprio/rng.hpp"
#include "fastprio/tensor_io.hpp"

namespace fastprio {

namespace fs = std::filesystem;

Dataset::Dataset(Tensor inputs, std::vector<std::size_t> labels, std::size_t classes)
    : inputs_(std::move(inputs)), labels_(std::move(labels)), classes_(classes) {
  if (inputs_.rank() < 2) {
    throw DimensionError("dataset inputs need shape [n, ...], got " + shape_to_string(inputs_.shape()));
  }
  if (labels_.size() != inputs_.dim(0)) {
    throw ConsistencyError("dataset has " + std::to_string(inputs_.dim(0)) + " inputs but " +
                           std::to_string(labels_.size()) + " labels");
  }
  if (classes_ < 1) throw ParameterError("dataset needs at least one class");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= classes_) {
      throw ConsistencyError("label " + std::to_string(labels_[i]) + " at index " +
                             std::to_string(i) + " is not below class count " +
                             std::to_string(classes_));
    }
  }
}

Shape Dataset::sample_shape() const {
  return Shape(inputs_.shape().begin() + 1, inputs_.shape().end());
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<std::size_t> labels;
  labels.reserve(indices.size());
  for (auto i : indices) labels.push_back(labels_.at(i));
  return Dataset(inputs_.gather(indices), std::move(labels), classes_);
}

Dataset Dataset::concat(const Dataset& other) const {
  if (sample_shape() != other.sample_shape()) {
    throw DimensionError("cannot concatenate datasets with sample shapes " +
                         shape_to_string(sample_shape()) + " and " +
                         shape_to_string(other.sample_shape()));
  }
  std::vector<float> data(inputs_.storage());
  data.insert(data.end(), other.inputs_.storage().begin(), other.inputs_.storage().end());
  Shape s = inputs_.shape();
  s[0] += other.size();
  std::vector<std::size_t> labels(labels_);
  labels.insert(labels.end(), other.labels_.begin(), other.labels_.end());
  return Dataset(Tensor(std::move(s), std::move(data)), std::move(labels),
                 std::max(classes_, other.classes_));
}

// ---- IDX ----

namespace {

std::uint32_t read_be32(const std::string& bytes, std::size_t pos, const std::string& origin) {
  if (pos + 4 > bytes.size()) throw FormatError(origin + ": truncated IDX header");
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[pos + i]);
  return v;
}

}  // namespace

Dataset load_idx(const fs::path& images, const fs::path& labels,
                 std::optional<std::size_t> classes) {
  const std::string img = read_file_bytes(images);
  const std::string lab = read_file_bytes(labels);
  const std::string img_name = images.string();
  const std::string lab_name = labels.string();

  if (read_be32(img, 0, img_name) != 0x00000803u) throw FormatError(img_name + ": bad IDX image magic");
  if (read_be32(lab, 0, lab_name) != 0x00000801u) throw FormatError(lab_name + ": bad IDX label magic");

  const std::size_t n = read_be32(img, 4, img_name);
  const std::size_t rows = read_be32(img, 8, img_name);
  const std::size_t cols = read_be32(img, 12, img_name);
  const std::size_t n_labels = read_be32(lab, 4, lab_name);
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(img_name + ": empty IDX image file");

  const std::size_t pixels = n * rows * cols;
  if (img.size() != 16 + pixels) {
    throw FormatError(img_name + ": expected " + std::to_string(16 + pixels) + " bytes, found " +
                      std::to_string(img.size()));
  }
  if (lab.size() != 8 + n_labels) {
    throw FormatError(lab_name + ": expected " + std::to_string(8 + n_labels) + " bytes, found " +
                      std::to_string(lab.size()));
  }
  if (n != n_labels) {
    throw ConsistencyError(img_name + " holds " + std::to_string(n) + " images but " + lab_name +
                           " holds " + std::to_string(n_labels) + " labels");
  }

  std::vector<float> data(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    data[i] = static_cast<float>(static_cast<unsigned char>(img[16 + i])) / 255.0f;
  }
  std::vector<std::size_t> ys(n);
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ys[i] = static_cast<unsigned char>(lab[8 + i]);
    max_label = std::max(max_label, ys[i]);
  }
  return Dataset(Tensor({n, 1, rows, cols}, std::move(data)), std::move(ys),
                 classes.value_or(max_label + 1));
}

// ---- tensor-file datasets ----

Dataset load_dataset(const fs::path& header) {
  const std::string text = read_file_bytes(header);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(header.string() + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("inputs") || !j.contains("labels") || !j.contains("classes") ||
      !j["inputs"].is_string() || !j["labels"].is_string() || !j["classes"].is_number_unsigned()) {
    throw FormatError(header.string() +
                      ": dataset header needs string \"inputs\", \"labels\" and integer \"classes\"");
  }
  const fs::path base = header.parent_path();
  Tensor inputs = read_tensor(base / j["inputs"].get<std::string>());
  Tensor raw_labels = read_tensor(base / j["labels"].get<std::string>());
  if (raw_labels.rank() != 1) throw FormatError(header.string() + ": labels tensor must be rank 1");
  std::vector<std::size_t> labels;
  labels.reserve(raw_labels.size());
  for (float v : raw_labels.values()) {
    if (v < 0 || v != std::floor(v)) throw FormatError(header.string() + ": non-integer label");
    labels.push_back(static_cast<std::size_t>(v));
  }
  return Dataset(std::move(inputs), std::move(labels), j["classes"].get<std::size_t>());
}

void save_dataset(const Dataset& ds, const fs::path& header) {
  const std::string stem = header.stem().string();
  const fs::path base = header.parent_path();
  const std::string inputs_name = stem + ".inputs.fpt";
  const std::string labels_name = stem + ".labels.fpt";
  write_tensor(base / inputs_name, ds.inputs());
  std::vector<float> labels(ds.labels().begin(), ds.labels().end());
  write_tensor(base / labels_name, Tensor::vector(std::move(labels)));
  nlohmann::json j{{"inputs", inputs_name}, {"labels", labels_name}, {"classes", ds.classes()}};
  write_file_bytes(header, j.dump(2) + "\n");
}

// ---- synthetic ----

namespace {

std::vector<double> cluster_means(std::size_t classes, std::size_t dims) {
  std::vector<double> means(classes * dims, 0.0);
  if (classes <= dims) {
    const double inv_c = 1.0 / static_cast<double>(classes);
    const double scale = std::sqrt(static_cast<double>(classes) / static_cast<double>(classes - 1));
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t d = 0; d < classes; ++d) {
        means[c * dims + d] = ((c == d ? 1.0 : 0.0) - inv_c) * scale;
      }
    }
  } else if (dims >= 2) {
    for (std::size_t c = 0; c < classes; ++c) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
      means[c * dims + 0] = std::cos(angle);
      means[c * dims + 1] = std::sin(angle);
    }
  } else {
    for (std::size_t c = 0; c < classes; ++c) {
      means[c] = -1.0 + 2.0 * static_cast<double>(c) / static_cast<double>(classes - 1);
    }
  }
  return means;
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ParameterError("make_synthetic needs at least 2 classes");
  if (spec.per_class < 1) throw ParameterError("make_synthetic needs per_class >= 1");
  if (spec.dims < 1) throw ParameterError("make_synthetic needs dims >= 1");
  if (!(spec.spread >= 0.0)) throw ParameterError("cluster spread must be non-negative");
  if (!(spec.label_noise >= 0.0 && spec.label_noise <= 1.0)) {
    throw ParameterError("label noise must lie in [0, 1]");
  }

  const RngStream root(spec.seed);
  RngStream points = root.child(1);
  RngStream noise = root.child(2);

  const auto means = cluster_means(spec.classes, spec.dims);
  const std::size_t n = spec.classes * spec.per_class;
  std::vector<float> data(n * spec.dims);
  std::vector<std::size_t> labels(n);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t k = 0; k < spec.per_class; ++k) {
      const std::size_t i = c * spec.per_class + k;
      labels[i] = c;
      for (std::size_t d = 0; d < spec.dims; ++d) {
        data[i * spec.dims + d] =
            static_cast<float>(means[c * spec.dims + d] + spec.spread * points.normal());
      }
    }
  }

  const std::size_t flips = round_count(spec.label_noise * static_cast<double>(n));
  for (auto i : noise.sample_without_replacement(n, flips)) {
    const auto shift = 1 + static_cast<std::size_t>(noise.uniform_index(spec.classes - 1));
    labels[i] = (labels[i] + shift) % spec.classes;
  }
  return Dataset(Tensor({n, spec.dims}, std::move(data)), std::move(labels), spec.classes);
}

SplitIndices split_indices(std::size_t n, double second_fraction, std::uint64_t seed) {
  if (!(second_fraction >= 0.0 && second_fraction <= 1.0)) {
    throw ParameterError("split fraction must lie in [0, 1]");
  }
  RngStream rng(seed, 0x5b17);
  auto perm = rng.permutation(n);
  const std::size_t held = round_count(second_fraction * static_cast<double>(n));
  SplitIndices out;
  out.second.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(held));
  out.first.assign(perm.begin() + static_cast<std::ptrdiff_t>(held), perm.end());
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double second_fraction, std::uint64_t seed) {
  auto idx = split_indices(ds.size(), second_fraction, seed);
  if (idx.first.empty() || idx.second.empty()) {
    throw ParameterError("split fraction leaves one side empty");
  }
  return {ds.subset(idx.first), ds.subset(idx.second)};
}

}  // namespace fastprio
