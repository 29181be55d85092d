#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastprio/rng.hpp"
#include "fastprio/tensor.hpp"

namespace fastprio {

enum class LayerKind { dense, conv2d, relu, maxpool2d, flatten, softmax, dropout };

LayerKind parse_layer_kind(std::string_view name);
std::string_view to_string(LayerKind kind);

// One layer of a sequential network.
//   dense:     weight [in, out], bias [out]
//   conv2d:    weight [out_ch, in_ch, kh, kw], bias [out_ch], stride, padding (zeros)
//   maxpool2d: window, stride
//   dropout:   rate in [0, 1); identity unless MC sampling is requested
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t window = 2;
  double rate = 0.0;

  static LayerSpec dense(Tensor weight, Tensor bias);
  static LayerSpec conv2d(Tensor weight, Tensor bias, std::size_t stride = 1, std::size_t padding = 0);
  static LayerSpec maxpool2d(std::size_t window, std::size_t stride);
  static LayerSpec dropout(double rate);
  static LayerSpec of(LayerKind kind) {
    LayerSpec l;
    l.kind = kind;
    return l;
  }
  static LayerSpec relu() { return of(LayerKind::relu); }
  static LayerSpec flatten() { return of(LayerKind::flatten); }
  static LayerSpec softmax() { return of(LayerKind::softmax); }

  bool has_parameters() const noexcept {
    return kind == LayerKind::dense || kind == LayerKind::conv2d;
  }
};

enum class FeatureGranularity { neuron, channel };

// How the feature layer's output splits into prunable units: one per neuron
// for a flat output, one per channel for a [channels, h, w] map.
struct FeatureView {
  std::size_t layer = 0;
  std::size_t count = 0;
  FeatureGranularity granularity = FeatureGranularity::neuron;
  Shape shape;
};

// Stochastic-forward settings for MC-Dropout. Stored dropout layers fire with
// their own rate; a model without dropout layers gets one virtual dropout on
// the feature layer's output at `virtual_rate`.
struct DropoutSampling {
  RngStream* rng = nullptr;
  double virtual_rate = 0.1;
};

struct SplitForward {
  Tensor features;
  Tensor probabilities;
};

// Sequential classifier ending in softmax. Immutable once constructed; all
// forward methods are const and safe to call concurrently.
class Model {
 public:
  Model() = default;
  // Validates the shape chain. Without `feature_layer`, the default is the
  // last hidden layer feeding the classifier head.
  Model(std::vector<LayerSpec> layers, std::size_t classes, Shape input_shape,
        std::optional<std::size_t> feature_layer = std::nullopt);

  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::size_t classes() const noexcept { return classes_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t feature_layer() const noexcept { return feature_layer_; }
  const Shape& output_shape(std::size_t layer) const;
  bool has_dropout() const noexcept;

  Model with_feature_layer(std::size_t layer) const;
  bool is_feature_eligible(std::size_t layer) const noexcept;

  FeatureView feature_view() const { return feature_view(feature_layer_); }
  FeatureView feature_view(std::size_t layer) const;

  Tensor forward(const Tensor& x) const;
  Tensor forward_sampled(const Tensor& x, const DropoutSampling& sampling) const;
  // Output of layer `layer` (0-based) for input x.
  Tensor forward_to_layer(const Tensor& x, std::size_t layer) const;
  // Runs layers layer+1 .. L-1 on `features`, the output of layer `layer`.
  Tensor forward_from_layer(const Tensor& features, std::size_t layer) const;
  // One full pass that also captures the output of `layer`.
  SplitForward forward_split(const Tensor& x, std::size_t layer) const;
  // Outputs of every layer, in order.
  std::vector<Tensor> forward_trace(const Tensor& x) const;

 private:
  void check_input(const Tensor& x) const;
  Tensor run(const Tensor& x, std::size_t begin, std::size_t end,
             const DropoutSampling* sampling = nullptr) const;

  std::vector<LayerSpec> layers_;
  std::vector<Shape> output_shapes_;
  std::size_t classes_ = 0;
  Shape input_shape_;
  std::size_t feature_layer_ = 0;
};

// Applies one single layer; exposed for tests and the trainer.
Tensor apply_layer(const LayerSpec& layer, const Tensor& x, RngStream* dropout_rng = nullptr,
                   std::size_t index = 0);

// Zeroes pruned features: elementwise for neuron granularity, whole channel
// planes for channel granularity. mask_row holds one 0/1 value per feature.
Tensor apply_feature_mask(const Tensor& features, std::span<const float> mask_row,
                          const FeatureView& view);

// Per-feature scalar summary of a feature-layer output (the activation itself
// for neurons, the spatial mean for channels).
std::vector<double> feature_activations(const Tensor& features, const FeatureView& view);

}  // namespace fastprio
