#include "fastprio/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fastprio/errors.hpp"

namespace fastprio {

LayerKind parse_layer_kind(std::string_view name) {
  if (name == "dense") return LayerKind::dense;
  if (name == "conv2d") return LayerKind::conv2d;
  if (name == "relu") return LayerKind::relu;
  if (name == "maxpool2d") return LayerKind::maxpool2d;
  if (name == "flatten") return LayerKind::flatten;
  if (name == "softmax") return LayerKind::softmax;
  if (name == "dropout") return LayerKind::dropout;
  throw FormatError("unknown layer kind '" + std::string(name) + "'");
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::flatten: return "flatten";
    case LayerKind::softmax: return "softmax";
    case LayerKind::dropout: return "dropout";
  }
  return "?";
}

LayerSpec LayerSpec::dense(Tensor weight, Tensor bias) {
  if (weight.rank() != 2) throw DimensionError("dense weight must be [in, out]");
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(1)) {
    throw DimensionError("dense bias " + shape_to_string(bias.shape()) + " does not match weight " +
                         shape_to_string(weight.shape()));
  }
  LayerSpec l = of(LayerKind::dense);
  l.weight = std::move(weight);
  l.bias = std::move(bias);
  return l;
}

LayerSpec LayerSpec::conv2d(Tensor weight, Tensor bias, std::size_t stride, std::size_t padding) {
  if (weight.rank() != 4) throw DimensionError("conv2d kernel must be [out_ch, in_ch, kh, kw]");
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    throw DimensionError("conv2d bias " + shape_to_string(bias.shape()) + " does not match kernel " +
                         shape_to_string(weight.shape()));
  }
  if (stride == 0) throw ParameterError("conv2d stride must be positive");
  LayerSpec l = of(LayerKind::conv2d);
  l.weight = std::move(weight);
  l.bias = std::move(bias);
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::maxpool2d(std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ParameterError("maxpool2d window and stride must be positive");
  LayerSpec l = of(LayerKind::maxpool2d);
  l.window = window;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must lie in [0, 1)");
  LayerSpec l = of(LayerKind::dropout);
  l.rate = rate;
  return l;
}

namespace {

std::string layer_name(std::size_t index, const LayerSpec& l) {
  return "layer " + std::to_string(index) + " (" + std::string(to_string(l.kind)) + ")";
}

Shape infer_output(std::size_t index, const LayerSpec& l, const Shape& in) {
  const auto fail = [&](const std::string& why) -> Shape {
    throw ShapeChainError(layer_name(index, l) + ": " + why + " (input " + shape_to_string(in) + ")");
  };
  switch (l.kind) {
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != l.weight.dim(0)) {
        return fail("expects a flat input of " + std::to_string(l.weight.dim(0)));
      }
      return {l.weight.dim(1)};
    case LayerKind::conv2d: {
      if (in.size() != 3 || in[0] != l.weight.dim(1)) {
        return fail("expects [" + std::to_string(l.weight.dim(1)) + ", h, w]");
      }
      const std::size_t kh = l.weight.dim(2), kw = l.weight.dim(3);
      if (in[1] + 2 * l.padding < kh || in[2] + 2 * l.padding < kw) return fail("kernel larger than input");
      return {l.weight.dim(0), (in[1] + 2 * l.padding - kh) / l.stride + 1,
              (in[2] + 2 * l.padding - kw) / l.stride + 1};
    }
    case LayerKind::maxpool2d:
      if (in.size() != 3) return fail("expects [channels, h, w]");
      if (in[1] < l.window || in[2] < l.window) return fail("pool window larger than input");
      return {in[0], (in[1] - l.window) / l.stride + 1, (in[2] - l.window) / l.stride + 1};
    case LayerKind::flatten:
      return {shape_size(in)};
    case LayerKind::softmax:
      if (in.size() != 1) return fail("softmax expects a flat input");
      return in;
    case LayerKind::relu:
    case LayerKind::dropout:
      return in;
  }
  return in;
}

std::vector<float> dense_forward(const LayerSpec& l, std::span<const float> x) {
  const std::size_t in = l.weight.dim(0), out = l.weight.dim(1);
  const auto w = l.weight.values();
  const auto b = l.bias.values();
  std::vector<double> acc(b.begin(), b.end());
  for (std::size_t i = 0; i < in; ++i) {
    const double xi = x[i];
    const float* row = w.data() + i * out;
    for (std::size_t j = 0; j < out; ++j) acc[j] += xi * row[j];
  }
  return std::vector<float>(acc.begin(), acc.end());
}

std::vector<float> conv_forward(const LayerSpec& l, const Shape& in_shape, const Shape& out_shape,
                                std::span<const float> x) {
  const std::size_t ic = in_shape[0], ih = in_shape[1], iw = in_shape[2];
  const std::size_t oc = out_shape[0], oh = out_shape[1], ow = out_shape[2];
  const std::size_t kh = l.weight.dim(2), kw = l.weight.dim(3);
  const auto k = l.weight.values();
  const auto b = l.bias.values();
  const auto pad = static_cast<std::ptrdiff_t>(l.padding);
  std::vector<float> out(oc * oh * ow);
  for (std::size_t o = 0; o < oc; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double acc = b[o];
        for (std::size_t c = 0; c < ic; ++c) {
          for (std::size_t dy = 0; dy < kh; ++dy) {
            const auto sy = static_cast<std::ptrdiff_t>(y * l.stride + dy) - pad;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(ih)) continue;
            for (std::size_t dx = 0; dx < kw; ++dx) {
              const auto sx = static_cast<std::ptrdiff_t>(xo * l.stride + dx) - pad;
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(iw)) continue;
              acc += static_cast<double>(x[(c * ih + static_cast<std::size_t>(sy)) * iw +
                                           static_cast<std::size_t>(sx)]) *
                     k[((o * ic + c) * kh + dy) * kw + dx];
            }
          }
        }
        out[(o * oh + y) * ow + xo] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

std::vector<float> maxpool_forward(const LayerSpec& l, const Shape& in_shape, const Shape& out_shape,
                                   std::span<const float> x) {
  const std::size_t ih = in_shape[1], iw = in_shape[2];
  const std::size_t ch = out_shape[0], oh = out_shape[1], ow = out_shape[2];
  std::vector<float> out(ch * oh * ow);
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        float best = -std::numeric_limits<float>::infinity();
        for (std::size_t dy = 0; dy < l.window; ++dy) {
          for (std::size_t dx = 0; dx < l.window; ++dx) {
            best = std::max(best, x[(c * ih + y * l.stride + dy) * iw + xo * l.stride + dx]);
          }
        }
        out[(c * oh + y) * ow + xo] = best;
      }
    }
  }
  return out;
}

std::vector<float> softmax_forward(std::span<const float> x) {
  const float top = *std::max_element(x.begin(), x.end());
  std::vector<double> e(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = std::exp(static_cast<double>(x[i]) - top);
    sum += e[i];
  }
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(e[i] / sum);
  return out;
}

std::vector<float> dropout_sample(std::span<const float> x, double rate, RngStream& rng) {
  std::vector<float> out(x.begin(), x.end());
  if (rate == 0.0) return out;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : out) v = rng.uniform() < rate ? 0.0f : static_cast<float>(v * keep_scale);
  return out;
}

}  // namespace

Tensor apply_layer(const LayerSpec& l, const Tensor& x, RngStream* dropout_rng, std::size_t index) {
  const Shape out_shape = infer_output(index, l, x.shape());
  const auto xv = x.values();
  switch (l.kind) {
    case LayerKind::dense:
      return Tensor(out_shape, dense_forward(l, xv));
    case LayerKind::conv2d:
      return Tensor(out_shape, conv_forward(l, x.shape(), out_shape, xv));
    case LayerKind::maxpool2d:
      return Tensor(out_shape, maxpool_forward(l, x.shape(), out_shape, xv));
    case LayerKind::relu: {
      std::vector<float> out(xv.begin(), xv.end());
      for (auto& v : out) v = v > 0.0f ? v : 0.0f;
      return Tensor(out_shape, std::move(out));
    }
    case LayerKind::flatten:
      return x.reshaped(out_shape);
    case LayerKind::softmax:
      return Tensor(out_shape, softmax_forward(xv));
    case LayerKind::dropout:
      if (dropout_rng == nullptr) return x;
      return Tensor(out_shape, dropout_sample(xv, l.rate, *dropout_rng));
  }
  return x;
}

// ---- Model ----

Model::Model(std::vector<LayerSpec> layers, std::size_t classes, Shape input_shape,
             std::optional<std::size_t> feature_layer)
    : layers_(std::move(layers)), classes_(classes), input_shape_(std::move(input_shape)) {
  if (layers_.empty()) throw ShapeChainError("model has no layers");
  if (classes_ < 2) throw ShapeChainError("model needs at least 2 classes");
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ShapeChainError("model input shape must be non-empty with positive dims");
  }
  Shape current = input_shape_;
  output_shapes_.reserve(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    current = infer_output(i, layers_[i], current);
    output_shapes_.push_back(current);
  }
  if (layers_.back().kind != LayerKind::softmax) throw ShapeChainError("final layer must be softmax");
  if (output_shapes_.back() != Shape{classes_}) {
    throw ShapeChainError("softmax produces " + shape_to_string(output_shapes_.back()) + " but the model declares " +
                          std::to_string(classes_) + " classes");
  }
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::softmax) {
      throw ShapeChainError("softmax may only appear as the final layer (found at layer " +
                            std::to_string(i) + ")");
    }
  }

  if (feature_layer) {
    if (!is_feature_eligible(*feature_layer)) {
      throw ConfigurationError("layer " + std::to_string(*feature_layer) +
                               " cannot serve as the feature layer");
    }
    feature_layer_ = *feature_layer;
    return;
  }
  std::optional<std::size_t> head;
  for (std::size_t i = layers_.size() - 1; i-- > 0;) {
    if (layers_[i].has_parameters()) {
      head = i;
      break;
    }
  }
  if (!head) throw ConfigurationError("model has no dense or conv2d layer to anchor a feature layer");
  for (std::size_t i = *head; i-- > 0;) {
    const auto k = layers_[i].kind;
    if (k == LayerKind::dropout || k == LayerKind::flatten) continue;
    if (is_feature_eligible(i)) {
      feature_layer_ = i;
      return;
    }
  }
  if (!is_feature_eligible(*head)) throw ConfigurationError("no eligible feature layer");
  feature_layer_ = *head;
}

const Shape& Model::output_shape(std::size_t layer) const {
  if (layer >= layers_.size()) {
    throw IndexError("layer index " + std::to_string(layer) + " out of range [0, " +
                     std::to_string(layers_.size()) + ")");
  }
  return output_shapes_[layer];
}

bool Model::has_dropout() const noexcept {
  return std::any_of(layers_.begin(), layers_.end(),
                     [](const LayerSpec& l) { return l.kind == LayerKind::dropout; });
}

bool Model::is_feature_eligible(std::size_t layer) const noexcept {
  if (layer + 1 >= layers_.size()) return false;
  const auto rank = output_shapes_[layer].size();
  return rank == 1 || rank == 3;
}

Model Model::with_feature_layer(std::size_t layer) const {
  Model m = *this;
  if (!is_feature_eligible(layer)) {
    throw ConfigurationError("layer " + std::to_string(layer) + " cannot serve as the feature layer");
  }
  m.feature_layer_ = layer;
  return m;
}

FeatureView Model::feature_view(std::size_t layer) const {
  if (!is_feature_eligible(layer)) {
    throw ConfigurationError("layer " + std::to_string(layer) + " cannot serve as the feature layer");
  }
  const Shape& s = output_shapes_[layer];
  if (s.size() == 1) return {layer, s[0], FeatureGranularity::neuron, s};
  return {layer, s[0], FeatureGranularity::channel, s};
}

void Model::check_input(const Tensor& x) const {
  if (x.shape() != input_shape_) {
    throw DimensionError("layer 0 (" + std::string(to_string(layers_.front().kind)) + ") expects input " +
                         shape_to_string(input_shape_) + ", got " + shape_to_string(x.shape()));
  }
}

Tensor Model::run(const Tensor& x, std::size_t begin, std::size_t end,
                  const DropoutSampling* sampling) const {
  Tensor cur = x;
  RngStream* rng = sampling ? sampling->rng : nullptr;
  const bool virtual_dropout = sampling && !has_dropout() && sampling->virtual_rate > 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    cur = apply_layer(layers_[i], cur, rng, i);
    if (virtual_dropout && i == feature_layer_) {
      cur = apply_layer(LayerSpec::dropout(sampling->virtual_rate), cur, rng, i);
    }
  }
  return cur;
}

Tensor Model::forward(const Tensor& x) const {
  check_input(x);
  return run(x, 0, layers_.size());
}

Tensor Model::forward_sampled(const Tensor& x, const DropoutSampling& sampling) const {
  if (sampling.rng == nullptr) throw ParameterError("forward_sampled needs an RngStream");
  if (!(sampling.virtual_rate >= 0.0 && sampling.virtual_rate < 1.0)) {
    throw ParameterError("virtual dropout rate must lie in [0, 1)");
  }
  check_input(x);
  return run(x, 0, layers_.size(), &sampling);
}

Tensor Model::forward_to_layer(const Tensor& x, std::size_t layer) const {
  output_shape(layer);
  check_input(x);
  return run(x, 0, layer + 1);
}

Tensor Model::forward_from_layer(const Tensor& features, std::size_t layer) const {
  const Shape& expected = output_shape(layer);
  if (features.shape() != expected) {
    throw DimensionError("features for layer " + std::to_string(layer) + " must be " +
                         shape_to_string(expected) + ", got " + shape_to_string(features.shape()));
  }
  return run(features, layer + 1, layers_.size());
}

SplitForward Model::forward_split(const Tensor& x, std::size_t layer) const {
  output_shape(layer);
  check_input(x);
  SplitForward out;
  out.features = run(x, 0, layer + 1);
  out.probabilities = run(out.features, layer + 1, layers_.size());
  return out;
}

std::vector<Tensor> Model::forward_trace(const Tensor& x) const {
  check_input(x);
  std::vector<Tensor> trace;
  trace.reserve(layers_.size());
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = apply_layer(layers_[i], cur, nullptr, i);
    trace.push_back(cur);
  }
  return trace;
}

Tensor apply_feature_mask(const Tensor& features, std::span<const float> mask_row,
                          const FeatureView& view) {
  if (mask_row.size() != view.count) {
    throw DimensionError("mask row has " + std::to_string(mask_row.size()) + " entries, feature layer " +
                         std::to_string(view.layer) + " has " + std::to_string(view.count) + " features");
  }
  if (features.shape() != view.shape) {
    throw DimensionError("features " + shape_to_string(features.shape()) + " do not match layer " +
                         std::to_string(view.layer) + " output " + shape_to_string(view.shape));
  }
  return elementwise_mul(features, Tensor::vector(std::vector<float>(mask_row.begin(), mask_row.end())));
}

std::vector<double> feature_activations(const Tensor& features, const FeatureView& view) {
  if (features.shape() != view.shape) {
    throw DimensionError("features " + shape_to_string(features.shape()) + " do not match layer " +
                         std::to_string(view.layer) + " output " + shape_to_string(view.shape));
  }
  const auto v = features.values();
  std::vector<double> out(view.count, 0.0);
  if (view.granularity == FeatureGranularity::neuron) {
    for (std::size_t i = 0; i < view.count; ++i) out[i] = v[i];
    return out;
  }
  const std::size_t plane = v.size() / view.count;
  for (std::size_t c = 0; c < view.count; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += v[c * plane + j];
    out[c] = s / static_cast<double>(plane);
  }
  return out;
}

}  // namespace fastprio
