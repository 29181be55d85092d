#include "fastprio/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fastprio/errors.hpp"
#include "fastprio/parallel.hpp"
#include "fastprio/rng.hpp"

namespace fastprio {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError("learning rate must be positive, got " + std::to_string(learning_rate));
  }
  if (batch_size < 1) throw ParameterError("batch size must be at least 1");
  if (!(l2 >= 0.0)) throw ParameterError("l2 weight decay must be non-negative");
}

namespace {

enum class Op { dense, relu, identity };

// Double-precision mirror of a dense-only Model used for fitting.
struct DenseNet {
  std::vector<Op> ops;                   // one per model layer except the final softmax
  std::vector<std::size_t> dense_index;  // op -> index into W/b (dense ops only)
  std::vector<std::size_t> in, out;
  std::vector<std::vector<double>> w, b;
  std::size_t classes = 0;

  static DenseNet from(const Model& model) {
    DenseNet net;
    net.classes = model.classes();
    const auto& layers = model.layers();
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      const auto& layer = layers[l];
      switch (layer.kind) {
        case LayerKind::dense: {
          net.dense_index.push_back(net.w.size());
          net.ops.push_back(Op::dense);
          net.in.push_back(layer.weight.dim(0));
          net.out.push_back(layer.weight.dim(1));
          net.w.emplace_back(layer.weight.values().begin(), layer.weight.values().end());
          net.b.emplace_back(layer.bias.values().begin(), layer.bias.values().end());
          continue;
        }
        case LayerKind::relu: net.ops.push_back(Op::relu); break;
        case LayerKind::flatten:
        case LayerKind::dropout: net.ops.push_back(Op::identity); break;
        default:
          throw ConfigurationError("layer " + std::to_string(l) + " (" + std::string(to_string(layer.kind)) +
                                   ") is not supported by the dense trainer");
      }
      net.dense_index.push_back(0);
    }
    if (net.w.empty()) throw ConfigurationError("model has no dense layer to train");
    return net;
  }

  Model to_model(const Model& shape_of) const {
    auto layers = shape_of.layers();
    std::size_t k = 0;
    for (auto& layer : layers) {
      if (layer.kind != LayerKind::dense) continue;
      std::vector<float> wf(w[k].begin(), w[k].end());
      std::vector<float> bf(b[k].begin(), b[k].end());
      layer.weight = Tensor({in[k], out[k]}, std::move(wf));
      layer.bias = Tensor({out[k]}, std::move(bf));
      ++k;
    }
    return Model(std::move(layers), shape_of.classes(), shape_of.input_shape(), shape_of.feature_layer());
  }

  // acts[j] = input of op j; acts.back() = logits
  void forward(std::span<const float> x, std::vector<std::vector<double>>& acts) const {
    acts.resize(ops.size() + 1);
    acts[0].assign(x.begin(), x.end());
    for (std::size_t j = 0; j < ops.size(); ++j) {
      const auto& a = acts[j];
      auto& z = acts[j + 1];
      switch (ops[j]) {
        case Op::dense: {
          const std::size_t k = dense_index[j];
          if (a.size() != in[k]) throw DimensionError("dense layer expects " + std::to_string(in[k]) + " inputs");
          z.assign(b[k].begin(), b[k].end());
          for (std::size_t i = 0; i < in[k]; ++i) {
            const double ai = a[i];
            const double* row = w[k].data() + i * out[k];
            for (std::size_t o = 0; o < out[k]; ++o) z[o] += ai * row[o];
          }
          break;
        }
        case Op::relu:
          z.resize(a.size());
          for (std::size_t i = 0; i < a.size(); ++i) z[i] = a[i] > 0.0 ? a[i] : 0.0;
          break;
        case Op::identity: z = a; break;
      }
    }
  }

  static std::vector<double> softmax(const std::vector<double>& logits, double* log_sum = nullptr) {
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - top);
    const double lse = top + std::log(sum);
    std::vector<double> p(logits.size());
    for (std::size_t c = 0; c < p.size(); ++c) p[c] = std::exp(logits[c] - lse);
    if (log_sum) *log_sum = lse;
    return p;
  }

  double loss(std::span<const float> x, std::size_t label) const {
    std::vector<std::vector<double>> acts;
    forward(x, acts);
    double lse = 0.0;
    softmax(acts.back(), &lse);
    return lse - acts.back().at(label);
  }

  // Adds d loss / d params of one example into gw/gb; returns (loss, correct).
  std::pair<double, bool> accumulate(std::span<const float> x, std::size_t label,
                                     std::vector<std::vector<double>>& gw,
                                     std::vector<std::vector<double>>& gb) const {
    std::vector<std::vector<double>> acts;
    forward(x, acts);
    double lse = 0.0;
    std::vector<double> delta = softmax(acts.back(), &lse);
    const double loss = lse - acts.back().at(label);
    const bool correct = static_cast<std::size_t>(std::max_element(acts.back().begin(), acts.back().end()) -
                                                  acts.back().begin()) == label;
    delta[label] -= 1.0;
    for (std::size_t j = ops.size(); j-- > 0;) {
      const auto& a = acts[j];
      switch (ops[j]) {
        case Op::dense: {
          const std::size_t k = dense_index[j];
          std::vector<double> back(in[k], 0.0);
          for (std::size_t i = 0; i < in[k]; ++i) {
            const double ai = a[i];
            const double* row = w[k].data() + i * out[k];
            double* grow = gw[k].data() + i * out[k];
            double s = 0.0;
            for (std::size_t o = 0; o < out[k]; ++o) {
              grow[o] += ai * delta[o];
              s += row[o] * delta[o];
            }
            back[i] = s;
          }
          for (std::size_t o = 0; o < out[k]; ++o) gb[k][o] += delta[o];
          delta = std::move(back);
          break;
        }
        case Op::relu:
          for (std::size_t i = 0; i < delta.size(); ++i) {
            if (!(a[i] > 0.0)) delta[i] = 0.0;
          }
          break;
        case Op::identity: break;
      }
    }
    return {loss, correct};
  }

  void zero_like(std::vector<std::vector<double>>& gw, std::vector<std::vector<double>>& gb) const {
    gw.resize(w.size());
    gb.resize(b.size());
    for (std::size_t k = 0; k < w.size(); ++k) {
      gw[k].assign(w[k].size(), 0.0);
      gb[k].assign(b[k].size(), 0.0);
    }
  }

  std::size_t predict(std::span<const float> x) const {
    std::vector<std::vector<double>> acts;
    forward(x, acts);
    return static_cast<std::size_t>(std::max_element(acts.back().begin(), acts.back().end()) - acts.back().begin());
  }
};

void check_data(const Model& model, const Dataset& data) {
  if (data.size() == 0) throw EmptyInputError("training data is empty");
  if (data.classes() != model.classes()) {
    throw ConfigurationError("data has " + std::to_string(data.classes()) + " classes, model outputs " +
                             std::to_string(model.classes()));
  }
  if (data.sample_shape() != model.input_shape()) {
    throw ConfigurationError("data samples are " + shape_to_string(data.sample_shape()) + ", model expects " +
                             shape_to_string(model.input_shape()));
  }
}

double net_accuracy(const DenseNet& net, const Dataset& data) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += net.predict(data.inputs().item_values(i)) == data.label(i);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult fit(const Model& start, const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
  cfg.validate();
  check_data(start, data);
  if (validation) check_data(start, *validation);
  DenseNet net = DenseNet::from(start);
  const std::size_t n = data.size();
  const RngStream order_root(cfg.seed, 0x7a1e);
  std::vector<std::vector<double>> gw, gb;
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    RngStream order = order_root.child(epoch);
    const auto perm = order.permutation(n);
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      net.zero_like(gw, gb);
      for (std::size_t p = begin; p < end; ++p) {
        const std::size_t i = perm[p];
        net.accumulate(data.inputs().item_values(i), data.label(i), gw, gb);
      }
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (std::size_t k = 0; k < net.w.size(); ++k) {
        for (std::size_t j = 0; j < net.w[k].size(); ++j) {
          net.w[k][j] -= cfg.learning_rate * (gw[k][j] * scale + cfg.l2 * net.w[k][j]);
        }
        for (std::size_t j = 0; j < net.b[k].size(); ++j) net.b[k][j] -= cfg.learning_rate * gb[k][j] * scale;
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    double total = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::vector<double>> acts;
      const auto x = data.inputs().item_values(i);
      net.forward(x, acts);
      double lse = 0.0;
      DenseNet::softmax(acts.back(), &lse);
      total += lse - acts.back()[data.label(i)];
      correct += static_cast<std::size_t>(std::max_element(acts.back().begin(), acts.back().end()) -
                                          acts.back().begin()) == data.label(i);
    }
    entry.loss = total / static_cast<double>(n);
    entry.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (validation) entry.val_accuracy = net_accuracy(net, *validation);
    if (!std::isfinite(entry.loss)) throw NumericError("training diverged at epoch " + std::to_string(epoch));
    result.log.push_back(entry);
  }
  result.model = net.to_model(start);
  return result;
}

}  // namespace

Model init_dense(std::span<const std::size_t> arch, const Shape& input_shape, std::uint64_t seed) {
  if (arch.size() < 2) throw ConfigurationError("architecture needs at least input and output widths");
  for (auto w : arch) {
    if (w == 0) throw ConfigurationError("architecture widths must be positive");
  }
  if (shape_size(input_shape) != arch.front()) {
    throw ConfigurationError("architecture input width " + std::to_string(arch.front()) +
                             " does not match samples of shape " + shape_to_string(input_shape));
  }
  std::vector<LayerSpec> layers;
  if (input_shape.size() > 1) layers.push_back(LayerSpec::flatten());
  const RngStream root(seed, 0x1417);
  for (std::size_t k = 0; k + 1 < arch.size(); ++k) {
    const std::size_t fan_in = arch[k], fan_out = arch[k + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    RngStream rng = root.child(k);
    std::vector<float> w(fan_in * fan_out);
    for (auto& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
    layers.push_back(LayerSpec::dense(Tensor({fan_in, fan_out}, std::move(w)), Tensor::zeros({fan_out})));
    if (k + 2 < arch.size()) layers.push_back(LayerSpec::relu());
  }
  layers.push_back(LayerSpec::softmax());
  return Model(std::move(layers), arch.back(), input_shape);
}

TrainResult train_dense(std::span<const std::size_t> arch, const Dataset& data, const TrainConfig& cfg,
                        const Dataset* validation) {
  cfg.validate();
  if (data.size() == 0) throw EmptyInputError("training data is empty");
  if (arch.empty() || arch.back() != data.classes()) {
    throw ConfigurationError("architecture output width must equal the " + std::to_string(data.classes()) +
                             " data classes");
  }
  return fit(init_dense(arch, data.sample_shape(), cfg.seed), data, cfg, validation);
}

TrainResult fine_tune(const Model& model, const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
  return fit(model, data, cfg, validation);
}

std::string training_log_csv(std::span<const EpochLog> log) {
  std::string out = "epoch,loss,train_acc,val_acc\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,", e.epoch, e.loss, e.train_accuracy);
    out += buf;
    if (e.val_accuracy) {
      std::snprintf(buf, sizeof buf, "%.10g", *e.val_accuracy);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

double accuracy(const Model& model, const Dataset& data, std::size_t jobs) {
  check_data(model, data);
  std::vector<char> hit(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) { hit[i] = argmax(model.forward(data.sample(i))) == data.label(i); });
  const auto correct = std::count(hit.begin(), hit.end(), 1);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double cross_entropy(const Model& model, const Tensor& x, std::size_t label) {
  if (label >= model.classes()) throw IndexError("label " + std::to_string(label) + " outside the model classes");
  return DenseNet::from(model).loss(x.values(), label);
}

DenseGradients loss_gradients(const Model& model, const Tensor& x, std::size_t label) {
  if (label >= model.classes()) throw IndexError("label " + std::to_string(label) + " outside the model classes");
  const DenseNet net = DenseNet::from(model);
  DenseGradients g;
  net.zero_like(g.weight, g.bias);
  net.accumulate(x.values(), label, g.weight, g.bias);
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    if (model.layers()[l].kind == LayerKind::dense) g.layers.push_back(l);
  }
  return g;
}

double gradient_check(const Model& model, const Tensor& x, std::size_t label, std::size_t probes,
                      std::uint64_t seed) {
  const DenseGradients analytic = loss_gradients(model, x, label);
  DenseNet net = DenseNet::from(model);
  // flat parameter index -> (layer, is_bias, offset)
  struct Slot {
    std::size_t k;
    bool bias;
    std::size_t j;
  };
  std::vector<Slot> slots;
  for (std::size_t k = 0; k < net.w.size(); ++k) {
    for (std::size_t j = 0; j < net.w[k].size(); ++j) slots.push_back({k, false, j});
    for (std::size_t j = 0; j < net.b[k].size(); ++j) slots.push_back({k, true, j});
  }
  RngStream rng(seed, 0x9c);
  const auto picks = rng.sample_without_replacement(slots.size(), std::min(probes, slots.size()));
  double worst = 0.0;
  for (auto p : picks) {
    const Slot s = slots[p];
    double& param = s.bias ? net.b[s.k][s.j] : net.w[s.k][s.j];
    const double saved = param;
    param = saved + kGradientCheckStep;
    const double up = net.loss(x.values(), label);
    param = saved - kGradientCheckStep;
    const double down = net.loss(x.values(), label);
    param = saved;
    const double numeric = (up - down) / (2.0 * kGradientCheckStep);
    const double a = s.bias ? analytic.bias[s.k][s.j] : analytic.weight[s.k][s.j];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
    worst = std::max(worst, rel);
  }
  return worst;
}

RetrainResult retrain_with_selection(const Model& model, const Dataset& train, const Dataset& suite,
                                     const RankedSuite& ordering, double fraction, const TrainConfig& cfg,
                                     const Dataset& held_out) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ParameterError("selection fraction " + std::to_string(fraction) + " outside (0, 1]");
  }
  cfg.validate();
  if (!is_permutation_of_range(ordering.ordering, suite.size())) {
    throw ConsistencyError("ordering does not rank the " + std::to_string(suite.size()) + " suite inputs");
  }
  const std::size_t count =
      std::clamp<std::size_t>(round_count(fraction * static_cast<double>(suite.size())), 1, suite.size());
  RetrainResult result;
  result.selected.assign(ordering.ordering.begin(), ordering.ordering.begin() + static_cast<std::ptrdiff_t>(count));
  const Dataset augmented = train.concat(suite.subset(result.selected));
  result.accuracy_before = accuracy(model, held_out);
  auto tuned = fine_tune(model, augmented, cfg);
  result.model = std::move(tuned.model);
  result.log = std::move(tuned.log);
  result.accuracy_after = accuracy(result.model, held_out);
  return result;
}

}  // namespace fastprio
