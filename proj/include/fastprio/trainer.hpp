#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastprio/dataset.hpp"
#include "fastprio/model.hpp"
#include "fastprio/prioritizer.hpp"

namespace fastprio {

struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  double l2 = 0.0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean cross-entropy over the training data after the epoch
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

// He-uniform dense+relu stack ending in softmax. arch lists layer widths,
// input first and class count last, e.g. {2, 32, 32, 3}. Samples with more
// than one axis are flattened by a leading flatten layer.
Model init_dense(std::span<const std::size_t> arch, const Shape& input_shape, std::uint64_t seed);

TrainResult train_dense(std::span<const std::size_t> arch, const Dataset& data, const TrainConfig& cfg,
                        const Dataset* validation = nullptr);

// Continues SGD from the model's current weights; the input model is untouched.
TrainResult fine_tune(const Model& model, const Dataset& data, const TrainConfig& cfg,
                      const Dataset* validation = nullptr);

std::string training_log_csv(std::span<const EpochLog> log);

double accuracy(const Model& model, const Dataset& data, std::size_t jobs = 1);

// Cross-entropy gradients of every dense layer, in double precision, laid out
// like the weights ([in, out] and [out]).
struct DenseGradients {
  std::vector<std::size_t> layers;  // model layer index of each dense layer
  std::vector<std::vector<double>> weight;
  std::vector<std::vector<double>> bias;
};

double cross_entropy(const Model& model, const Tensor& x, std::size_t label);
DenseGradients loss_gradients(const Model& model, const Tensor& x, std::size_t label);

inline constexpr double kGradientCheckStep = 1e-3;

// Largest |analytic - numeric| / max(|analytic|, |numeric|, 1e-4) over
// `probes` randomly chosen parameters, numeric by central differences.
double gradient_check(const Model& model, const Tensor& x, std::size_t label, std::size_t probes = 100,
                      std::uint64_t seed = 0);

struct RetrainResult {
  Model model;
  std::vector<std::size_t> selected;  // suite indices appended to the training data
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;
  std::vector<EpochLog> log;
};

// Appends the top round(fraction * n) ranked suite inputs (with labels) to
// the training data and fine-tunes from the model's current weights.
RetrainResult retrain_with_selection(const Model& model, const Dataset& train, const Dataset& suite,
                                     const RankedSuite& ordering, double fraction, const TrainConfig& cfg,
                                     const Dataset& held_out);

}  // namespace fastprio
