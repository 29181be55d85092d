#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fastprio/baselines.hpp"
#include "fastprio/errors.hpp"
#include "fastprio/evaluation.hpp"
#include "fastprio/feature_selection.hpp"
#include "fastprio/model_io.hpp"
#include "fastprio/prioritizer.hpp"
#include "fastprio/trainer.hpp"

namespace py = pybind11;
using namespace fastprio;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<float> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

std::vector<std::size_t> to_indices(const IndexArray& a) {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(a.size()));
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] < 0) throw IndexError("negative index " + std::to_string(a.data()[i]));
    out.push_back(static_cast<std::size_t>(a.data()[i]));
  }
  return out;
}

Dataset to_dataset(const FloatArray& x, const IndexArray& y, std::optional<std::size_t> classes) {
  auto labels = to_indices(y);
  std::size_t c = classes.value_or(0);
  if (!classes) {
    for (auto l : labels) c = std::max(c, l + 1);
  }
  return Dataset(to_tensor(x), std::move(labels), c);
}

py::dict ranked_dict(const RankedSuite& r) {
  py::dict d;
  d["method"] = r.method;
  d["ordering"] = r.ordering;
  d["scores"] = r.scores;
  d["predictions"] = r.predictions;
  return d;
}

RankedSuite from_ordering(const IndexArray& ordering) {
  RankedSuite r;
  r.ordering = to_indices(ordering);
  r.scores.assign(r.ordering.size(), 0.0);
  return r;
}

FaultVector to_faults(const py::array_t<bool>& faults) {
  std::vector<bool> flags(faults.data(), faults.data() + faults.size());
  return FaultVector(std::move(flags));
}

FeatureMask to_mask(const Model& model, const FloatArray& mask) {
  FeatureMask m;
  m.mask = to_tensor(mask);
  if (m.mask.rank() != 2) throw DimensionError("mask must be [classes, features]");
  m.layer = model.feature_layer();
  std::size_t zeros = 0;
  for (float v : m.mask.item_values(0)) zeros += v == 0.0f;
  m.pruned = zeros;
  m.rate = static_cast<double>(zeros) / static_cast<double>(m.mask.dim(1));
  return m;
}

}  // namespace

PYBIND11_MODULE(_fastprio, m) {
  m.doc() = "FAST test-input prioritization toolkit";

  static py::exception<ValidationError> validation_error(m, "ValidationError", PyExc_ValueError);
  static py::exception<Error> fastprio_error(m, "FastprioError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      validation_error(e.what());
    } catch (const Error& e) {
      fastprio_error(e.what());
    }
  });

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::string& path) { return load_model(path); })
      .def("save", [](const Model& self, const std::string& path) { save_model(self, path); })
      .def_property_readonly("classes", &Model::classes)
      .def_property_readonly("layer_count", &Model::layer_count)
      .def_property_readonly("feature_layer", &Model::feature_layer)
      .def_property_readonly("input_shape", &Model::input_shape)
      .def("with_feature_layer", &Model::with_feature_layer)
      .def("predict", [](const Model& self, const FloatArray& x, std::size_t jobs) {
        return to_array(predict_all(self, to_tensor(x), jobs));
      }, py::arg("x"), py::arg("jobs") = 1)
      .def("features", [](const Model& self, const FloatArray& x, std::optional<std::size_t> layer) {
        const Tensor t = to_tensor(x);
        std::vector<Tensor> out;
        for (std::size_t i = 0; i < t.dim(0); ++i) {
          out.push_back(self.forward_to_layer(t.item(i), layer.value_or(self.feature_layer())));
        }
        return to_array(stack(out));
      }, py::arg("x"), py::arg("layer") = py::none());

  m.def("synthetic", [](std::size_t classes, std::size_t per_class, std::size_t dims, double spread,
                        double label_noise, std::uint64_t seed) {
    SyntheticSpec spec{classes, per_class, dims, spread, label_noise, seed};
    const Dataset ds = make_synthetic(spec);
    const std::vector<std::int64_t> values(ds.labels().begin(), ds.labels().end());
    py::array_t<std::int64_t> labels(std::vector<py::ssize_t>{static_cast<py::ssize_t>(values.size())},
                                     std::vector<py::ssize_t>{static_cast<py::ssize_t>(sizeof(std::int64_t))},
                                     values.data());
    return py::make_tuple(to_array(ds.inputs()), labels);
  }, py::arg("classes") = 3, py::arg("per_class") = 100, py::arg("dims") = 2, py::arg("spread") = 0.5,
     py::arg("label_noise") = 0.0, py::arg("seed") = 0);

  m.def("train_dense", [](const std::vector<std::size_t>& arch, const FloatArray& x, const IndexArray& y,
                          std::size_t epochs, double lr, std::size_t batch, std::uint64_t seed, double l2) {
    TrainConfig cfg{epochs, lr, batch, seed, l2};
    auto result = train_dense(arch, to_dataset(x, y, arch.back()), cfg);
    py::list log;
    for (const auto& e : result.log) {
      log.append(py::dict(py::arg("epoch") = e.epoch, py::arg("loss") = e.loss,
                          py::arg("train_accuracy") = e.train_accuracy));
    }
    return py::make_tuple(std::move(result.model), log);
  }, py::arg("arch"), py::arg("x"), py::arg("y"), py::arg("epochs") = 50, py::arg("lr") = 0.05,
     py::arg("batch") = 32, py::arg("seed") = 42, py::arg("l2") = 0.0);

  m.def("assess", [](const Model& model, const FloatArray& x, const IndexArray& y, double tau,
                     std::size_t max_per_class, std::uint64_t seed, std::size_t jobs) {
    const auto refs = build_reference_sets(model, to_dataset(x, y, model.classes()), {tau, max_per_class}, seed, jobs);
    return to_array(assess_all(model, refs, jobs).values);
  }, py::arg("model"), py::arg("x"), py::arg("y"), py::arg("tau") = 0.9, py::arg("max_per_class") = 200,
     py::arg("seed") = 0, py::arg("jobs") = 1,
     "Per-class contribution of every feature-layer feature, shape [classes, features].");

  m.def("build_mask", [](const FloatArray& scores, double rate) {
    ContributionMatrix c;
    c.values = to_tensor(scores);
    return to_array(build_masks(c, rate).mask);
  }, py::arg("scores"), py::arg("rate") = 0.05);

  m.def("prioritize", [](const Model& model, const FloatArray& x, const std::string& metric,
                         std::optional<FloatArray> mask, std::size_t jobs, std::optional<double> rate) {
    const Tensor suite = to_tensor(x);
    if (!mask) return ranked_dict(prioritize(model, nullptr, suite, parse_metric(metric), jobs));
    FeatureMask fm = to_mask(model, *mask);
    if (rate) {
      if (pruned_count(*rate, fm.mask.dim(1)) != fm.pruned)
        throw ParameterError("rate does not match the number of dropped features in the mask");
      fm.rate = *rate;
    }
    return ranked_dict(prioritize(model, &fm, suite, parse_metric(metric), jobs));
  }, py::arg("model"), py::arg("x"), py::arg("metric") = "gini", py::arg("mask") = py::none(),
     py::arg("jobs") = 1, py::arg("rate") = py::none());

  m.def("gini", [](const FloatArray& p) { return gini(to_tensor(p).values()); });
  m.def("maxp", [](const FloatArray& p) { return maxp(to_tensor(p).values()); });
  m.def("margin", [](const FloatArray& p) { return margin(to_tensor(p).values()); });

  m.def("apfd", [](const IndexArray& ordering, const py::array_t<bool>& faults) {
    return apfd(from_ordering(ordering), to_faults(faults));
  });
  m.def("trc", [](const IndexArray& ordering, const py::array_t<bool>& faults, std::size_t budget) {
    return trc(from_ordering(ordering), to_faults(faults), budget);
  });
  m.def("trc_curve", [](const IndexArray& ordering, const py::array_t<bool>& faults, std::vector<double> grid) {
    std::vector<std::pair<double, double>> out;
    for (const auto& p : trc_curve(to_indices(ordering), to_faults(faults), grid)) out.emplace_back(p.fraction, p.value);
    return out;
  });

  m.def("nns_rank", [](const Model& model, const FloatArray& x, double alpha, std::size_t k,
                       const std::string& metric, std::size_t jobs) {
    NnsConfig cfg;
    cfg.alpha = alpha;
    cfg.neighbors = k;
    return ranked_dict(nns_rank(model, to_tensor(x), cfg, parse_metric(metric), jobs));
  }, py::arg("model"), py::arg("x"), py::arg("alpha") = 0.5, py::arg("k") = 10, py::arg("metric") = "gini",
     py::arg("jobs") = 1);
  m.def("mc_dropout_rank", [](const Model& model, const FloatArray& x, std::size_t t, double rate,
                              const std::string& metric, std::uint64_t seed, std::size_t jobs) {
    return ranked_dict(mc_dropout_rank(model, to_tensor(x), {t, rate}, parse_metric(metric), seed, jobs));
  }, py::arg("model"), py::arg("x"), py::arg("t") = 50, py::arg("rate") = 0.1, py::arg("metric") = "gini",
     py::arg("seed") = 0, py::arg("jobs") = 1);
  m.def("nac_rank", [](const Model& model, const FloatArray& x, double threshold, std::size_t jobs) {
    return ranked_dict(nac_rank(model, to_tensor(x), threshold, jobs));
  }, py::arg("model"), py::arg("x"), py::arg("threshold") = 0.0, py::arg("jobs") = 1);
  m.def("nbc_rank", [](const Model& model, const FloatArray& x, const FloatArray& train_x, std::size_t jobs) {
    const auto profile = build_coverage_profile(model, to_tensor(train_x), 0.0, jobs);
    return ranked_dict(nbc_rank(model, to_tensor(x), profile, jobs));
  }, py::arg("model"), py::arg("x"), py::arg("train_x"), py::arg("jobs") = 1);
  m.def("dsa_rank", [](const Model& model, const FloatArray& x, const FloatArray& train_x, const IndexArray& train_y,
                       std::size_t jobs) {
    const auto profile = build_surprise_profile(model, to_dataset(train_x, train_y, model.classes()), std::nullopt, jobs);
    return ranked_dict(dsa_rank(model, to_tensor(x), profile, jobs));
  }, py::arg("model"), py::arg("x"), py::arg("train_x"), py::arg("train_y"), py::arg("jobs") = 1);
  m.def("lsa_rank", [](const Model& model, const FloatArray& x, const FloatArray& train_x, const IndexArray& train_y,
                       std::size_t jobs) {
    const auto profile = build_surprise_profile(model, to_dataset(train_x, train_y, model.classes()), std::nullopt, jobs);
    return ranked_dict(lsa_rank(model, to_tensor(x), profile, jobs));
  }, py::arg("model"), py::arg("x"), py::arg("train_x"), py::arg("train_y"), py::arg("jobs") = 1);
  m.def("random_rank", [](std::size_t n, std::uint64_t seed) { return ranked_dict(random_rank(n, seed)); },
        py::arg("n"), py::arg("seed") = 0);
}
