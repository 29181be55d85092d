#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fastprio/baselines.hpp"
#include "fastprio/corruption.hpp"
#include "fastprio/dataset.hpp"
#include "fastprio/errors.hpp"
#include "fastprio/evaluation.hpp"
#include "fastprio/feature_selection.hpp"
#include "fastprio/model_io.hpp"
#include "fastprio/prioritizer.hpp"
#include "fastprio/tensor_io.hpp"
#include "fastprio/trainer.hpp"
#include "run_record.hpp"

namespace fastprio::cli {

namespace fs = std::filesystem;
using nlohmann::json;

bool is_path_option(std::string_view name) {
  static const std::set<std::string_view> paths{"data",  "out",     "train",   "suite",    "model",
                                                "scores", "mask",   "ranking", "reports",  "held-out",
                                                "val",   "log",     "init",    "summary",  "csv",
                                                "tsv",   "first",   "second",  "json"};
  return paths.count(name) > 0;
}

namespace {

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ParameterError(flag + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw ParameterError(flag + ": empty list");
  return out;
}

Tensor load_suite_inputs(const fs::path& path) {
  if (path.extension() == ".fpt") return read_tensor(path);
  return load_dataset(path).inputs();
}

std::string suite_digest(const fs::path& path) {
  return path.extension() == ".fpt" ? sha256_file(path) : dataset_digest(path);
}

void note(const std::string& text) { std::cerr << text << '\n'; }

// ---- synth / split ----

void add_synth(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("synth", "Generate a seeded Gaussian-cluster dataset");
  auto o = std::make_shared<SyntheticSpec>();
  auto out = std::make_shared<std::string>();
  sub->add_option("--out", *out, "Dataset header to write (.json)")->required();
  sub->add_option("--classes", o->classes, "Number of classes")->capture_default_str();
  sub->add_option("--per-class", o->per_class, "Examples per class")->capture_default_str();
  sub->add_option("--dims", o->dims, "Input dimensions")->capture_default_str();
  sub->add_option("--spread", o->spread, "Per-coordinate cluster standard deviation")->capture_default_str();
  sub->add_option("--label-noise", o->label_noise, "Fraction of labels moved to another class")
      ->capture_default_str();
  actions["synth"] = [o, out](const Globals& g) {
    SyntheticSpec spec = *o;
    spec.seed = g.seed;
    save_dataset(make_synthetic(spec), *out);
    RunRecord rec("synth", g.argv, g.seed);
    rec.output(*out);
    rec.write(*out);
  };
}

void add_split(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("split", "Seeded two-way split of a dataset");
  struct Opts {
    std::string data, first, second;
    double fraction = 0.5;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "Dataset header")->required();
  sub->add_option("--first", o->first, "Output for the remaining examples")->required();
  sub->add_option("--second", o->second, "Output for the split-off fraction")->required();
  sub->add_option("--fraction", o->fraction, "Fraction moved to --second")->capture_default_str();
  actions["split"] = [o](const Globals& g) {
    const Dataset ds = load_dataset(o->data);
    auto [a, b] = split(ds, o->fraction, g.seed);
    save_dataset(a, o->first);
    save_dataset(b, o->second);
    RunRecord rec("split", g.argv, g.seed);
    rec.input("data", o->data, dataset_digest(o->data));
    rec.output(o->first);
    rec.output(o->second);
    rec.write(o->first);
  };
}

// ---- train ----

void add_train(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("train", "Train a dense model, fine-tune one, or retrain with a selected suite");
  struct Opts {
    std::string data, out, hidden = "32,32", val, log, init, suite, ranking, held_out, summary;
    TrainConfig cfg;
    double fraction = 0.05;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "Training dataset header")->required();
  sub->add_option("--out", o->out, "Model manifest to write")->required();
  sub->add_option("--hidden", o->hidden, "Hidden layer widths, comma separated")->capture_default_str();
  sub->add_option("--epochs", o->cfg.epochs)->capture_default_str();
  sub->add_option("--lr", o->cfg.learning_rate, "Learning rate")->capture_default_str();
  sub->add_option("--batch", o->cfg.batch_size, "Minibatch size")->capture_default_str();
  sub->add_option("--l2", o->cfg.l2, "Weight decay")->capture_default_str();
  sub->add_option("--val", o->val, "Validation dataset for the epoch log");
  sub->add_option("--log", o->log, "Epoch log CSV to write");
  sub->add_option("--init", o->init, "Start from this model instead of a fresh initialization");
  sub->add_option("--suite", o->suite, "Labeled test suite for selection retraining");
  sub->add_option("--ranking", o->ranking, "Ranked suite whose top inputs are added to the training data");
  sub->add_option("--fraction", o->fraction, "Selection budget as a fraction of the suite")->capture_default_str();
  sub->add_option("--held-out", o->held_out, "Held-out dataset for before/after accuracy");
  sub->add_option("--summary", o->summary, "JSON file for retraining accuracies");
  actions["train"] = [o](const Globals& g) {
    TrainConfig cfg = o->cfg;
    cfg.seed = g.seed;
    const Dataset data = load_dataset(o->data);
    std::optional<Dataset> val;
    if (!o->val.empty()) val = load_dataset(o->val);
    RunRecord rec("train", g.argv, g.seed);
    rec.input("data", o->data, dataset_digest(o->data));
    if (val) rec.input("val", o->val, dataset_digest(o->val));

    Model model;
    std::vector<EpochLog> log;
    if (!o->ranking.empty()) {
      if (o->init.empty() || o->suite.empty() || o->held_out.empty()) {
        throw ConfigurationError("--ranking needs --init, --suite and --held-out");
      }
      const Model start = load_model(o->init);
      const Dataset suite = load_dataset(o->suite);
      const Dataset held = load_dataset(o->held_out);
      const RankedSuite ranking = read_ranked_suite(o->ranking);
      rec.input("init", o->init, model_digest(o->init));
      rec.input("suite", o->suite, dataset_digest(o->suite));
      rec.input("ranking", o->ranking, sha256_file(o->ranking));
      rec.input("held-out", o->held_out, dataset_digest(o->held_out));
      auto r = retrain_with_selection(start, data, suite, ranking, o->fraction, cfg, held);
      note("held-out accuracy " + std::to_string(r.accuracy_before) + " -> " + std::to_string(r.accuracy_after) +
           " with " + std::to_string(r.selected.size()) + " selected inputs");
      if (!o->summary.empty()) {
        json j{{"method", ranking.method},
               {"fraction", o->fraction},
               {"selected", r.selected},
               {"accuracy_before", r.accuracy_before},
               {"accuracy_after", r.accuracy_after},
               {"epochs", cfg.epochs},
               {"learning_rate", cfg.learning_rate},
               {"batch_size", cfg.batch_size},
               {"l2", cfg.l2},
               {"seed", cfg.seed}};
        write_file_bytes(o->summary, j.dump(2) + "\n");
        rec.output(o->summary);
      }
      model = std::move(r.model);
      log = std::move(r.log);
    } else if (!o->init.empty()) {
      rec.input("init", o->init, model_digest(o->init));
      auto r = fine_tune(load_model(o->init), data, cfg, val ? &*val : nullptr);
      model = std::move(r.model);
      log = std::move(r.log);
    } else {
      std::vector<std::size_t> arch{shape_size(data.sample_shape())};
      for (double w : parse_list(o->hidden, "--hidden")) {
        if (w < 1 || w != static_cast<double>(static_cast<std::size_t>(w))) {
          throw ParameterError("--hidden: widths must be positive integers");
        }
        arch.push_back(static_cast<std::size_t>(w));
      }
      arch.push_back(data.classes());
      auto r = train_dense(arch, data, cfg, val ? &*val : nullptr);
      model = std::move(r.model);
      log = std::move(r.log);
    }
    save_model(model, o->out);
    rec.output(o->out);
    if (!o->log.empty()) {
      write_file_bytes(o->log, training_log_csv(log));
      rec.output(o->log);
    }
    if (!log.empty()) {
      note("epoch " + std::to_string(log.back().epoch) + " loss " + std::to_string(log.back().loss) +
           " train accuracy " + std::to_string(log.back().train_accuracy));
    }
    rec.write(o->out);
  };
}

// ---- corrupt ----

void add_corrupt(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("corrupt", "Apply a seeded corruption to every input of a dataset");
  struct Opts {
    std::string data, out, kind = "gaussian-noise";
    double severity = 0.5;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--data", o->data, "Dataset header")->required();
  sub->add_option("--out", o->out, "Corrupted dataset header to write")->required();
  sub->add_option("--kind", o->kind, "gaussian-noise, shot-noise, box-blur, brightness or contrast")
      ->capture_default_str();
  sub->add_option("--severity", o->severity, "Severity in [0, 1]")->capture_default_str();
  actions["corrupt"] = [o](const Globals& g) {
    CorruptionSpec spec;
    spec.kind = parse_corruption_kind(o->kind);
    spec.severity = o->severity;
    spec.seed = g.seed;
    save_dataset(corrupt(load_dataset(o->data), spec), o->out);
    RunRecord rec("corrupt", g.argv, g.seed);
    rec.input("data", o->data, dataset_digest(o->data));
    rec.output(o->out);
    rec.write(o->out);
  };
}

// ---- assess / mask ----

void add_assess(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("assess", "Score every feature of the feature layer for every class");
  struct Opts {
    std::string model, train, out, strategy = "contribution";
    ReferenceSetConfig refs;
    std::optional<std::size_t> layer;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--model", o->model, "Model manifest")->required();
  sub->add_option("--train", o->train, "Training dataset header")->required();
  sub->add_option("--out", o->out, "Score tensor to write (.fpt)")->required();
  sub->add_option("--tau", o->refs.tau, "Reference-set confidence threshold")->capture_default_str();
  sub->add_option("--max-per-class", o->refs.max_per_class, "Reference-set cap per class")->capture_default_str();
  sub->add_option("--layer", o->layer, "Feature layer index (default: last hidden layer)");
  sub->add_option("--strategy", o->strategy,
                  "contribution, output, activation-frequency, variance, gradient or random")
      ->capture_default_str();
  actions["assess"] = [o](const Globals& g) {
    Model model = load_model(o->model);
    if (o->layer) model = model.with_feature_layer(*o->layer);
    const Dataset train = load_dataset(o->train);
    const auto strategy = parse_strategy(o->strategy);
    const auto refs = build_reference_sets(model, train, o->refs, g.seed, g.jobs);
    const auto scores = strategy == SelectionStrategy::contribution ? assess_all(model, refs, g.jobs)
                                                                    : strategy_scores(model, refs, strategy, g.seed, g.jobs);
    write_scores(o->out, scores);
    RunRecord rec("assess", g.argv, g.seed);
    rec.input("model", o->model, model_digest(o->model));
    rec.input("train", o->train, dataset_digest(o->train));
    rec.output(o->out);
    rec.output(sidecar_path(o->out));
    rec.write(o->out);
  };
}

void add_mask(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("mask", "Turn feature scores into per-class keep/drop masks");
  struct Opts {
    std::string scores, out;
    double rate = 0.05;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--scores", o->scores, "Score tensor written by assess")->required();
  sub->add_option("--out", o->out, "Mask tensor to write (.fpt)")->required();
  sub->add_option("-r,--rate", o->rate, "Pruning rate r in [0, 1)")->capture_default_str();
  actions["mask"] = [o](const Globals& g) {
    const auto scores = read_scores(o->scores);
    write_mask(o->out, build_masks(scores, o->rate));
    RunRecord rec("mask", g.argv, g.seed);
    rec.input("scores", o->scores, sha256_file(o->scores));
    rec.output(o->out);
    rec.output(sidecar_path(o->out));
    rec.write(o->out);
  };
}

// ---- prioritize ----

void add_prioritize(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("prioritize", "Rank a test suite with FAST or a baseline");
  struct Opts {
    std::string model, suite, out, method = "fast", metric = "gini", mask, train;
    NnsConfig nns;
    McDropoutConfig mc;
    double threshold = 0.0;
    std::optional<std::size_t> layer;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--model", o->model, "Model manifest")->required();
  sub->add_option("--suite", o->suite, "Test suite: dataset header or input tensor (.fpt)")->required();
  sub->add_option("--out", o->out, "Ranked suite to write (.json or .csv)")->required();
  sub->add_option("--method", o->method,
                  "fast, uncertainty (metric only), nns, mc-dropout, nac, nbc, dsa, lsa or random")
      ->capture_default_str();
  sub->add_option("--metric", o->metric, "gini, maxp or margin")->capture_default_str();
  sub->add_option("--mask", o->mask, "Mask tensor (fast)");
  sub->add_option("--train", o->train, "Training dataset for NBC/DSA/LSA profiles");
  sub->add_option("--alpha", o->nns.alpha, "NNS self weight")->capture_default_str();
  sub->add_option("-k,--neighbors", o->nns.neighbors, "NNS neighbor count")->capture_default_str();
  sub->add_option("-t,--runs", o->mc.runs, "MC-Dropout forward passes")->capture_default_str();
  sub->add_option("--dropout-rate", o->mc.rate, "MC-Dropout rate for models without dropout layers")
      ->capture_default_str();
  sub->add_option("--threshold", o->threshold, "NAC activation threshold")->capture_default_str();
  sub->add_option("--layer", o->layer, "Embedding / trace layer (default: feature layer)");
  actions["prioritize"] = [o](const Globals& g) {
    const Model model = load_model(o->model);
    const Tensor suite = load_suite_inputs(o->suite);
    const auto metric = parse_metric(o->metric);
    RunRecord rec("prioritize", g.argv, g.seed);
    rec.input("model", o->model, model_digest(o->model));
    rec.input("suite", o->suite, suite_digest(o->suite));
    auto need_train = [&]() {
      if (o->train.empty()) throw ConfigurationError("--method " + o->method + " needs --train");
      rec.input("train", o->train, dataset_digest(o->train));
      return load_dataset(o->train);
    };
    RankedSuite ranked;
    const std::string& m = o->method;
    if (m == "fast") {
      if (o->mask.empty()) throw ConfigurationError("--method fast needs --mask");
      const FeatureMask mask = read_mask(o->mask);
      rec.input("mask", o->mask, sha256_file(o->mask));
      ranked = prioritize(model.with_feature_layer(mask.layer), &mask, suite, metric, g.jobs);
    } else if (m == "uncertainty" || m == "gini" || m == "maxp" || m == "margin" || m == "deepgini") {
      const auto base_metric = m == "uncertainty" ? metric : parse_metric(m);
      ranked = prioritize(model, nullptr, suite, base_metric, g.jobs);
    } else if (m == "nns") {
      NnsConfig cfg = o->nns;
      cfg.embedding_layer = o->layer;
      ranked = nns_rank(model, suite, cfg, metric, g.jobs);
    } else if (m == "mc-dropout") {
      ranked = mc_dropout_rank(model, suite, o->mc, metric, g.seed, g.jobs);
    } else if (m == "nac") {
      ranked = nac_rank(model, suite, o->threshold, g.jobs);
    } else if (m == "nbc") {
      const auto profile = build_coverage_profile(model, need_train().inputs(), o->threshold, g.jobs);
      ranked = nbc_rank(model, suite, profile, g.jobs);
    } else if (m == "dsa" || m == "lsa") {
      const auto profile = build_surprise_profile(model, need_train(), o->layer, g.jobs);
      ranked = m == "dsa" ? dsa_rank(model, suite, profile, g.jobs) : lsa_rank(model, suite, profile, g.jobs);
    } else if (m == "random") {
      ranked = random_rank(suite.dim(0), g.seed);
      ranked.predictions.resize(suite.dim(0));
      const Tensor probs = predict_all(model, suite, g.jobs);
      for (std::size_t i = 0; i < suite.dim(0); ++i) ranked.predictions[i] = argmax(probs.item_values(i));
    } else {
      throw ParameterError("--method: unknown method '" + m + "'");
    }
    write_ranked_suite(o->out, ranked);
    rec.output(o->out);
    rec.write(o->out);
  };
}

// ---- evaluate / report ----

std::string format_grid_default() {
  std::string s;
  for (double f : default_budget_grid()) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%g", f);
    if (!s.empty()) s += ',';
    s += buf;
  }
  return s;
}

void add_evaluate(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("evaluate", "Compute APFD and TRC curves for ranked suites");
  struct Opts {
    std::string suite, out, csv, tsv, model, mask;
    std::vector<std::string> rankings;
    std::string grid = format_grid_default();
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--suite", o->suite, "Labeled test suite (dataset header)")->required();
  sub->add_option("--ranking", o->rankings, "Ranked suite file; repeat for each method")->required();
  sub->add_option("--out", o->out, "Report JSON to write")->required();
  sub->add_option("--csv", o->csv, "Optional CSV summary");
  sub->add_option("--tsv", o->tsv, "Optional TSV of TRC curves");
  sub->add_option("--model", o->model, "Model whose predictions define faults (default: ranking predictions)");
  sub->add_option("--mask", o->mask, "Mask used by FAST, recorded in the metadata");
  sub->add_option("--grid", o->grid, "Budget fractions, comma separated");
  actions["evaluate"] = [o](const Globals& g) {
    const Dataset suite = load_dataset(o->suite);
    RunRecord rec("evaluate", g.argv, g.seed);
    rec.input("suite", o->suite, dataset_digest(o->suite));
    std::vector<RankedSuite> rankings;
    for (const auto& path : o->rankings) {
      rankings.push_back(read_ranked_suite(path));
      rec.input("ranking", path, sha256_file(path));
    }
    ReportMetadata md;
    md.seed = g.seed;
    std::vector<std::size_t> predictions;
    if (!o->model.empty()) {
      const Model model = load_model(o->model);
      md.model_hash = model_digest(o->model);
      rec.input("model", o->model, md.model_hash);
      const Tensor probs = predict_all(model, suite.inputs(), g.jobs);
      for (std::size_t i = 0; i < suite.size(); ++i) predictions.push_back(argmax(probs.item_values(i)));
    } else {
      predictions = rankings.front().predictions;
      if (predictions.empty()) {
        throw ConfigurationError(o->rankings.front() + " carries no predictions; pass --model");
      }
    }
    if (!o->mask.empty()) {
      const FeatureMask mask = read_mask(o->mask);
      rec.input("mask", o->mask, sha256_file(o->mask));
      md.rate = mask.rate;
      md.layer = mask.layer;
    }
    const auto faults = FaultVector::from_predictions(predictions, suite.labels());
    const auto grid = parse_list(o->grid, "--grid");
    const EvalReport report = compare(rankings, faults, grid, md);
    write_file_bytes(o->out, report_json(report));
    rec.output(o->out);
    if (!o->csv.empty()) {
      write_file_bytes(o->csv, report_csv(report));
      rec.output(o->csv);
    }
    if (!o->tsv.empty()) {
      write_file_bytes(o->tsv, report_curves_tsv(report));
      rec.output(o->tsv);
    }
    for (const auto& m : report.methods) {
      note(m.method + " APFD " + (m.apfd ? std::to_string(*m.apfd) : std::string("n/a")));
    }
    rec.write(o->out);
  };
}

void add_report(CLI::App& app, std::map<std::string, Action>& actions) {
  auto* sub = app.add_subcommand("report", "Aggregate evaluation reports into one comparison table");
  struct Opts {
    std::vector<std::string> reports, names;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--reports", o->reports, "Report JSON files")->required();
  sub->add_option("--names", o->names, "Row labels, one per report (default: file stem)");
  sub->add_option("--out", o->out, "Comparison CSV to write")->required();
  actions["report"] = [o](const Globals& g) {
    std::vector<EvalReport> reports;
    std::vector<std::string> names = o->names;
    RunRecord rec("report", g.argv, g.seed);
    for (const auto& path : o->reports) {
      reports.push_back(read_report(path));
      rec.input("report", path, sha256_file(path));
    }
    if (names.empty()) {
      for (const auto& path : o->reports) names.push_back(fs::path(path).stem().string());
    }
    if (names.size() != reports.size()) throw ParameterError("--names: expected one name per report");
    write_file_bytes(o->out, comparison_csv(reports, names));
    rec.output(o->out);
    rec.write(o->out);
  };
}

}  // namespace

void add_commands(CLI::App& app, std::map<std::string, Action>& actions) {
  add_synth(app, actions);
  add_split(app, actions);
  add_train(app, actions);
  add_corrupt(app, actions);
  add_assess(app, actions);
  add_mask(app, actions);
  add_prioritize(app, actions);
  add_evaluate(app, actions);
  add_report(app, actions);
}

}  // namespace fastprio::cli
