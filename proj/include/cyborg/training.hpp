#pragma once

// Deterministic mini-batch SGD on the composite loss with a stepped learning
// rate, best-epoch selection on validation, and repeated runs.

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cyborg/csv.hpp"
#include "cyborg/cyborg_loss.hpp"
#include "cyborg/datasets.hpp"
#include "cyborg/metrics.hpp"
#include "cyborg/model_adapter.hpp"

namespace cyborg {

enum class SelectionMetric { val_accuracy, val_auc };

struct TrainConfig {
  CyborgTerm term;
  double lr = 0.005;
  double lr_decay = 0.1;
  int lr_step_epochs = 12;
  int max_epochs = 50;
  std::size_t batch_size = 20;
  std::uint64_t seed = 0;
  SelectionMetric selection = SelectionMetric::val_accuracy;
  int runs = 10;
  CamClass cam_class = CamClass::true_label;
};

inline void validate(const TrainConfig& c) {
  if (!(c.lr > 0)) fail(ErrorKind::ConfigInvalid, "lr must be positive");
  if (!(c.lr_decay > 0) || c.lr_step_epochs < 1) fail(ErrorKind::ConfigInvalid, "bad lr schedule");
  if (c.max_epochs < 1) fail(ErrorKind::ConfigInvalid, "max_epochs must be at least 1");
  if (c.batch_size < 1) fail(ErrorKind::ConfigInvalid, "batch_size must be at least 1");
  if (c.runs < 1) fail(ErrorKind::ConfigInvalid, "runs must be at least 1");
  if (!(c.term.alpha >= 0 && c.term.alpha <= 1)) fail(ErrorKind::ConfigInvalid, "alpha must lie in [0,1]");
}

/// Learning rate in effect during `epoch` (1-based).
inline double learning_rate(const TrainConfig& c, int epoch) {
  return c.lr * std::pow(c.lr_decay, (epoch - 1) / c.lr_step_epochs);
}

struct EpochRecord {
  int epoch = 0;
  double train_acc = 0.0;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double val_auc = 0.0;
  double lr = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct ScoredSample {
  std::string id;
  int label = 0;
  double score = 0.0;  // probability of the atypical class

  friend bool operator==(const ScoredSample&, const ScoredSample&) = default;
};

struct RunResult {
  std::vector<EpochRecord> curves;
  int best_epoch = 0;
  double best_metric = 0.0;
  Checkpoint best;
  std::optional<std::filesystem::path> checkpoint_path;
  std::vector<ScoredSample> test_scores;
  std::optional<double> test_auc;
  std::optional<double> test_ap;

  friend bool operator==(const RunResult& a, const RunResult& b) {
    return a.curves == b.curves && a.best_epoch == b.best_epoch && a.best_metric == b.best_metric &&
           a.best.parameters == b.best.parameters && a.test_scores == b.test_scores && a.test_auc == b.test_auc &&
           a.test_ap == b.test_ap;
  }
};

template <ProbeBackbone Model>
std::vector<ScoredSample> score_samples(const Model& model, const std::vector<Sample>& samples) {
  std::vector<ScoredSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto probe = model.forward_one(s.image).first;
    out.push_back({s.id, class_index(s.label), softmax(probe.logits)[class_index(Label::atypical)]});
  }
  return out;
}

struct SplitMetrics {
  double accuracy = 0.0;
  std::optional<double> auc;
  std::optional<double> ap;
};

inline SplitMetrics split_metrics(const std::vector<ScoredSample>& scored) {
  SplitMetrics m;
  std::vector<double> scores;
  std::vector<int> labels;
  std::size_t correct = 0;
  for (const auto& s : scored) {
    scores.push_back(s.score);
    labels.push_back(s.label);
    // Ties at p = 0.5 resolve to class 0, matching argmax over logits.
    correct += ((s.score > 0.5) ? 1 : 0) == s.label;
  }
  if (!scored.empty()) m.accuracy = static_cast<double>(correct) / static_cast<double>(scored.size());
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos > 0 && pos < static_cast<long>(labels.size())) {
    m.auc = roc_auc(scores, labels);
    m.ap = average_precision(scores, labels);
  }
  return m;
}

namespace detail {

inline void require_training_inputs(const TrainConfig& config, const Dataset& data) {
  validate(config);
  if (data.train.empty()) fail(ErrorKind::EmptySplit, "training split is empty");
  if (data.val.empty()) fail(ErrorKind::EmptySplit, "validation split is empty");
  if (config.term.alpha < 1.0)
    for (const auto& s : data.train)
      if (!s.saliency) fail(ErrorKind::MissingSaliency, "training sample " + s.id + " has no saliency map");
}

inline std::vector<std::size_t> shuffled(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace detail

/// Signature of a per-batch loss: fills gradients for the given probes.
using BatchObjective = std::function<BatchLoss(std::span<const ModelProbe>, std::span<const SaliencyMap* const>,
                                               std::span<const int>)>;

/// Trains `model` in place; on return it holds the best epoch's parameters.
/// When `run_dir` is set, the checkpoint, curves and test scores are written there.
template <ProbeBackbone Model>
RunResult train_one(const TrainConfig& config, const Dataset& data, Model& model,
                    const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                    const BatchObjective& objective = {}) {
  detail::require_training_inputs(config, data);
  const BatchObjective loss = objective ? objective
                                        : BatchObjective([&](auto probes, auto maps, auto labels) {
                                            return cyborg_batch_loss_grad(probes, maps, labels, config.term,
                                                                          config.cam_class);
                                          });

  std::mt19937_64 rng(config.seed);
  RunResult result;
  result.best_metric = -std::numeric_limits<double>::infinity();
  std::vector<double> best_params(model.parameters().begin(), model.parameters().end());
  std::vector<double> param_grad(best_params.size());

  std::vector<ModelProbe> probes;
  std::vector<typename Model::Cache> caches;
  std::vector<const SaliencyMap*> maps;
  std::vector<int> labels;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = learning_rate(config, epoch);
    const auto order = detail::shuffled(data.train.size(), rng);
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      probes.clear();
      caches.clear();
      maps.clear();
      labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = data.train[order[i]];
        auto [probe, cache] = model.forward_one(s.image);
        correct += static_cast<int>(argmax(probe.logits)) == class_index(s.label);
        probes.push_back(std::move(probe));
        caches.push_back(std::move(cache));
        maps.push_back(s.saliency ? &*s.saliency : nullptr);
        labels.push_back(class_index(s.label));
      }
      const BatchLoss batch = loss(probes, maps, labels);
      loss_sum += batch.value * static_cast<double>(end - start);
      std::fill(param_grad.begin(), param_grad.end(), 0.0);
      for (std::size_t k = 0; k < probes.size(); ++k) model.backward_one(caches[k], batch.gradients[k], param_grad);
      auto params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) params[p] -= lr * param_grad[p];
    }

    const auto val = split_metrics(score_samples(model, data.val));
    EpochRecord rec{epoch,
                    static_cast<double>(correct) / static_cast<double>(data.train.size()),
                    loss_sum / static_cast<double>(data.train.size()),
                    val.accuracy,
                    val.auc.value_or(std::numeric_limits<double>::quiet_NaN()),
                    lr};
    result.curves.push_back(rec);
    const double metric = config.selection == SelectionMetric::val_accuracy ? rec.val_acc : rec.val_auc;
    if (metric > result.best_metric) {
      result.best_metric = metric;
      result.best_epoch = epoch;
      best_params.assign(model.parameters().begin(), model.parameters().end());
    }
  }
  if (result.best_epoch == 0) {  // metric was NaN throughout
    result.best_epoch = 1;
    result.best_metric = config.selection == SelectionMetric::val_accuracy ? result.curves[0].val_acc
                                                                           : result.curves[0].val_auc;
  }

  std::copy(best_params.begin(), best_params.end(), model.parameters().begin());
  const auto& best_rec = result.curves[static_cast<std::size_t>(result.best_epoch - 1)];
  result.best = Checkpoint{model.spec(), result.best_epoch,
                           {{"val_acc", best_rec.val_acc}, {"val_auc", best_rec.val_auc}}, best_params};
  if (!data.test.empty()) {
    result.test_scores = score_samples(model, data.test);
    const auto test = split_metrics(result.test_scores);
    result.test_auc = test.auc;
    result.test_ap = test.ap;
  }
  if (run_dir) {
    std::filesystem::create_directories(*run_dir);
    result.checkpoint_path = *run_dir / "checkpoint";
    save_checkpoint(*result.checkpoint_path, result.best);
    std::vector<csv::Row> rows;
    for (const auto& r : result.curves)
      rows.push_back({std::to_string(r.epoch), csv::number(r.train_acc), csv::number(r.val_acc),
                      csv::number(r.val_auc), csv::number(r.lr)});
    csv::write(*run_dir / "curves.csv", {"epoch", "train_acc", "val_acc", "val_auc", "lr"}, rows);
    rows.clear();
    for (const auto& s : result.test_scores)
      rows.push_back({s.id, std::to_string(s.label), csv::number(s.score)});
    csv::write(*run_dir / "test_scores.csv", {"id", "label", "score"}, rows);
  }
  return result;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  MeanStd out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

struct RepeatedResult {
  std::vector<RunResult> runs;
  MeanStd test_auc;
  MeanStd test_ap;
  MeanStd best_val_auc;
};

/// Run i uses seed = config.seed + i, both for the model and the shuffle.
/// Runs are independent; `jobs` > 1 executes them on separate threads.
template <class Factory>
  requires ProbeBackbone<std::invoke_result_t<Factory&, std::uint64_t>>
RepeatedResult train_repeated(const TrainConfig& config, const Dataset& data, Factory&& model_factory,
                              const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                              unsigned jobs = 1) {
  validate(config);
  const auto n = static_cast<std::size_t>(config.runs);
  RepeatedResult out;
  out.runs.resize(n);
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      TrainConfig c = config;
      c.seed = config.seed + i;
      auto model = model_factory(c.seed);
      std::optional<std::filesystem::path> dir;
      if (out_dir) dir = *out_dir / ("run_" + std::to_string(i));
      out.runs[i] = train_one(c, data, model, dir);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < n;) run(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<double> aucs, aps, vals;
  for (const auto& r : out.runs) {
    if (r.test_auc) aucs.push_back(*r.test_auc);
    if (r.test_ap) aps.push_back(*r.test_ap);
    vals.push_back(r.best.metrics.at("val_auc"));
  }
  out.test_auc = mean_std(aucs);
  out.test_ap = mean_std(aps);
  out.best_val_auc = mean_std(vals);
  return out;
}

}  // namespace cyborg
