#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "cten/common.hpp"
#include "cten/dataset_io.hpp"
#include "cten/ipd.hpp"
#include "cten/model.hpp"
#include "cten/rng.hpp"
#include "cten/tape.hpp"

namespace cten {

/// Seed-stream tags: each purpose gets an independent substream of a run seed.
enum : std::uint64_t {
  kSeedInit = 1,
  kSeedTrainData = 2,
  kSeedTestData = 3,
  kSeedShuffleBase = 1000,
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t sm = tag;
  std::uint64_t mixed = seed ^ detail::splitmix64(sm);
  return detail::splitmix64(mixed);
}

/// Dataset source: either the synthetic generator (fresh, independently
/// seeded train/test sets per run seed) or an external file split at n_train.
struct DatasetConfig {
  IpdConfig ipd;                   // generator settings; n_samples/seed ignored
  std::size_t n_train = 800;
  std::size_t n_test = 200;
  std::string file;                // optional .bin / .csv dataset
  std::string normalize = "none";  // "none" or "zscore"

  void validate() const {
    if (n_train == 0) throw DomainError("dataset: n_train must be >= 1");
    if (n_test == 0) throw DomainError("dataset: n_test must be >= 1");
    if (normalize != "none" && normalize != "zscore")
      throw DomainError("dataset: unknown normalize mode '" + normalize + "'");
    if (file.empty()) {
      IpdConfig probe = ipd;
      probe.n_samples = n_train;
      probe.validate();
    }
  }
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  ModelSpec model;
  DatasetConfig dataset;

  void validate() const {
    if (epochs == 0) throw DomainError("train: epochs must be >= 1");
    if (batch_size == 0) throw DomainError("train: batch_size must be >= 1");
    if (seeds.empty()) throw DomainError("train: need at least one seed");
    if (!(learning_rate >= 0.0)) throw DomainError("train: bad learning rate");
    model.validate();
    dataset.validate();
  }
};

struct SeedResult {
  std::uint64_t seed = 0;
  double final_test_accuracy = 0.0;
  double wall_time_s = 0.0;
  std::vector<double> train_loss_curve;  // mean training loss per epoch
  bool failed = false;
  std::string error;
};

/// Aggregate statistics over the non-failed seeds; `std_acc` uses the sample
/// (n-1) formula and is undefined for a single seed.
struct RunReport {
  TrainConfig config;
  std::size_t parameter_count = 0;
  std::vector<SeedResult> per_seed;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  bool std_defined = false;
  double best_acc = 0.0;
  double worst_acc = 0.0;
  double mean_time_s = 0.0;
  std::size_t n_failed = 0;

  void aggregate() {
    std::vector<double> accs;
    double time_sum = 0.0;
    n_failed = 0;
    for (const SeedResult& r : per_seed) {
      if (r.failed) {
        ++n_failed;
        continue;
      }
      accs.push_back(r.final_test_accuracy);
      time_sum += r.wall_time_s;
    }
    if (accs.empty()) {
      mean_acc = std_acc = best_acc = worst_acc = mean_time_s = 0.0;
      std_defined = false;
      return;
    }
    mean_acc = std::accumulate(accs.begin(), accs.end(), 0.0) / double(accs.size());
    best_acc = *std::max_element(accs.begin(), accs.end());
    worst_acc = *std::min_element(accs.begin(), accs.end());
    mean_time_s = time_sum / double(accs.size());
    if (accs.size() >= 2) {
      double ss = 0.0;
      for (double a : accs) ss += (a - mean_acc) * (a - mean_acc);
      std_acc = std::sqrt(ss / double(accs.size() - 1));
      std_defined = true;
    } else {
      std_acc = 0.0;
      std_defined = false;
    }
  }
};

/// Adam with bias correction; states are indexed by parameter position so a
/// parameter that never receives a gradient simply keeps zero state.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::vector<std::pair<std::string, Tensor*>>& params, Tape& tape,
            const std::vector<Var>& bound) {
    if (m_.empty()) {
      m_.resize(params.size());
      v_.resize(params.size());
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!tape.has_grad(bound[i])) continue;  // unused by this variant
      const std::vector<double>& g = tape.grad_raw(bound[i]);
      Tensor& p = *params[i].second;
      if (m_[i].empty()) {
        m_[i].assign(p.size(), 0.0);
        v_[i].assign(p.size(), 0.0);
      }
      double* m = m_[i].data();
      double* v = v_[i].data();
      double* w = p.data();
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Trainable model adapters. A model exposes its learnable tensors plus a
// logits builder; the training loop below is shared.
// ---------------------------------------------------------------------------

class CtenModel {
 public:
  CtenModel(CtenParams params, Tensor time_grid)
      : params_(std::move(params)), time_grid_(std::move(time_grid)) {}

  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    return params_.named_tensors();
  }

  Var logits(Tape& tape, Var x, bool trainable, std::vector<Var>* bound_out) {
    BoundParams bp = bind_params(tape, params_, trainable);
    if (bound_out) *bound_out = bp.ordered;
    return forward(tape, bp, params_.spec, x, time_grid_);
  }

  std::size_t parameter_count() const { return cten::parameter_count(params_.spec); }

  CtenParams& params() { return params_; }
  const CtenParams& params() const { return params_; }

 private:
  CtenParams params_;
  Tensor time_grid_;
};

/// Static two-layer network on the flattened [T*D] input; the near-random
/// reference point. Sized so its parameter budget exceeds the full model's.
class MlpBaselineModel {
 public:
  MlpBaselineModel(std::size_t t_steps, std::size_t channels, std::size_t hidden,
                   std::size_t n_classes, std::uint64_t seed)
      : t_steps_(t_steps), channels_(channels) {
    Rng rng(seed);
    const std::size_t in = t_steps * channels;
    auto uniform_fan = [&rng](Shape shape, std::size_t fan_in) {
      Tensor t(std::move(shape));
      const double bound = 1.0 / std::sqrt(double(fan_in));
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
      return t;
    };
    w1_ = uniform_fan({in, hidden}, in);
    b1_ = uniform_fan({hidden}, in);
    w2_ = uniform_fan({hidden, n_classes}, hidden);
    b2_ = uniform_fan({n_classes}, hidden);
  }

  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    return {{"w1", &w1_}, {"b1", &b1_}, {"w2", &w2_}, {"b2", &b2_}};
  }

  Var logits(Tape& tape, Var x, bool trainable, std::vector<Var>* bound_out) {
    auto reg = [&](const Tensor& t) {
      return trainable ? tape.param(t) : tape.input(t);
    };
    Var w1 = reg(w1_), b1 = reg(b1_), w2 = reg(w2_), b2 = reg(b2_);
    if (bound_out) *bound_out = {w1, b1, w2, b2};
    const Shape& xs = x.shape();
    Var flat = reshape(x, {xs[0], t_steps_ * channels_});
    return add(matmul(relu(add(matmul(flat, w1), b1)), w2), b2);
  }

  std::size_t parameter_count() const {
    return w1_.size() + b1_.size() + w2_.size() + b2_.size();
  }

 private:
  std::size_t t_steps_, channels_;
  Tensor w1_, b1_, w2_, b2_;
};

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor gather_samples(const SpikeBatch& data,
                             const std::vector<std::size_t>& order,
                             std::size_t start, std::size_t count,
                             std::vector<int>* labels) {
  const std::size_t T = data.t_steps(), D = data.channels();
  Tensor x({count, T, D});
  labels->resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t src = order[start + i];
    std::copy_n(data.events.data() + src * T * D, T * D, x.data() + i * T * D);
    (*labels)[i] = data.labels[src];
  }
  return x;
}

}  // namespace detail

/// Fraction of samples whose argmax logit matches the label (argmax ties
/// break to the lowest class index).
template <class Model>
double evaluate_accuracy(Model& model, const SpikeBatch& data,
                         std::size_t batch_size) {
  const std::size_t n = data.batch_size();
  if (n == 0) throw DomainError("evaluate_accuracy: empty dataset");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    std::vector<int> labels;
    Tensor x = detail::gather_samples(data, order, start, count, &labels);
    Tape tape;
    Var logits = model.logits(tape, tape.input(std::move(x)), false, nullptr);
    const Tensor& lv = tape.value(logits);
    const std::size_t c = lv.dim(1);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t arg = 0;
      double best = lv[i * c];
      for (std::size_t j = 1; j < c; ++j)
        if (lv[i * c + j] > best) {
          best = lv[i * c + j];
          arg = j;
        }
      if (arg == static_cast<std::size_t>(labels[i])) ++correct;
    }
  }
  return double(correct) / double(n);
}

/// Minibatch Adam on softmax cross-entropy for a fixed number of epochs (no
/// early stopping, no schedule). Fully deterministic given `seed`: shuffling
/// uses per-epoch substreams derived from it. Divergence (non-finite loss or
/// gradient) propagates as NumericError.
template <class Model>
SeedResult train_one(Model& model, const SpikeBatch& train,
                     const SpikeBatch& test, const TrainConfig& cfg,
                     std::uint64_t seed) {
  if (train.batch_size() == 0) throw DomainError("train_one: empty training set");
  if (test.batch_size() == 0) throw DomainError("train_one: empty test set");
  SeedResult result;
  result.seed = seed;

  const auto t0 = std::chrono::steady_clock::now();
  Adam opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  const std::size_t n = train.batch_size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, kSeedShuffleBase + epoch));
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      std::vector<int> labels;
      Tensor x = detail::gather_samples(train, order, start, count, &labels);
      Tape tape;
      std::vector<Var> bound;
      Var logits = model.logits(tape, tape.input(std::move(x)), true, &bound);
      Var loss = softmax_cross_entropy(logits, labels);
      tape.backward(loss);
      auto named = model.named_tensors();
      opt.step(named, tape, bound);
      epoch_loss += tape.value(loss)[0] * double(count);
    }
    result.train_loss_curve.push_back(epoch_loss / double(n));
  }
  result.final_test_accuracy = evaluate_accuracy(model, test, cfg.batch_size);
  result.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

/// Materializes the train/test pair for one run seed: generated data gets
/// fresh independently-seeded splits; file-backed data is split at n_train
/// (optionally z-scored with training-split statistics).
struct PreparedData {
  SpikeBatch train;
  SpikeBatch test;
};

namespace detail {

inline SpikeBatch slice_batch(const SpikeBatch& src, std::size_t start,
                              std::size_t count) {
  const std::size_t T = src.t_steps(), D = src.channels();
  SpikeBatch out;
  out.config = src.config;
  out.config.n_samples = count;
  out.events = Tensor({count, T, D},
                      std::vector<double>(src.events.data() + start * T * D,
                                          src.events.data() + (start + count) * T * D));
  out.labels.assign(src.labels.begin() + static_cast<std::ptrdiff_t>(start),
                    src.labels.begin() + static_cast<std::ptrdiff_t>(start + count));
  if (!src.ipd.empty())
    out.ipd.assign(src.ipd.begin() + static_cast<std::ptrdiff_t>(start),
                   src.ipd.begin() + static_cast<std::ptrdiff_t>(start + count));
  if (!src.onset.empty())
    out.onset.assign(src.onset.begin() + static_cast<std::ptrdiff_t>(start),
                     src.onset.begin() + static_cast<std::ptrdiff_t>(start + count));
  return out;
}

}  // namespace detail

inline PreparedData prepare_data(const DatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  PreparedData out;
  if (cfg.file.empty()) {
    IpdConfig train_cfg = cfg.ipd;
    train_cfg.n_samples = cfg.n_train;
    train_cfg.seed = derive_seed(seed, kSeedTrainData);
    out.train = generate(train_cfg);
    IpdConfig test_cfg = cfg.ipd;
    test_cfg.n_samples = cfg.n_test;
    test_cfg.seed = derive_seed(seed, kSeedTestData);
    out.test = generate(test_cfg);
    return out;
  }
  SpikeBatch all = cfg.file.size() > 4 &&
                           cfg.file.substr(cfg.file.size() - 4) == ".csv"
                       ? ingest_csv(cfg.file)
                       : load_batch(cfg.file);
  if (all.batch_size() < cfg.n_train + 1)
    throw DomainError("dataset file has " + std::to_string(all.batch_size()) +
                      " samples; need more than n_train=" +
                      std::to_string(cfg.n_train));
  if (cfg.normalize == "zscore") apply_zscore(all, cfg.n_train);
  const std::size_t test_count =
      std::min(cfg.n_test, all.batch_size() - cfg.n_train);
  out.train = detail::slice_batch(all, 0, cfg.n_train);
  out.test = detail::slice_batch(all, cfg.n_train, test_count);
  return out;
}

/// Trains every seed independently and aggregates. A seed whose training
/// throws is recorded as failed and excluded from the aggregate statistics.
/// `on_trained`, when set, receives each seed's final parameters.
using TrainedHook = std::function<void(std::uint64_t, const CtenParams&)>;

inline RunReport run_multi_seed(const TrainConfig& cfg,
                                const TrainedHook& on_trained = {}) {
  cfg.validate();
  RunReport report;
  report.config = cfg;
  report.parameter_count = parameter_count(cfg.model);
  for (std::uint64_t seed : cfg.seeds) {
    SeedResult res;
    try {
      PreparedData data = prepare_data(cfg.dataset, seed);
      if (data.train.channels() != cfg.model.input_channels)
        throw DomainError("dataset has " + std::to_string(data.train.channels()) +
                          " channels but model.input_channels is " +
                          std::to_string(cfg.model.input_channels));
      CtenModel model(init_params(cfg.model, derive_seed(seed, kSeedInit)),
                      make_time_grid(data.train.t_steps(),
                                     data.train.config.dt));
      res = train_one(model, data.train, data.test, cfg, seed);
      if (on_trained) on_trained(seed, model.params());
    } catch (const std::exception& e) {
      res.seed = seed;
      res.failed = true;
      res.error = e.what();
    }
    report.per_seed.push_back(std::move(res));
  }
  report.aggregate();
  return report;
}

/// The flattened-input MLP reference, trained identically to the main model.
inline RunReport mlp_baseline_run(const TrainConfig& cfg,
                                  std::size_t hidden = 32) {
  cfg.validate();
  RunReport report;
  report.config = cfg;
  for (std::uint64_t seed : cfg.seeds) {
    SeedResult res;
    try {
      PreparedData data = prepare_data(cfg.dataset, seed);
      MlpBaselineModel model(data.train.t_steps(), data.train.channels(),
                             hidden, data.train.config.n_classes,
                             derive_seed(seed, kSeedInit));
      report.parameter_count = model.parameter_count();
      res = train_one(model, data.train, data.test, cfg, seed);
    } catch (const std::exception& e) {
      res.seed = seed;
      res.failed = true;
      res.error = e.what();
    }
    report.per_seed.push_back(std::move(res));
  }
  report.aggregate();
  return report;
}

}  // namespace cten
