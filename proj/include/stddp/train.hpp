#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "stddp/eval.hpp"
#include "stddp/model.hpp"

namespace stddp {

// Gradients mirror ModelParams tensor for tensor.
using Gradients = ModelParams;

// Adds weight * dJ/dθ for J = -log o[target] into `grads`. Embedding rows
// not touched by the sample are left alone. Throws TraceMismatch when the
// trace was computed from different inputs.
void accumulate_gradients(const ForwardTrace& trace, const Sample& sample, PoiIndex target,
                          const ModelParams& params, Gradients& grads, double weight = 1.0);

Gradients backward(const ForwardTrace& trace, const Sample& sample, PoiIndex target,
                   const ModelParams& params, const VariantConfig& variant);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ModelParams first_moment;
  ModelParams second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(const ModelParams& params, const AdamConfig& config = {});
};

// Bias-corrected Adam update of every parameter.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

enum class EarlyStopMetric { map, recall_at_1, recall_at_5, recall_at_10 };

EarlyStopMetric parse_early_stop_metric(const std::string& name);
const char* to_string(EarlyStopMetric metric);
double select_metric(const MetricsReport& report, EarlyStopMetric metric);

struct TrainConfig {
  std::size_t batch_size = 128;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  EarlyStopMetric metric = EarlyStopMetric::map;
  double learning_rate = 0.001;
  // Workers per batch and for validation scoring. 1 is fully deterministic;
  // larger counts are deterministic for a fixed count.
  std::size_t threads = 1;
  std::vector<std::size_t> ks = kDefaultKs;

  void validate() const;
};

class EarlyStopState {
 public:
  // Records the metric after `epoch`; returns true on strict improvement.
  bool update(std::size_t epoch, double value);
  bool exhausted(std::size_t patience) const { return epochs_since_improvement_ >= patience; }

  double best_value() const { return best_value_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_since_improvement() const { return epochs_since_improvement_; }

 private:
  double best_value_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epochs_since_improvement_ = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  MetricsReport validation;
  double wall_seconds = 0.0;
};

struct FitResult {
  ModelParams best;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  bool stopped_early = false;
  std::vector<EpochLog> log;
};

struct FitHooks {
  // Replaces validation scoring; receives the parameters after each epoch.
  std::function<MetricsReport(const ModelParams&, std::size_t epoch)> validate;
  std::function<void(const EpochLog&)> on_epoch;
};

// Mini-batch Adam on the mean cross-entropy with early stopping on the
// validation metric. Returns the best-validation parameters.
FitResult fit(const std::vector<Sample>& train, const std::vector<Sample>& validation,
              ModelParams params, const SpatialRowCache& spatial, const VariantConfig& variant,
              const TrainConfig& config, const FitHooks& hooks = {});

// Mean loss and mean gradient over `batch` on one or more workers.
double batch_gradients(const std::vector<const Sample*>& batch, const ModelParams& params,
                       const SpatialRowCache& spatial, const VariantConfig& variant,
                       Gradients& grads, std::vector<Gradients>& shard_buffers,
                       std::size_t threads);

MetricsReport evaluate_model(const ModelParams& params, const SpatialRowCache& spatial,
                             const VariantConfig& variant, const std::vector<Sample>& samples,
                             const std::vector<std::size_t>& ks = kDefaultKs,
                             std::size_t threads = 1);

double mean_loss(const ModelParams& params, const SpatialRowCache& spatial,
                 const VariantConfig& variant, const std::vector<Sample>& samples);

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log);
void write_log_table(std::ostream& out, const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

struct FiniteDifferenceOptions {
  double delta = 1e-5;
  double tolerance = 1e-4;
};

struct TensorCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct FiniteDifferenceReport {
  std::vector<TensorCheck> tensors;
  double tolerance = 0.0;

  double max_relative_error() const;
  bool passed() const { return max_relative_error() < tolerance; }
};

// Compares `analytic` against central differences (J(θ+δ) - J(θ-δ)) / 2δ
// coordinate by coordinate; relative error |a - n| / max(|a|, |n|, 1e-8).
FiniteDifferenceReport finite_difference_check(const ModelParams& params, const Sample& sample,
                                               const SpatialRowCache& spatial,
                                               const VariantConfig& variant,
                                               const Gradients& analytic,
                                               const FiniteDifferenceOptions& options = {});

// As above with the analytic gradient from `backward`.
FiniteDifferenceReport finite_difference_check(const ModelParams& params, const Sample& sample,
                                               const SpatialRowCache& spatial,
                                               const VariantConfig& variant,
                                               const FiniteDifferenceOptions& options = {});

}  // namespace stddp
