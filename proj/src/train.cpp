#include "stddp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "stddp/error.hpp"

namespace stddp {

namespace {

Gradients zeros_like(const ModelParams& params) {
  return ModelParams::zeros(params.num_users(), params.num_pois(), params.hyper());
}

Vector through_activation(const Vector& upstream, const Vector& activated) {
  Vector g(upstream.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = upstream[i] * (1.0 - activated[i] * activated[i]);
  }
  return g;
}

void add_dependence_gradient(const Vector& upstream, const Vector& spatial, const Vector& code,
                             double interval, Vector& grad) {
  for (std::size_t j = 0; j < grad.size(); ++j) {
    grad[j] += upstream[j] * spatial[j] * (1.0 - code[j] * code[j]) * interval;
  }
}

void add_into(Gradients& dst, const Gradients& src) {
  auto d = dst.tensors();
  auto s = src.tensors();
  for (std::size_t t = 0; t < d.size(); ++t) {
    for (std::size_t i = 0; i < d[t].values.size(); ++i) d[t].values[i] += s[t].values[i];
  }
}

template <typename Work>
void run_sharded(std::size_t count, std::size_t threads, Work work) {
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  const std::size_t chunk = (count + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = std::min(count, t * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    pool.emplace_back([&, t, begin, end] {
      try {
        work(t, begin, end);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void accumulate_gradients(const ForwardTrace& trace, const Sample& sample, PoiIndex target,
                          const ModelParams& params, Gradients& grads, double weight) {
  if (!trace.matches(sample)) throw TraceMismatch("trace was computed from another sample");
  if (!grads.same_shape(params)) throw ShapeMismatch("gradient buffer does not mirror params");
  const std::size_t m = params.num_pois();
  if (target >= m) throw ShapeMismatch("target POI outside [0, M)");
  const VariantConfig& variant = trace.variant;

  // dJ/dlogits = o - y
  Vector g_logits = trace.probabilities;
  g_logits[target] -= 1.0;
  for (double& v : g_logits) v *= weight;

  add_outer(grads.output, g_logits, trace.preference);
  Vector g_pref(params.output.cols(), 0.0);
  matvec_transposed_accumulate(params.output, g_logits, g_pref);

  if (variant.use_forward_branch) {
    const Vector g = through_activation(g_pref, trace.forward_hidden);
    for (std::size_t k = 0; k < params.forward_window.size(); ++k) {
      add_outer(grads.forward_window[k], g, trace.forward_embeddings[k]);
      matvec_transposed_accumulate(params.forward_window[k], g,
                                   grads.poi_embedding.row(trace.forward[k]));
    }
  }
  if (variant.use_backward_branch) {
    const Vector g = through_activation(g_pref, trace.backward_hidden);
    for (std::size_t k = 0; k < params.backward_window.size(); ++k) {
      add_outer(grads.backward_window[k], g, trace.backward_embeddings[k]);
      matvec_transposed_accumulate(params.backward_window[k], g,
                                   grads.poi_embedding.row(trace.backward[k]));
    }
  }
  {
    const Vector g = through_activation(g_pref, trace.user_hidden);
    add_outer(grads.user_hidden, g, trace.user_embedding);
    matvec_transposed_accumulate(params.user_hidden, g, grads.user_embedding.row(trace.user));
  }
  if (variant.use_time_pattern) {
    const Vector g = through_activation(g_pref, trace.pattern_hidden);
    const auto code = trace.pattern.as_vector();
    add_outer(grads.pattern_hidden, g, code);
  }

  // Spatial rows are data; only the interval weights learn on this path.
  if (trace.spatial_before) {
    add_dependence_gradient(g_logits, *trace.spatial_before, trace.interval_before_code,
                            trace.interval_before, grads.interval_before);
  }
  if (trace.spatial_after) {
    add_dependence_gradient(g_logits, *trace.spatial_after, trace.interval_after_code,
                            trace.interval_after, grads.interval_after);
  }
}

Gradients backward(const ForwardTrace& trace, const Sample& sample, PoiIndex target,
                   const ModelParams& params, const VariantConfig& variant) {
  if (!(trace.variant == variant)) {
    throw TraceMismatch("trace computed for variant " + trace.variant.name() + ", not " +
                        variant.name());
  }
  Gradients grads = zeros_like(params);
  accumulate_gradients(trace, sample, target, params, grads, 1.0);
  return grads;
}

AdamState AdamState::for_params(const ModelParams& params, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  state.first_moment = zeros_like(params);
  state.second_moment = zeros_like(params);
  return state;
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state) {
  if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment)) {
    throw ShapeMismatch("Adam parameters, gradients and moments differ in shape");
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].values.size(); ++i) {
      const double gi = g[k].values[i];
      double& mi = m[k].values[i];
      double& vi = v[k].values[i];
      mi = c.beta1 * mi + (1.0 - c.beta1) * gi;
      vi = c.beta2 * vi + (1.0 - c.beta2) * gi * gi;
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      p[k].values[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

EarlyStopMetric parse_early_stop_metric(const std::string& name) {
  if (name == "map") return EarlyStopMetric::map;
  if (name == "recall@1") return EarlyStopMetric::recall_at_1;
  if (name == "recall@5") return EarlyStopMetric::recall_at_5;
  if (name == "recall@10") return EarlyStopMetric::recall_at_10;
  throw InvalidInput("unknown early-stop metric '" + name +
                     "' (expected map|recall@1|recall@5|recall@10)");
}

const char* to_string(EarlyStopMetric metric) {
  switch (metric) {
    case EarlyStopMetric::map:
      return "map";
    case EarlyStopMetric::recall_at_1:
      return "recall@1";
    case EarlyStopMetric::recall_at_5:
      return "recall@5";
    case EarlyStopMetric::recall_at_10:
      return "recall@10";
  }
  return "?";
}

double select_metric(const MetricsReport& report, EarlyStopMetric metric) {
  switch (metric) {
    case EarlyStopMetric::map:
      return report.map;
    case EarlyStopMetric::recall_at_1:
      return report.recall_at(1);
    case EarlyStopMetric::recall_at_5:
      return report.recall_at(5);
    case EarlyStopMetric::recall_at_10:
      return report.recall_at(10);
  }
  return report.map;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw InvalidInput("batch size must be at least 1");
  if (patience == 0) throw InvalidInput("patience must be at least 1");
  if (max_epochs == 0) throw InvalidInput("max epochs must be at least 1");
  if (!(learning_rate > 0.0)) throw InvalidInput("learning rate must be positive");
  if (threads == 0) throw InvalidInput("threads must be at least 1");
  if (ks.empty()) throw InvalidInput("at least one K is required");
}

bool EarlyStopState::update(std::size_t epoch, double value) {
  if (value > best_value_) {
    best_value_ = value;
    best_epoch_ = epoch;
    epochs_since_improvement_ = 0;
    return true;
  }
  ++epochs_since_improvement_;
  return false;
}

double batch_gradients(const std::vector<const Sample*>& batch, const ModelParams& params,
                       const SpatialRowCache& spatial, const VariantConfig& variant,
                       Gradients& grads, std::vector<Gradients>& shard_buffers,
                       std::size_t threads) {
  grads.set_zero();
  if (batch.empty()) return 0.0;
  const double weight = 1.0 / static_cast<double>(batch.size());
  threads = std::max<std::size_t>(1, std::min(threads, batch.size()));

  if (threads == 1) {
    double loss = 0.0;
    for (const Sample* s : batch) {
      const ForwardTrace trace = forward(*s, params, spatial, variant);
      loss += cross_entropy(trace, s->target);
      accumulate_gradients(trace, *s, s->target, params, grads, weight);
    }
    return loss * weight;
  }

  while (shard_buffers.size() < threads) shard_buffers.push_back(zeros_like(params));
  std::vector<double> shard_loss(threads, 0.0);
  run_sharded(batch.size(), threads, [&](std::size_t t, std::size_t begin, std::size_t end) {
    Gradients& local = shard_buffers[t];
    local.set_zero();
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = *batch[i];
      const ForwardTrace trace = forward(s, params, spatial, variant);
      shard_loss[t] += cross_entropy(trace, s.target);
      accumulate_gradients(trace, s, s.target, params, local, weight);
    }
  });
  double loss = 0.0;
  for (std::size_t t = 0; t < threads; ++t) {
    add_into(grads, shard_buffers[t]);
    loss += shard_loss[t];
  }
  return loss * weight;
}

MetricsReport evaluate_model(const ModelParams& params, const SpatialRowCache& spatial,
                             const VariantConfig& variant, const std::vector<Sample>& samples,
                             const std::vector<std::size_t>& ks, std::size_t threads) {
  return evaluate_scores(
      [&](const Sample& s) { return forward(s, params, spatial, variant).probabilities; },
      samples, ks, threads);
}

double mean_loss(const ModelParams& params, const SpatialRowCache& spatial,
                 const VariantConfig& variant, const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) total += cross_entropy(forward(s, params, spatial, variant), s.target);
  return total / static_cast<double>(samples.size());
}

FitResult fit(const std::vector<Sample>& train, const std::vector<Sample>& validation,
              ModelParams params, const SpatialRowCache& spatial, const VariantConfig& variant,
              const TrainConfig& config, const FitHooks& hooks) {
  config.validate();
  variant.validate();
  if (train.empty()) throw EmptyTrainSet();
  // With no validation samples, early stopping watches the training samples.
  const std::vector<Sample>& watched = validation.empty() ? train : validation;

  Rng shuffle_rng(config.seed);
  AdamState adam = AdamState::for_params(params, AdamConfig{config.learning_rate});
  Gradients grads = zeros_like(params);
  std::vector<Gradients> shard_buffers;
  std::vector<const Sample*> order(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) order[i] = &train[i];

  FitResult result;
  result.best = params;
  EarlyStopState stopper;
  std::vector<const Sample*> batch;
  batch.reserve(config.batch_size);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const double batch_loss =
          batch_gradients(batch, params, spatial, variant, grads, shard_buffers, config.threads);
      loss_sum += batch_loss * static_cast<double>(batch.size());
      adam_step(params, grads, adam);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    entry.validation = hooks.validate
                           ? hooks.validate(params, epoch)
                           : evaluate_model(params, spatial, variant, watched, config.ks,
                                            config.threads);
    entry.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    const double value = select_metric(entry.validation, config.metric);
    if (stopper.update(epoch, value)) {
      result.best = params;
      result.best_epoch = epoch;
      result.best_metric = value;
    }
    result.log.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(entry);
    if (stopper.exhausted(config.patience)) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  return result;
}

void write_log_csv(std::ostream& out, const std::vector<EpochLog>& log) {
  out << "epoch,train_loss";
  if (!log.empty()) {
    for (std::size_t k : log.front().validation.ks) out << ",val_recall@" << k;
  }
  out << ",val_map,wall_seconds\n";
  out << std::setprecision(17);
  for (const auto& e : log) {
    out << e.epoch << ',' << e.train_loss;
    for (double r : e.validation.recall) out << ',' << r;
    out << ',' << e.validation.map << ',' << std::setprecision(6) << e.wall_seconds
        << std::setprecision(17) << '\n';
  }
}

void write_log_table(std::ostream& out, const std::vector<EpochLog>& log) {
  std::ostringstream s;
  s << std::setw(6) << "epoch" << std::setw(12) << "loss";
  if (!log.empty()) {
    for (std::size_t k : log.front().validation.ks) s << std::setw(10) << ("R@" + std::to_string(k));
  }
  s << std::setw(10) << "MAP" << std::setw(10) << "sec" << '\n';
  s << std::fixed;
  for (const auto& e : log) {
    s << std::setw(6) << e.epoch << std::setw(12) << std::setprecision(5) << e.train_loss;
    s << std::setprecision(4);
    for (double r : e.validation.recall) s << std::setw(10) << r;
    s << std::setw(10) << e.validation.map << std::setw(10) << std::setprecision(2)
      << e.wall_seconds << '\n';
  }
  out << s.str();
}

double FiniteDifferenceReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& t : tensors) worst = std::max(worst, t.max_relative_error);
  return worst;
}

namespace {

using Extended = long double;

// tanh(sum_k W[k] e(p_k)) in extended precision.
std::vector<Extended> extended_hidden(const std::vector<Matrix>& window, const Matrix& embedding,
                                      const std::vector<PoiIndex>& context) {
  std::vector<Extended> acc(window.front().rows(), 0.0L);
  for (std::size_t k = 0; k < window.size(); ++k) {
    const auto e = embedding.row(context[k]);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      for (std::size_t j = 0; j < e.size(); ++j) acc[i] += Extended{window[k](i, j)} * e[j];
    }
  }
  for (auto& v : acc) v = std::tanh(v);
  return acc;
}

// The training loss evaluated in long double. Central differences of a
// double loss lose about one ulp of J / 2δ, which swamps coordinates whose
// gradient is near 1e-7.
Extended extended_loss(const ModelParams& params, const Sample& sample,
                       const SpatialRowCache& spatial, const VariantConfig& variant) {
  const std::size_t m = params.num_pois();
  const std::size_t h = params.output.cols();
  std::vector<Extended> c(h, 0.0L);
  auto add = [&](const std::vector<Extended>& term) {
    for (std::size_t i = 0; i < h; ++i) c[i] += term[i];
  };
  auto dense = [&](const Matrix& w, std::span<const double> x) {
    std::vector<Extended> out(w.rows(), 0.0L);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      for (std::size_t j = 0; j < x.size(); ++j) out[i] += Extended{w(i, j)} * x[j];
      out[i] = std::tanh(out[i]);
    }
    return out;
  };
  if (variant.use_forward_branch) {
    add(extended_hidden(params.forward_window, params.poi_embedding, sample.forward));
  }
  if (variant.use_backward_branch) {
    add(extended_hidden(params.backward_window, params.poi_embedding, sample.backward));
  }
  add(dense(params.user_hidden, params.user_embedding.row(sample.user)));
  if (variant.use_time_pattern) add(dense(params.pattern_hidden, sample.pattern.as_vector()));

  std::vector<Extended> z(m, 0.0L);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < h; ++i) z[j] += Extended{params.output(j, i)} * c[i];
  }
  if (variant.use_dependence && variant.use_forward_branch) {
    const auto s = spatial.row(sample.forward.front());
    for (std::size_t j = 0; j < m; ++j) {
      z[j] += Extended{(*s)[j]} * std::tanh(Extended{params.interval_before[j]} * sample.interval_before);
    }
  }
  if (variant.use_dependence && variant.use_backward_branch) {
    const auto s = spatial.row(sample.backward.front());
    for (std::size_t j = 0; j < m; ++j) {
      z[j] += Extended{(*s)[j]} * std::tanh(Extended{params.interval_after[j]} * sample.interval_after);
    }
  }
  const Extended top = *std::max_element(z.begin(), z.end());
  Extended sum = 0.0L;
  for (Extended v : z) sum += std::exp(v - top);
  return top + std::log(sum) - z[sample.target];
}

}  // namespace

FiniteDifferenceReport finite_difference_check(const ModelParams& params, const Sample& sample,
                                               const SpatialRowCache& spatial,
                                               const VariantConfig& variant,
                                               const Gradients& analytic,
                                               const FiniteDifferenceOptions& options) {
  if (!analytic.same_shape(params)) throw ShapeMismatch("analytic gradient shape differs");
  ModelParams probe = params;
  auto probe_tensors = probe.tensors();
  const auto analytic_tensors = analytic.tensors();
  const double delta = options.delta;
  // Validates the inputs the same way training does.
  forward(sample, params, spatial, variant);
  auto loss = [&] { return extended_loss(probe, sample, spatial, variant); };

  FiniteDifferenceReport report;
  report.tolerance = options.tolerance;
  for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
    TensorCheck check;
    check.name = probe_tensors[t].name;
    auto values = probe_tensors[t].values;
    check.coordinates = values.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + delta;
      const double up = values[i];
      const Extended plus = loss();
      values[i] = original - delta;
      const double down = values[i];
      const Extended minus = loss();
      values[i] = original;
      const auto numeric = static_cast<double>((plus - minus) / (Extended{up} - Extended{down}));
      const double a = analytic_tensors[t].values[i];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / scale;
      if (rel > check.max_relative_error || i == 0) {
        check.max_relative_error = std::max(check.max_relative_error, rel);
        check.worst_index = i;
        check.analytic = a;
        check.numeric = numeric;
      }
    }
    report.tensors.push_back(check);
  }
  return report;
}

FiniteDifferenceReport finite_difference_check(const ModelParams& params, const Sample& sample,
                                               const SpatialRowCache& spatial,
                                               const VariantConfig& variant,
                                               const FiniteDifferenceOptions& options) {
  const ForwardTrace trace = forward(sample, params, spatial, variant);
  const Gradients analytic = backward(trace, sample, sample.target, params, variant);
  return finite_difference_check(params, sample, spatial, variant, analytic, options);
}

}  // namespace stddp
