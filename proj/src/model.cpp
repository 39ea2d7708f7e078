#include "stddp/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "stddp/error.hpp"

namespace stddp {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void require_index(std::size_t value, std::size_t bound, const char* what) {
  if (value >= bound) {
    throw ShapeMismatch(std::string(what) + " index " + std::to_string(value) +
                        " outside [0, " + std::to_string(bound) + ")");
  }
}

// h = tanh(sum_k W_k e_k); fills `embeddings` with the context rows.
Vector context_hidden(const std::vector<Matrix>& weights, const Matrix& poi_embedding,
                      const std::vector<PoiIndex>& context, std::vector<Vector>& embeddings) {
  Vector pre(weights.front().rows(), 0.0);
  embeddings.clear();
  for (std::size_t k = 0; k < weights.size(); ++k) {
    auto row = poi_embedding.row(context[k]);
    embeddings.emplace_back(row.begin(), row.end());
    matvec_accumulate(weights[k], embeddings.back(), pre);
  }
  for (double& v : pre) v = activation(v);
  return pre;
}

Vector interval_code(const Vector& weights, double interval) {
  Vector code(weights.size());
  for (std::size_t j = 0; j < weights.size(); ++j) code[j] = activation(weights[j] * interval);
  return code;
}

}  // namespace

void HyperParams::validate() const {
  if (embedding_dim == 0 || hidden_units == 0 || window == 0) {
    throw InvalidInput("hyper-parameters d, h, w must all be at least 1");
  }
}

VariantConfig VariantConfig::parse(const std::string& name) {
  const std::string key = lower(name);
  if (key == "bi-stddp" || key == "full" || key == "bi") return full();
  if (key == "f-stddp" || key == "forward") return forward_only();
  if (key == "b-stddp" || key == "backward") return backward_only();
  if (key == "bi-b") return no_dependence();
  if (key == "bi-a") return no_dependence_no_pattern();
  throw InvalidInput("unknown variant '" + name +
                     "' (expected bi-stddp|f-stddp|b-stddp|bi-a|bi-b)");
}

std::string VariantConfig::name() const {
  if (*this == full()) return "Bi-STDDP";
  if (*this == forward_only()) return "F-STDDP";
  if (*this == backward_only()) return "B-STDDP";
  if (*this == no_dependence()) return "Bi-B";
  if (*this == no_dependence_no_pattern()) return "Bi-A";
  std::string s = "custom(";
  s += use_forward_branch ? "F" : "-";
  s += use_backward_branch ? "B" : "-";
  s += use_dependence ? "D" : "-";
  s += use_time_pattern ? "T" : "-";
  return s + ")";
}

void VariantConfig::validate() const {
  if (!use_forward_branch && !use_backward_branch) {
    throw InvalidInput("a variant needs the forward or the backward branch");
  }
}

const std::vector<VariantConfig>& named_variants() {
  static const std::vector<VariantConfig> variants = {
      VariantConfig::full(), VariantConfig::forward_only(), VariantConfig::backward_only(),
      VariantConfig::no_dependence_no_pattern(), VariantConfig::no_dependence()};
  return variants;
}

ModelParams ModelParams::zeros(std::size_t users, std::size_t pois, const HyperParams& hp) {
  hp.validate();
  if (users == 0 || pois == 0) throw ShapeMismatch("model needs at least one user and POI");
  const std::size_t d = hp.embedding_dim, h = hp.hidden_units;
  ModelParams p;
  p.poi_embedding = Matrix(pois, d);
  p.user_embedding = Matrix(users, d);
  p.forward_window.assign(hp.window, Matrix(h, d));
  p.backward_window.assign(hp.window, Matrix(h, d));
  p.user_hidden = Matrix(h, d);
  p.pattern_hidden = Matrix(h, TemporalPattern::kSize);
  p.interval_before.assign(pois, 0.0);
  p.interval_after.assign(pois, 0.0);
  p.output = Matrix(pois, h);
  return p;
}

ModelParams ModelParams::glorot(std::size_t users, std::size_t pois, const HyperParams& hp,
                                Rng& rng) {
  hp.validate();
  const std::size_t d = hp.embedding_dim, h = hp.hidden_units;
  ModelParams p;
  p.poi_embedding = glorot_uniform(rng, pois, d, pois, d);
  p.user_embedding = glorot_uniform(rng, users, d, users, d);
  for (std::size_t k = 0; k < hp.window; ++k) {
    p.forward_window.push_back(glorot_uniform(rng, d, h, h, d));
  }
  for (std::size_t k = 0; k < hp.window; ++k) {
    p.backward_window.push_back(glorot_uniform(rng, d, h, h, d));
  }
  p.user_hidden = glorot_uniform(rng, d, h, h, d);
  p.pattern_hidden = glorot_uniform(rng, TemporalPattern::kSize, h, h, TemporalPattern::kSize);
  auto before = glorot_uniform(rng, 1, pois, pois, 1);
  auto after = glorot_uniform(rng, 1, pois, pois, 1);
  p.interval_before.assign(before.flat().begin(), before.flat().end());
  p.interval_after.assign(after.flat().begin(), after.flat().end());
  p.output = glorot_uniform(rng, h, pois, pois, h);
  return p;
}

HyperParams ModelParams::hyper() const {
  return HyperParams{poi_embedding.cols(), output.cols(), forward_window.size()};
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.values.size();
  return n;
}

std::vector<ModelParams::Tensor> ModelParams::tensors() {
  std::vector<Tensor> out;
  out.push_back({"poi_embedding", poi_embedding.flat()});
  out.push_back({"user_embedding", user_embedding.flat()});
  for (std::size_t k = 0; k < forward_window.size(); ++k) {
    out.push_back({"forward_window[" + std::to_string(k + 1) + "]", forward_window[k].flat()});
  }
  for (std::size_t k = 0; k < backward_window.size(); ++k) {
    out.push_back({"backward_window[" + std::to_string(k + 1) + "]", backward_window[k].flat()});
  }
  out.push_back({"user_hidden", user_hidden.flat()});
  out.push_back({"pattern_hidden", pattern_hidden.flat()});
  out.push_back({"interval_before", interval_before});
  out.push_back({"interval_after", interval_after});
  out.push_back({"output", output.flat()});
  return out;
}

std::vector<ModelParams::ConstTensor> ModelParams::tensors() const {
  auto mutable_view = const_cast<ModelParams*>(this)->tensors();
  std::vector<ConstTensor> out;
  out.reserve(mutable_view.size());
  for (auto& t : mutable_view) out.push_back({std::move(t.name), t.values});
  return out;
}

void ModelParams::set_zero() {
  for (auto& t : tensors()) std::fill(t.values.begin(), t.values.end(), 0.0);
}

bool ModelParams::same_shape(const ModelParams& other) const {
  auto shape = [](const Matrix& m) { return std::pair(m.rows(), m.cols()); };
  if (forward_window.size() != other.forward_window.size() ||
      backward_window.size() != other.backward_window.size()) {
    return false;
  }
  for (std::size_t k = 0; k < forward_window.size(); ++k) {
    if (shape(forward_window[k]) != shape(other.forward_window[k]) ||
        shape(backward_window[k]) != shape(other.backward_window[k])) {
      return false;
    }
  }
  return shape(poi_embedding) == shape(other.poi_embedding) &&
         shape(user_embedding) == shape(other.user_embedding) &&
         shape(user_hidden) == shape(other.user_hidden) &&
         shape(pattern_hidden) == shape(other.pattern_hidden) &&
         interval_before.size() == other.interval_before.size() &&
         interval_after.size() == other.interval_after.size() &&
         shape(output) == shape(other.output);
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors()) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

bool ForwardTrace::matches(const Sample& sample) const {
  return user == sample.user && forward == sample.forward && backward == sample.backward &&
         interval_before == sample.interval_before && interval_after == sample.interval_after &&
         pattern == sample.pattern;
}

ForwardTrace forward(const Sample& sample, const ModelParams& params,
                     const SpatialRowCache& spatial, const VariantConfig& variant) {
  variant.validate();
  const std::size_t m = params.num_pois();
  const std::size_t w = params.forward_window.size();
  const std::size_t h = params.output.cols();
  if (spatial.table().size() != m) {
    throw ShapeMismatch("POI table has " + std::to_string(spatial.table().size()) +
                        " entries, model " + std::to_string(m));
  }
  if (sample.forward.size() != w || sample.backward.size() != w) {
    throw ShapeMismatch("sample window " + std::to_string(sample.forward.size()) + "/" +
                        std::to_string(sample.backward.size()) + ", model window " +
                        std::to_string(w));
  }
  require_index(sample.user, params.num_users(), "user");
  for (PoiIndex p : sample.forward) require_index(p, m, "forward POI");
  for (PoiIndex p : sample.backward) require_index(p, m, "backward POI");
  if (!(sample.interval_before >= 0.0) || !(sample.interval_after >= 0.0)) {
    throw InvalidInput("sample intervals must be non-negative");
  }

  ForwardTrace t;
  t.user = sample.user;
  t.forward = sample.forward;
  t.backward = sample.backward;
  t.interval_before = sample.interval_before;
  t.interval_after = sample.interval_after;
  t.pattern = sample.pattern;
  t.variant = variant;

  // Dynamic preference: sum of the enabled tanh hidden terms.
  t.preference.assign(h, 0.0);
  auto add = [&](const Vector& term) {
    for (std::size_t i = 0; i < h; ++i) t.preference[i] += term[i];
  };
  if (variant.use_forward_branch) {
    t.forward_hidden =
        context_hidden(params.forward_window, params.poi_embedding, sample.forward,
                       t.forward_embeddings);
    add(t.forward_hidden);
  }
  if (variant.use_backward_branch) {
    t.backward_hidden =
        context_hidden(params.backward_window, params.poi_embedding, sample.backward,
                       t.backward_embeddings);
    add(t.backward_hidden);
  }
  auto user_row = params.user_embedding.row(sample.user);
  t.user_embedding.assign(user_row.begin(), user_row.end());
  t.user_hidden = matvec(params.user_hidden, t.user_embedding);
  for (double& v : t.user_hidden) v = activation(v);
  add(t.user_hidden);
  if (variant.use_time_pattern) {
    const auto code = sample.pattern.as_vector();
    t.pattern_hidden = matvec(params.pattern_hidden, code);
    for (double& v : t.pattern_hidden) v = activation(v);
    add(t.pattern_hidden);
  }

  t.logits = matvec(params.output, t.preference);

  // Spatio-temporal dependence with the adjacent check-ins.
  if (variant.use_dependence && variant.use_forward_branch) {
    t.spatial_before = spatial.row(sample.forward.front());
    t.interval_before_code = interval_code(params.interval_before, sample.interval_before);
    const Vector& s = *t.spatial_before;
    for (std::size_t j = 0; j < m; ++j) t.logits[j] += s[j] * t.interval_before_code[j];
  }
  if (variant.use_dependence && variant.use_backward_branch) {
    t.spatial_after = spatial.row(sample.backward.front());
    t.interval_after_code = interval_code(params.interval_after, sample.interval_after);
    const Vector& s = *t.spatial_after;
    for (std::size_t j = 0; j < m; ++j) t.logits[j] += s[j] * t.interval_after_code[j];
  }

  t.probabilities = stable_softmax(t.logits);
  return t;
}

double cross_entropy(const ForwardTrace& trace, PoiIndex target) {
  require_index(target, trace.logits.size(), "target POI");
  return log_sum_exp(trace.logits) - trace.logits[target];
}

std::vector<PoiIndex> predict_topk(std::span<const double> probabilities, std::size_t k) {
  const std::size_t m = probabilities.size();
  if (k == 0 || k > m) {
    throw InvalidInput("k must lie in [1, " + std::to_string(m) + "], got " + std::to_string(k));
  }
  std::vector<PoiIndex> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = static_cast<PoiIndex>(i);
  auto better = [&](PoiIndex a, PoiIndex b) {
    if (probabilities[a] != probabilities[b]) return probabilities[a] > probabilities[b];
    return a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    better);
  order.resize(k);
  return order;
}

std::vector<PoiIndex> predict_topk(const ForwardTrace& trace, std::size_t k) {
  return predict_topk(trace.probabilities, k);
}

std::size_t rank_of(std::span<const double> scores, PoiIndex target) {
  require_index(target, scores.size(), "target POI");
  const double score = scores[target];
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > score || (scores[j] == score && j < target)) ++ahead;
  }
  return ahead + 1;
}

void save_checkpoint(std::ostream& out, const ModelParams& params) {
  using namespace binary;
  const HyperParams hp = params.hyper();
  put_magic(out, kCheckpointMagic);
  put(out, static_cast<std::uint64_t>(params.num_users()));
  put(out, static_cast<std::uint64_t>(params.num_pois()));
  put(out, static_cast<std::uint64_t>(hp.embedding_dim));
  put(out, static_cast<std::uint64_t>(hp.hidden_units));
  put(out, static_cast<std::uint64_t>(hp.window));
  for (const auto& t : params.tensors()) put_doubles(out, t.values);
  if (!out) throw Error("failed writing checkpoint");
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  save_checkpoint(out, params);
}

ModelParams load_checkpoint(std::istream& in) {
  using namespace binary;
  expect_magic(in, kCheckpointMagic, "checkpoint");
  const auto n = get<std::uint64_t>(in);
  const auto m = get<std::uint64_t>(in);
  HyperParams hp;
  hp.embedding_dim = get<std::uint64_t>(in);
  hp.hidden_units = get<std::uint64_t>(in);
  hp.window = get<std::uint64_t>(in);
  constexpr std::uint64_t kLimit = 1ULL << 32;
  if (n == 0 || m == 0 || n >= kLimit || m >= kLimit || hp.embedding_dim >= kLimit ||
      hp.hidden_units >= kLimit || hp.window >= 1024) {
    throw InvalidInput("checkpoint header out of range");
  }
  ModelParams params = ModelParams::zeros(n, m, hp);
  for (auto& t : params.tensors()) get_doubles(in, t.values);
  if (!params.all_finite()) throw InvalidInput("checkpoint contains non-finite values");
  return params;
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return load_checkpoint(in);
}

void check_compatible(const ModelParams& params, std::size_t users, std::size_t pois,
                      const HyperParams& hp) {
  const HyperParams have = params.hyper();
  if (params.num_users() != users || params.num_pois() != pois || !(have == hp)) {
    throw ShapeMismatch(
        "checkpoint (N=" + std::to_string(params.num_users()) +
        ", M=" + std::to_string(params.num_pois()) + ", d=" + std::to_string(have.embedding_dim) +
        ", h=" + std::to_string(have.hidden_units) + ", w=" + std::to_string(have.window) +
        ") does not match corpus/config (N=" + std::to_string(users) +
        ", M=" + std::to_string(pois) + ", d=" + std::to_string(hp.embedding_dim) +
        ", h=" + std::to_string(hp.hidden_units) + ", w=" + std::to_string(hp.window) + ")");
  }
}

}  // namespace stddp
