#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stddp/geodata.hpp"
#include "stddp/ingest.hpp"
#include "stddp/numerics.hpp"

namespace stddp {

struct HyperParams {
  std::size_t embedding_dim = 64;  // d
  std::size_t hidden_units = 256;  // h
  std::size_t window = 1;          // w

  void validate() const;
  bool operator==(const HyperParams&) const = default;
};

// Which parts of the model contribute to the output.
struct VariantConfig {
  bool use_forward_branch = true;
  bool use_backward_branch = true;
  bool use_dependence = true;
  bool use_time_pattern = true;

  static VariantConfig full() { return {}; }
  static VariantConfig forward_only() { return {true, false, true, true}; }   // F-STDDP
  static VariantConfig backward_only() { return {false, true, true, true}; }  // B-STDDP
  static VariantConfig no_dependence() { return {true, true, false, true}; }  // Bi-B
  static VariantConfig no_dependence_no_pattern() { return {true, true, false, false}; }  // Bi-A

  // Accepts bi-stddp|full, f-stddp, b-stddp, bi-a, bi-b (case-insensitive).
  static VariantConfig parse(const std::string& name);
  std::string name() const;

  void validate() const;
  bool operator==(const VariantConfig&) const = default;
};

const std::vector<VariantConfig>& named_variants();

// All learnable tensors. Also used for gradients and Adam moments, which
// mirror the parameter shapes.
struct ModelParams {
  Matrix poi_embedding;                // M x d
  Matrix user_embedding;               // N x d
  std::vector<Matrix> forward_window;  // w matrices, h x d
  std::vector<Matrix> backward_window; // w matrices, h x d
  Matrix user_hidden;                  // h x d
  Matrix pattern_hidden;               // h x 7
  Vector interval_before;              // M, scales the interval to t-1
  Vector interval_after;               // M, scales the interval to t+1
  Matrix output;                       // M x h

  static ModelParams zeros(std::size_t users, std::size_t pois, const HyperParams& hp);
  // Glorot-uniform initialization of every tensor. The interval weight
  // vectors use fan_in = 1, fan_out = M.
  static ModelParams glorot(std::size_t users, std::size_t pois, const HyperParams& hp, Rng& rng);

  std::size_t num_users() const { return user_embedding.rows(); }
  std::size_t num_pois() const { return poi_embedding.rows(); }
  HyperParams hyper() const;
  std::size_t parameter_count() const;

  struct Tensor {
    std::string name;
    std::span<double> values;
  };
  struct ConstTensor {
    std::string name;
    std::span<const double> values;
  };
  // Every tensor in declaration order (the checkpoint order).
  std::vector<Tensor> tensors();
  std::vector<ConstTensor> tensors() const;

  void set_zero();
  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;

  bool operator==(const ModelParams&) const = default;
};

// Activations of one forward pass, kept for backpropagation.
struct ForwardTrace {
  // Inputs the trace was computed from.
  UserIndex user = 0;
  std::vector<PoiIndex> forward;
  std::vector<PoiIndex> backward;
  double interval_before = 0.0;
  double interval_after = 0.0;
  TemporalPattern pattern;
  VariantConfig variant;

  std::vector<Vector> forward_embeddings;   // e(p_{t-k})
  std::vector<Vector> backward_embeddings;  // e(p_{t+k})
  Vector user_embedding;                    // e(u)
  Vector forward_hidden;                    // empty when the branch is off
  Vector backward_hidden;
  Vector user_hidden;
  Vector pattern_hidden;                    // empty when the pattern is off
  Vector preference;                        // c = sum of enabled hidden terms

  SpatialRowCache::Row spatial_before;      // s_{t-1}; null when unused
  SpatialRowCache::Row spatial_after;       // s_{t+1}
  Vector interval_before_code;              // tanh(w_before * i_{t-1})
  Vector interval_after_code;               // tanh(w_after * i_{t+1})

  Vector logits;
  Vector probabilities;

  bool matches(const Sample& sample) const;
};

// Scores every POI for the sample's missing check-in.
ForwardTrace forward(const Sample& sample, const ModelParams& params,
                     const SpatialRowCache& spatial, const VariantConfig& variant);

// -log o[target], from the logits via log-sum-exp.
double cross_entropy(const ForwardTrace& trace, PoiIndex target);

// Indices of the k largest probabilities; ties go to the smaller index.
std::vector<PoiIndex> predict_topk(std::span<const double> probabilities, std::size_t k);
std::vector<PoiIndex> predict_topk(const ForwardTrace& trace, std::size_t k);

// 1-based position of `target` in the full ranking induced by `scores`
// under the same tie rule as predict_topk.
std::size_t rank_of(std::span<const double> scores, PoiIndex target);

// ---------------------------------------------------------------------------
// Checkpoints ("STDDPCKPT")
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "STDDPCKPT";

void save_checkpoint(std::ostream& out, const ModelParams& params);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Throws ShapeMismatch unless the checkpoint fits a corpus of N users, M POIs
// and the given hyper-parameters.
void check_compatible(const ModelParams& params, std::size_t users, std::size_t pois,
                      const HyperParams& hp);

}  // namespace stddp
