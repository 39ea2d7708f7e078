#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "stddp/geodata.hpp"
#include "stddp/ingest.hpp"

namespace stddp {

// Candidate POIs, best first, without duplicates.
using RankedList = std::vector<PoiIndex>;

inline const std::vector<std::size_t> kDefaultKs = {1, 5, 10};

int recall_at_k(std::span<const PoiIndex> list, PoiIndex truth, std::size_t k);

// Single ground truth: precision@K = hit / K and recall@K = hit, so the
// harmonic mean is 2 / (K + 1) on a hit and 0 on a miss.
double f1_at_k(std::span<const PoiIndex> list, PoiIndex truth, std::size_t k);

// 1 / rank of the truth. Throws TruthMissing when the list lacks it.
double average_precision(std::span<const PoiIndex> list, PoiIndex truth);

double mean_average_precision(const std::vector<RankedList>& lists,
                              const std::vector<PoiIndex>& truths);

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::vector<double> recall;  // per K
  std::vector<double> f1;      // per K
  double map = 0.0;
  std::size_t count = 0;

  double recall_at(std::size_t k) const;
  double f1_at(std::size_t k) const;

  // metric,value rows.
  void write_csv(std::ostream& out) const;
  // Aligned two-column table.
  void write_table(std::ostream& out) const;
};

// Aggregates per-instance ranks of the ground truth in a fixed order.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(std::vector<std::size_t> ks = kDefaultKs);

  // `rank` is the 1-based position of the truth in the full ranking.
  void add(std::size_t rank);
  MetricsReport report() const;

 private:
  std::vector<std::size_t> ks_;
  std::vector<double> hits_;
  double ap_sum_ = 0.0;
  std::size_t count_ = 0;
};

using Ranker = std::function<RankedList(const Sample&)>;
// Full score vector over all M candidates; higher is better.
using Scorer = std::function<std::vector<double>(const Sample&)>;

// Applies a ranker to every sample. Rankings must contain every truth.
MetricsReport evaluate(const Ranker& ranker, const std::vector<Sample>& samples,
                       const std::vector<std::size_t>& ks = kDefaultKs);

// Same metrics from full score vectors; the truth's rank follows the
// predict_topk tie rule (higher score first, then smaller index). Samples
// are scored on `threads` workers; aggregation order is fixed.
MetricsReport evaluate_scores(const Scorer& scorer, const std::vector<Sample>& samples,
                              const std::vector<std::size_t>& ks = kDefaultKs,
                              std::size_t threads = 1);

std::vector<std::size_t> parse_ks(const std::string& text);

}  // namespace stddp
