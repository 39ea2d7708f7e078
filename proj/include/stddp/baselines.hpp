#pragma once

#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "stddp/eval.hpp"
#include "stddp/ingest.hpp"

namespace stddp {

// Counts of consecutive (prev, next) pairs inside each user's train segment.
class TransitionTable {
 public:
  void add(PoiIndex prev, PoiIndex next);

  std::uint64_t count(PoiIndex prev, PoiIndex next) const;
  // (next, count) pairs leaving `prev`, ascending by next.
  const std::vector<std::pair<PoiIndex, std::uint64_t>>& successors(PoiIndex prev) const;
  // (prev, count) pairs entering `next`, ascending by prev.
  const std::vector<std::pair<PoiIndex, std::uint64_t>>& predecessors(PoiIndex next) const;
  std::size_t distinct_pairs() const { return counts_.size(); }

  // Builds the sorted adjacency lists; called once after the last add.
  void finalize();

 private:
  static std::uint64_t key(PoiIndex a, PoiIndex b) {
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }
  std::unordered_map<std::uint64_t, std::uint64_t> counts_;
  std::unordered_map<PoiIndex, std::vector<std::pair<PoiIndex, std::uint64_t>>> out_;
  std::unordered_map<PoiIndex, std::vector<std::pair<PoiIndex, std::uint64_t>>> in_;
};

// Train-split visit counts, globally and per user.
struct PopularityTable {
  std::vector<std::uint64_t> global;                                  // M
  std::vector<std::unordered_map<PoiIndex, std::uint64_t>> per_user;  // N
};

// Fitted Forward / Backward / TOP1 / TOP2 rankers. Every ranking is a full
// permutation of the M candidates.
class CountingBaselines {
 public:
  CountingBaselines(const Corpus& corpus, const CorpusSplit& split);

  const TransitionTable& transitions() const { return transitions_; }
  const PopularityTable& popularity() const { return popularity_; }

  // Candidates by count(prev = sample.forward[0], q), then global
  // popularity, then index. A prev POI without train successors yields TOP1.
  RankedList rank_forward(const Sample& sample) const;
  // Candidates by count(q, next = sample.backward[0]), same tie chain.
  RankedList rank_backward(const Sample& sample) const;
  // Global popularity, ties by index.
  const RankedList& rank_top1() const { return top1_; }
  // The user's own train counts (ties by index), then the rest in TOP1
  // order. An unknown user yields TOP1.
  RankedList rank_top2(UserIndex user) const;

  bool knows_user(UserIndex user) const;
  bool has_successors(PoiIndex prev) const;
  bool has_predecessors(PoiIndex next) const;

 private:
  RankedList rank_by_counts(const std::vector<std::pair<PoiIndex, std::uint64_t>>& counts) const;

  std::size_t num_pois_;
  TransitionTable transitions_;
  PopularityTable popularity_;
  RankedList top1_;
};

}  // namespace stddp
