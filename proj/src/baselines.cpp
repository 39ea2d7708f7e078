#include "stddp/baselines.hpp"

#include <algorithm>

#include "stddp/error.hpp"

namespace stddp {

namespace {

const std::vector<std::pair<PoiIndex, std::uint64_t>> kNoPairs;

}  // namespace

void TransitionTable::add(PoiIndex prev, PoiIndex next) { ++counts_[key(prev, next)]; }

std::uint64_t TransitionTable::count(PoiIndex prev, PoiIndex next) const {
  auto it = counts_.find(key(prev, next));
  return it == counts_.end() ? 0 : it->second;
}

const std::vector<std::pair<PoiIndex, std::uint64_t>>& TransitionTable::successors(
    PoiIndex prev) const {
  auto it = out_.find(prev);
  return it == out_.end() ? kNoPairs : it->second;
}

const std::vector<std::pair<PoiIndex, std::uint64_t>>& TransitionTable::predecessors(
    PoiIndex next) const {
  auto it = in_.find(next);
  return it == in_.end() ? kNoPairs : it->second;
}

void TransitionTable::finalize() {
  out_.clear();
  in_.clear();
  for (const auto& [k, c] : counts_) {
    const auto prev = static_cast<PoiIndex>(k >> 32);
    const auto next = static_cast<PoiIndex>(k & 0xFFFFFFFFULL);
    out_[prev].emplace_back(next, c);
    in_[next].emplace_back(prev, c);
  }
  for (auto& [_, list] : out_) std::sort(list.begin(), list.end());
  for (auto& [_, list] : in_) std::sort(list.begin(), list.end());
}

CountingBaselines::CountingBaselines(const Corpus& corpus, const CorpusSplit& split)
    : num_pois_(corpus.num_pois()) {
  if (split.users.size() != corpus.users.size()) {
    throw ShapeMismatch("split does not cover the corpus users");
  }
  popularity_.global.assign(num_pois_, 0);
  popularity_.per_user.resize(corpus.users.size());
  for (std::size_t u = 0; u < corpus.users.size(); ++u) {
    const auto& visits = corpus.users[u].visits;
    const std::size_t train_end = std::min(split.users[u].train_end, visits.size());
    for (std::size_t i = 0; i < train_end; ++i) {
      ++popularity_.global[visits[i].poi];
      ++popularity_.per_user[u][visits[i].poi];
      if (i + 1 < train_end) transitions_.add(visits[i].poi, visits[i + 1].poi);
    }
  }
  transitions_.finalize();

  top1_.resize(num_pois_);
  for (std::size_t j = 0; j < num_pois_; ++j) top1_[j] = static_cast<PoiIndex>(j);
  std::stable_sort(top1_.begin(), top1_.end(), [this](PoiIndex a, PoiIndex b) {
    return popularity_.global[a] > popularity_.global[b];
  });
}

RankedList CountingBaselines::rank_by_counts(
    const std::vector<std::pair<PoiIndex, std::uint64_t>>& counts) const {
  RankedList head;
  head.reserve(counts.size());
  for (const auto& [poi, _] : counts) head.push_back(poi);
  std::unordered_map<PoiIndex, std::uint64_t> lookup(counts.begin(), counts.end());
  std::sort(head.begin(), head.end(), [&](PoiIndex a, PoiIndex b) {
    const auto ca = lookup.at(a), cb = lookup.at(b);
    if (ca != cb) return ca > cb;
    const auto pa = popularity_.global[a], pb = popularity_.global[b];
    if (pa != pb) return pa > pb;
    return a < b;
  });
  std::vector<char> taken(num_pois_, 0);
  for (PoiIndex p : head) taken[p] = 1;
  RankedList list = std::move(head);
  list.reserve(num_pois_);
  for (PoiIndex p : top1_) {
    if (!taken[p]) list.push_back(p);
  }
  return list;
}

RankedList CountingBaselines::rank_forward(const Sample& sample) const {
  if (sample.forward.empty()) throw ShapeMismatch("sample has no forward context");
  return rank_by_counts(transitions_.successors(sample.forward.front()));
}

RankedList CountingBaselines::rank_backward(const Sample& sample) const {
  if (sample.backward.empty()) throw ShapeMismatch("sample has no backward context");
  return rank_by_counts(transitions_.predecessors(sample.backward.front()));
}

RankedList CountingBaselines::rank_top2(UserIndex user) const {
  if (!knows_user(user)) return top1_;
  const auto& counts = popularity_.per_user[user];
  RankedList head;
  head.reserve(counts.size());
  for (const auto& [poi, _] : counts) head.push_back(poi);
  std::sort(head.begin(), head.end(), [&](PoiIndex a, PoiIndex b) {
    const auto ca = counts.at(a), cb = counts.at(b);
    if (ca != cb) return ca > cb;
    return a < b;
  });
  std::vector<char> taken(num_pois_, 0);
  for (PoiIndex p : head) taken[p] = 1;
  RankedList list = std::move(head);
  list.reserve(num_pois_);
  for (PoiIndex p : top1_) {
    if (!taken[p]) list.push_back(p);
  }
  return list;
}

bool CountingBaselines::knows_user(UserIndex user) const {
  return user < popularity_.per_user.size() && !popularity_.per_user[user].empty();
}

bool CountingBaselines::has_successors(PoiIndex prev) const {
  return !transitions_.successors(prev).empty();
}

bool CountingBaselines::has_predecessors(PoiIndex next) const {
  return !transitions_.predecessors(next).empty();
}

}  // namespace stddp
