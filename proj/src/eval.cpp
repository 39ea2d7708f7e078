#include "stddp/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <thread>

#include "stddp/error.hpp"
#include "stddp/model.hpp"

namespace stddp {

namespace {

std::size_t position_of(std::span<const PoiIndex> list, PoiIndex truth) {
  auto it = std::find(list.begin(), list.end(), truth);
  if (it == list.end()) {
    throw TruthMissing("POI " + std::to_string(truth) + " absent from a ranking of length " +
                       std::to_string(list.size()));
  }
  return static_cast<std::size_t>(it - list.begin()) + 1;
}

void require_k(std::size_t k) {
  if (k == 0) throw InvalidInput("K must be at least 1");
}

}  // namespace

int recall_at_k(std::span<const PoiIndex> list, PoiIndex truth, std::size_t k) {
  require_k(k);
  const std::size_t n = std::min(k, list.size());
  return std::find(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(n), truth) !=
                 list.begin() + static_cast<std::ptrdiff_t>(n)
             ? 1
             : 0;
}

double f1_at_k(std::span<const PoiIndex> list, PoiIndex truth, std::size_t k) {
  return recall_at_k(list, truth, k) ? 2.0 / static_cast<double>(k + 1) : 0.0;
}

double average_precision(std::span<const PoiIndex> list, PoiIndex truth) {
  return 1.0 / static_cast<double>(position_of(list, truth));
}

double mean_average_precision(const std::vector<RankedList>& lists,
                              const std::vector<PoiIndex>& truths) {
  if (lists.size() != truths.size()) throw ShapeMismatch("one truth per ranking required");
  if (lists.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < lists.size(); ++i) sum += average_precision(lists[i], truths[i]);
  return sum / static_cast<double>(lists.size());
}

double MetricsReport::recall_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw InvalidInput("report has no Recall@" + std::to_string(k));
}

double MetricsReport::f1_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return f1[i];
  }
  throw InvalidInput("report has no F1@" + std::to_string(k));
}

void MetricsReport::write_csv(std::ostream& out) const {
  out << "metric,value\n" << std::setprecision(17);
  for (std::size_t i = 0; i < ks.size(); ++i) out << "recall@" << ks[i] << ',' << recall[i] << '\n';
  for (std::size_t i = 0; i < ks.size(); ++i) out << "f1@" << ks[i] << ',' << f1[i] << '\n';
  out << "map," << map << '\n' << "instances," << count << '\n';
}

void MetricsReport::write_table(std::ostream& out) const {
  std::ostringstream body;
  body << std::fixed << std::setprecision(4);
  auto line = [&](const std::string& name, double value) {
    body << std::left << std::setw(12) << name << std::right << std::setw(10) << value << '\n';
  };
  for (std::size_t i = 0; i < ks.size(); ++i) line("Recall@" + std::to_string(ks[i]), recall[i]);
  for (std::size_t i = 0; i < ks.size(); ++i) line("F1@" + std::to_string(ks[i]), f1[i]);
  line("MAP", map);
  body << std::left << std::setw(12) << "instances" << std::right << std::setw(10) << count
       << '\n';
  out << body.str();
}

MetricsAccumulator::MetricsAccumulator(std::vector<std::size_t> ks)
    : ks_(std::move(ks)), hits_(ks_.size(), 0.0) {
  for (std::size_t k : ks_) require_k(k);
}

void MetricsAccumulator::add(std::size_t rank) {
  if (rank == 0) throw InvalidInput("ranks are 1-based");
  for (std::size_t i = 0; i < ks_.size(); ++i) {
    if (rank <= ks_[i]) hits_[i] += 1.0;
  }
  ap_sum_ += 1.0 / static_cast<double>(rank);
  ++count_;
}

MetricsReport MetricsAccumulator::report() const {
  MetricsReport r;
  r.ks = ks_;
  r.count = count_;
  r.recall.assign(ks_.size(), 0.0);
  r.f1.assign(ks_.size(), 0.0);
  if (count_ == 0) return r;
  const double n = static_cast<double>(count_);
  for (std::size_t i = 0; i < ks_.size(); ++i) {
    r.recall[i] = hits_[i] / n;
    // Mean per-instance F1, written via recall so F1 = 2 R / (K + 1) holds exactly.
    r.f1[i] = 2.0 * r.recall[i] / static_cast<double>(ks_[i] + 1);
  }
  r.map = ap_sum_ / n;
  return r;
}

MetricsReport evaluate(const Ranker& ranker, const std::vector<Sample>& samples,
                       const std::vector<std::size_t>& ks) {
  MetricsAccumulator acc(ks);
  for (const auto& s : samples) {
    const RankedList list = ranker(s);
    acc.add(position_of(list, s.target));
  }
  return acc.report();
}

MetricsReport evaluate_scores(const Scorer& scorer, const std::vector<Sample>& samples,
                              const std::vector<std::size_t>& ks, std::size_t threads) {
  std::vector<std::size_t> ranks(samples.size(), 0);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto scores = scorer(samples[i]);
      ranks[i] = rank_of(scores, samples[i].target);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, samples.size()));
  if (threads == 1) {
    work(0, samples.size());
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    const std::size_t chunk = (samples.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = std::min(samples.size(), t * chunk);
      const std::size_t end = std::min(samples.size(), begin + chunk);
      pool.emplace_back([&, t, begin, end] {
        try {
          work(begin, end);
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
  MetricsAccumulator acc(ks);
  for (std::size_t r : ranks) acc.add(r);
  return acc.report();
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long k = std::stoll(item, &used);
      if (used != item.size() || k < 1) throw InvalidInput("");
      ks.push_back(static_cast<std::size_t>(k));
    } catch (const std::exception&) {
      throw InvalidInput("invalid K list '" + text + "'");
    }
  }
  if (ks.empty()) throw InvalidInput("empty K list");
  return ks;
}

}  // namespace stddp
