#include "stddp/synthetic.hpp"

#include <cmath>
#include <set>
#include <string>
#include <tuple>

#include "stddp/error.hpp"
#include "stddp/numerics.hpp"

namespace stddp::synthetic {

namespace {

// Monday 2012-04-02 00:00:00 UTC.
constexpr std::int64_t kEpochStart = 1333324800;

}  // namespace

std::size_t pattern_slot(const TemporalPattern& pattern) {
  std::size_t session = 0;
  for (std::size_t b = 2; b < TemporalPattern::kSize; ++b) {
    if (pattern.bits[b]) session = b - 2;
  }
  return (pattern.bits[1] ? 5 : 0) + session;
}

Corpus overfit_corpus(std::size_t users, std::size_t pois, std::size_t per_user,
                      std::uint64_t seed) {
  if (pois < 3 || per_user < 3 || users == 0) throw InvalidInput("overfit corpus too small");
  Rng rng(seed);
  Corpus corpus;
  for (std::size_t p = 0; p < pois; ++p) {
    corpus.pois.add("poi" + std::to_string(p),
                    GeoPoint{40.70 + 0.1 * rng.uniform(), -74.00 + 0.1 * rng.uniform()});
  }
  for (std::size_t u = 0; u < users; ++u) {
    UserHistory history;
    history.id = "user" + std::to_string(u);
    while (true) {
      std::vector<PoiIndex> seq(per_user);
      seq[0] = static_cast<PoiIndex>(rng.below(pois));
      for (std::size_t i = 1; i < per_user; ++i) {
        do {
          seq[i] = static_cast<PoiIndex>(rng.below(pois));
        } while (seq[i] == seq[i - 1]);
      }
      std::set<std::pair<PoiIndex, PoiIndex>> contexts;
      bool unique = true;
      for (std::size_t i = 1; i + 1 < per_user && unique; ++i) {
        unique = contexts.emplace(seq[i - 1], seq[i + 1]).second;
      }
      if (!unique) continue;
      std::int64_t t = kEpochStart + static_cast<std::int64_t>(rng.below(86400));
      for (PoiIndex p : seq) {
        history.visits.push_back({p, t, 0});
        t += 3600 + static_cast<std::int64_t>(rng.below(11 * 3600));
      }
      break;
    }
    corpus.users.push_back(std::move(history));
  }
  return corpus;
}

Corpus planted_corpus(const PlantedOptions& o) {
  if (o.clusters < 2 || o.pois_per_slot == 0 || o.users == 0 || o.checkins_per_user < 3) {
    throw InvalidInput("planted corpus options out of range");
  }
  constexpr std::size_t kSlots = 10;
  Rng rng(o.seed);
  Corpus corpus;
  // Cluster centres about 1 degree apart, POIs within about 0.01 degree.
  for (std::size_t c = 0; c < o.clusters; ++c) {
    const double lat = 40.0 + static_cast<double>(c % 2);
    const double lon = -75.0 + static_cast<double>(c / 2);
    for (std::size_t s = 0; s < kSlots; ++s) {
      for (std::size_t r = 0; r < o.pois_per_slot; ++r) {
        corpus.pois.add("c" + std::to_string(c) + "s" + std::to_string(s) + "r" + std::to_string(r),
                        GeoPoint{lat + rng.uniform(-0.01, 0.01), lon + rng.uniform(-0.01, 0.01)});
      }
    }
  }
  auto poi_of = [&](std::size_t cluster, std::size_t slot) {
    return static_cast<PoiIndex>((cluster * kSlots + slot) * o.pois_per_slot +
                                 rng.below(o.pois_per_slot));
  };

  for (std::size_t u = 0; u < o.users; ++u) {
    UserHistory history;
    history.id = "user" + std::to_string(u);
    std::size_t cluster = rng.below(o.clusters);
    double t = static_cast<double>(kEpochStart) + rng.uniform(0.0, 7.0 * 86400.0);
    for (std::size_t i = 0; i < o.checkins_per_user; ++i) {
      if (i > 0) {
        if (rng.uniform() < o.short_gap_probability) {
          t += 3600.0 * rng.uniform(o.short_gap_hours_min, o.short_gap_hours_max);
        } else {
          t += 3600.0 * rng.uniform(o.long_gap_hours_min, o.long_gap_hours_max);
          cluster = (cluster + 1 + rng.below(o.clusters - 1)) % o.clusters;
        }
      }
      const auto seconds = static_cast<std::int64_t>(std::floor(t));
      const std::size_t slot = pattern_slot(encode_temporal_pattern(seconds, 0));
      history.visits.push_back({poi_of(cluster, slot), seconds, 0});
    }
    corpus.users.push_back(std::move(history));
  }
  return corpus;
}

TinyInstance tiny_instance(std::uint64_t seed, std::size_t pois, std::size_t users,
                           const HyperParams& hp) {
  Rng rng(seed);
  TinyInstance inst;
  for (std::size_t p = 0; p < pois; ++p) {
    inst.pois.add("p" + std::to_string(p),
                  GeoPoint{40.6 + rng.uniform(0.0, 0.2), -74.1 + rng.uniform(0.0, 0.2)});
  }
  Rng init = rng.child(1);
  inst.params = ModelParams::glorot(users, pois, hp, init);
  Sample& s = inst.sample;
  s.user = static_cast<UserIndex>(rng.below(users));
  s.target = static_cast<PoiIndex>(rng.below(pois));
  s.target_utc = kEpochStart + static_cast<std::int64_t>(rng.below(14 * 86400));
  s.pattern = encode_temporal_pattern(s.target_utc, 0);
  for (std::size_t k = 0; k < hp.window; ++k) {
    s.forward.push_back(static_cast<PoiIndex>(rng.below(pois)));
    s.backward.push_back(static_cast<PoiIndex>(rng.below(pois)));
  }
  s.interval_before = rng.uniform(0.0, 6.0);
  s.interval_after = rng.uniform(0.0, 6.0);
  return inst;
}

}  // namespace stddp::synthetic
