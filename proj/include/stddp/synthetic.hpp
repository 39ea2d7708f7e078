#pragma once

#include <cstddef>
#include <cstdint>

#include "stddp/ingest.hpp"
#include "stddp/model.hpp"

namespace stddp::synthetic {

// Small corpus in which (user, previous POI, next POI) determines every
// target, so a model can fit all of its samples.
Corpus overfit_corpus(std::size_t users = 5, std::size_t pois = 10, std::size_t per_user = 10,
                      std::uint64_t seed = 7);

// POIs sit in well separated geographic clusters. Each cluster holds
// `pois_per_slot` POIs for each of the 10 weekday/weekend x session slots.
// A user stays in the current cluster after a short gap and moves to a
// different cluster after a long one; the visited POI is drawn from the
// current cluster's POIs for the slot of the visit time.
struct PlantedOptions {
  std::size_t clusters = 4;
  std::size_t pois_per_slot = 3;
  std::size_t users = 40;
  std::size_t checkins_per_user = 100;
  double short_gap_probability = 0.6;
  double short_gap_hours_min = 0.05;
  double short_gap_hours_max = 0.3;
  double long_gap_hours_min = 4.0;
  double long_gap_hours_max = 8.0;
  std::uint64_t seed = 1;
};

Corpus planted_corpus(const PlantedOptions& options);

// Random model, POI table and sample for gradient checks: Glorot
// parameters, POIs scattered over about 0.2 degrees, intervals in [0, 6] h.
struct TinyInstance {
  PoiTable pois;
  ModelParams params;
  Sample sample;
};

TinyInstance tiny_instance(std::uint64_t seed, std::size_t pois, std::size_t users,
                           const HyperParams& hp);

// Slot in [0, 10) of a temporal pattern: 5 * weekend + session.
std::size_t pattern_slot(const TemporalPattern& pattern);

}  // namespace stddp::synthetic
