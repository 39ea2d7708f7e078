#pragma once

#include <cstddef>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "stddp/numerics.hpp"

namespace stddp {

using PoiIndex = std::uint32_t;
using UserIndex = std::uint32_t;

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  static bool valid(double lat, double lon);
  // Throws InvalidInput on out-of-range or non-finite coordinates.
  static GeoPoint checked(double lat, double lon);

  bool operator==(const GeoPoint&) const = default;
};

// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

// Dense POI id <-> index mapping with coordinates. Indices are assigned in
// insertion order and never change.
class PoiTable {
 public:
  PoiTable() = default;

  // Returns the index for `id`, inserting it with `point` if unseen. A repeat
  // id keeps the coordinates from its first insertion.
  PoiIndex intern(std::string_view id, const GeoPoint& point);

  // Inserts a new id; throws InvalidInput on duplicates.
  PoiIndex add(std::string_view id, const GeoPoint& point);

  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  std::optional<PoiIndex> find(std::string_view id) const;
  const std::string& id(PoiIndex p) const { return ids_.at(p); }
  const GeoPoint& point(PoiIndex p) const { return points_.at(p); }

  bool operator==(const PoiTable& other) const {
    return ids_ == other.ids_ && points_ == other.points_;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<GeoPoint> points_;
  std::unordered_map<std::string, PoiIndex> index_;
};

// Distances from `p` to every POI (self included, as 0) divided by their
// population standard deviation. Throws DegenerateGeometry when that
// deviation is zero.
Vector spatial_vector(PoiIndex p, const PoiTable& table);

// Bounded LRU cache of spatial vectors. Safe for concurrent readers; a
// returned row stays valid after eviction.
class SpatialRowCache {
 public:
  using Row = std::shared_ptr<const Vector>;

  SpatialRowCache(const PoiTable& table, std::size_t capacity);

  Row row(PoiIndex p) const;

  const PoiTable& table() const { return table_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cached() const;
  std::uint64_t misses() const;

 private:
  const PoiTable& table_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  mutable std::list<PoiIndex> order_;  // most recent first
  struct Slot {
    Row row;
    std::list<PoiIndex>::iterator position;
  };
  mutable std::unordered_map<PoiIndex, Slot> slots_;
  mutable std::uint64_t misses_ = 0;
};

}  // namespace stddp
