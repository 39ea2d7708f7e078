#include "stddp/geodata.hpp"

#include <cmath>
#include <numbers>

#include "stddp/error.hpp"

namespace stddp {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

}  // namespace

bool GeoPoint::valid(double lat, double lon) {
  return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
         lon >= -180.0 && lon <= 180.0;
}

GeoPoint GeoPoint::checked(double lat, double lon) {
  if (!valid(lat, lon)) {
    throw InvalidInput("coordinate out of range: (" + std::to_string(lat) + ", " +
                       std::to_string(lon) + ")");
  }
  return GeoPoint{lat, lon};
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = a.lat * kDegToRad;
  const double phi2 = b.lat * kDegToRad;
  const double dphi = (b.lat - a.lat) * kDegToRad;
  const double dlambda = (b.lon - a.lon) * kDegToRad;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlambda / 2.0);
  double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  h = std::min(1.0, std::max(0.0, h));
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

PoiIndex PoiTable::intern(std::string_view id, const GeoPoint& point) {
  if (auto found = find(id)) return *found;
  const auto idx = static_cast<PoiIndex>(ids_.size());
  ids_.emplace_back(id);
  points_.push_back(point);
  index_.emplace(ids_.back(), idx);
  return idx;
}

PoiIndex PoiTable::add(std::string_view id, const GeoPoint& point) {
  if (find(id)) throw InvalidInput("duplicate POI id: " + std::string(id));
  return intern(id, point);
}

std::optional<PoiIndex> PoiTable::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vector spatial_vector(PoiIndex p, const PoiTable& table) {
  const std::size_t m = table.size();
  if (p >= m) throw ShapeMismatch("POI index " + std::to_string(p) + " outside table");
  Vector row(m);
  const GeoPoint& origin = table.point(p);
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    row[j] = j == p ? 0.0 : haversine_km(origin, table.point(static_cast<PoiIndex>(j)));
    sum += row[j];
  }
  const double mean = sum / static_cast<double>(m);
  double ss = 0.0;
  for (double v : row) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(m));
  if (!(sigma > 0.0)) {
    throw DegenerateGeometry("distance row of POI " + table.id(p) + " has zero deviation");
  }
  for (double& v : row) v /= sigma;
  return row;
}

SpatialRowCache::SpatialRowCache(const PoiTable& table, std::size_t capacity)
    : table_(table), capacity_(capacity == 0 ? 1 : capacity) {}

SpatialRowCache::Row SpatialRowCache::row(PoiIndex p) const {
  {
    std::lock_guard lock(mutex_);
    auto it = slots_.find(p);
    if (it != slots_.end()) {
      order_.splice(order_.begin(), order_, it->second.position);
      return it->second.row;
    }
  }
  // Computed outside the lock; two racing misses produce identical rows.
  auto fresh = std::make_shared<const Vector>(spatial_vector(p, table_));
  std::lock_guard lock(mutex_);
  ++misses_;
  auto it = slots_.find(p);
  if (it != slots_.end()) return it->second.row;
  order_.push_front(p);
  slots_.emplace(p, Slot{fresh, order_.begin()});
  while (slots_.size() > capacity_) {
    slots_.erase(order_.back());
    order_.pop_back();
  }
  return fresh;
}

std::size_t SpatialRowCache::cached() const {
  std::lock_guard lock(mutex_);
  return slots_.size();
}

std::uint64_t SpatialRowCache::misses() const {
  std::lock_guard lock(mutex_);
  return misses_;
}

}  // namespace stddp
