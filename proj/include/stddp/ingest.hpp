#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "stddp/geodata.hpp"

namespace stddp {

// ---------------------------------------------------------------------------
// Raw check-ins
// ---------------------------------------------------------------------------

struct CheckIn {
  std::string user_id;
  std::string poi_id;
  std::int64_t utc_seconds = 0;
  std::int32_t tz_offset_minutes = 0;
};

struct ParseIssue {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct RawCorpus {
  PoiTable pois;
  std::vector<CheckIn> checkins;
  std::vector<ParseIssue> issues;

  std::size_t malformed() const { return issues.size(); }
};

enum class DatasetFormat { foursquare, gowalla };

DatasetFormat parse_dataset_format(const std::string& name);
const char* to_string(DatasetFormat format);

// Tab-separated Foursquare dump: user_id, venue_id, category_id,
// category_name, lat, lon, tz_offset_minutes, "Tue Apr 03 18:00:09 +0000 2012".
// Malformed lines are skipped and recorded in `issues`. Throws EmptyCorpus
// when no line parses.
RawCorpus parse_foursquare(std::istream& in);
RawCorpus parse_foursquare(const std::filesystem::path& path);

// Tab-separated Gowalla dump: user, "2010-10-19T23:55:27Z", lat, lon,
// location_id. Offsets are zero (the dump carries no timezone).
RawCorpus parse_gowalla(std::istream& in);
RawCorpus parse_gowalla(const std::filesystem::path& path);

RawCorpus parse_dataset(const std::filesystem::path& path, DatasetFormat format);

// Seconds since the Unix epoch, or nullopt for malformed input or years
// outside [1970, 2100).
std::optional<std::int64_t> parse_foursquare_time(std::string_view text);
std::optional<std::int64_t> parse_iso8601_utc(std::string_view text);

// ---------------------------------------------------------------------------
// Filtered corpus
// ---------------------------------------------------------------------------

struct Visit {
  PoiIndex poi = 0;
  std::int64_t utc_seconds = 0;
  std::int32_t tz_offset_minutes = 0;

  bool operator==(const Visit&) const = default;
};

struct UserHistory {
  std::string id;
  std::vector<Visit> visits;  // ascending by time, ties in file order

  bool operator==(const UserHistory&) const = default;
};

struct Corpus {
  PoiTable pois;
  std::vector<UserHistory> users;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_pois() const { return pois.size(); }
  std::size_t num_checkins() const;
  // 1 - check-ins / (N * M)
  double sparsity() const;

  bool operator==(const Corpus&) const = default;
};

struct FilterOptions {
  std::size_t min_user_checkins = 10;
  std::size_t min_poi_users = 10;
  // Repeat both passes until nothing changes.
  bool fixpoint = false;
};

// Drops users with fewer than `min_user_checkins` check-ins, then POIs
// visited by fewer than `min_poi_users` distinct remaining users, and
// reindexes both densely in first-seen order. Users left without any
// check-in are dropped. Throws EmptyCorpus if nothing survives.
Corpus filter_min_activity(const RawCorpus& raw, const FilterOptions& options = {});

// ---------------------------------------------------------------------------
// Chronological split
// ---------------------------------------------------------------------------

enum class SplitTag : std::uint8_t { train = 0, validation = 1, test = 2 };

const char* to_string(SplitTag tag);
SplitTag parse_split_tag(const std::string& name);

// Per-user boundaries: train = [0, train_end), validation = [train_end,
// val_end), test = [val_end, T).
struct SplitBounds {
  std::size_t train_end = 0;
  std::size_t val_end = 0;

  SplitTag tag_of(std::size_t position) const {
    if (position < train_end) return SplitTag::train;
    if (position < val_end) return SplitTag::validation;
    return SplitTag::test;
  }
  bool operator==(const SplitBounds&) const = default;
};

// train_end = floor(0.8 T), val_end = floor(0.9 T).
SplitBounds chronological_split(std::size_t length);

struct CorpusSplit {
  std::vector<SplitBounds> users;

  bool operator==(const CorpusSplit&) const = default;
};

CorpusSplit split_corpus(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Temporal pattern
// ---------------------------------------------------------------------------

// Bits: weekday, weekend, morning [8:00, 11:30), noon [11:30, 14:00),
// afternoon [14:00, 17:30), night [17:30, 22:00), rest.
struct TemporalPattern {
  static constexpr std::size_t kSize = 7;
  std::array<std::uint8_t, kSize> bits{};

  std::array<double, kSize> as_vector() const;
  bool operator==(const TemporalPattern&) const = default;
};

// Pattern of the local time utc_seconds + 60 * tz_offset_minutes.
TemporalPattern encode_temporal_pattern(std::int64_t utc_seconds, std::int32_t tz_offset_minutes);

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

struct Sample {
  UserIndex user = 0;
  PoiIndex target = 0;
  std::int64_t target_utc = 0;
  TemporalPattern pattern;
  std::vector<PoiIndex> forward;   // forward[k - 1] is the check-in at t - k
  std::vector<PoiIndex> backward;  // backward[k - 1] is the check-in at t + k
  double interval_before = 0.0;    // hours, t_t - t_{t-1}
  double interval_after = 0.0;     // hours, t_{t+1} - t_t
  SplitTag split = SplitTag::train;

  bool operator==(const Sample&) const = default;
};

// One sample per position with at least `window` check-ins on each side.
// The split tag follows the target position; the context may cross segment
// boundaries.
std::vector<Sample> build_samples(const Corpus& corpus, const CorpusSplit& split,
                                  std::size_t window);

std::vector<Sample> select_split(const std::vector<Sample>& samples, SplitTag tag);

// ---------------------------------------------------------------------------
// Prepared corpus file ("STDDP1")
// ---------------------------------------------------------------------------

struct PreparedCorpus {
  Corpus corpus;
  CorpusSplit split;
  std::size_t window = 1;
  std::vector<Sample> samples;

  bool operator==(const PreparedCorpus&) const = default;
};

PreparedCorpus prepare_corpus(Corpus corpus, std::size_t window);

inline constexpr char kCorpusMagic[] = "STDDP1";

void write_prepared(std::ostream& out, const PreparedCorpus& prepared);
void write_prepared(const std::filesystem::path& path, const PreparedCorpus& prepared);
PreparedCorpus read_prepared(std::istream& in);
PreparedCorpus read_prepared(const std::filesystem::path& path);
bool is_prepared_file(const std::filesystem::path& path);

}  // namespace stddp
