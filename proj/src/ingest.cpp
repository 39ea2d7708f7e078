#include "stddp/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "binary_io.hpp"
#include "stddp/error.hpp"

namespace stddp {

namespace {

constexpr std::int64_t kMinYear = 1970;
constexpr std::int64_t kMaxYear = 2100;

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) return std::nullopt;
  return value;
}

std::optional<std::int64_t> civil_to_epoch(int year, unsigned month, unsigned day, int hour,
                                           int minute, int second) {
  using namespace std::chrono;
  if (year < kMinYear || year >= kMaxYear) return std::nullopt;
  if (hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 || second > 60) {
    return std::nullopt;
  }
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + hour * 3600 + minute * 60 + second;
}

std::optional<unsigned> month_from_abbrev(std::string_view m) {
  static constexpr std::array<std::string_view, 12> kMonths = {
      "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
  for (unsigned i = 0; i < kMonths.size(); ++i) {
    if (kMonths[i] == m) return i + 1;
  }
  return std::nullopt;
}

bool parse_clock(std::string_view text, int& h, int& m, int& s) {
  if (text.size() != 8 || text[2] != ':' || text[5] != ':') return false;
  auto hh = parse_number<int>(text.substr(0, 2));
  auto mm = parse_number<int>(text.substr(3, 2));
  auto ss = parse_number<int>(text.substr(6, 2));
  if (!hh || !mm || !ss) return false;
  h = *hh;
  m = *mm;
  s = *ss;
  return true;
}

std::optional<GeoPoint> parse_point(std::string_view lat_text, std::string_view lon_text) {
  auto lat = parse_number<double>(lat_text);
  auto lon = parse_number<double>(lon_text);
  if (!lat || !lon || !GeoPoint::valid(*lat, *lon)) return std::nullopt;
  return GeoPoint{*lat, *lon};
}

// Shared line loop: `parse_line` returns an error message or empty on success.
template <typename LineParser>
RawCorpus parse_lines(std::istream& in, LineParser parse_line) {
  RawCorpus raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    std::string reason = parse_line(split_tabs(view), raw);
    if (!reason.empty()) raw.issues.push_back({line_no, std::move(reason)});
  }
  if (raw.checkins.empty()) {
    throw EmptyCorpus("no valid check-in lines (" + std::to_string(raw.issues.size()) +
                      " malformed)");
  }
  return raw;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return in;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

DatasetFormat parse_dataset_format(const std::string& name) {
  if (name == "foursquare") return DatasetFormat::foursquare;
  if (name == "gowalla") return DatasetFormat::gowalla;
  throw InvalidInput("unknown dataset format '" + name + "' (expected foursquare|gowalla)");
}

const char* to_string(DatasetFormat format) {
  return format == DatasetFormat::foursquare ? "foursquare" : "gowalla";
}

std::optional<std::int64_t> parse_foursquare_time(std::string_view text) {
  // "Tue Apr 03 18:00:09 +0000 2012"
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  text = trim(text);
  while (start < text.size()) {
    const std::size_t space = text.find(' ', start);
    const std::size_t end = space == std::string_view::npos ? text.size() : space;
    if (end > start) parts.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (parts.size() != 6) return std::nullopt;
  auto month = month_from_abbrev(parts[1]);
  auto day = parse_number<unsigned>(parts[2]);
  auto year = parse_number<int>(parts[5]);
  int h = 0, m = 0, s = 0;
  if (!month || !day || !year || !parse_clock(parts[3], h, m, s)) return std::nullopt;
  const std::string_view zone = parts[4];
  if (zone.size() != 5 || (zone[0] != '+' && zone[0] != '-')) return std::nullopt;
  auto zh = parse_number<int>(zone.substr(1, 2));
  auto zm = parse_number<int>(zone.substr(3, 2));
  if (!zh || !zm) return std::nullopt;
  const int zone_seconds = (zone[0] == '-' ? -1 : 1) * (*zh * 3600 + *zm * 60);
  auto local = civil_to_epoch(*year, *month, *day, h, m, s);
  if (!local) return std::nullopt;
  const std::int64_t utc = *local - zone_seconds;
  if (utc < 0) return std::nullopt;
  return utc;
}

std::optional<std::int64_t> parse_iso8601_utc(std::string_view text) {
  // "2010-10-19T23:55:27Z"
  text = trim(text);
  if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[19] != 'Z') {
    return std::nullopt;
  }
  auto year = parse_number<int>(text.substr(0, 4));
  auto month = parse_number<unsigned>(text.substr(5, 2));
  auto day = parse_number<unsigned>(text.substr(8, 2));
  int h = 0, m = 0, s = 0;
  if (!year || !month || !day || !parse_clock(text.substr(11, 8), h, m, s)) return std::nullopt;
  return civil_to_epoch(*year, *month, *day, h, m, s);
}

RawCorpus parse_foursquare(std::istream& in) {
  return parse_lines(in, [](const std::vector<std::string_view>& f, RawCorpus& raw) {
    if (f.size() != 8) return "expected 8 tab-separated fields, got " + std::to_string(f.size());
    if (trim(f[0]).empty() || trim(f[1]).empty()) return std::string("empty user or venue id");
    auto point = parse_point(f[4], f[5]);
    if (!point) return std::string("invalid coordinates");
    auto tz = parse_number<std::int32_t>(f[6]);
    if (!tz || *tz < -720 || *tz > 840) return std::string("invalid timezone offset");
    auto utc = parse_foursquare_time(f[7]);
    if (!utc) return std::string("invalid UTC time");
    raw.pois.intern(trim(f[1]), *point);
    raw.checkins.push_back({std::string(trim(f[0])), std::string(trim(f[1])), *utc, *tz});
    return std::string();
  });
}

RawCorpus parse_gowalla(std::istream& in) {
  return parse_lines(in, [](const std::vector<std::string_view>& f, RawCorpus& raw) {
    if (f.size() != 5) return "expected 5 tab-separated fields, got " + std::to_string(f.size());
    if (trim(f[0]).empty() || trim(f[4]).empty()) return std::string("empty user or location id");
    auto utc = parse_iso8601_utc(f[1]);
    if (!utc) return std::string("invalid UTC time");
    auto point = parse_point(f[2], f[3]);
    if (!point) return std::string("invalid coordinates");
    raw.pois.intern(trim(f[4]), *point);
    raw.checkins.push_back({std::string(trim(f[0])), std::string(trim(f[4])), *utc, 0});
    return std::string();
  });
}

RawCorpus parse_foursquare(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_foursquare(in);
}

RawCorpus parse_gowalla(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_gowalla(in);
}

RawCorpus parse_dataset(const std::filesystem::path& path, DatasetFormat format) {
  return format == DatasetFormat::foursquare ? parse_foursquare(path) : parse_gowalla(path);
}

std::size_t Corpus::num_checkins() const {
  std::size_t n = 0;
  for (const auto& u : users) n += u.visits.size();
  return n;
}

double Corpus::sparsity() const {
  const double cells = static_cast<double>(num_users()) * static_cast<double>(num_pois());
  if (cells == 0.0) return 1.0;
  return 1.0 - static_cast<double>(num_checkins()) / cells;
}

Corpus filter_min_activity(const RawCorpus& raw, const FilterOptions& options) {
  if (raw.checkins.empty()) throw EmptyCorpus("nothing to filter");

  // Raw POI indices per check-in, and a dense raw user index in first-seen order.
  std::vector<PoiIndex> raw_poi(raw.checkins.size());
  std::vector<std::uint32_t> raw_user(raw.checkins.size());
  std::unordered_map<std::string_view, std::uint32_t> user_ids;
  std::vector<std::string_view> user_names;
  for (std::size_t i = 0; i < raw.checkins.size(); ++i) {
    const auto& c = raw.checkins[i];
    auto poi = raw.pois.find(c.poi_id);
    if (!poi) throw InvalidInput("check-in references unknown POI " + c.poi_id);
    raw_poi[i] = *poi;
    auto [it, inserted] =
        user_ids.emplace(c.user_id, static_cast<std::uint32_t>(user_names.size()));
    if (inserted) user_names.push_back(c.user_id);
    raw_user[i] = it->second;
  }

  std::vector<char> alive(raw.checkins.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::size_t> per_user(user_names.size(), 0);
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (alive[i]) ++per_user[raw_user[i]];
    }
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (alive[i] && per_user[raw_user[i]] < options.min_user_checkins) {
        alive[i] = 0;
        changed = true;
      }
    }
    std::vector<std::unordered_set<std::uint32_t>> visitors(raw.pois.size());
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (alive[i]) visitors[raw_poi[i]].insert(raw_user[i]);
    }
    for (std::size_t i = 0; i < alive.size(); ++i) {
      if (alive[i] && visitors[raw_poi[i]].size() < options.min_poi_users) {
        alive[i] = 0;
        changed = true;
      }
    }
    if (!options.fixpoint) break;
  }

  // Dense reindexing: POIs in raw-table order, users in first-seen order.
  std::vector<char> poi_used(raw.pois.size(), 0);
  for (std::size_t i = 0; i < alive.size(); ++i) {
    if (alive[i]) poi_used[raw_poi[i]] = 1;
  }
  Corpus corpus;
  std::vector<PoiIndex> poi_map(raw.pois.size(), 0);
  for (PoiIndex p = 0; p < raw.pois.size(); ++p) {
    if (poi_used[p]) poi_map[p] = corpus.pois.add(raw.pois.id(p), raw.pois.point(p));
  }
  std::vector<std::int64_t> user_map(user_names.size(), -1);
  for (std::size_t i = 0; i < alive.size(); ++i) {
    if (!alive[i]) continue;
    auto& slot = user_map[raw_user[i]];
    if (slot < 0) {
      slot = static_cast<std::int64_t>(corpus.users.size());
      corpus.users.push_back({std::string(user_names[raw_user[i]]), {}});
    }
    const auto& c = raw.checkins[i];
    corpus.users[static_cast<std::size_t>(slot)].visits.push_back(
        {poi_map[raw_poi[i]], c.utc_seconds, c.tz_offset_minutes});
  }
  for (auto& u : corpus.users) {
    std::stable_sort(u.visits.begin(), u.visits.end(),
                     [](const Visit& a, const Visit& b) { return a.utc_seconds < b.utc_seconds; });
  }
  if (corpus.users.empty()) throw EmptyCorpus("no user or POI survives activity filtering");
  return corpus;
}

const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train:
      return "train";
    case SplitTag::validation:
      return "val";
    case SplitTag::test:
      return "test";
  }
  return "?";
}

SplitTag parse_split_tag(const std::string& name) {
  if (name == "train") return SplitTag::train;
  if (name == "val" || name == "validation") return SplitTag::validation;
  if (name == "test") return SplitTag::test;
  throw InvalidInput("unknown split '" + name + "' (expected train|val|test)");
}

SplitBounds chronological_split(std::size_t length) {
  return SplitBounds{(8 * length) / 10, (9 * length) / 10};
}

CorpusSplit split_corpus(const Corpus& corpus) {
  CorpusSplit split;
  split.users.reserve(corpus.users.size());
  for (const auto& u : corpus.users) split.users.push_back(chronological_split(u.visits.size()));
  return split;
}

std::array<double, TemporalPattern::kSize> TemporalPattern::as_vector() const {
  std::array<double, kSize> v{};
  for (std::size_t i = 0; i < kSize; ++i) v[i] = bits[i];
  return v;
}

TemporalPattern encode_temporal_pattern(std::int64_t utc_seconds,
                                        std::int32_t tz_offset_minutes) {
  const std::int64_t local = utc_seconds + 60 * static_cast<std::int64_t>(tz_offset_minutes);
  const std::int64_t days = floor_div(local, 86400);
  const std::int64_t minute_of_day = (local - days * 86400) / 60;
  // 1970-01-01 was a Thursday; Monday = 0.
  const std::int64_t weekday = ((days + 3) % 7 + 7) % 7;

  TemporalPattern pattern;
  pattern.bits[weekday >= 5 ? 1 : 0] = 1;
  std::size_t session = 6;
  if (minute_of_day >= 8 * 60 && minute_of_day < 11 * 60 + 30) {
    session = 2;
  } else if (minute_of_day >= 11 * 60 + 30 && minute_of_day < 14 * 60) {
    session = 3;
  } else if (minute_of_day >= 14 * 60 && minute_of_day < 17 * 60 + 30) {
    session = 4;
  } else if (minute_of_day >= 17 * 60 + 30 && minute_of_day < 22 * 60) {
    session = 5;
  }
  pattern.bits[session] = 1;
  return pattern;
}

std::vector<Sample> build_samples(const Corpus& corpus, const CorpusSplit& split,
                                  std::size_t window) {
  if (window == 0) throw InvalidInput("window width must be at least 1");
  if (split.users.size() != corpus.users.size()) {
    throw ShapeMismatch("split covers " + std::to_string(split.users.size()) + " users, corpus " +
                        std::to_string(corpus.users.size()));
  }
  std::vector<Sample> samples;
  for (std::size_t u = 0; u < corpus.users.size(); ++u) {
    const auto& visits = corpus.users[u].visits;
    const std::size_t length = visits.size();
    if (length < 2 * window + 1) continue;
    for (std::size_t i = window; i + window < length; ++i) {
      Sample s;
      s.user = static_cast<UserIndex>(u);
      s.target = visits[i].poi;
      s.target_utc = visits[i].utc_seconds;
      s.pattern = encode_temporal_pattern(visits[i].utc_seconds, visits[i].tz_offset_minutes);
      s.forward.resize(window);
      s.backward.resize(window);
      for (std::size_t k = 1; k <= window; ++k) {
        s.forward[k - 1] = visits[i - k].poi;
        s.backward[k - 1] = visits[i + k].poi;
      }
      s.interval_before =
          static_cast<double>(visits[i].utc_seconds - visits[i - 1].utc_seconds) / 3600.0;
      s.interval_after =
          static_cast<double>(visits[i + 1].utc_seconds - visits[i].utc_seconds) / 3600.0;
      s.split = split.users[u].tag_of(i);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

std::vector<Sample> select_split(const std::vector<Sample>& samples, SplitTag tag) {
  std::vector<Sample> out;
  std::copy_if(samples.begin(), samples.end(), std::back_inserter(out),
               [tag](const Sample& s) { return s.split == tag; });
  return out;
}

PreparedCorpus prepare_corpus(Corpus corpus, std::size_t window) {
  PreparedCorpus prepared;
  prepared.split = split_corpus(corpus);
  prepared.samples = build_samples(corpus, prepared.split, window);
  prepared.window = window;
  prepared.corpus = std::move(corpus);
  return prepared;
}

void write_prepared(std::ostream& out, const PreparedCorpus& prepared) {
  using namespace binary;
  const auto& corpus = prepared.corpus;
  put_magic(out, kCorpusMagic);
  put(out, static_cast<std::uint64_t>(corpus.num_users()));
  put(out, static_cast<std::uint64_t>(corpus.num_pois()));
  put(out, static_cast<std::uint64_t>(prepared.window));
  for (PoiIndex p = 0; p < corpus.num_pois(); ++p) {
    put_string(out, corpus.pois.id(p));
    put(out, corpus.pois.point(p).lat);
    put(out, corpus.pois.point(p).lon);
  }
  for (std::size_t u = 0; u < corpus.num_users(); ++u) {
    const auto& user = corpus.users[u];
    put_string(out, user.id);
    put(out, static_cast<std::uint64_t>(user.visits.size()));
    put(out, static_cast<std::uint64_t>(prepared.split.users.at(u).train_end));
    put(out, static_cast<std::uint64_t>(prepared.split.users.at(u).val_end));
    for (const auto& v : user.visits) {
      put(out, v.poi);
      put(out, v.utc_seconds);
      put(out, v.tz_offset_minutes);
    }
  }
  put(out, static_cast<std::uint64_t>(prepared.samples.size()));
  for (const auto& s : prepared.samples) {
    put(out, s.user);
    put(out, s.target);
    put(out, s.target_utc);
    std::uint8_t packed = 0;
    for (std::size_t b = 0; b < TemporalPattern::kSize; ++b) {
      packed |= static_cast<std::uint8_t>(s.pattern.bits[b] << b);
    }
    put(out, packed);
    put(out, static_cast<std::uint8_t>(s.split));
    put(out, s.interval_before);
    put(out, s.interval_after);
    for (PoiIndex p : s.forward) put(out, p);
    for (PoiIndex p : s.backward) put(out, p);
  }
  if (!out) throw Error("failed writing prepared corpus");
}

void write_prepared(const std::filesystem::path& path, const PreparedCorpus& prepared) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  write_prepared(out, prepared);
}

PreparedCorpus read_prepared(std::istream& in) {
  using namespace binary;
  expect_magic(in, kCorpusMagic, "prepared corpus");
  const auto n = get<std::uint64_t>(in);
  const auto m = get<std::uint64_t>(in);
  const auto w = get<std::uint64_t>(in);
  if (m == 0 || w == 0 || m > UINT32_MAX || n > UINT32_MAX) {
    throw InvalidInput("prepared corpus header out of range");
  }
  PreparedCorpus prepared;
  prepared.window = w;
  for (std::uint64_t p = 0; p < m; ++p) {
    auto id = get_string(in);
    const double lat = get_double(in);
    const double lon = get_double(in);
    prepared.corpus.pois.add(id, GeoPoint::checked(lat, lon));
  }
  prepared.corpus.users.resize(n);
  prepared.split.users.resize(n);
  for (std::uint64_t u = 0; u < n; ++u) {
    auto& user = prepared.corpus.users[u];
    user.id = get_string(in);
    const auto length = get<std::uint64_t>(in);
    auto& bounds = prepared.split.users[u];
    bounds.train_end = get<std::uint64_t>(in);
    bounds.val_end = get<std::uint64_t>(in);
    if (bounds.train_end > bounds.val_end || bounds.val_end > length) {
      throw InvalidInput("prepared corpus split bounds out of range");
    }
    user.visits.resize(length);
    for (auto& v : user.visits) {
      v.poi = get<std::uint32_t>(in);
      v.utc_seconds = get<std::int64_t>(in);
      v.tz_offset_minutes = get<std::int32_t>(in);
      if (v.poi >= m) throw InvalidInput("prepared corpus visit POI out of range");
    }
  }
  const auto count = get<std::uint64_t>(in);
  prepared.samples.resize(count);
  for (auto& s : prepared.samples) {
    s.user = get<std::uint32_t>(in);
    s.target = get<std::uint32_t>(in);
    s.target_utc = get<std::int64_t>(in);
    const auto packed = get<std::uint8_t>(in);
    for (std::size_t b = 0; b < TemporalPattern::kSize; ++b) {
      s.pattern.bits[b] = static_cast<std::uint8_t>((packed >> b) & 1U);
    }
    const auto tag = get<std::uint8_t>(in);
    if (tag > 2) throw InvalidInput("prepared corpus sample has invalid split tag");
    s.split = static_cast<SplitTag>(tag);
    s.interval_before = get_double(in);
    s.interval_after = get_double(in);
    s.forward.resize(w);
    s.backward.resize(w);
    for (auto& p : s.forward) p = get<std::uint32_t>(in);
    for (auto& p : s.backward) p = get<std::uint32_t>(in);
    const bool in_range =
        s.user < n && s.target < m &&
        std::all_of(s.forward.begin(), s.forward.end(), [m](PoiIndex p) { return p < m; }) &&
        std::all_of(s.backward.begin(), s.backward.end(), [m](PoiIndex p) { return p < m; });
    if (!in_range) throw InvalidInput("prepared corpus sample index out of range");
  }
  return prepared;
}

PreparedCorpus read_prepared(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return read_prepared(in);
}

bool is_prepared_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string head(sizeof(kCorpusMagic) - 1, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  return in.gcount() == static_cast<std::streamsize>(head.size()) && head == kCorpusMagic;
}

}  // namespace stddp
