#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "stddp/error.hpp"
#include "stddp/ingest.hpp"
#include "stddp/synthetic.hpp"

using namespace stddp;

namespace {

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

std::int64_t at(std::int64_t y, unsigned mo, unsigned d, int h, int mi, int s = 0) {
  return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string fsq_line(const std::string& user, const std::string& venue, double lat, double lon,
                     int tz, const std::string& time) {
  std::ostringstream s;
  s << user << '\t' << venue << "\tcat\tCoffee Shop\t" << std::setprecision(17) << lat << '\t' << lon << '\t' << tz << '\t'
    << time << '\n';
  return s.str();
}

TemporalPattern pattern(std::initializer_list<int> bits) {
  TemporalPattern p;
  std::size_t i = 0;
  for (int b : bits) p.bits[i++] = static_cast<std::uint8_t>(b);
  return p;
}

Corpus corpus_of_lengths(const std::vector<std::size_t>& lengths) {
  Corpus c;
  for (int p = 0; p < 3; ++p) c.pois.add("p" + std::to_string(p), GeoPoint{1.0 * p, 2.0 * p});
  std::int64_t t = at(2012, 4, 2, 9, 0);
  for (std::size_t u = 0; u < lengths.size(); ++u) {
    UserHistory h;
    h.id = "u" + std::to_string(u);
    for (std::size_t i = 0; i < lengths[u]; ++i) {
      h.visits.push_back({static_cast<PoiIndex>(i % 3), t, 0});
      t += 1800 + static_cast<std::int64_t>(i) * 60;
    }
    c.users.push_back(std::move(h));
  }
  return c;
}

}  // namespace

TEST(Time, FoursquareFormat) {
  EXPECT_EQ(parse_foursquare_time("Tue Apr 03 18:00:09 +0000 2012"), at(2012, 4, 3, 18, 0, 9));
  EXPECT_EQ(parse_foursquare_time("Sat Feb 29 00:00:00 +0000 2020"), at(2020, 2, 29, 0, 0));
  EXPECT_FALSE(parse_foursquare_time("Tue Foo 03 18:00:09 +0000 2012"));
  EXPECT_FALSE(parse_foursquare_time("Tue Apr 03 25:00:09 +0000 2012"));
  EXPECT_FALSE(parse_foursquare_time("garbage"));
}

TEST(Time, Iso8601) {
  EXPECT_EQ(parse_iso8601_utc("2010-10-19T23:55:27Z"), at(2010, 10, 19, 23, 55, 27));
  EXPECT_FALSE(parse_iso8601_utc("2010-13-19T23:55:27Z"));
  EXPECT_FALSE(parse_iso8601_utc("2010-10-19 23:55:27"));
}

TEST(ParseFoursquare, SingleLine) {
  std::istringstream in(fsq_line("470", "49bbd6c0f964a520f4531fe3", 40.719810, -74.002581, -240,
                                 "Tue Apr 03 18:00:09 +0000 2012"));
  const RawCorpus raw = parse_foursquare(in);
  ASSERT_EQ(raw.checkins.size(), 1u);
  EXPECT_EQ(raw.pois.size(), 1u);
  EXPECT_EQ(raw.malformed(), 0u);
  EXPECT_EQ(raw.checkins[0].user_id, "470");
  EXPECT_EQ(raw.checkins[0].tz_offset_minutes, -240);
  EXPECT_EQ(raw.checkins[0].utc_seconds, at(2012, 4, 3, 18, 0, 9));
  EXPECT_EQ(raw.pois.point(0), (GeoPoint{40.719810, -74.002581}));
}

TEST(ParseFoursquare, BadLatitudeIsSkipped) {
  std::string text = fsq_line("1", "v1", 40.0, -74.0, 0, "Tue Apr 03 18:00:09 +0000 2012");
  text += "2\tv2\tcat\tBar\tnorth\t-74.0\t0\tTue Apr 03 18:00:09 +0000 2012\n";
  std::istringstream in(text);
  const RawCorpus raw = parse_foursquare(in);
  EXPECT_EQ(raw.checkins.size(), 1u);
  ASSERT_EQ(raw.malformed(), 1u);
  EXPECT_EQ(raw.issues[0].line, 2u);
}

TEST(ParseFoursquare, DuplicateVenueKeepsFirstCoordinates) {
  std::string text;
  text += fsq_line("1", "v", 40.0001, -74.0001, 0, "Tue Apr 03 18:00:09 +0000 2012");
  text += fsq_line("2", "v", 40.0002, -74.0002, 0, "Tue Apr 03 19:00:09 +0000 2012");
  text += fsq_line("3", "v", 40.0003, -74.0003, 0, "Tue Apr 03 20:00:09 +0000 2012");
  std::istringstream in(text);
  const RawCorpus raw = parse_foursquare(in);
  EXPECT_EQ(raw.checkins.size(), 3u);
  ASSERT_EQ(raw.pois.size(), 1u);
  EXPECT_EQ(raw.pois.point(0), (GeoPoint{40.0001, -74.0001}));
}

TEST(ParseFoursquare, EmptyInputThrows) {
  std::istringstream in("");
  EXPECT_THROW(parse_foursquare(in), EmptyCorpus);
}

TEST(ParseGowalla, ThreeShapes) {
  {
    std::istringstream in("0\t2010-10-19T23:55:27Z\t30.2359091167\t-97.7951395833\t22847\n");
    const RawCorpus raw = parse_gowalla(in);
    ASSERT_EQ(raw.checkins.size(), 1u);
    EXPECT_EQ(raw.pois.size(), 1u);
    EXPECT_EQ(raw.checkins[0].tz_offset_minutes, 0);
    EXPECT_EQ(raw.checkins[0].poi_id, "22847");
  }
  {
    std::istringstream in(
        "0\t2010-10-19T23:55:27Z\t30.2\t-97.7\t1\n"
        "0\t2010-10-19T23:55:27Z\tabc\t-97.7\t2\n");
    const RawCorpus raw = parse_gowalla(in);
    EXPECT_EQ(raw.checkins.size(), 1u);
    EXPECT_EQ(raw.malformed(), 1u);
  }
  {
    std::istringstream in(
        "0\t2010-10-19T23:55:27Z\t30.1\t-97.1\t9\n"
        "1\t2010-10-20T23:55:27Z\t30.2\t-97.2\t9\n"
        "2\t2010-10-21T23:55:27Z\t30.3\t-97.3\t9\n");
    const RawCorpus raw = parse_gowalla(in);
    ASSERT_EQ(raw.pois.size(), 1u);
    EXPECT_EQ(raw.pois.point(0), (GeoPoint{30.1, -97.1}));
  }
}

TEST(Filter, SparseUserRemoved) {
  RawCorpus raw;
  raw.pois.add("p", GeoPoint{1, 1});
  for (int u = 0; u < 10; ++u) {
    for (int i = 0; i < (u == 0 ? 9 : 10); ++i) {
      raw.checkins.push_back({"u" + std::to_string(u), "p", 1000 + i, 0});
    }
  }
  // Only 9 users remain, so the POI drops below 10 visitors as well.
  EXPECT_THROW(filter_min_activity(raw), EmptyCorpus);
  const Corpus c = filter_min_activity(raw, {10, 9, false});
  EXPECT_EQ(c.num_users(), 9u);
  for (const auto& u : c.users) EXPECT_NE(u.id, "u0");
}

TEST(Filter, PoiWithFewDistinctVisitorsRemoved) {
  RawCorpus raw;
  raw.pois.add("popular", GeoPoint{1, 1});
  raw.pois.add("niche", GeoPoint{2, 2});
  for (int u = 0; u < 12; ++u) {
    for (int i = 0; i < 10; ++i) raw.checkins.push_back({"u" + std::to_string(u), "popular", i, 0});
  }
  // 15 visits by 3 users.
  for (int i = 0; i < 15; ++i) raw.checkins.push_back({"u" + std::to_string(i % 3), "niche", 100 + i, 0});
  const Corpus c = filter_min_activity(raw);
  ASSERT_EQ(c.num_pois(), 1u);
  EXPECT_EQ(c.pois.id(0), "popular");
  EXPECT_EQ(c.num_checkins(), 120u);
}

TEST(Filter, MatchesBruteForceOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    RawCorpus raw;
    const std::size_t pois = 5 + rng.below(20);
    for (std::size_t p = 0; p < pois; ++p) {
      raw.pois.add("v" + std::to_string(p), GeoPoint{rng.uniform(-10, 10), rng.uniform(-10, 10)});
    }
    for (int line = 0; line < 600; ++line) {
      const std::size_t u = rng.below(20);
      const std::size_t p = rng.uniform() < 0.6 ? rng.below(4) : rng.below(pois);
      raw.checkins.push_back({"u" + std::to_string(u), "v" + std::to_string(p),
                              static_cast<std::int64_t>(rng.below(5000)), 0});
    }
    const std::size_t min_user = 20 + rng.below(20), min_poi = 2 + rng.below(8);

    // Two recounts over the raw lines.
    std::map<std::string, std::size_t> per_user;
    for (const auto& c : raw.checkins) ++per_user[c.user_id];
    std::map<std::string, std::set<std::string>> visitors;
    for (const auto& c : raw.checkins) {
      if (per_user[c.user_id] >= min_user) visitors[c.poi_id].insert(c.user_id);
    }
    auto keep = [&](const CheckIn& c) {
      return per_user[c.user_id] >= min_user && visitors[c.poi_id].size() >= min_poi;
    };
    std::vector<std::string> users;
    std::map<std::string, std::vector<std::pair<std::int64_t, std::string>>> expected;
    for (const auto& c : raw.checkins) {
      if (!keep(c)) continue;
      if (!expected.count(c.user_id)) users.push_back(c.user_id);
      expected[c.user_id].emplace_back(c.utc_seconds, c.poi_id);
    }

    if (users.empty()) {
      EXPECT_THROW(filter_min_activity(raw, {min_user, min_poi, false}), EmptyCorpus);
      continue;
    }
    const Corpus got = filter_min_activity(raw, {min_user, min_poi, false});
    ASSERT_EQ(got.num_users(), users.size());
    for (std::size_t u = 0; u < users.size(); ++u) {
      EXPECT_EQ(got.users[u].id, users[u]);
      auto want = expected[users[u]];
      std::stable_sort(want.begin(), want.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      ASSERT_EQ(got.users[u].visits.size(), want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        EXPECT_EQ(got.users[u].visits[i].utc_seconds, want[i].first);
        EXPECT_EQ(got.pois.id(got.users[u].visits[i].poi), want[i].second);
      }
    }
    // POIs keep their raw relative order.
    std::vector<std::string> kept_pois;
    for (PoiIndex p = 0; p < raw.pois.size(); ++p) {
      if (visitors[raw.pois.id(p)].size() >= min_poi) kept_pois.push_back(raw.pois.id(p));
    }
    ASSERT_EQ(got.num_pois(), kept_pois.size());
    for (PoiIndex p = 0; p < got.num_pois(); ++p) EXPECT_EQ(got.pois.id(p), kept_pois[p]);
  }
}

TEST(Filter, FixpointLeavesEveryUserAboveThreshold) {
  const Corpus planted = synthetic::planted_corpus({});
  RawCorpus raw;
  raw.pois = planted.pois;
  Rng rng(3);
  for (const auto& u : planted.users) {
    const std::size_t keep = 5 + rng.below(u.visits.size());
    for (std::size_t i = 0; i < std::min(keep, u.visits.size()); ++i) {
      raw.checkins.push_back({u.id, planted.pois.id(u.visits[i].poi), u.visits[i].utc_seconds, 0});
    }
  }
  const Corpus c = filter_min_activity(raw, {30, 5, true});
  for (const auto& u : c.users) EXPECT_GE(u.visits.size(), 30u);
}

TEST(Split, FloorRule) {
  EXPECT_EQ(chronological_split(10), (SplitBounds{8, 9}));
  EXPECT_EQ(chronological_split(7), (SplitBounds{5, 6}));
  EXPECT_EQ(chronological_split(3), (SplitBounds{2, 2}));
  for (std::size_t t = 1; t < 500; ++t) {
    const auto b = chronological_split(t);
    EXPECT_EQ(b.train_end, static_cast<std::size_t>(std::floor(0.8L * t)));
    EXPECT_EQ(b.val_end, static_cast<std::size_t>(std::floor(0.9L * t)));
  }
}

TEST(Pattern, Examples) {
  EXPECT_EQ(encode_temporal_pattern(at(2018, 8, 25, 11, 30), 0), pattern({0, 1, 0, 1, 0, 0, 0}));
  EXPECT_EQ(encode_temporal_pattern(at(2018, 8, 27, 8, 0), 0), pattern({1, 0, 1, 0, 0, 0, 0}));
  EXPECT_EQ(encode_temporal_pattern(at(2018, 8, 26, 23, 0), 0), pattern({0, 1, 0, 0, 0, 0, 1}));
  // Local time: 03:30 UTC Monday is 23:30 Sunday at UTC-4.
  EXPECT_EQ(encode_temporal_pattern(at(2018, 8, 27, 3, 30), -240), pattern({0, 1, 0, 0, 0, 0, 1}));
}

TEST(Pattern, SessionBoundaries) {
  const std::vector<std::pair<int, int>> bounds = {{8 * 60, 2}, {11 * 60 + 30, 3}, {14 * 60, 4},
                                                   {17 * 60 + 30, 5}, {22 * 60, 6}, {0, 6}};
  for (const auto& [minute, bit] : bounds) {
    const auto p = encode_temporal_pattern(at(2018, 8, 28, 0, 0) + minute * 60, 0);
    EXPECT_EQ(p.bits[static_cast<std::size_t>(bit)], 1) << minute;
    const auto before = encode_temporal_pattern(at(2018, 8, 28, 0, 0) + minute * 60 - 1, 0);
    EXPECT_EQ(before.bits[static_cast<std::size_t>(bit)], minute == 0 ? 1 : 0) << minute;
  }
}

TEST(Pattern, ExactlyTwoBits) {
  Rng rng(5);
  for (int i = 0; i < 5000; ++i) {
    const auto utc = static_cast<std::int64_t>(rng.below(4'000'000'000ULL));
    const auto tz = static_cast<std::int32_t>(rng.below(1561)) - 720;
    const auto p = encode_temporal_pattern(utc, tz);
    int ones = 0;
    for (auto b : p.bits) ones += b;
    EXPECT_EQ(ones, 2);
    EXPECT_EQ(p.bits[0] + p.bits[1], 1);
  }
}

TEST(Samples, CountsAtBoundaries) {
  const Corpus c = corpus_of_lengths({5});
  const CorpusSplit split = split_corpus(c);
  const auto w1 = build_samples(c, split, 1);
  ASSERT_EQ(w1.size(), 3u);
  EXPECT_EQ(w1[0].target_utc, c.users[0].visits[1].utc_seconds);
  EXPECT_EQ(w1[2].target_utc, c.users[0].visits[3].utc_seconds);
  const auto w2 = build_samples(c, split, 2);
  ASSERT_EQ(w2.size(), 1u);
  EXPECT_EQ(w2[0].target_utc, c.users[0].visits[2].utc_seconds);
  EXPECT_EQ(w2[0].forward, (std::vector<PoiIndex>{1, 0}));
  EXPECT_EQ(w2[0].backward, (std::vector<PoiIndex>{0, 1}));
}

TEST(Samples, PerUserCountAndIntervals) {
  const std::vector<std::size_t> lengths = {1, 2, 3, 4, 7, 10, 23};
  const Corpus c = corpus_of_lengths(lengths);
  const CorpusSplit split = split_corpus(c);
  for (std::size_t w = 1; w <= 3; ++w) {
    const auto samples = build_samples(c, split, w);
    std::vector<std::size_t> per_user(lengths.size(), 0);
    for (const auto& s : samples) {
      ++per_user[s.user];
      EXPECT_GE(s.interval_before, 0.0);
      EXPECT_GE(s.interval_after, 0.0);
      EXPECT_TRUE(std::isfinite(s.interval_before) && std::isfinite(s.interval_after));
      EXPECT_EQ(s.forward.size(), w);
      EXPECT_EQ(s.backward.size(), w);
    }
    for (std::size_t u = 0; u < lengths.size(); ++u) {
      EXPECT_EQ(per_user[u], lengths[u] > 2 * w ? lengths[u] - 2 * w : 0);
    }
  }
}

TEST(Samples, FirstValidationTargetUsesLastTrainContext) {
  const Corpus c = corpus_of_lengths({10});
  const CorpusSplit split = split_corpus(c);
  const auto samples = build_samples(c, split, 1);
  // Positions 1..8; position 8 is the first validation position.
  const auto& v = c.users[0].visits;
  const auto it = std::find_if(samples.begin(), samples.end(),
                               [](const Sample& s) { return s.split == SplitTag::validation; });
  ASSERT_NE(it, samples.end());
  EXPECT_EQ(it->target_utc, v[8].utc_seconds);
  EXPECT_EQ(it->target, v[8].poi);
  EXPECT_EQ(it->forward.front(), v[7].poi);
  EXPECT_EQ(it->backward.front(), v[9].poi);
  EXPECT_DOUBLE_EQ(it->interval_before, static_cast<double>(v[8].utc_seconds - v[7].utc_seconds) / 3600.0);
  EXPECT_DOUBLE_EQ(it->interval_after, static_cast<double>(v[9].utc_seconds - v[8].utc_seconds) / 3600.0);
  EXPECT_EQ(std::count_if(samples.begin(), samples.end(),
                          [](const Sample& s) { return s.split == SplitTag::train; }),
            7);
  EXPECT_EQ(samples.back().split, SplitTag::validation);
}

TEST(Prepared, RoundTripAndDeterminism) {
  const Corpus planted = synthetic::planted_corpus({});
  std::ostringstream text;
  for (const auto& u : planted.users) {
    for (const auto& v : u.visits) {
      const auto& pt = planted.pois.point(v.poi);
      text << u.id << '\t' << planted.pois.id(v.poi) << "\tc\tname\t" << std::setprecision(17)
           << pt.lat << '\t' << pt.lon << "\t0\t";
      const std::time_t t = v.utc_seconds;
      std::tm tm{};
      gmtime_r(&t, &tm);
      char buf[64];
      std::strftime(buf, sizeof buf, "%a %b %d %H:%M:%S +0000 %Y", &tm);
      text << buf << '\n';
    }
  }
  auto prepare = [&] {
    std::istringstream in(text.str());
    return prepare_corpus(filter_min_activity(parse_foursquare(in)), 1);
  };
  const PreparedCorpus a = prepare();
  const PreparedCorpus b = prepare();
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_FALSE(a.samples.empty());

  std::stringstream bytes;
  write_prepared(bytes, a);
  EXPECT_EQ(bytes.str().substr(0, 6), "STDDP1");
  const PreparedCorpus back = read_prepared(bytes);
  EXPECT_EQ(back, a);
}

TEST(Prepared, RejectsWrongMagic) {
  std::istringstream in("STDDP9 not a corpus");
  EXPECT_THROW(read_prepared(in), InvalidInput);
}
