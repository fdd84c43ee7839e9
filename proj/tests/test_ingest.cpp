#include "helpers.hpp"
#include "oracle.hpp"

#include "mobiclr/ingest.hpp"

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace mobiclr;
using namespace mobiclr::ingest;
using testkit::naive_counts;
using testkit::random_trips;

namespace {

RingSet square(double x0, double y0, double side = 1.0) {
    return {{{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}, {x0, y0}}};
}

// Inclusive box test; valid for the axis-aligned squares used below.
bool in_box(LonLat p, double x0, double y0, double side) {
    return p.lon >= x0 && p.lon <= x0 + side && p.lat >= y0 && p.lat <= y0 + side;
}

// Crossing count along a horizontal ray, written from scratch for triangles/quads.
bool crossing_oracle(const Ring& ring, LonLat p) {
    int crossings = 0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
        LonLat a = ring[i], b = ring[i + 1];
        if (a.lat > b.lat) std::swap(a, b);
        if (p.lat < a.lat || p.lat >= b.lat) continue;
        const double x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
        if (x > p.lon) ++crossings;
    }
    return crossings % 2 == 1;
}

TripRecord id_trip(const std::string& o, const std::string& d, Timestamp s, Timestamp e) {
    TripRecord t;
    t.origin.region_id = o;
    t.destination.region_id = d;
    t.start_time = s;
    t.end_time = e;
    return t;
}

std::vector<std::string> numbered_ids(int n) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("r" + std::to_string(i));
    return ids;
}

}  // namespace

TEST_CASE("spatial_join resolves interior, exterior and shared-edge points") {
    RegionSet one({"A"}, {square(0, 0)});
    CHECK(spatial_join({0.5, 0.5}, one) == std::optional<std::string>("A"));
    CHECK_FALSE(spatial_join({5, 5}, one).has_value());

    RegionSet two({"A", "B"}, {square(0, 0), square(1, 0)});
    const LonLat edge{1.0, 0.5};
    CHECK(in_box(edge, 0, 0, 1));
    CHECK(in_box(edge, 1, 0, 1));
    CHECK(spatial_join(edge, two) == std::optional<std::string>("A"));

    RegionSet swapped({"B", "A"}, {square(1, 0), square(0, 0)});
    CHECK(spatial_join(edge, swapped) == std::optional<std::string>("B"));
}

TEST_CASE("spatial_join without polygons is a configuration error") {
    RegionSet ids_only({"A", "B"});
    CHECK_THROWS_AS(spatial_join({0, 0}, ids_only), ConfigError);
}

TEST_CASE("contains agrees with a crossing-count oracle away from edges") {
    const Ring tri = {{0, 0}, {4, 0}, {1, 3}, {0, 0}};
    const Ring quad = {{-1, -1}, {3, -2}, {2, 2}, {-2, 1}, {-1, -1}};
    Rng rng(11);
    std::uniform_real_distribution<double> u(-3, 5);
    for (int k = 0; k < 2000; ++k) {
        const LonLat p{u(rng), u(rng)};
        CHECK(contains({tri}, p) == crossing_oracle(tri, p));
        CHECK(contains({quad}, p) == crossing_oracle(quad, p));
    }
}

TEST_CASE("even-odd rule treats an inner ring as a hole") {
    RingSet donut = square(0, 0, 4);
    donut.push_back(square(1, 1, 2).front());
    CHECK(contains(donut, {0.5, 0.5}));
    CHECK_FALSE(contains(donut, {2.0, 2.0}));
    CHECK(contains(donut, {1.0, 2.0}));  // on the hole boundary
}

TEST_CASE("spatial_join is deterministic") {
    RegionSet two({"A", "B"}, {square(0, 0), square(1, 0)});
    for (double x : {0.2, 1.0, 1.7, 2.5}) CHECK(spatial_join({x, 0.3}, two) == spatial_join({x, 0.3}, two));
}

TEST_CASE("RegionSet validates ids and rings") {
    CHECK_THROWS_AS(RegionSet(std::vector<std::string>{}), ArgumentError);
    CHECK_THROWS_AS(RegionSet({"A", "A"}), ArgumentError);
    CHECK_THROWS_AS(RegionSet({"A"}, {{{{0, 0}, {1, 0}, {1, 1}}}}), ArgumentError);
}

TEST_CASE("bin_trips on an empty trip list is all zeros") {
    RegionSet regions({"a", "b", "c"});
    const auto s = bin_trips({}, regions, 0, 24 * 3600);
    CHECK(s.regions() == 3);
    CHECK(s.hours == 24);
    CHECK(s.counts.size() == 3 * 24 * 2);
    CHECK(std::all_of(s.counts.begin(), s.counts.end(), [](auto c) { return c == 0; }));
}

TEST_CASE("one trip lands in the origin outbound and destination inbound bins") {
    RegionSet regions({"A", "B"});
    const Timestamp t0 = 1546819200;
    const auto trip = id_trip("A", "B", t0 + 3 * 3600 + 120, t0 + 4 * 3600 + 5);
    const auto s = bin_trips({trip}, regions, t0, t0 + 24 * 3600);
    CHECK(s.at(0, 3, MobilitySeries::kOutbound) == 1);
    CHECK(s.at(1, 4, MobilitySeries::kInbound) == 1);
    CHECK(s.counts == naive_counts({trip}, regions.ids(), t0, 24));
    CHECK(std::accumulate(s.counts.begin(), s.counts.end(), std::int64_t{0}) == 2);
}

TEST_CASE("bin_trips equals the naive counter on random trips") {
    const auto ids = numbered_ids(5);
    RegionSet regions(ids);
    const Timestamp t0 = 1546819200;
    const auto trips = random_trips(1000, 5, t0, 48, 3);
    BinDiagnostics diag;
    const auto s = bin_trips(trips, regions, t0, t0 + 48 * 3600, &diag);
    CHECK(s.counts == naive_counts(trips, ids, t0, 48));
    CHECK(bin_trips_serial(trips, regions, t0, t0 + 48 * 3600).counts == s.counts);
    CHECK(diag.trips == 1000);
    CHECK(diag.unresolved_origin > 0);
}

TEST_CASE("bin_trips totals match the trips whose timestamps fall in the window") {
    const auto ids = numbered_ids(4);
    RegionSet regions(ids);
    const Timestamp t0 = 1000 * 3600;
    const auto trips = random_trips(5000, 4, t0, 24, 9);
    const auto s = bin_trips(trips, regions, t0, t0 + 24 * 3600);
    std::int64_t out_expected = 0, in_expected = 0, out_got = 0, in_got = 0;
    auto known = [&](const std::optional<std::string>& id) { return regions.index_of(*id).has_value(); };
    for (const auto& t : trips) {
        if (known(t.origin.region_id) && t.start_time >= t0 && t.start_time < t0 + 24 * 3600) ++out_expected;
        if (known(t.destination.region_id) && t.end_time >= t0 && t.end_time < t0 + 24 * 3600) ++in_expected;
    }
    for (std::size_t n = 0; n < 4; ++n)
        for (std::int64_t h = 0; h < 24; ++h) {
            out_got += s.at(n, h, MobilitySeries::kOutbound);
            in_got += s.at(n, h, MobilitySeries::kInbound);
        }
    CHECK(out_got == out_expected);
    CHECK(in_got == in_expected);
}

TEST_CASE("bin_trips is invariant to trip order") {
    RegionSet regions(numbered_ids(6));
    auto trips = random_trips(3000, 6, 0, 12, 5);
    const auto a = bin_trips(trips, regions, 0, 12 * 3600);
    Rng rng(1);
    std::shuffle(trips.begin(), trips.end(), rng);
    CHECK(bin_trips(trips, regions, 0, 12 * 3600).counts == a.counts);
}

TEST_CASE("bin_trips resolves point endpoints by spatial join") {
    RegionSet regions({"A", "B"}, {square(0, 0), square(1, 0)});
    TripRecord t;
    t.origin.point = LonLat{0.5, 0.5};
    t.destination.point = LonLat{1.5, 0.5};
    t.start_time = 0;
    t.end_time = 3600;
    TripRecord lost = t;
    lost.destination.point = LonLat{9, 9};
    BinDiagnostics diag;
    const auto s = bin_trips({t, lost}, regions, 0, 2 * 3600, &diag);
    CHECK(s.at(0, 0, MobilitySeries::kOutbound) == 2);
    CHECK(s.at(1, 1, MobilitySeries::kInbound) == 1);
    CHECK(diag.unresolved_destination == 1);
}

TEST_CASE("bin_trips window errors") {
    RegionSet regions({"A"});
    CHECK_THROWS_AS(bin_trips({}, regions, 3600, 3600), ArgumentError);
    CHECK_THROWS_AS(bin_trips({}, regions, 7200, 3600), ArgumentError);
    CHECK_THROWS_AS(bin_trips({}, regions, 0, 5400), ArgumentError);
}

TEST_CASE("zscore examples") {
    Vec c(3);
    c << 5, 5, 5;
    CHECK(zscore_column(c).cwiseAbs().maxCoeff() == 0.0);

    Vec x(3);
    x << 1, 2, 3;
    double mean = 0, sd = 0;
    const Vec z = zscore_column(x, &mean, &sd);
    CHECK(mean == doctest::Approx(2.0));
    CHECK(sd == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(std::abs(z(0) + 1.224745) < 1e-6);
    CHECK(std::abs(z(1)) < 1e-6);
    CHECK(std::abs(z(2) - 1.224745) < 1e-6);
}

TEST_CASE("zscore of a series: zero mean, unit population std, idempotent") {
    RegionSet regions({"r0", "r1", "quiet"});
    auto trips = random_trips(2000, 2, 0, 48, 21);  // "quiet" never appears -> stays empty
    const auto s = bin_trips(trips, regions, 0, 48 * 3600);
    const auto z = zscore(s);
    REQUIRE(z.regions() == 3);
    for (std::size_t n = 0; n < 2; ++n)
        for (int c = 0; c < 2; ++c) {
            const Vec v = z.values[n].col(c);
            CHECK(std::abs(v.mean()) < 1e-9);
            CHECK(std::abs(std::sqrt((v.array() - v.mean()).square().mean()) - 1.0) < 1e-9);
        }
    CHECK(z.values[2].cwiseAbs().maxCoeff() == 0.0);
    const auto zz = zscore(z);
    for (std::size_t n = 0; n < 3; ++n) CHECK((zz.values[n] - z.values[n]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("parse_timestamp accepts ISO-8601 and epoch seconds") {
    CHECK(parse_timestamp("2019-01-07T00:00:00Z") == 1546819200);
    CHECK(parse_timestamp("2019-01-07 00:00:00") == 1546819200);
    CHECK(parse_timestamp("2019-01-07T01:30:00+01:30") == 1546819200);
    CHECK(parse_timestamp("2019-01-07T00:00:59.999") == 1546819259);
    CHECK(parse_timestamp("1546819200") == 1546819200);
    CHECK(format_timestamp(1546819200) == "2019-01-07T00:00:00Z");
    CHECK_THROWS_AS(parse_timestamp("yesterday"), FormatError);
}

TEST_CASE("read_trips_csv parses ids and points and reports schema errors") {
    const auto dir = testing::scratch_dir("ingest_csv");
    testing::write_text(dir / "ids.csv",
                        "trip,origin_id,dest_id,start_time,end_time\n"
                        "1,A,B,2019-01-07T03:10:00Z,2019-01-07T04:00:00Z\n"
                        "2,\"B\",A,1546819200,1546819300\n"
                        "3,A,B,1546819300,1546819200\n");
    const auto r = read_trips_csv(dir / "ids.csv");
    CHECK(r.rows_read == 3);
    CHECK(r.rows_rejected == 1);
    REQUIRE(r.trips.size() == 2);
    CHECK(*r.trips[1].origin.region_id == "B");

    testing::write_text(dir / "missing.csv", "origin_id,dest_id,start_time\nA,B,0\n");
    try {
        read_trips_csv(dir / "missing.csv");
        FAIL("expected a FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("end_time") != std::string::npos);
    }

    testing::write_text(dir / "bad.csv", "origin_id,dest_id,start_time,end_time\nA,B,0,60\nA,B,noon,60\n");
    try {
        read_trips_csv(dir / "bad.csv");
        FAIL("expected a FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }

    testing::write_text(dir / "pts.tsv", "origin_lon\torigin_lat\tdest_lon\tdest_lat\tstart_time\tend_time\n"
                                         "0.5\t0.5\t1.5\t0.5\t0\t60\n");
    const auto p = read_trips_csv(dir / "pts.tsv", {'\t'});
    REQUIRE(p.trips.size() == 1);
    CHECK(p.trips[0].destination.point->lon == 1.5);

    testing::write_text(dir / "empty.csv", "");
    CHECK(read_trips_csv(dir / "empty.csv").trips.empty());
}

TEST_CASE("read_regions reads GeoJSON and plain id lists") {
    const auto dir = testing::scratch_dir("ingest_regions");
    testing::write_text(dir / "r.geojson", R"({"type":"FeatureCollection","features":[
        {"type":"Feature","properties":{"id":"A"},"geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
        {"type":"Feature","id":7,"properties":{},"geometry":{"type":"MultiPolygon","coordinates":[[[[1,0],[2,0],[2,1],[1,1],[1,0]]]]}}]})");
    const auto g = read_regions(dir / "r.geojson");
    CHECK(g.ids() == std::vector<std::string>{"A", "7"});
    CHECK(spatial_join({1.5, 0.5}, g) == std::optional<std::string>("7"));

    testing::write_text(dir / "ids.txt", "# regions\nA\nB\n\nC\n");
    CHECK(read_regions(dir / "ids.txt").ids() == std::vector<std::string>{"A", "B", "C"});
}

TEST_CASE("series container round-trips") {
    const auto dir = testing::scratch_dir("ingest_series");
    RegionSet regions(numbered_ids(3));
    const auto s = bin_trips(random_trips(300, 3, 0, 10, 4), regions, 0, 10 * 3600);
    write_series(dir / "s.bin", s, "abc");
    const auto back = read_series(dir / "s.bin");
    CHECK(back.region_ids == s.region_ids);
    CHECK(back.hours == s.hours);
    CHECK(back.time_origin == s.time_origin);
    CHECK(back.counts == s.counts);
    write_series_csv(dir / "s.csv", s);
    CHECK(testing::read_bytes(dir / "s.csv").rfind("region_id,hour,timestamp,inbound,outbound\n", 0) == 0);
}
