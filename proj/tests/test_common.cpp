#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "airphys/common.hpp"

using namespace airphys;

TEST_CASE("dates parse and round-trip") {
    const Date d = Date::parse("2009-01-01");
    CHECK(d.year() == 2009);
    CHECK(d.month() == 1);
    CHECK(d.day() == 1);
    CHECK(d.to_string() == "2009-01-01");
    CHECK(d.day_of_week() == 4);  // Thursday
    CHECK(d.day_of_year() == 1);

    CHECK((Date::parse("2009-12-31") - d) == 364);
    CHECK((d + 31).to_string() == "2009-02-01");
    CHECK(Date::parse("2012-02-29").day() == 29);  // leap year
}

TEST_CASE("malformed dates are rejected") {
    CHECK(!Date::try_parse("2009-13-01"));
    CHECK(!Date::try_parse("2009-02-30"));
    CHECK(!Date::try_parse("not-a-date"));
    CHECK(!Date::try_parse("2009/01/01"));
    CHECK_THROWS_AS(Date::parse("garbage"), RowError);
}

TEST_CASE("day-of-week cycles") {
    Date d = Date::parse("2024-01-01");  // a Monday
    CHECK(d.day_of_week() == 1);
    CHECK((d + 5).day_of_week() == 6);
    CHECK((d + 6).day_of_week() == 7);
    CHECK((d + 7).day_of_week() == 1);
}

TEST_CASE("rng determinism and stream independence") {
    Rng a(123), b(123), c(124);
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t x = a.next_u64();
        CHECK(x == b.next_u64());
    }
    CHECK(a.next_u64() != c.next_u64());

    SeedStreams streams(7);
    CHECK(streams.stream_seed("init") == streams.stream_seed("init"));
    CHECK(streams.stream_seed("init") != streams.stream_seed("dropout"));
    CHECK(SeedStreams(8).stream_seed("init") != streams.stream_seed("init"));
}

TEST_CASE("rng uniform and normal moments") {
    Rng rng(42);
    double sum = 0.0, sum_sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        sum += u;
        sum_sq += u * u;
    }
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));

    double nsum = 0.0, nsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        nsum += z;
        nsq += z * z;
    }
    CHECK(nsum / n == doctest::Approx(0.0).epsilon(0.02));
    CHECK(nsq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("uniform_index stays in range and covers values") {
    Rng rng(5);
    std::set<std::size_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t v = rng.uniform_index(7);
        CHECK(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("format_double round-trips exactly") {
    for (double v : {0.0, -1.5, 3.141592653589793, 1e-300, 12345.6789, 0.1}) {
        CHECK(std::stod(format_double(v)) == v);
    }
}

TEST_CASE("parallel_for covers every index once") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
}
