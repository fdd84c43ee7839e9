#include "helpers.hpp"

#include "mobiclr/synth.hpp"

#include "doctest.h"

using namespace mobiclr;
using namespace mobiclr::synth;

TEST_CASE("built-in profiles are one week of non-negative counts") {
    const auto& p = profiles();
    CHECK(p[0].name == "residential");
    CHECK(p[2].name == "entertainment");
    for (const auto& prof : p) {
        CHECK(prof.templates.rows() == 168);
        CHECK(prof.templates.cols() == 2);
        CHECK(prof.templates.minCoeff() >= 0.0);
        CHECK(prof.templates.maxCoeff() > 0.0);
    }
}

TEST_CASE("noise-free one-hot regions reproduce their template") {
    CityOptions o;
    o.regions = 9;
    o.hours = 336;
    o.noise_level = 0.0;
    o.volume_spread = 0.0;
    Mat w = Mat::Zero(9, 3);
    for (int n = 0; n < 9; ++n) w(n, n % 3) = 1.0;
    o.weights = w;
    const auto c = gen_city(o);
    for (int n = 0; n < 9; ++n)
        for (int t = 0; t < 336; ++t)
            for (int ch = 0; ch < 2; ++ch)
                CHECK(c.series.at(n, t, ch) == static_cast<std::int64_t>(profiles()[n % 3].templates(t % 168, ch)));
}

TEST_CASE("same seed gives a bitwise-identical city") {
    const auto a = gen_city(20, 3, 168, 1.0, 5);
    const auto b = gen_city(20, 3, 168, 1.0, 5);
    CHECK(a.series.counts == b.series.counts);
    CHECK(a.weights == b.weights);
    CHECK(a.indicator == b.indicator);
    CHECK(a.beta == b.beta);
    const auto c = gen_city(20, 3, 168, 1.0, 6);
    CHECK(c.series.counts != a.series.counts);
}

TEST_CASE("cities from different seeds share the profile templates") {
    // Templates are data, not seed-dependent; identical weights without noise give identical series.
    CityOptions o;
    o.regions = 8;
    o.noise_level = 0.0;
    o.volume_spread = 0.0;
    o.weights = Mat::Constant(8, 3, 1.0 / 3.0);
    o.seed = 1;
    const auto a = gen_city(o);
    o.seed = 2;
    const auto b = gen_city(o);
    CHECK(a.series.counts == b.series.counts);
}

TEST_CASE("planted indicator is linear in the weights") {
    CityOptions o;
    o.indicator_noise = 0.0;
    o.seed = 3;
    const auto c = gen_city(o);
    CHECK((c.indicator - c.weights * c.beta).cwiseAbs().maxCoeff() < 1e-12);
    std::vector<double> beta(c.beta.data(), c.beta.data() + 3);
    std::sort(beta.begin(), beta.end());
    CHECK(beta == std::vector<double>{0.0, 0.5, 1.0});
    for (int n = 0; n < c.weights.rows(); ++n) {
        CHECK(std::abs(c.weights.row(n).sum() - 1.0) < 1e-12);
        CHECK(c.weights.row(n).minCoeff() >= 0.0);
    }
    CHECK(c.series.region_ids.front() == "R000");
    CHECK(c.target().values == c.indicator);
}

TEST_CASE("invalid city sizes are rejected") {
    CHECK_THROWS_AS(gen_city(4, 3, 336, 1.0, 0), ArgumentError);
    CHECK_THROWS_AS(gen_city(20, 3, 100, 1.0, 0), ArgumentError);
    CHECK_THROWS_AS(gen_city(20, 4, 336, 1.0, 0), ArgumentError);
    CHECK_THROWS_AS(gen_city(20, 3, 336, -1.0, 0), ArgumentError);
}

TEST_CASE("counts are non-negative integers and the target CSV round-trips") {
    const auto c = gen_city(12, 2, 48, 3.0, 9);
    CHECK(*std::min_element(c.series.counts.begin(), c.series.counts.end()) >= 0);
    const auto dir = testing::scratch_dir("synth_csv");
    write_target_csv(dir / "y.csv", c.target("svi"));
    const auto back = probe::read_targets_csv(dir / "y.csv", "svi");
    CHECK(back.region_ids == c.series.region_ids);
    CHECK(back.values == c.indicator);
}
