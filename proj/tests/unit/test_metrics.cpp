#include <doctest.h>

#include <random>

#include "maskcycle/metrics/metrics.hpp"
#include "maskcycle/metrics/report.hpp"

using namespace maskcycle;
using namespace maskcycle::metrics;

namespace {

BinaryMask mask_from(std::initializer_list<int> bits, Index h, Index w)
{
    BinaryMask m(h, w);
    auto it = bits.begin();
    for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
            m(y, x) = static_cast<std::uint8_t>(*it++);
    return m;
}

BinaryMask random_mask(Index h, Index w, double p, std::mt19937_64& rng)
{
    BinaryMask m(h, w);
    std::bernoulli_distribution b(p);
    for (Index i = 0; i < m.pixels(); ++i)
        m.data()(i) = b(rng) ? 1 : 0;
    return m;
}

} // namespace

TEST_CASE("dice and iou hand examples")
{
    // |P| = 3, |G| = 2, |P n G| = 2, |P u G| = 3
    const auto p = mask_from({1, 1, 1, 0}, 2, 2);
    const auto g = mask_from({1, 1, 0, 0}, 2, 2);
    CHECK(dice(p, g) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(std::abs(iou(p, g) - 2.0 / 3.0) < 1e-9);
    CHECK(dice(p, p) == 1.0);
    CHECK(iou(g, g) == 1.0);
    const auto a = mask_from({1, 0, 0, 0}, 2, 2), b = mask_from({0, 0, 0, 1}, 2, 2);
    CHECK(dice(a, b) == 0.0);
    CHECK(iou(a, b) == 0.0);
    CHECK(dice(BinaryMask(3, 3), BinaryMask(3, 3)) == 1.0);
    CHECK(iou(BinaryMask(3, 3), BinaryMask(3, 3)) == 1.0);
    CHECK(dice(BinaryMask(3, 3), BinaryMask(3, 3, 1)) == 0.0);
    CHECK_THROWS_AS(dice(BinaryMask(2, 3), BinaryMask(3, 2)), ShapeError);
    CHECK_THROWS_AS(iou(BinaryMask(2, 2), BinaryMask(2, 3)), ShapeError);
}

TEST_CASE("agreement with a per-pixel counting oracle on random 16x16 pairs")
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> density(0.0, 1.0);
    for (int t = 0; t < 1000; ++t) {
        const auto p = random_mask(16, 16, density(rng), rng);
        const auto g = random_mask(16, 16, density(rng), rng);
        long inter = 0, sp = 0, sg = 0, uni = 0;
        for (Index y = 0; y < 16; ++y)
            for (Index x = 0; x < 16; ++x) {
                const bool a = p(y, x) == 1, b = g(y, x) == 1;
                inter += a && b;
                uni += a || b;
                sp += a;
                sg += b;
            }
        const double oracle_dice = sp + sg == 0 ? 1.0 : 2.0 * inter / static_cast<double>(sp + sg);
        const double oracle_iou = uni == 0 ? 1.0 : inter / static_cast<double>(uni);
        REQUIRE(dice(p, g) == oracle_dice);
        REQUIRE(iou(p, g) == oracle_iou);
        REQUIRE(dice(p, g) == dice(g, p));
        REQUIRE(iou(p, g) == iou(g, p));
        const double d = dice(p, g), j = iou(p, g);
        REQUIRE(d >= j);
        if (uni > 0)
            REQUIRE(std::abs(d - 2 * j / (1 + j)) < 1e-12);
        if (d > 0 && d < 1)
            REQUIRE(d > j);
    }
}

TEST_CASE("report means and json schema")
{
    const auto r = summarize({{"b", 0.8, 0.6}, {"a", 1.0, 1.0}}, "seg", "heldout", 0.5);
    CHECK(r.samples.front().id == "a");
    CHECK(r.mean_dice == doctest::Approx(0.9));
    CHECK(r.mean_iou == doctest::Approx(0.8));
    const auto j = to_json(r);
    CHECK(validate_report_json(j).empty());
    CHECK(j.at("conventions").at("empty_vs_empty") == 1.0);
    const auto back = report_from_json(j);
    CHECK(back.mean_dice == r.mean_dice);
    CHECK(back.samples.size() == 2);

    auto broken = j;
    broken["mean_dice"] = 0.3;
    CHECK_FALSE(validate_report_json(broken).empty());
    broken = j;
    broken.erase("samples");
    CHECK_FALSE(validate_report_json(broken).empty());
    broken = j;
    std::swap(broken["samples"][0], broken["samples"][1]);
    CHECK_FALSE(validate_report_json(broken).empty());
    CHECK_THROWS_AS(summarize({}, "m", "d", 0.5), DataError);
}
