#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedsim/attacks.hpp"
#include "fedsim/errors.hpp"
#include "support/fixtures.hpp"

using namespace fedsim;

namespace {

// Examples whose label vector is all zeros, so any write by the attack is
// visible as a valid one-hot label.
Examples unlabeled(std::size_t n, int classes) {
    return Examples(n, LabeledExample{{}, std::vector<double>(static_cast<std::size_t>(classes), 0.0)});
}

Examples integer_features(std::size_t n, int dim, std::uint64_t seed) {
    Rng rng(seed);
    Examples out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> f(static_cast<std::size_t>(dim));
        for (double& v : f) v = static_cast<double>(rng.uniform_int(0, 255));
        out.push_back(LabeledExample::make(std::move(f), static_cast<int>(i % 10), 10));
    }
    return out;
}

}  // namespace

TEST_CASE("random labels: zero iterations is the identity") {
    const auto data = test::random_examples(100, 3, 10, 1);
    CHECK(poison_random_labels(data, 0, 5) == data);
    CHECK_THROWS_AS(poison_random_labels(data, -1, 5), ConfigError);
}

TEST_CASE("random labels keep one-hot labels, length and features") {
    const auto data = test::random_examples(500, 3, 10, 2);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto out = poison_random_labels(data, 180, seed);
        REQUIRE(out.size() == data.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i].has_valid_label());
            CHECK(out[i].features == data[i].features);
        }
    }
    CHECK(poison_random_labels(data, 180, 3) == poison_random_labels(data, 180, 3));
}

TEST_CASE("random labels write matching pairs, one per half") {
    // With one iteration exactly one index per half is written, both with the same class.
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto out = poison_random_labels(unlabeled(11, 4), 1, seed);
        std::vector<std::size_t> touched;
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].has_valid_label()) touched.push_back(i);
        }
        REQUIRE(touched.size() == 2);
        CHECK(touched[0] < 5);
        CHECK(touched[1] >= 5);
        CHECK(out[touched[0]].label == out[touched[1]].label);
    }
}

TEST_CASE("random labels: 600 draws on 2500-element halves touch about 533 indices per half") {
    // Expected distinct indices per half: 2500 * (1 - (1 - 1/2500)^600) = 533.52
    constexpr double expected = 533.52476558992931;
    double first_sum = 0.0, second_sum = 0.0;
    const int seeds = 1000;
    const auto base = unlabeled(5000, 10);
    for (int s = 0; s < seeds; ++s) {
        const auto out = poison_random_labels(base, 600, static_cast<std::uint64_t>(s));
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (out[i].has_valid_label()) (i < 2500 ? first_sum : second_sum) += 1.0;
        }
    }
    const double first = first_sum / seeds, second = second_sum / seeds;
    MESSAGE("mean touched: first half " << first << ", second half " << second);
    CHECK(std::abs(first - expected) / expected < 0.03);
    CHECK(std::abs(second - expected) / expected < 0.03);
}

TEST_CASE("specific labels: all 4s become 5s") {
    const auto data = test::random_examples(1000, 2, 10, 7);
    const auto out = poison_specific_labels(data, 4, 5, 1.0, 1);
    int fours_before = 0, fives_before = 0, fives_after = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        fours_before += data[i].class_index() == 4;
        fives_before += data[i].class_index() == 5;
        fives_after += out[i].class_index() == 5;
        CHECK(out[i].class_index() != 4);
        CHECK(out[i].has_valid_label());
        CHECK(out[i].features == data[i].features);
        if (data[i].class_index() != 4) CHECK(out[i].label == data[i].label);
    }
    REQUIRE(fours_before > 0);
    CHECK(fives_after == fives_before + fours_before);
}

TEST_CASE("specific labels: part_of_labels = 0 is the identity") {
    const auto data = test::random_examples(1000, 2, 10, 8);
    CHECK(poison_specific_labels(data, 4, 5, 0.0, 1) == data);
    CHECK(poison_specific_labels(data, 4, std::nullopt, 0.0, 1) == data);
}

TEST_CASE("specific labels: random target is uniform over all classes") {
    // 100 seeds x 100 source examples; chi-square with 9 degrees of freedom.
    Examples sources;
    for (int i = 0; i < 100; ++i) sources.push_back(LabeledExample::make({0.0}, 3, 10));
    std::vector<double> counts(10, 0.0);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        for (const auto& ex : poison_specific_labels(sources, 3, std::nullopt, 1.0, seed)) {
            counts[static_cast<std::size_t>(ex.class_index())] += 1.0;
        }
    }
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    MESSAGE("chi-square = " << chi2);
    // chi2.ppf(0.99, df=9)
    CHECK(chi2 < 21.665994333461924);
    CHECK(counts[3] > 0.0);  // the source class itself can be redrawn
}

TEST_CASE("specific labels: partial fraction and invalid source") {
    const auto data = test::random_examples(5000, 1, 10, 9);
    const auto out = poison_specific_labels(data, 2, 7, 0.5, 4);
    int sources = 0, moved = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data[i].class_index() == 2) {
            ++sources;
            moved += out[i].class_index() == 7;
        }
    }
    CHECK(static_cast<double>(moved) / sources == doctest::Approx(0.5).epsilon(0.15));
    CHECK_THROWS_AS(poison_specific_labels(data, 10, 7, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(poison_specific_labels(data, -1, 7, 1.0, 1), ConfigError);
}

TEST_CASE("random pixels: zero threshold rounds the rewritten values only") {
    auto data = test::random_examples(50, 8, 10, 10);
    for (auto& ex : data) {
        for (double& v : ex.features) v = 100.0 * v + 0.25;
    }
    const auto out = poison_random_pixels(data, 1.0, 3, 0.0, 5);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(out[i].label == data[i].label);
        int changed = 0;
        for (std::size_t j = 0; j < 8; ++j) {
            if (out[i].features[j] != data[i].features[j]) {
                ++changed;
                CHECK(out[i].features[j] == std::nearbyint(data[i].features[j]));
            }
        }
        CHECK(changed <= 3);
    }
}

TEST_CASE("random pixels: each rewrite stays within [round(0.5 v), round(1.5 v)]") {
    // One draw per image so no coordinate is rewritten twice; repeated draws of
    // the same coordinate compound.
    const auto data = integer_features(3000, 12, 11);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto once = poison_random_pixels(data, 1.0, 1, 0.5, seed);
        for (std::size_t i = 0; i < data.size(); ++i) {
            CHECK(once[i].label == data[i].label);
            for (std::size_t j = 0; j < 12; ++j) {
                const double v = data[i].features[j];
                const double w = once[i].features[j];
                CHECK(w >= std::nearbyint(0.5 * v));
                CHECK(w <= std::nearbyint(1.5 * v));
            }
        }
    }
}

TEST_CASE("random pixels: image selection count and grouping") {
    const auto data = integer_features(2500, 4, 12);
    const auto all = poison_random_pixels(data, 1.0, 600, 0.5, 1);
    std::size_t modified = 0;
    for (std::size_t i = 0; i < data.size(); ++i) modified += all[i].features != data[i].features;
    // Every image is selected; with 600 draws over 4 coordinates an image stays
    // unchanged only if every rewrite reproduces its value.
    CHECK(modified >= 2490);

    const auto some = poison_random_pixels(data, 0.1, 600, 0.5, 1);
    std::size_t touched = 0;
    for (std::size_t i = 0; i < data.size(); ++i) touched += some[i].features != data[i].features;
    CHECK(touched <= 250);
    CHECK(touched >= 240);

    // Groups of 2: both coordinates of a drawn group are rewritten together.
    auto grouped = integer_features(200, 6, 13);
    const auto g = poison_random_pixels(grouped, 1.0, 1, 0.0, 2, 2);
    for (std::size_t i = 0; i < grouped.size(); ++i) {
        for (std::size_t j = 0; j < 6; ++j) CHECK(g[i].features[j] == grouped[i].features[j]);
    }
    CHECK_THROWS_AS(poison_random_pixels(data, 1.5, 10, 0.5, 1), ConfigError);
    CHECK_THROWS_AS(poison_random_pixels(data, -0.1, 10, 0.5, 1), ConfigError);
    CHECK_THROWS_AS(poison_random_pixels(data, 1.0, 10, 1.0, 1), ConfigError);
}

TEST_CASE("lazy update returns its input") {
    const auto p = init_params(ModelShape{5, 3, 4}, 2);
    CHECK(lazy_update(p) == p);
    ParameterVector zero{std::vector<double>(p.values.size(), 0.0), p.shape};
    CHECK(lazy_update(zero) == zero);
}

TEST_CASE("poison config validation") {
    PoisonConfig cfg;
    cfg.strategy = PoisonStrategy::specific_label;
    cfg.source_label = 12;
    CHECK_THROWS_AS(cfg.validate(10, 64), ConfigError);
    cfg.source_label = 1;
    CHECK_NOTHROW(cfg.validate(10, 64));
    cfg.strategy = PoisonStrategy::random_pixel;
    cfg.pixel_group = 3;
    CHECK_THROWS_AS(cfg.validate(10, 64), ConfigError);
    cfg.pixel_group = 4;
    CHECK_NOTHROW(cfg.validate(10, 64));
    CHECK(parse_poison_strategy("lazy") == PoisonStrategy::lazy);
    CHECK_THROWS_AS(parse_poison_strategy("gradient"), ConfigError);
}
