#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace fedsim;

namespace {

// Classifier whose prediction is the argmax of the (one-hot) input: W = I, b = 0.
ParameterVector identity_classifier(int classes) {
    ModelShape shape{classes, 0, classes};
    ParameterVector p{std::vector<double>(shape.parameter_count(), 0.0), shape};
    for (int c = 0; c < classes; ++c) p.values[static_cast<std::size_t>(c * classes + c)] = 1.0;
    return p;
}

std::vector<double> one_hot_features(int classes, int c) {
    std::vector<double> f(static_cast<std::size_t>(classes), 0.0);
    f[static_cast<std::size_t>(c)] = 1.0;
    return f;
}

ParameterVector random_params(const ModelShape& shape, Rng& rng, double scale) {
    ParameterVector p{std::vector<double>(shape.parameter_count()), shape};
    for (double& v : p.values) v = rng.uniform(-scale, scale);
    return p;
}

}  // namespace

TEST_CASE("init_params: deterministic, small, zero biases") {
    const ModelShape logistic{4, 0, 3};
    const auto a = init_params(logistic, 5);
    const auto b = init_params(logistic, 5);
    CHECK(a == b);
    CHECK_FALSE(a == init_params(logistic, 6));
    REQUIRE(a.values.size() == 15);
    for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(a.values[i]) <= 0.05);
    for (std::size_t i = 12; i < 15; ++i) CHECK(a.values[i] == 0.0);

    const ModelShape mlp{4, 5, 3};
    const auto m = init_params(mlp, 1);
    REQUIRE(m.values.size() == 5 * 4 + 5 + 3 * 5 + 3);
    for (std::size_t i = 20; i < 25; ++i) CHECK(m.values[i] == 0.0);   // b1
    for (std::size_t i = 40; i < 43; ++i) CHECK(m.values[i] == 0.0);   // b2
}

TEST_CASE("analytic gradient matches central finite differences (logistic)") {
    Rng rng(2024);
    for (int instance = 0; instance < 20; ++instance) {
        const ModelShape shape{4, 0, 3};
        const auto params = random_params(shape, rng, 1.0);
        const auto batch = test::random_examples(5, 4, 3, 100 + static_cast<std::uint64_t>(instance));
        const auto analytic = loss_and_gradient(params, batch);
        const auto numeric = test::finite_difference_gradient(
            params.values, [&](const std::vector<double>& w) { return test::reference_logistic_loss(w, batch, 3); });
        CHECK(test::relative_error(analytic.gradient, numeric) < 1e-5);
        CHECK(analytic.loss == doctest::Approx(test::reference_logistic_loss(params.values, batch, 3)).epsilon(1e-12));
    }
}

TEST_CASE("analytic gradient matches central finite differences (hidden layer)") {
    Rng rng(77);
    for (int instance = 0; instance < 10; ++instance) {
        const ModelShape shape{4, 6, 3};
        const auto params = random_params(shape, rng, 0.8);
        const auto batch = test::random_examples(4, 4, 3, 500 + static_cast<std::uint64_t>(instance));
        const auto analytic = loss_and_gradient(params, batch);
        const auto numeric = test::finite_difference_gradient(
            params.values, [&](const std::vector<double>& w) { return test::reference_mlp_loss(w, batch, 3, 6); });
        CHECK(test::relative_error(analytic.gradient, numeric) < 1e-5);
    }
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    const ModelShape shape{4, 0, 3};
    const auto params = init_params(shape, 3);
    const auto data = test::random_examples(50, 4, 3, 9);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.batch_size = 16;
    CHECK(train_local(params, data, cfg) == params);
}

TEST_CASE("single example: loss strictly decreases until below 1e-3") {
    const ModelShape shape{4, 0, 3};
    auto params = init_params(shape, 8);
    const auto one = test::random_examples(1, 4, 3, 21);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 1;
    cfg.learning_rate = 0.5;

    double previous = mean_loss(params, one);
    int steps = 0;
    while (previous >= 1e-3) {
        REQUIRE(steps < 100000);
        params = train_local(params, one, cfg);
        const double now = mean_loss(params, one);
        CHECK(now < previous);
        previous = now;
        ++steps;
    }
    MESSAGE("steps to reach loss < 1e-3: " << steps);
}

TEST_CASE("training is deterministic and does not touch its inputs") {
    const ModelShape shape{6, 4, 3};
    const auto params = init_params(shape, 4);
    const auto data = test::random_examples(100, 6, 3, 5);
    const auto data_copy = data;
    const auto params_copy = params;
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs = 3;
    cfg.rng_seed = 99;
    const auto a = train_local(params, data, cfg);
    const auto b = train_local(params, data, cfg);
    CHECK(a == b);
    CHECK(params == params_copy);
    CHECK(data == data_copy);
    CHECK(a.all_finite());
    CHECK_FALSE(a == params);
}

TEST_CASE("train_local preconditions") {
    const ModelShape shape{4, 0, 3};
    const auto params = init_params(shape, 1);
    CHECK_THROWS_AS(train_local(params, Examples{}, TrainConfig{}), PreconditionError);
    auto broken = params;
    broken.values[0] = std::nan("");
    CHECK_THROWS_AS(train_local(broken, test::random_examples(3, 4, 3, 1), TrainConfig{}), PreconditionError);
    TrainConfig bad;
    bad.epochs = 0;
    CHECK_THROWS_AS(train_local(params, test::random_examples(3, 4, 3, 1), bad), ConfigError);
}

TEST_CASE("evaluate: constant class-0 classifier on a balanced set") {
    const ModelShape shape{3, 0, 10};
    ParameterVector p{std::vector<double>(shape.parameter_count(), 0.0), shape};
    p.values[30] = 5.0;  // bias of class 0
    Examples test;
    for (int i = 0; i < 100; ++i) test.push_back(LabeledExample::make({0.1, 0.2, 0.3}, i % 10, 10));
    const auto r = evaluate(p, test);
    CHECK(r.overall_accuracy == doctest::Approx(0.1));
    CHECK(r.per_label_accuracy[0] == 1.0);
    for (int l = 1; l < 10; ++l) CHECK(r.per_label_accuracy[static_cast<std::size_t>(l)] == 0.0);
}

TEST_CASE("evaluate: perfect classifier") {
    const auto p = identity_classifier(4);
    Examples test;
    for (int i = 0; i < 40; ++i) test.push_back(LabeledExample::make(one_hot_features(4, i % 4), i % 4, 4));
    const auto r = evaluate(p, test);
    CHECK(r.overall_accuracy == 1.0);
    for (double a : r.per_label_accuracy) CHECK(a == 1.0);
}

TEST_CASE("evaluate: per-label accuracies 0.60/0.73/0.75 give overall 0.693") {
    const auto p = identity_classifier(3);
    Examples test;
    const int correct[3] = {60, 73, 75};
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 100; ++i) {
            const int predicted = i < correct[c] ? c : (c + 1) % 3;
            test.push_back(LabeledExample::make(one_hot_features(3, predicted), c, 3));
        }
    }
    const auto r = evaluate(p, test);
    CHECK(r.per_label_accuracy[0] == doctest::Approx(0.60));
    CHECK(r.per_label_accuracy[1] == doctest::Approx(0.73));
    CHECK(r.per_label_accuracy[2] == doctest::Approx(0.75));
    CHECK(r.overall_accuracy == doctest::Approx(0.693).epsilon(0.001));
    std::size_t hits = 0, total = 0;
    for (std::size_t l = 0; l < 3; ++l) {
        hits += r.per_label_correct[l];
        total += r.per_label_counts[l];
    }
    CHECK(std::abs(r.overall_accuracy - static_cast<double>(hits) / static_cast<double>(total)) <= 1e-12);
}

TEST_CASE("evaluate reports absent labels with zero count") {
    const auto p = identity_classifier(3);
    Examples test{LabeledExample::make(one_hot_features(3, 0), 0, 3), LabeledExample::make(one_hot_features(3, 2), 2, 3)};
    const auto r = evaluate(p, test);
    CHECK(r.has_label(0));
    CHECK_FALSE(r.has_label(1));
    CHECK(r.has_label(2));
    CHECK_THROWS_AS(evaluate(p, Examples{}), PreconditionError);
}

TEST_CASE("input normalisation is applied before the first layer") {
    ModelShape shape{2, 0, 2, 100.0, 0.5};
    ParameterVector p{{1.0, 0.0, 0.0, 1.0, 0.0, 0.0}, shape};
    const std::vector<double> x{104.0, 102.0};
    const auto z = logits(p, x);
    CHECK(z[0] == doctest::Approx(2.0));
    CHECK(z[1] == doctest::Approx(1.0));
}
