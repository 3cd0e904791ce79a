#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/data.hpp"

namespace fedsim {

/// Layer layout of the classifier. hidden_units == 0 gives multinomial
/// logistic regression; otherwise one tanh hidden layer feeds the softmax.
/// Inputs are normalised as (x - input_offset) * input_scale before use.
struct ModelShape {
    int input_dim = 0;
    int hidden_units = 0;
    int num_classes = 0;
    double input_offset = 0.0;
    double input_scale = 1.0;

    std::size_t parameter_count() const;
    void validate() const;
    bool operator==(const ModelShape&) const = default;
};

// Flat parameter layout:
//   logistic: W[C x D] row-major, b[C]
//   mlp:      W1[H x D], b1[H], W2[C x H], b2[C]
struct ParameterVector {
    std::vector<double> values;
    ModelShape shape;

    bool all_finite() const;
    bool operator==(const ParameterVector&) const = default;
};

struct TrainConfig {
    int epochs = 10;
    int batch_size = 128;
    double learning_rate = 0.1;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct EvalResult {
    double overall_accuracy = 0.0;
    // Entries for labels with a zero count are 0 and must be treated as absent.
    std::vector<double> per_label_accuracy;
    std::vector<std::size_t> per_label_counts;
    std::vector<std::size_t> per_label_correct;

    bool has_label(int label) const { return per_label_counts.at(static_cast<std::size_t>(label)) > 0; }
};

/// Weights uniform in [-0.05, 0.05], biases zero.
ParameterVector init_params(const ModelShape& shape, std::uint64_t seed);

/// Runs cfg.epochs passes of mini-batch SGD on the mean cross-entropy. The
/// example order is reshuffled every epoch from cfg.rng_seed.
ParameterVector train_local(const ParameterVector& params, std::span<const LabeledExample> data,
                            const TrainConfig& cfg);

EvalResult evaluate(const ParameterVector& params, std::span<const LabeledExample> test);

/// Class scores (pre-softmax logits) for one feature vector.
std::vector<double> logits(const ParameterVector& params, std::span<const double> features);

int predict(const ParameterVector& params, std::span<const double> features);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

/// Mean cross-entropy over `batch` and its gradient with respect to every
/// parameter. Reductions run in example order so results are reproducible.
LossGradient loss_and_gradient(const ParameterVector& params, std::span<const LabeledExample> batch);

double mean_loss(const ParameterVector& params, std::span<const LabeledExample> batch);

}  // namespace fedsim
