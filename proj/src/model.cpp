#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

std::size_t ModelShape::parameter_count() const {
    const auto d = static_cast<std::size_t>(input_dim);
    const auto h = static_cast<std::size_t>(hidden_units);
    const auto c = static_cast<std::size_t>(num_classes);
    if (h == 0) return c * d + c;
    return h * d + h + c * h + c;
}

void ModelShape::validate() const {
    if (input_dim <= 0) throw ConfigError("model input_dim must be positive");
    if (hidden_units < 0) throw ConfigError("model hidden_units must be >= 0");
    if (num_classes < 2) throw ConfigError("model num_classes must be >= 2");
    if (!std::isfinite(input_offset) || !std::isfinite(input_scale) || input_scale == 0.0) {
        throw ConfigError("model input normalisation must be finite and non-degenerate");
    }
}

bool ParameterVector::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
        throw ConfigError("train.learning_rate must be finite and non-negative");
    }
}

namespace {

// Offsets of each block inside ParameterVector::values.
struct Layout {
    std::size_t d, h, c;
    std::size_t w1, b1, w2, b2;  // for logistic only w2/b2 are used

    explicit Layout(const ModelShape& s)
        : d(static_cast<std::size_t>(s.input_dim)),
          h(static_cast<std::size_t>(s.hidden_units)),
          c(static_cast<std::size_t>(s.num_classes)) {
        w1 = 0;
        b1 = w1 + h * d;
        w2 = b1 + h;
        b2 = w2 + c * (h == 0 ? d : h);
    }
    bool has_hidden() const { return h > 0; }
    std::size_t top_inputs() const { return h == 0 ? d : h; }
};

void check_params(const ParameterVector& params) {
    params.shape.validate();
    if (params.values.size() != params.shape.parameter_count()) {
        throw PreconditionError("parameter vector length " + std::to_string(params.values.size()) +
                                " does not match its shape (" + std::to_string(params.shape.parameter_count()) + ")");
    }
}

void check_example(const ParameterVector& params, const LabeledExample& ex) {
    if (ex.features.size() != static_cast<std::size_t>(params.shape.input_dim) ||
        ex.label.size() != static_cast<std::size_t>(params.shape.num_classes)) {
        throw PreconditionError("example dimensions do not match the model shape");
    }
}

// Scratch buffers for one forward/backward pass.
struct Workspace {
    std::vector<double> input, hidden, logits, probs, dlogits, dhidden;

    explicit Workspace(const Layout& l)
        : input(l.d), hidden(l.h), logits(l.c), probs(l.c), dlogits(l.c), dhidden(l.h) {}
};

void forward(const ParameterVector& params, const Layout& l, std::span<const double> features, Workspace& ws) {
    const auto& w = params.values;
    for (std::size_t j = 0; j < l.d; ++j) {
        ws.input[j] = (features[j] - params.shape.input_offset) * params.shape.input_scale;
    }
    std::span<const double> top_in = ws.input;
    if (l.has_hidden()) {
        for (std::size_t i = 0; i < l.h; ++i) {
            double acc = w[l.b1 + i];
            const double* row = &w[l.w1 + i * l.d];
            for (std::size_t j = 0; j < l.d; ++j) acc += row[j] * ws.input[j];
            ws.hidden[i] = std::tanh(acc);
        }
        top_in = ws.hidden;
    }
    const std::size_t n_in = l.top_inputs();
    for (std::size_t k = 0; k < l.c; ++k) {
        double acc = w[l.b2 + k];
        const double* row = &w[l.w2 + k * n_in];
        for (std::size_t j = 0; j < n_in; ++j) acc += row[j] * top_in[j];
        ws.logits[k] = acc;
    }
}

// Softmax into ws.probs; returns log of the partition function relative to
// the max logit so that log p_k = logits_k - max - log_sum.
double softmax(Workspace& ws) {
    const double max = *std::max_element(ws.logits.begin(), ws.logits.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < ws.logits.size(); ++k) {
        ws.probs[k] = std::exp(ws.logits[k] - max);
        sum += ws.probs[k];
    }
    for (double& p : ws.probs) p /= sum;
    return max + std::log(sum);
}

double example_loss(const LabeledExample& ex, const Workspace& ws, double log_norm) {
    double loss = 0.0;
    for (std::size_t k = 0; k < ex.label.size(); ++k) {
        if (ex.label[k] != 0.0) loss -= ex.label[k] * (ws.logits[k] - log_norm);
    }
    return loss;
}

// Adds this example's gradient into grad (not yet averaged).
void backward(const ParameterVector& params, const Layout& l, const LabeledExample& ex, Workspace& ws,
              std::vector<double>& grad) {
    const auto& w = params.values;
    const double label_mass = std::accumulate(ex.label.begin(), ex.label.end(), 0.0);
    for (std::size_t k = 0; k < l.c; ++k) ws.dlogits[k] = ws.probs[k] * label_mass - ex.label[k];

    std::span<const double> top_in = l.has_hidden() ? std::span<const double>(ws.hidden) : ws.input;
    const std::size_t n_in = l.top_inputs();
    for (std::size_t k = 0; k < l.c; ++k) {
        const double g = ws.dlogits[k];
        grad[l.b2 + k] += g;
        double* row = &grad[l.w2 + k * n_in];
        for (std::size_t j = 0; j < n_in; ++j) row[j] += g * top_in[j];
    }
    if (!l.has_hidden()) return;

    for (std::size_t i = 0; i < l.h; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < l.c; ++k) acc += w[l.w2 + k * l.h + i] * ws.dlogits[k];
        ws.dhidden[i] = acc * (1.0 - ws.hidden[i] * ws.hidden[i]);
    }
    for (std::size_t i = 0; i < l.h; ++i) {
        const double g = ws.dhidden[i];
        grad[l.b1 + i] += g;
        double* row = &grad[l.w1 + i * l.d];
        for (std::size_t j = 0; j < l.d; ++j) row[j] += g * ws.input[j];
    }
}

template <typename IndexRange>
double accumulate_batch(const ParameterVector& params, const Layout& l, std::span<const LabeledExample> data,
                        const IndexRange& indices, Workspace& ws, std::vector<double>& grad) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    std::size_t n = 0;
    for (const std::size_t idx : indices) {
        const auto& ex = data[idx];
        forward(params, l, ex.features, ws);
        const double log_norm = softmax(ws);
        loss += example_loss(ex, ws, log_norm);
        backward(params, l, ex, ws, grad);
        ++n;
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& g : grad) g *= inv;
    return loss * inv;
}

}  // namespace

ParameterVector init_params(const ModelShape& shape, std::uint64_t seed) {
    shape.validate();
    ParameterVector p{std::vector<double>(shape.parameter_count(), 0.0), shape};
    const Layout l(shape);
    Rng rng(seed);
    auto fill = [&](std::size_t begin, std::size_t count) {
        for (std::size_t i = begin; i < begin + count; ++i) p.values[i] = rng.uniform(-0.05, 0.05);
    };
    if (l.has_hidden()) fill(l.w1, l.h * l.d);
    fill(l.w2, l.c * l.top_inputs());
    return p;
}

std::vector<double> logits(const ParameterVector& params, std::span<const double> features) {
    check_params(params);
    if (features.size() != static_cast<std::size_t>(params.shape.input_dim)) {
        throw PreconditionError("feature vector does not match the model input dimension");
    }
    const Layout l(params.shape);
    Workspace ws(l);
    forward(params, l, features, ws);
    return ws.logits;
}

int predict(const ParameterVector& params, std::span<const double> features) {
    const auto z = logits(params, features);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

LossGradient loss_and_gradient(const ParameterVector& params, std::span<const LabeledExample> batch) {
    check_params(params);
    if (batch.empty()) throw PreconditionError("loss_and_gradient needs a non-empty batch");
    for (const auto& ex : batch) check_example(params, ex);
    const Layout l(params.shape);
    Workspace ws(l);
    LossGradient out{0.0, std::vector<double>(params.values.size())};
    std::vector<std::size_t> all(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    out.loss = accumulate_batch(params, l, batch, all, ws, out.gradient);
    return out;
}

double mean_loss(const ParameterVector& params, std::span<const LabeledExample> batch) {
    check_params(params);
    if (batch.empty()) throw PreconditionError("mean_loss needs a non-empty batch");
    const Layout l(params.shape);
    Workspace ws(l);
    double loss = 0.0;
    for (const auto& ex : batch) {
        check_example(params, ex);
        forward(params, l, ex.features, ws);
        loss += example_loss(ex, ws, softmax(ws));
    }
    return loss / static_cast<double>(batch.size());
}

ParameterVector train_local(const ParameterVector& params, std::span<const LabeledExample> data,
                            const TrainConfig& cfg) {
    check_params(params);
    cfg.validate();
    if (data.empty()) throw PreconditionError("train_local needs non-empty data");
    if (!params.all_finite()) throw PreconditionError("train_local received non-finite parameters");
    for (const auto& ex : data) check_example(params, ex);

    ParameterVector out = params;
    const Layout l(out.shape);
    Workspace ws(l);
    std::vector<double> grad(out.values.size());
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(cfg.rng_seed);
    const auto batch = static_cast<std::size_t>(cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::span<const std::size_t> indices(order.data() + start, std::min(batch, order.size() - start));
            accumulate_batch(out, l, data, indices, ws, grad);
            for (std::size_t i = 0; i < grad.size(); ++i) out.values[i] -= cfg.learning_rate * grad[i];
        }
    }
    if (!out.all_finite()) throw PreconditionError("training diverged to non-finite parameters");
    return out;
}

EvalResult evaluate(const ParameterVector& params, std::span<const LabeledExample> test) {
    check_params(params);
    if (test.empty()) throw PreconditionError("evaluate needs a non-empty test set");
    const Layout l(params.shape);
    Workspace ws(l);
    EvalResult r;
    r.per_label_counts.assign(l.c, 0);
    r.per_label_correct.assign(l.c, 0);
    r.per_label_accuracy.assign(l.c, 0.0);
    std::size_t correct = 0;
    for (const auto& ex : test) {
        check_example(params, ex);
        forward(params, l, ex.features, ws);
        const auto predicted =
            static_cast<std::size_t>(std::max_element(ws.logits.begin(), ws.logits.end()) - ws.logits.begin());
        const auto truth = static_cast<std::size_t>(ex.class_index());
        ++r.per_label_counts[truth];
        if (predicted == truth) {
            ++r.per_label_correct[truth];
            ++correct;
        }
    }
    for (std::size_t k = 0; k < l.c; ++k) {
        if (r.per_label_counts[k] > 0) {
            r.per_label_accuracy[k] =
                static_cast<double>(r.per_label_correct[k]) / static_cast<double>(r.per_label_counts[k]);
        }
    }
    r.overall_accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    return r;
}

}  // namespace fedsim
