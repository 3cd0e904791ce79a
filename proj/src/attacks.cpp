#include "fedsim/attacks.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

std::string_view to_string(PoisonStrategy strategy) {
    switch (strategy) {
        case PoisonStrategy::none: return "none";
        case PoisonStrategy::random_label: return "random_label";
        case PoisonStrategy::specific_label: return "specific_label";
        case PoisonStrategy::random_pixel: return "random_pixel";
        case PoisonStrategy::lazy: return "lazy";
    }
    return "unknown";
}

PoisonStrategy parse_poison_strategy(std::string_view name) {
    for (auto s : {PoisonStrategy::none, PoisonStrategy::random_label, PoisonStrategy::specific_label,
                   PoisonStrategy::random_pixel, PoisonStrategy::lazy}) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("unknown poison strategy '" + std::string(name) + "'");
}

bool PoisonConfig::poisons_data() const {
    return strategy == PoisonStrategy::random_label || strategy == PoisonStrategy::specific_label ||
           strategy == PoisonStrategy::random_pixel;
}

void PoisonConfig::validate(int num_classes, int feature_dim) const {
    auto fraction = [](double v) { return v >= 0.0 && v <= 1.0; };
    switch (strategy) {
        case PoisonStrategy::random_label:
            if (no_labels < 0) throw ConfigError("poison.no_labels must be >= 0");
            break;
        case PoisonStrategy::specific_label:
            if (source_label < 0 || source_label >= num_classes) {
                throw ConfigError("poison.source_label must be in [0, num_classes)");
            }
            if (target_label && (*target_label < 0 || *target_label >= num_classes)) {
                throw ConfigError("poison.target_label must be in [0, num_classes) or \"random\"");
            }
            if (!fraction(part_of_labels)) throw ConfigError("poison.part_of_labels must be in [0, 1]");
            break;
        case PoisonStrategy::random_pixel:
            if (!fraction(perc_img)) throw ConfigError("poison.perc_img must be in [0, 1]");
            if (nr_pixels < 0) throw ConfigError("poison.nr_pixels must be >= 0");
            if (!(pixel_threshold >= 0.0 && pixel_threshold < 1.0)) {
                throw ConfigError("poison.pixel_threshold must be in [0, 1)");
            }
            if (pixel_group < 1 || (feature_dim > 0 && feature_dim % pixel_group != 0)) {
                throw ConfigError("poison.pixel_group must divide the feature dimension");
            }
            break;
        case PoisonStrategy::none:
        case PoisonStrategy::lazy:
            break;
    }
}

namespace {

std::vector<double> one_hot(std::size_t num_classes, int c) {
    std::vector<double> v(num_classes, 0.0);
    v[static_cast<std::size_t>(c)] = 1.0;
    return v;
}

}  // namespace

Examples poison_random_labels(std::span<const LabeledExample> data, int no_labels, std::uint64_t seed) {
    if (no_labels < 0) throw ConfigError("no_labels must be >= 0");
    Examples out(data.begin(), data.end());
    if (no_labels == 0) return out;
    if (data.size() < 2) throw PreconditionError("random label poisoning needs at least two examples");

    const std::size_t half = out.size() / 2;
    const std::size_t num_classes = out.front().label.size();
    Rng rng(seed);
    for (int i = 0; i < no_labels; ++i) {
        const auto label = one_hot(num_classes, static_cast<int>(rng.uniform_index(num_classes)));
        const auto first = rng.uniform_index(half);
        const auto second = half + rng.uniform_index(out.size() - half);
        out[first].label = label;
        out[second].label = label;
    }
    return out;
}

Examples poison_specific_labels(std::span<const LabeledExample> data, int source_label, std::optional<int> target,
                                double part_of_labels, std::uint64_t seed) {
    Examples out(data.begin(), data.end());
    if (out.empty()) return out;
    const auto num_classes = static_cast<int>(out.front().label.size());
    if (source_label < 0 || source_label >= num_classes) {
        throw ConfigError("source_label " + std::to_string(source_label) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    if (target && (*target < 0 || *target >= num_classes)) throw ConfigError("target label out of range");
    if (!(part_of_labels >= 0.0 && part_of_labels <= 1.0)) throw ConfigError("part_of_labels must be in [0, 1]");

    Rng rng(seed);
    for (auto& ex : out) {
        if (ex.class_index() != source_label) continue;
        if (!(rng.uniform01() < part_of_labels)) continue;
        const int to = target ? *target : rng.uniform_int(0, num_classes - 1);
        ex.label = one_hot(static_cast<std::size_t>(num_classes), to);
    }
    return out;
}

Examples poison_random_pixels(std::span<const LabeledExample> data, double perc_img, int nr_pixels, double threshold,
                              std::uint64_t seed, int group) {
    if (!(perc_img >= 0.0 && perc_img <= 1.0)) throw ConfigError("perc_img must be in [0, 1]");
    if (!(threshold >= 0.0 && threshold < 1.0)) throw ConfigError("pixel threshold must be in [0, 1)");
    if (nr_pixels < 0) throw ConfigError("nr_pixels must be >= 0");
    if (group < 1) throw ConfigError("pixel group must be >= 1");

    Examples out(data.begin(), data.end());
    const auto picked = static_cast<std::size_t>(std::floor(perc_img * static_cast<double>(out.size())));
    if (picked == 0 || nr_pixels == 0) return out;

    // Distinct images via a partial Fisher-Yates pass.
    std::vector<std::size_t> indices(out.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < picked; ++i) {
        const auto j = i + rng.uniform_index(indices.size() - i);
        std::swap(indices[i], indices[j]);
    }

    const auto g = static_cast<std::size_t>(group);
    for (std::size_t i = 0; i < picked; ++i) {
        auto& features = out[indices[i]].features;
        if (features.size() % g != 0) throw PreconditionError("pixel group does not divide the feature length");
        const std::size_t groups = features.size() / g;
        for (int p = 0; p < nr_pixels; ++p) {
            const std::size_t base = rng.uniform_index(groups) * g;
            for (std::size_t c = 0; c < g; ++c) {
                const double v = features[base + c];
                features[base + c] = std::nearbyint(rng.uniform(v * (1.0 - threshold), v * (1.0 + threshold)));
            }
        }
    }
    return out;
}

ParameterVector lazy_update(const ParameterVector& received) { return received; }

Examples apply_data_poison(std::span<const LabeledExample> data, const PoisonConfig& cfg) {
    switch (cfg.strategy) {
        case PoisonStrategy::random_label:
            return poison_random_labels(data, cfg.no_labels, cfg.rng_seed);
        case PoisonStrategy::specific_label:
            return poison_specific_labels(data, cfg.source_label, cfg.target_label, cfg.part_of_labels,
                                          cfg.rng_seed);
        case PoisonStrategy::random_pixel:
            return poison_random_pixels(data, cfg.perc_img, cfg.nr_pixels, cfg.pixel_threshold, cfg.rng_seed,
                                        cfg.pixel_group);
        case PoisonStrategy::none:
        case PoisonStrategy::lazy:
            break;
    }
    return Examples(data.begin(), data.end());
}

}  // namespace fedsim
