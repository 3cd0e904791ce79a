#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class PoisonStrategy { none, random_label, specific_label, random_pixel, lazy };

std::string_view to_string(PoisonStrategy strategy);
PoisonStrategy parse_poison_strategy(std::string_view name);

struct PoisonConfig {
    PoisonStrategy strategy = PoisonStrategy::none;

    // random_label
    int no_labels = 800;

    // specific_label; nullopt target means "random class per example"
    int source_label = 4;
    std::optional<int> target_label = 5;
    double part_of_labels = 1.0;

    // random_pixel
    double perc_img = 1.0;
    int nr_pixels = 600;
    double pixel_threshold = 0.5;
    int pixel_group = 1;

    std::uint64_t rng_seed = 0;

    /// feature_dim of 0 skips the pixel-group divisibility check.
    void validate(int num_classes, int feature_dim) const;
    bool poisons_data() const;
};

/// Runs no_labels iterations; each draws a class and overwrites one label in
/// the first half of `data` and one in the second half with it. Repeated
/// indices are allowed, the last write wins.
Examples poison_random_labels(std::span<const LabeledExample> data, int no_labels, std::uint64_t seed);

/// Relabels examples of class source_label, each with probability
/// part_of_labels, to `target` or (when target is nullopt) to an
/// independently drawn class. The draw may return source_label itself.
Examples poison_specific_labels(std::span<const LabeledExample> data, int source_label, std::optional<int> target,
                                double part_of_labels, std::uint64_t seed);

/// Picks floor(perc_img * |data|) distinct examples. In each one, nr_pixels
/// times, a group of `group` consecutive coordinates is drawn (with
/// replacement) and every value v in it becomes
/// round(uniform(v * (1 - threshold), v * (1 + threshold))), with ties
/// rounded to even.
Examples poison_random_pixels(std::span<const LabeledExample> data, double perc_img, int nr_pixels, double threshold,
                              std::uint64_t seed, int group = 1);

/// Lazy clients skip training and return what they received.
ParameterVector lazy_update(const ParameterVector& received);

/// Applies the data transform selected by cfg (identity for none and lazy).
Examples apply_data_poison(std::span<const LabeledExample> data, const PoisonConfig& cfg);

}  // namespace fedsim
