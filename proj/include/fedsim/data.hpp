#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace fedsim {

/// One training or test sample: a feature vector and a one-hot class label.
struct LabeledExample {
    std::vector<double> features;
    std::vector<double> label;

    static LabeledExample make(std::vector<double> features, int class_index, int num_classes);

    /// Index of the largest label entry (the class for a valid one-hot label).
    int class_index() const;
    bool has_valid_label() const;

    bool operator==(const LabeledExample&) const = default;
};

using Examples = std::vector<LabeledExample>;

struct DatasetSpec {
    int num_classes = 10;
    int feature_dim = 64;
    int examples_per_client = 500;
    int test_set_size = 2000;
    std::uint64_t generator_seed = 0;
    // Distance between any two class means, in units of the shared spread.
    double class_separation = 4.0;
    // Map features onto the integer range [0, 255] (used with pixel attacks).
    bool pixel_scale = false;

    void validate() const;
};

// Affine map applied to generator output when DatasetSpec::pixel_scale is set:
// stored = clamp(round(kPixelOffset + kPixelGain * raw), 0, 255).
inline constexpr double kPixelOffset = 127.5;
inline constexpr double kPixelGain = 20.0;

struct SyntheticDataset {
    Examples train;
    Examples test;
    // Class means in raw (unscaled) feature space, one row per class.
    std::vector<std::vector<double>> class_means;
};

/// Draws `train_size` training and spec.test_set_size test examples from
/// num_classes isotropic Gaussian clusters (unit spread). Class means are
/// orthogonal when num_classes <= feature_dim, so every pair sits exactly
/// class_separation apart. Labels are assigned round-robin before shuffling,
/// which keeps every class count within one of the others.
SyntheticDataset generate_synthetic_dataset(const DatasetSpec& spec, std::size_t train_size);

struct ClientShard {
    int client_id = 0;
    Examples partition_a;
    Examples partition_b;

    std::size_t size() const { return partition_a.size() + partition_b.size(); }
    /// partition_a followed by partition_b.
    Examples concatenated() const;
};

/// Splits `train` into num_clients equal shards, each made of two equal
/// partitions. Examples are stratified by class before being dealt, so every
/// shard mirrors the global class proportions. When |train| is not a multiple
/// of 2 * num_clients the excess examples (taken from the end of the
/// stratified order) are dropped.
std::vector<ClientShard> partition_homogeneous(std::span<const LabeledExample> train, int num_clients,
                                               std::uint64_t seed);

/// partition_a on even rounds, partition_b on odd rounds.
const Examples& select_round_partition(const ClientShard& shard, int round);

/// Reads the flat dataset format: one example per line, `D` comma-separated
/// reals followed by an integer class label in [0, num_classes). Blank lines
/// are ignored. feature_dim of 0 accepts whatever width the first line has.
Examples load_examples_csv(const std::filesystem::path& path, int num_classes, int feature_dim = 0);

}  // namespace fedsim
