#include "fedsim/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

LabeledExample LabeledExample::make(std::vector<double> features, int class_index, int num_classes) {
    if (class_index < 0 || class_index >= num_classes) {
        throw ConfigError("class index " + std::to_string(class_index) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    LabeledExample ex{std::move(features), std::vector<double>(static_cast<std::size_t>(num_classes), 0.0)};
    ex.label[static_cast<std::size_t>(class_index)] = 1.0;
    return ex;
}

int LabeledExample::class_index() const {
    return static_cast<int>(std::max_element(label.begin(), label.end()) - label.begin());
}

bool LabeledExample::has_valid_label() const {
    int ones = 0;
    for (double v : label) {
        if (v == 1.0) {
            ++ones;
        } else if (v != 0.0) {
            return false;
        }
    }
    return ones == 1;
}

void DatasetSpec::validate() const {
    if (num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
    if (feature_dim <= 0) throw ConfigError("dataset.feature_dim must be positive");
    if (examples_per_client <= 0) throw ConfigError("dataset.examples_per_client must be positive");
    if (examples_per_client % 2 != 0) throw ConfigError("dataset.examples_per_client must be even");
    if (test_set_size <= 0) throw ConfigError("dataset.test_set_size must be positive");
    if (!(class_separation > 0.0) || !std::isfinite(class_separation)) {
        throw ConfigError("dataset.class_separation must be positive");
    }
}

namespace {

std::vector<std::vector<double>> make_class_means(const DatasetSpec& spec, Rng& rng) {
    const auto dim = static_cast<std::size_t>(spec.feature_dim);
    const auto classes = static_cast<std::size_t>(spec.num_classes);
    const double radius = spec.class_separation / std::sqrt(2.0);

    std::vector<std::vector<double>> means;
    means.reserve(classes);
    while (means.size() < classes) {
        std::vector<double> v(dim);
        for (double& x : v) x = rng.normal();
        // Orthogonalise against earlier means while there is room for it.
        if (means.size() < dim) {
            for (const auto& m : means) {
                const double proj = std::inner_product(v.begin(), v.end(), m.begin(), 0.0) / (radius * radius);
                for (std::size_t j = 0; j < dim; ++j) v[j] -= proj * m[j];
            }
        }
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (norm < 1e-6) continue;
        for (double& x : v) x *= radius / norm;
        means.push_back(std::move(v));
    }
    return means;
}

Examples draw_examples(const DatasetSpec& spec, const std::vector<std::vector<double>>& means, std::size_t count,
                       Rng& rng) {
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.num_classes));
    rng.shuffle(std::span<int>(labels));

    Examples out;
    out.reserve(count);
    for (int label : labels) {
        const auto& mean = means[static_cast<std::size_t>(label)];
        std::vector<double> features(mean.size());
        for (std::size_t j = 0; j < mean.size(); ++j) {
            const double raw = mean[j] + rng.normal();
            features[j] = spec.pixel_scale ? std::clamp(std::nearbyint(kPixelOffset + kPixelGain * raw), 0.0, 255.0)
                                           : raw;
        }
        out.push_back(LabeledExample::make(std::move(features), label, spec.num_classes));
    }
    return out;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(const DatasetSpec& spec, std::size_t train_size) {
    spec.validate();
    if (train_size == 0) throw ConfigError("training set size must be positive");

    Rng rng(spec.generator_seed);
    SyntheticDataset ds;
    ds.class_means = make_class_means(spec, rng);
    ds.train = draw_examples(spec, ds.class_means, train_size, rng);
    ds.test = draw_examples(spec, ds.class_means, static_cast<std::size_t>(spec.test_set_size), rng);
    return ds;
}

Examples ClientShard::concatenated() const {
    Examples all;
    all.reserve(size());
    all.insert(all.end(), partition_a.begin(), partition_a.end());
    all.insert(all.end(), partition_b.begin(), partition_b.end());
    return all;
}

std::vector<ClientShard> partition_homogeneous(std::span<const LabeledExample> train, int num_clients,
                                               std::uint64_t seed) {
    if (num_clients <= 0) throw ConfigError("num_clients must be positive");
    const auto slots = 2 * static_cast<std::size_t>(num_clients);
    const std::size_t usable = train.size() / slots * slots;
    if (usable == 0) throw ConfigError("training set too small for the requested number of clients");

    // Class-sorted order, shuffled within each class.
    int num_labels = 0;
    for (const auto& ex : train) num_labels = std::max(num_labels, static_cast<int>(ex.label.size()));
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_labels));
    for (std::size_t i = 0; i < train.size(); ++i) {
        by_class[static_cast<std::size_t>(train[i].class_index())].push_back(i);
    }
    Rng rng(seed);
    std::vector<std::size_t> order;
    order.reserve(train.size());
    for (auto& members : by_class) {
        rng.shuffle(std::span<std::size_t>(members));
        order.insert(order.end(), members.begin(), members.end());
    }

    // Deal round-robin over (client, partition) slots so every partition is
    // stratified as well.
    std::vector<ClientShard> shards(static_cast<std::size_t>(num_clients));
    for (std::size_t c = 0; c < shards.size(); ++c) {
        shards[c].client_id = static_cast<int>(c);
        shards[c].partition_a.reserve(usable / slots);
        shards[c].partition_b.reserve(usable / slots);
    }
    for (std::size_t i = 0; i < usable; ++i) {
        const std::size_t slot = i % slots;
        auto& shard = shards[slot / 2];
        (slot % 2 == 0 ? shard.partition_a : shard.partition_b).push_back(train[order[i]]);
    }
    for (auto& shard : shards) {
        rng.shuffle(std::span<LabeledExample>(shard.partition_a));
        rng.shuffle(std::span<LabeledExample>(shard.partition_b));
    }
    return shards;
}

const Examples& select_round_partition(const ClientShard& shard, int round) {
    if (round < 0) throw PreconditionError("round must be non-negative");
    return round % 2 == 0 ? shard.partition_a : shard.partition_b;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

Examples load_examples_csv(const std::filesystem::path& path, int num_classes, int feature_dim) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file " + path.string());

    Examples out;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& what) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + what);
    };
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view rest = trim(line);
        if (rest.empty()) continue;

        std::vector<std::string_view> fields;
        for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos;) {
            fields.push_back(trim(rest.substr(0, pos)));
            rest.remove_prefix(pos + 1);
        }
        fields.push_back(trim(rest));
        if (fields.size() < 2) fail("expected features followed by a label");

        const auto width = static_cast<int>(fields.size()) - 1;
        if (feature_dim == 0) feature_dim = width;
        if (width != feature_dim) {
            fail("expected " + std::to_string(feature_dim) + " features, found " + std::to_string(width));
        }

        std::vector<double> features(static_cast<std::size_t>(width));
        for (int j = 0; j < width; ++j) {
            const auto f = fields[static_cast<std::size_t>(j)];
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), features[static_cast<std::size_t>(j)]);
            if (ec != std::errc{} || ptr != f.data() + f.size()) fail("bad feature value '" + std::string(f) + "'");
        }
        const auto lf = fields.back();
        int label = -1;
        auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
        if (ec != std::errc{} || ptr != lf.data() + lf.size() || label < 0 || label >= num_classes) {
            fail("bad class label '" + std::string(lf) + "'");
        }
        out.push_back(LabeledExample::make(std::move(features), label, num_classes));
    }
    return out;
}

}  // namespace fedsim
