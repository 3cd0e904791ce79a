#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim::test {

/// Random examples with features in [-1, 1] and uniform labels.
inline Examples random_examples(std::size_t n, int dim, int classes, std::uint64_t seed) {
    Rng rng(seed);
    Examples out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> f(static_cast<std::size_t>(dim));
        for (double& v : f) v = rng.uniform(-1.0, 1.0);
        out.push_back(LabeledExample::make(std::move(f), rng.uniform_int(0, classes - 1), classes));
    }
    return out;
}

/// Desk-scale synthetic setup shared by the federation-level tests.
struct SmallWorld {
    std::vector<ClientShard> shards;
    Examples test;
    ModelShape shape;
};

inline SmallWorld make_world(std::uint64_t seed, int clients = 10, int per_client = 200, int dim = 16,
                             double separation = 4.0) {
    DatasetSpec spec;
    spec.feature_dim = dim;
    spec.examples_per_client = per_client;
    spec.test_set_size = 1000;
    spec.class_separation = separation;
    spec.generator_seed = seed;
    auto ds = generate_synthetic_dataset(spec, static_cast<std::size_t>(per_client * clients));
    return {partition_homogeneous(ds.train, clients, seed + 1), std::move(ds.test), ModelShape{dim, 0, 10}};
}

inline std::vector<ClientState> clean_clients(const std::vector<ClientShard>& shards) {
    std::vector<ClientState> out;
    for (const auto& s : shards) out.push_back({s.client_id, s, PoisonConfig{}, true});
    return out;
}

}  // namespace fedsim::test
