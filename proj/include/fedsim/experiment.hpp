#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsim/attacks.hpp"
#include "fedsim/data.hpp"
#include "fedsim/detector.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/model.hpp"
#include "fedsim/reporting.hpp"

namespace fedsim {

struct PoisonedClient {
    int client_id = 0;
    PoisonConfig poison;
};

/// Everything needed to replay one experiment. Seeds left unset in the file
/// are derived from master_seed (see derive_component_seeds).
struct ExperimentConfig {
    DatasetSpec dataset;
    std::optional<std::filesystem::path> train_file;
    std::optional<std::filesystem::path> test_file;
    int num_clients = 10;
    int rounds = 16;
    TrainConfig train;
    int hidden_units = 0;
    std::vector<PoisonedClient> poisoned_clients;
    std::optional<DetectorConfig> detector = DetectorConfig{};
    BlacklistPolicy blacklist{.enabled = false};
    bool discard_on_arrival = false;
    bool compare_to_baseline = true;
    std::uint64_t master_seed = 0;
    std::filesystem::path output_dir = "fedsim-out";
    int workers = 1;

    // Which seeds were given explicitly in the file.
    bool explicit_generator_seed = false;
    bool explicit_train_seed = false;
    std::vector<bool> explicit_poison_seed;

    void validate() const;
    std::set<int> poisoned_ids() const;
};

/// Parses the JSON experiment format. Unknown keys are rejected by name;
/// syntax errors report line and column.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical JSON echo of a config in fixed key order. Leaves out output_dir
/// and workers, which do not affect results.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

/// Seeds for every component derived from master_seed:
///   generator = derive_seed(master, "dataset")
///   partition = derive_seed(master, "partition")
///   init      = derive_seed(master, "init")
///   train     = derive_seed(master, "train")
///   poison(i) = derive_seed(master, "poison", client_id)
/// Explicit seeds in the config take precedence.
struct ComponentSeeds {
    std::uint64_t generator = 0;
    std::uint64_t partition = 0;
    std::uint64_t init = 0;
    std::uint64_t train = 0;
};
ComponentSeeds derive_component_seeds(const ExperimentConfig& cfg);

/// Returns cfg with every derived seed filled in.
ExperimentConfig resolve_seeds(ExperimentConfig cfg);

struct ExperimentResult {
    ExperimentConfig config;  // seeds resolved
    RunResult run;
    std::optional<RunResult> baseline;
    ConfusionMatrix matrix;
    std::optional<AttackOutcome> outcome;
};

/// Builds data, clients and model, runs the federation and (when poisoned
/// clients exist and compare_to_baseline is set) a clean baseline with the
/// same seeds. Throws on any module error.
ExperimentResult execute_experiment(const ExperimentConfig& cfg, const NoticeSink& notice = {});

void write_reports(const ExperimentResult& result);

/// execute_experiment + write_reports; returns a process exit status and
/// prints diagnostics to stderr.
int run_experiment(const ExperimentConfig& cfg);

}  // namespace fedsim
