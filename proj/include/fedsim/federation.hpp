#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "fedsim/attacks.hpp"
#include "fedsim/data.hpp"
#include "fedsim/detector.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct ClientState {
    int client_id = 0;
    ClientShard shard;
    PoisonConfig poison;
    bool active = true;
};

struct RoundRecord {
    int round = 0;
    double global_accuracy = 0.0;
    std::map<int, double> client_accuracies;
    std::map<int, std::vector<std::optional<double>>> client_label_accuracies;
    std::vector<DetectionEvent> flags;
    // Clients that trained and were evaluated this round, ascending.
    std::vector<int> active_clients;
    // Clients whose update entered this round's aggregate.
    std::vector<int> aggregated_clients;
    // Clients blacklisted at the end of this round.
    std::vector<int> blacklisted;

    bool flagged(int client_id) const;
    bool operator==(const RoundRecord&) const = default;
};

struct BlacklistPolicy {
    int detections_required = 3;
    int window_rounds = 10;
    bool enabled = true;

    void validate() const;
};

struct WeightedUpdate {
    int client_id = 0;
    ParameterVector params;
    std::size_t sample_count = 0;
};

/// Sample-count weighted coordinate mean, accumulated in ascending client_id.
ParameterVector aggregate_fedavg(std::span<const WeightedUpdate> updates);

/// Clients flagged in at least detections_required of the rounds
/// [last - window_rounds + 1, last], where last is the newest record's round.
/// Empty when the policy is disabled.
std::set<int> apply_blacklist_policy(std::span<const RoundRecord> history, const BlacklistPolicy& policy);

using RoundDetector = std::function<std::vector<DetectionEvent>(std::span<const ClientAccuracies>, int round)>;

struct FederationOptions {
    TrainConfig train;
    std::optional<DetectorConfig> detector;
    BlacklistPolicy blacklist;
    // Drop an update from the aggregate when its client was flagged in the
    // previous round (without blacklisting it).
    bool discard_on_arrival = false;
    int workers = 1;
    NoticeSink notice;
};

struct RunResult {
    std::vector<RoundRecord> records;
    // Round at which the run stopped because every client was blacklisted.
    std::optional<int> halted_at;
};

/// Synchronous FedAvg simulation. Each round every active client trains from
/// the current global model on its round partition (poisoned per its
/// PoisonConfig, or skipping training when lazy); the server aggregates,
/// evaluates the global and every individual model on the test set, runs the
/// detector and applies the blacklist. Blacklisted clients are excluded from
/// the next round on, permanently.
class Federation {
public:
    Federation(std::vector<ClientState> clients, Examples test_set, ParameterVector initial,
               FederationOptions options, RoundDetector detector = {});

    /// Rounds must be run in order 0, 1, 2, ...
    /// Throws FederationHalted when no client is active.
    RoundRecord run_round(int round);

    /// Runs rounds [next, next + rounds) and stops early if every client ends
    /// up blacklisted.
    RunResult run(int rounds);

    const ParameterVector& global_model() const { return global_; }
    const std::vector<RoundRecord>& history() const { return history_; }
    std::vector<int> active_clients() const;
    const std::vector<ClientState>& clients() const { return clients_; }

private:
    struct ClientOutcome {
        ParameterVector params;
        std::size_t sample_count = 0;
        EvalResult eval;
    };

    ClientOutcome run_client(std::size_t index, int round) const;
    std::vector<ClientOutcome> run_clients(std::span<const std::size_t> indices, int round) const;

    std::vector<ClientState> clients_;
    std::vector<Examples> poisoned_;  // full shard after the data attack, per client
    Examples test_set_;
    ParameterVector global_;
    FederationOptions options_;
    RoundDetector detector_;
    std::vector<RoundRecord> history_;
    std::set<int> blacklist_;
    int next_round_ = 0;
};

}  // namespace fedsim
