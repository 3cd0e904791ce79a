#include "fedsim/federation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <string>
#include <thread>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

bool RoundRecord::flagged(int client_id) const {
    return std::any_of(flags.begin(), flags.end(), [&](const DetectionEvent& e) { return e.client_id == client_id; });
}

void BlacklistPolicy::validate() const {
    if (detections_required < 1 || detections_required > window_rounds) {
        throw ConfigError("blacklist requires 1 <= detections_required <= window_rounds");
    }
}

ParameterVector aggregate_fedavg(std::span<const WeightedUpdate> updates) {
    if (updates.empty()) throw PreconditionError("aggregate_fedavg needs at least one update");

    std::vector<const WeightedUpdate*> ordered;
    ordered.reserve(updates.size());
    for (const auto& u : updates) ordered.push_back(&u);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const WeightedUpdate* a, const WeightedUpdate* b) { return a->client_id < b->client_id; });

    const auto& first = ordered.front()->params;
    for (const auto* u : ordered) {
        if (u->sample_count == 0) throw PreconditionError("update sample counts must be positive");
        if (!(u->params.shape == first.shape) || u->params.values.size() != first.values.size()) {
            throw ProtocolError("client " + std::to_string(u->client_id) + " sent parameters of a different shape");
        }
    }

    // Running weighted mean: identical inputs stay bit-identical and every
    // coordinate stays between the contributing values.
    ParameterVector mean = first;
    double seen = static_cast<double>(ordered.front()->sample_count);
    for (std::size_t k = 1; k < ordered.size(); ++k) {
        const auto& v = ordered[k]->params.values;
        const double n = static_cast<double>(ordered[k]->sample_count);
        seen += n;
        const double t = n / seen;
        for (std::size_t i = 0; i < v.size(); ++i) mean.values[i] += (v[i] - mean.values[i]) * t;
    }
    return mean;
}

std::set<int> apply_blacklist_policy(std::span<const RoundRecord> history, const BlacklistPolicy& policy) {
    std::set<int> out;
    if (!policy.enabled || history.empty()) return out;
    const int last = history.back().round;
    const int first = last - policy.window_rounds + 1;

    std::map<int, int> flagged_rounds;
    for (const auto& record : history) {
        if (record.round < first || record.round > last) continue;
        std::set<int> in_round;
        for (const auto& e : record.flags) in_round.insert(e.client_id);
        for (int id : in_round) ++flagged_rounds[id];
    }
    for (const auto& [id, count] : flagged_rounds) {
        if (count >= policy.detections_required) out.insert(id);
    }
    return out;
}

Federation::Federation(std::vector<ClientState> clients, Examples test_set, ParameterVector initial,
                       FederationOptions options, RoundDetector detector)
    : clients_(std::move(clients)),
      test_set_(std::move(test_set)),
      global_(std::move(initial)),
      options_(std::move(options)),
      detector_(std::move(detector)) {
    if (clients_.empty()) throw ConfigError("federation needs at least one client");
    if (test_set_.empty()) throw PreconditionError("federation needs a non-empty test set");
    options_.train.validate();
    options_.blacklist.validate();
    if (options_.detector) options_.detector->validate();
    if (options_.workers < 1) throw ConfigError("workers must be >= 1");
    if (global_.values.size() != global_.shape.parameter_count() || !global_.all_finite()) {
        throw PreconditionError("initial parameters are malformed");
    }

    std::sort(clients_.begin(), clients_.end(),
              [](const ClientState& a, const ClientState& b) { return a.client_id < b.client_id; });
    for (std::size_t i = 1; i < clients_.size(); ++i) {
        if (clients_[i].client_id == clients_[i - 1].client_id) throw ConfigError("duplicate client id");
    }
    for (const auto& c : clients_) {
        if (c.shard.partition_a.empty() || c.shard.partition_a.size() != c.shard.partition_b.size()) {
            throw PreconditionError("client " + std::to_string(c.client_id) +
                                    " needs two non-empty partitions of equal size");
        }
        if (!c.active) blacklist_.insert(c.client_id);
    }

    // Data attacks act on the whole shard (partition_a ++ partition_b) with a
    // fixed per-client seed; each round then reads its own half.
    poisoned_.resize(clients_.size());
    for (std::size_t i = 0; i < clients_.size(); ++i) {
        if (clients_[i].poison.poisons_data()) {
            poisoned_[i] = apply_data_poison(clients_[i].shard.concatenated(), clients_[i].poison);
        }
    }

    if (!detector_ && options_.detector) {
        detector_ = [cfg = *options_.detector, notice = options_.notice](std::span<const ClientAccuracies> accs,
                                                                         int round) {
            return detect_round(accs, round, cfg, notice);
        };
    }
}

std::vector<int> Federation::active_clients() const {
    std::vector<int> ids;
    for (const auto& c : clients_) {
        if (c.active) ids.push_back(c.client_id);
    }
    return ids;
}

Federation::ClientOutcome Federation::run_client(std::size_t index, int round) const {
    const auto& client = clients_[index];
    std::span<const LabeledExample> data = select_round_partition(client.shard, round);
    if (!poisoned_[index].empty()) {
        const std::size_t half = client.shard.partition_a.size();
        const std::span<const LabeledExample> all(poisoned_[index]);
        data = round % 2 == 0 ? all.first(half) : all.subspan(half);
    }

    ClientOutcome out;
    out.sample_count = data.size();
    if (client.poison.strategy == PoisonStrategy::lazy) {
        out.params = lazy_update(global_);
    } else {
        TrainConfig cfg = options_.train;
        cfg.rng_seed = derive_seed(derive_seed(options_.train.rng_seed, "client", static_cast<std::uint64_t>(client.client_id)),
                                   "round", static_cast<std::uint64_t>(round));
        out.params = train_local(global_, data, cfg);
    }
    out.eval = evaluate(out.params, test_set_);
    return out;
}

std::vector<Federation::ClientOutcome> Federation::run_clients(std::span<const std::size_t> indices,
                                                               int round) const {
    std::vector<ClientOutcome> results(indices.size());
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(options_.workers), indices.size());
    if (workers <= 1) {
        for (std::size_t k = 0; k < indices.size(); ++k) results[k] = run_client(indices[k], round);
        return results;
    }

    // Each slot is written by exactly one worker; results do not depend on
    // completion order.
    std::vector<std::exception_ptr> errors(indices.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t k; (k = next.fetch_add(1)) < indices.size();) {
                try {
                    results[k] = run_client(indices[k], round);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

RoundRecord Federation::run_round(int round) {
    if (round != next_round_) {
        throw PreconditionError("expected round " + std::to_string(next_round_) + ", got " + std::to_string(round));
    }
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < clients_.size(); ++i) {
        if (clients_[i].active) indices.push_back(i);
    }
    if (indices.empty()) throw FederationHalted("every client is blacklisted; no round can run");

    auto outcomes = run_clients(indices, round);

    RoundRecord record;
    record.round = round;

    std::vector<WeightedUpdate> updates;
    std::vector<ClientAccuracies> accuracies;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const int id = clients_[indices[k]].client_id;
        auto& outcome = outcomes[k];
        record.active_clients.push_back(id);
        record.client_accuracies[id] = outcome.eval.overall_accuracy;

        std::vector<std::optional<double>> per_label(outcome.eval.per_label_accuracy.size());
        for (std::size_t l = 0; l < per_label.size(); ++l) {
            if (outcome.eval.per_label_counts[l] > 0) per_label[l] = outcome.eval.per_label_accuracy[l];
        }
        record.client_label_accuracies[id] = per_label;
        accuracies.push_back({id, outcome.eval.overall_accuracy, std::move(per_label)});

        const bool discard = options_.discard_on_arrival && !history_.empty() && history_.back().flagged(id);
        if (!discard) {
            record.aggregated_clients.push_back(id);
            updates.push_back({id, std::move(outcome.params), outcome.sample_count});
        }
    }

    if (!updates.empty()) global_ = aggregate_fedavg(updates);
    record.global_accuracy = evaluate(global_, test_set_).overall_accuracy;

    if (detector_) record.flags = detector_(accuracies, round);

    history_.push_back(record);
    for (int id : apply_blacklist_policy(history_, options_.blacklist)) {
        if (blacklist_.insert(id).second) {
            record.blacklisted.push_back(id);
            for (auto& c : clients_) {
                if (c.client_id == id) c.active = false;
            }
        }
    }
    history_.back().blacklisted = record.blacklisted;
    ++next_round_;
    return record;
}

RunResult Federation::run(int rounds) {
    RunResult result;
    const int end = next_round_ + rounds;
    while (next_round_ < end) {
        if (active_clients().empty()) {
            result.halted_at = next_round_;
            break;
        }
        result.records.push_back(run_round(next_round_));
    }
    return result;
}

}  // namespace fedsim
