#include "fedsim/reporting.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <system_error>

#include "fedsim/errors.hpp"

namespace fedsim {

double ConfusionMatrix::false_positive_rate() const {
    const auto negatives = actual_negative();
    return negatives == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(negatives);
}

void ConfusionMatrix::add_round(const RoundRecord& record, const std::set<int>& poisoned) {
    for (int id : record.active_clients) {
        const bool positive = record.flagged(id);
        const bool actual = poisoned.contains(id);
        if (positive && actual) {
            ++tp;
        } else if (positive) {
            ++fp;
        } else if (actual) {
            ++fn;
        } else {
            ++tn;
        }
    }
}

ConfusionMatrix update_confusion_matrix(std::span<const RoundRecord> records, const std::set<int>& poisoned) {
    ConfusionMatrix m;
    for (const auto& r : records) m.add_round(r, poisoned);
    return m;
}

std::string_view to_string(AttackClass c) {
    switch (c) {
        case AttackClass::successful: return "successful";
        case AttackClass::insufficient: return "insufficient";
        case AttackClass::excessive: return "excessive";
    }
    return "unknown";
}

AttackClass classify_delta(double delta_pp) {
    constexpr double slack = 1e-9;
    if (delta_pp > -1.0 + slack) return AttackClass::insufficient;
    if (delta_pp < -1.5 - slack) return AttackClass::excessive;
    return AttackClass::successful;
}

AttackOutcome classify_attack_success(double baseline, double poisoned) {
    AttackOutcome o;
    o.baseline_accuracy = baseline;
    o.poisoned_accuracy = poisoned;
    o.delta_pp = (poisoned - baseline) * 100.0;
    o.classification = classify_delta(o.delta_pp);
    return o;
}

std::string format_fixed(double value, int decimals) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed, decimals);
    if (ec != std::errc{}) return "nan";
    return std::string(buf, ptr);
}

std::string render_rounds_csv(std::span<const RoundRecord> records, int num_classes) {
    std::string out = "round,client_id,overall_acc";
    for (int l = 0; l < num_classes; ++l) out += ",label_" + std::to_string(l);
    out += ",flag_causes\n";

    for (const auto& r : records) {
        for (int id : r.active_clients) {
            out += std::to_string(r.round) + "," + std::to_string(id) + "," + format_fixed(r.client_accuracies.at(id));
            const auto& labels = r.client_label_accuracies.at(id);
            for (int l = 0; l < num_classes; ++l) {
                out += ",";
                const auto idx = static_cast<std::size_t>(l);
                if (idx < labels.size() && labels[idx]) out += format_fixed(*labels[idx]);
            }
            out += ",";
            bool first = true;
            for (const auto& e : r.flags) {
                if (e.client_id != id) continue;
                if (!first) out += ";";
                out += e.cause_name();
                first = false;
            }
            out += "\n";
        }
    }
    return out;
}

nlohmann::ordered_json build_summary(std::span<const RoundRecord> records, const ConfusionMatrix& matrix,
                                     const std::optional<AttackOutcome>& outcome, const ReportContext& context) {
    using nlohmann::ordered_json;
    ordered_json s;
    s["config"] = context.config;
    s["terminal_state"] = context.terminal_state;
    s["rounds_completed"] = records.size();
    s["poisoned_clients"] = context.poisoned_clients;
    s["confusion_matrix"] = ordered_json{{"tp", matrix.tp},
                                         {"fp", matrix.fp},
                                         {"fn", matrix.fn},
                                         {"tn", matrix.tn},
                                         {"total", matrix.total()}};
    if (outcome) {
        s["attack_outcome"] = ordered_json{{"baseline_accuracy", outcome->baseline_accuracy},
                                           {"poisoned_accuracy", outcome->poisoned_accuracy},
                                           {"delta_pp", outcome->delta_pp},
                                           {"classification", to_string(outcome->classification)}};
    } else {
        s["attack_outcome"] = nullptr;
    }

    auto timeline = ordered_json::array();
    auto trajectory = ordered_json::array();
    std::map<int, int> flagged_rounds;
    for (const auto& r : records) {
        for (int id : r.blacklisted) timeline.push_back(ordered_json{{"round", r.round}, {"client_id", id}});
        trajectory.push_back(r.global_accuracy);
        for (int id : r.active_clients) {
            if (r.flagged(id)) ++flagged_rounds[id];
        }
    }
    s["blacklist_timeline"] = std::move(timeline);
    s["global_accuracy"] = std::move(trajectory);
    auto flagged = ordered_json::object();
    for (const auto& [id, n] : flagged_rounds) flagged[std::to_string(id)] = n;
    s["flagged_rounds_per_client"] = std::move(flagged);
    return s;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void emit_reports(std::span<const RoundRecord> records, const ConfusionMatrix& matrix,
                  const std::optional<AttackOutcome>& outcome, const ReportContext& context,
                  const std::filesystem::path& destination) {
    std::error_code ec;
    std::filesystem::create_directories(destination, ec);
    if (ec) throw IoError("cannot create output directory " + destination.string() + ": " + ec.message());
    write_file(destination / "rounds.csv", render_rounds_csv(records, context.num_classes));
    write_file(destination / "summary.json", build_summary(records, matrix, outcome, context).dump(2) + "\n");
}

}  // namespace fedsim
