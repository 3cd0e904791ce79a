#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "fedsim/federation.hpp"

namespace fedsim {

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    std::size_t actual_positive() const { return tp + fn; }
    std::size_t actual_negative() const { return fp + tn; }
    double false_positive_rate() const;

    /// One decision per active client: positive if it has at least one event.
    void add_round(const RoundRecord& record, const std::set<int>& poisoned);

    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix update_confusion_matrix(std::span<const RoundRecord> records, const std::set<int>& poisoned);

enum class AttackClass { successful, insufficient, excessive };

std::string_view to_string(AttackClass c);

struct AttackOutcome {
    double baseline_accuracy = 0.0;
    double poisoned_accuracy = 0.0;
    double delta_pp = 0.0;
    AttackClass classification = AttackClass::insufficient;
};

/// Successful when the drop lies in [1.0, 1.5] percentage points (closed;
/// boundaries get 1e-9 pp of slack for representation error).
AttackClass classify_delta(double delta_pp);
AttackOutcome classify_attack_success(double baseline, double poisoned);

/// Header `round,client_id,overall_acc,label_0..label_{C-1},flag_causes`, one
/// row per (round, active client). Absent labels are left empty.
std::string render_rounds_csv(std::span<const RoundRecord> records, int num_classes);

struct ReportContext {
    nlohmann::ordered_json config;  // echoed verbatim
    int num_classes = 0;
    std::string terminal_state = "completed";
    std::set<int> poisoned_clients;
};

nlohmann::ordered_json build_summary(std::span<const RoundRecord> records, const ConfusionMatrix& matrix,
                                     const std::optional<AttackOutcome>& outcome, const ReportContext& context);

/// Writes rounds.csv and summary.json into `destination` (created if needed).
void emit_reports(std::span<const RoundRecord> records, const ConfusionMatrix& matrix,
                  const std::optional<AttackOutcome>& outcome, const ReportContext& context,
                  const std::filesystem::path& destination);

/// Fixed six-decimal rendering used by the CSV.
std::string format_fixed(double value, int decimals = 6);

}  // namespace fedsim
