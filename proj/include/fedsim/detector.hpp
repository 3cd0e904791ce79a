#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedsim {

using NoticeSink = std::function<void(const std::string&)>;

/// Round-dependent deviation tolerance of the accuracy-deviation detector:
///
///   eps(round) = x^decay * (log_coefficient * ln x)^root * gain * scale / percent,
///   x = round + round_offset.
///
/// The defaults are the published curve; every constant can be overridden
/// from the experiment config.
struct ThresholdCurve {
    double round_offset = 2.0;
    double decay_exponent = -1.0 / 1.5;
    double log_coefficient = 3300.0;
    double root_exponent = 1.0 / 3.0;
    double gain = 1.6;
    double percent = 100.0;

    void validate() const;
};

enum class DetectorVersion { aadd_1_0, aadd_2_0 };

std::string_view to_string(DetectorVersion version);
DetectorVersion parse_detector_version(std::string_view name);

struct DetectorConfig {
    DetectorVersion version = DetectorVersion::aadd_2_0;
    double average_scale = 1.0;
    double label_scale = 4.8;
    ThresholdCurve curve;

    void validate() const;
};

double epsilon_threshold(int round, double scale, const ThresholdCurve& curve = {});

/// True iff mean_acc - eps(round, scale) > client_acc.
bool check_average_deviation(double client_acc, double mean_acc, int round, double scale,
                             const ThresholdCurve& curve = {});

/// Same test applied to one label's accuracy, normally with the 4.8x scale.
bool check_label_deviation(double client_label_acc, double mean_label_acc, int round, double label_scale,
                           const ThresholdCurve& curve = {});

enum class DetectionCause { average_deviation, label_deviation };

struct DetectionEvent {
    int round = 0;
    int client_id = 0;
    DetectionCause cause = DetectionCause::average_deviation;
    int label = -1;  // only meaningful for label_deviation
    double observed = 0.0;
    double mean = 0.0;
    double threshold = 0.0;

    /// "average" or "label_<n>".
    std::string cause_name() const;
    bool operator==(const DetectionEvent&) const = default;
};

/// Accuracy of one client's individual model on the server test set.
/// per_label entries are nullopt for labels absent from the test set.
struct ClientAccuracies {
    int client_id = 0;
    double overall = 0.0;
    std::vector<std::optional<double>> per_label;
};

/// Flags clients whose accuracy falls too far below the mean over all
/// listed clients (the client under test included). AADD 2.0 adds the
/// per-label test; labels missing for any client are skipped. Events are
/// ordered by client (input order), average cause before label causes.
/// With fewer than two clients nothing is checked and a notice is emitted.
std::vector<DetectionEvent> detect_round(std::span<const ClientAccuracies> clients, int round,
                                         const DetectorConfig& cfg, const NoticeSink& notice = {});

}  // namespace fedsim
