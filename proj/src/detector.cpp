#include "fedsim/detector.hpp"

#include <cmath>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {

void ThresholdCurve::validate() const {
    for (double v : {round_offset, decay_exponent, log_coefficient, root_exponent, gain, percent}) {
        if (!std::isfinite(v)) throw ConfigError("detector.threshold constants must be finite");
    }
    // ln x must be positive at round 0.
    if (!(round_offset > 1.0)) throw ConfigError("detector.threshold.round_offset must be > 1");
    if (!(log_coefficient > 0.0)) throw ConfigError("detector.threshold.log_coefficient must be positive");
    if (!(gain > 0.0)) throw ConfigError("detector.threshold.gain must be positive");
    if (!(percent > 0.0)) throw ConfigError("detector.threshold.percent must be positive");
}

std::string_view to_string(DetectorVersion version) {
    return version == DetectorVersion::aadd_1_0 ? "AADD_1_0" : "AADD_2_0";
}

DetectorVersion parse_detector_version(std::string_view name) {
    if (name == "AADD_1_0") return DetectorVersion::aadd_1_0;
    if (name == "AADD_2_0") return DetectorVersion::aadd_2_0;
    throw ConfigError("unknown detector version '" + std::string(name) + "' (expected AADD_1_0 or AADD_2_0)");
}

void DetectorConfig::validate() const {
    if (!(average_scale > 0.0) || !std::isfinite(average_scale)) {
        throw ConfigError("detector.average_scale must be positive");
    }
    if (!(label_scale > 0.0) || !std::isfinite(label_scale)) throw ConfigError("detector.label_scale must be positive");
    curve.validate();
}

double epsilon_threshold(int round, double scale, const ThresholdCurve& curve) {
    const double x = static_cast<double>(round) + curve.round_offset;
    const double base = std::pow(x, curve.decay_exponent) *
                        std::pow(curve.log_coefficient * std::log(x), curve.root_exponent) * curve.gain /
                        curve.percent;
    return base * scale;
}

bool check_average_deviation(double client_acc, double mean_acc, int round, double scale,
                             const ThresholdCurve& curve) {
    return (mean_acc - epsilon_threshold(round, scale, curve)) > client_acc;
}

bool check_label_deviation(double client_label_acc, double mean_label_acc, int round, double label_scale,
                           const ThresholdCurve& curve) {
    return (mean_label_acc - epsilon_threshold(round, label_scale, curve)) > client_label_acc;
}

std::string DetectionEvent::cause_name() const {
    return cause == DetectionCause::average_deviation ? "average" : "label_" + std::to_string(label);
}

std::vector<DetectionEvent> detect_round(std::span<const ClientAccuracies> clients, int round,
                                         const DetectorConfig& cfg, const NoticeSink& notice) {
    std::vector<DetectionEvent> events;
    if (clients.size() < 2) {
        if (notice) notice("round " + std::to_string(round) + ": fewer than two active clients, detection skipped");
        return events;
    }
    const auto n = static_cast<double>(clients.size());

    double mean = 0.0;
    for (const auto& c : clients) mean += c.overall;
    mean /= n;
    const double avg_threshold = epsilon_threshold(round, cfg.average_scale, cfg.curve);

    // Per-label means over labels every client reports.
    std::size_t num_labels = 0;
    std::vector<std::optional<double>> label_mean;
    if (cfg.version == DetectorVersion::aadd_2_0) {
        num_labels = clients.front().per_label.size();
        for (const auto& c : clients) {
            if (c.per_label.size() != num_labels) throw PreconditionError("clients report different label counts");
        }
        label_mean.resize(num_labels);
        for (std::size_t l = 0; l < num_labels; ++l) {
            double sum = 0.0;
            bool present = true;
            for (const auto& c : clients) {
                if (!c.per_label[l]) {
                    present = false;
                    break;
                }
                sum += *c.per_label[l];
            }
            if (present) {
                label_mean[l] = sum / n;
            } else if (notice) {
                notice("round " + std::to_string(round) + ": label " + std::to_string(l) +
                       " missing from some evaluations, skipped");
            }
        }
    }
    const double label_threshold = epsilon_threshold(round, cfg.label_scale, cfg.curve);

    for (const auto& c : clients) {
        if (check_average_deviation(c.overall, mean, round, cfg.average_scale, cfg.curve)) {
            events.push_back({round, c.client_id, DetectionCause::average_deviation, -1, c.overall, mean,
                              avg_threshold});
        }
        for (std::size_t l = 0; l < num_labels; ++l) {
            if (!label_mean[l]) continue;
            const double observed = *c.per_label[l];
            if (check_label_deviation(observed, *label_mean[l], round, cfg.label_scale, cfg.curve)) {
                events.push_back({round, c.client_id, DetectionCause::label_deviation, static_cast<int>(l), observed,
                                  *label_mean[l], label_threshold});
            }
        }
    }
    return events;
}

}  // namespace fedsim
