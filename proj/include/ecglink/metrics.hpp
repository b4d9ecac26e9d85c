#pragma once

// Evaluation of linkage outcomes. Truth labels are a known class index for
// windows of known participants and Unknown for windows of participants the
// attacker never trained on. Undefined rates (an empty population) are NaN.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ecglink/label.hpp"
#include "json.hpp"

namespace ecglink::metrics {

struct SampleMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Accuracy counts Unknown as one more class. Precision, recall and F1 are
// per-class over the known classes present in truth, then averaged; a class
// never predicted has precision 0. Throws MetricError on empty or misaligned
// input.
SampleMetrics sample_metrics(std::span<const Label> truth, std::span<const Label> predicted);

struct ConfusionCounts {
    std::size_t known_count = 0;    // windows whose truth is a known class
    std::size_t unknown_count = 0;  // windows of unknown participants
    std::size_t known_correct = 0;  // known windows given their own class
    std::size_t known_wrong_class = 0;
    std::size_t uk_to_k = 0;  // unknown windows given some known class
    std::size_t k_to_u = 0;   // known windows rejected as Unknown
    std::size_t all_count() const { return known_count + unknown_count; }
};

ConfusionCounts confusion(std::span<const Label> truth, std::span<const Label> predicted);

struct MisclassificationRates {
    double fpr = 0.0;    // uk_to_k / unknown_count
    double fnr = 0.0;    // k_to_u / known_count
    double total = 0.0;  // (uk_to_k + k_to_u) / all
    ConfusionCounts counts;
};

MisclassificationRates misclassification_rates(std::span<const Label> truth, std::span<const Label> predicted);

struct EerResult {
    double eer = 0.0;
    double threshold = 0.0;  // may be +-infinity
};

// Candidate thresholds are the sorted distinct scores plus -inf and +inf.
// FAR(t) = share of impostors >= t, FRR(t) = share of genuines < t. The
// lowest t minimizing |FAR - FRR| wins and eer = (FAR + FRR) / 2 there.
EerResult eer(std::span<const double> genuine, std::span<const double> impostor);

struct RocPoint {
    double threshold = 0.0;
    double far = 0.0;
    double frr = 0.0;
};

// FAR/FRR at every candidate threshold of eer().
std::vector<RocPoint> roc_points(std::span<const double> genuine, std::span<const double> impostor);

struct ParticipantMetrics {
    double reidentification_rate = 0.0;
    double protection_rate = 0.0;
    std::size_t known_participants = 0;
    std::size_t unknown_participants = 0;
    std::size_t linked = 0;
    std::size_t protected_count = 0;
};

// Majority vote per participant over predicted labels, Unknown included as a
// candidate; a tied vote resolves to Unknown. A participant's truth is the
// truth label of its windows (all must agree).
ParticipantMetrics participant_metrics(std::span<const std::string> participant, std::span<const Label> truth,
                                       std::span<const Label> predicted);

// The majority-vote rule on its own.
Label majority_vote(std::span<const Label> votes);

struct SweepRow {
    double threshold = 0.0;
    double u_to_k_pct = 0.0;
    double k_to_u_pct = 0.0;
    double total_pct = 0.0;
};

// Re-decides every window at each threshold (Unknown iff tau < threshold) and
// reports U->K, K->U and total error percentages. Thresholds must be strictly
// increasing (ParameterError otherwise).
std::vector<SweepRow> confidence_sweep(std::span<const Label> stage1, std::span<const double> tau,
                                       std::span<const Label> truth, std::span<const double> thresholds);

struct MeanSd {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation; NaN for a single value
    std::size_t n = 0;
};

MeanSd mean_sd(std::span<const double> values);

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double fpr = 0.0;
    double fnr = 0.0;
    double misclassification_rate = 0.0;
    double tnr = 0.0;
    double eer = 0.0;
    double eer_threshold = 0.0;
    double reidentification_rate = 0.0;
    double protection_rate = 0.0;
    double known_accuracy = 0.0;  // accuracy over known-participant windows only
    ConfusionCounts counts;
    std::size_t known_participants = 0;
    std::size_t unknown_participants = 0;
    std::vector<SweepRow> threshold_sweep;

    bool operator==(const MetricsReport& other) const;
};

// Everything above from one set of attack results. Sweep thresholds may be
// empty. EER is NaN when either score population is empty.
MetricsReport build_report(std::span<const std::string> participant, std::span<const Label> truth,
                           std::span<const Label> stage1, std::span<const Label> predicted,
                           std::span<const double> tau, std::span<const double> sweep_thresholds);

// Finite numbers are written as numbers, NaN as null and infinities as the
// strings "inf" / "-inf", so a report survives a JSON round trip exactly.
nlohmann::json number_to_json(double value);
double number_from_json(const nlohmann::json& value);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& json);

}  // namespace ecglink::metrics
