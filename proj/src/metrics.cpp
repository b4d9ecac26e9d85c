#include "ecglink/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "ecglink/error.hpp"

namespace ecglink::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_aligned(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw MetricError(std::string(what) + ": inputs are not aligned (" + std::to_string(a) + " vs " +
                          std::to_string(b) + ")");
    }
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

}  // namespace

SampleMetrics sample_metrics(std::span<const Label> truth, std::span<const Label> predicted) {
    check_aligned(truth.size(), predicted.size(), "sample_metrics");
    if (truth.empty()) {
        throw MetricError("sample_metrics: no outcomes");
    }
    std::size_t correct = 0;
    std::set<int> classes;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        correct += truth[i] == predicted[i] ? 1 : 0;
        if (truth[i].is_known()) {
            classes.insert(truth[i].value());
        }
    }
    SampleMetrics m;
    m.accuracy = ratio(correct, truth.size());
    if (classes.empty()) {
        m.precision = m.recall = m.f1 = kNaN;
        return m;
    }
    double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
    for (int c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool t = truth[i].value() == c;
            const bool p = predicted[i].value() == c;
            tp += (t && p) ? 1 : 0;
            fp += (!t && p) ? 1 : 0;
            fn += (t && !p) ? 1 : 0;
        }
        const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
        const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        p_sum += precision;
        r_sum += recall;
        f_sum += precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
    }
    const auto k = static_cast<double>(classes.size());
    m.precision = p_sum / k;
    m.recall = r_sum / k;
    m.f1 = f_sum / k;
    return m;
}

ConfusionCounts confusion(std::span<const Label> truth, std::span<const Label> predicted) {
    check_aligned(truth.size(), predicted.size(), "confusion");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].is_unknown()) {
            ++c.unknown_count;
            c.uk_to_k += predicted[i].is_known() ? 1 : 0;
        } else {
            ++c.known_count;
            if (predicted[i].is_unknown()) {
                ++c.k_to_u;
            } else if (predicted[i] == truth[i]) {
                ++c.known_correct;
            } else {
                ++c.known_wrong_class;
            }
        }
    }
    return c;
}

MisclassificationRates misclassification_rates(std::span<const Label> truth, std::span<const Label> predicted) {
    MisclassificationRates r;
    r.counts = confusion(truth, predicted);
    r.fpr = ratio(r.counts.uk_to_k, r.counts.unknown_count);
    r.fnr = ratio(r.counts.k_to_u, r.counts.known_count);
    r.total = ratio(r.counts.uk_to_k + r.counts.k_to_u, r.counts.all_count());
    return r;
}

std::vector<RocPoint> roc_points(std::span<const double> genuine, std::span<const double> impostor) {
    if (genuine.empty() || impostor.empty()) {
        throw MetricError("eer: genuine and impostor scores must both be non-empty");
    }
    std::vector<double> g(genuine.begin(), genuine.end());
    std::vector<double> im(impostor.begin(), impostor.end());
    std::sort(g.begin(), g.end());
    std::sort(im.begin(), im.end());
    std::vector<double> candidates;
    candidates.reserve(g.size() + im.size() + 2);
    candidates.push_back(-kInf);
    candidates.insert(candidates.end(), g.begin(), g.end());
    candidates.insert(candidates.end(), im.begin(), im.end());
    candidates.push_back(kInf);
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    std::vector<RocPoint> points;
    points.reserve(candidates.size());
    for (double t : candidates) {
        // impostors >= t and genuines < t, both by binary search on sorted scores
        const auto accepted = static_cast<std::size_t>(im.end() - std::lower_bound(im.begin(), im.end(), t));
        const auto rejected = static_cast<std::size_t>(std::lower_bound(g.begin(), g.end(), t) - g.begin());
        points.push_back({t, ratio(accepted, im.size()), ratio(rejected, g.size())});
    }
    return points;
}

EerResult eer(std::span<const double> genuine, std::span<const double> impostor) {
    const auto points = roc_points(genuine, impostor);
    const RocPoint* best = &points.front();
    for (const auto& p : points) {
        if (std::abs(p.far - p.frr) < std::abs(best->far - best->frr)) {
            best = &p;
        }
    }
    return {(best->far + best->frr) / 2.0, best->threshold};
}

Label majority_vote(std::span<const Label> votes) {
    std::map<int, std::size_t> tally;
    for (const Label& v : votes) {
        ++tally[v.value()];
    }
    std::size_t top = 0;
    int winner = -1;
    bool tied = false;
    for (const auto& [value, count] : tally) {
        if (count > top) {
            top = count;
            winner = value;
            tied = false;
        } else if (count == top) {
            tied = true;
        }
    }
    return tied ? Label::unknown() : Label(winner);
}

ParticipantMetrics participant_metrics(std::span<const std::string> participant, std::span<const Label> truth,
                                       std::span<const Label> predicted) {
    check_aligned(participant.size(), truth.size(), "participant_metrics");
    check_aligned(participant.size(), predicted.size(), "participant_metrics");
    std::map<std::string, std::pair<Label, std::vector<Label>>> groups;
    for (std::size_t i = 0; i < participant.size(); ++i) {
        auto [it, inserted] = groups.try_emplace(participant[i], truth[i], std::vector<Label>{});
        if (!inserted && it->second.first != truth[i]) {
            throw MetricError("participant_metrics: participant '" + participant[i] + "' has inconsistent truth");
        }
        it->second.second.push_back(predicted[i]);
    }
    ParticipantMetrics m;
    for (const auto& [id, group] : groups) {
        const Label vote = majority_vote(group.second);
        if (group.first.is_unknown()) {
            ++m.unknown_participants;
            m.protected_count += vote.is_unknown() ? 1 : 0;
        } else {
            ++m.known_participants;
            m.linked += vote == group.first ? 1 : 0;
        }
    }
    m.reidentification_rate = ratio(m.linked, m.known_participants);
    m.protection_rate = ratio(m.protected_count, m.unknown_participants);
    return m;
}

std::vector<SweepRow> confidence_sweep(std::span<const Label> stage1, std::span<const double> tau,
                                       std::span<const Label> truth, std::span<const double> thresholds) {
    check_aligned(stage1.size(), tau.size(), "confidence_sweep");
    check_aligned(stage1.size(), truth.size(), "confidence_sweep");
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > thresholds[i - 1])) {
            throw ParameterError("confidence_sweep: thresholds must be strictly increasing");
        }
    }
    std::vector<SweepRow> rows;
    rows.reserve(thresholds.size());
    std::vector<Label> decided(stage1.size());
    for (double t : thresholds) {
        for (std::size_t i = 0; i < stage1.size(); ++i) {
            decided[i] = tau[i] < t ? Label::unknown() : stage1[i];
        }
        const auto r = misclassification_rates(truth, decided);
        rows.push_back({t, 100.0 * r.fpr, 100.0 * r.fnr, 100.0 * r.total});
    }
    return rows;
}

MeanSd mean_sd(std::span<const double> values) {
    MeanSd r;
    r.n = values.size();
    if (values.empty()) {
        r.mean = r.sd = kNaN;
        return r;
    }
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    r.mean = sum / static_cast<double>(r.n);
    if (r.n < 2) {
        r.sd = kNaN;
        return r;
    }
    double ss = 0.0;
    for (double v : values) {
        ss += (v - r.mean) * (v - r.mean);
    }
    r.sd = std::sqrt(ss / static_cast<double>(r.n - 1));
    return r;
}

bool MetricsReport::operator==(const MetricsReport& o) const {
    const bool scalars = same(accuracy, o.accuracy) && same(precision, o.precision) && same(recall, o.recall) &&
                         same(f1, o.f1) && same(fpr, o.fpr) && same(fnr, o.fnr) &&
                         same(misclassification_rate, o.misclassification_rate) && same(tnr, o.tnr) &&
                         same(eer, o.eer) && same(eer_threshold, o.eer_threshold) &&
                         same(reidentification_rate, o.reidentification_rate) &&
                         same(protection_rate, o.protection_rate) && same(known_accuracy, o.known_accuracy);
    const bool count_fields = counts.known_count == o.counts.known_count &&
                              counts.unknown_count == o.counts.unknown_count &&
                              counts.known_correct == o.counts.known_correct &&
                              counts.known_wrong_class == o.counts.known_wrong_class &&
                              counts.uk_to_k == o.counts.uk_to_k && counts.k_to_u == o.counts.k_to_u &&
                              known_participants == o.known_participants &&
                              unknown_participants == o.unknown_participants;
    if (!scalars || !count_fields || threshold_sweep.size() != o.threshold_sweep.size()) {
        return false;
    }
    for (std::size_t i = 0; i < threshold_sweep.size(); ++i) {
        const auto& a = threshold_sweep[i];
        const auto& b = o.threshold_sweep[i];
        if (!same(a.threshold, b.threshold) || !same(a.u_to_k_pct, b.u_to_k_pct) ||
            !same(a.k_to_u_pct, b.k_to_u_pct) || !same(a.total_pct, b.total_pct)) {
            return false;
        }
    }
    return true;
}

MetricsReport build_report(std::span<const std::string> participant, std::span<const Label> truth,
                           std::span<const Label> stage1, std::span<const Label> predicted,
                           std::span<const double> tau, std::span<const double> sweep_thresholds) {
    check_aligned(truth.size(), stage1.size(), "build_report");
    check_aligned(truth.size(), predicted.size(), "build_report");
    check_aligned(truth.size(), tau.size(), "build_report");
    MetricsReport r;
    const auto sample = sample_metrics(truth, predicted);
    r.accuracy = sample.accuracy;
    r.precision = sample.precision;
    r.recall = sample.recall;
    r.f1 = sample.f1;
    const auto rates = misclassification_rates(truth, predicted);
    r.counts = rates.counts;
    r.fpr = rates.fpr;
    r.fnr = rates.fnr;
    r.misclassification_rate = rates.total;
    r.tnr = std::isnan(rates.fpr) ? kNaN : 1.0 - rates.fpr;
    r.known_accuracy = ratio(rates.counts.known_correct, rates.counts.known_count);

    std::vector<double> genuine, impostor;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i].is_unknown()) {
            impostor.push_back(tau[i]);
        } else if (stage1[i] == truth[i]) {
            genuine.push_back(tau[i]);
        }
    }
    if (genuine.empty() || impostor.empty()) {
        r.eer = r.eer_threshold = kNaN;
    } else {
        const auto e = eer(genuine, impostor);
        r.eer = e.eer;
        r.eer_threshold = e.threshold;
    }

    const auto p = participant_metrics(participant, truth, predicted);
    r.reidentification_rate = p.reidentification_rate;
    r.protection_rate = p.protection_rate;
    r.known_participants = p.known_participants;
    r.unknown_participants = p.unknown_participants;
    r.threshold_sweep = confidence_sweep(stage1, tau, truth, sweep_thresholds);
    return r;
}

nlohmann::json number_to_json(double value) {
    if (std::isnan(value)) {
        return nullptr;
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    return value;
}

double number_from_json(const nlohmann::json& value) {
    if (value.is_null()) {
        return kNaN;
    }
    if (value.is_string()) {
        const auto s = value.get<std::string>();
        if (s == "inf") {
            return kInf;
        }
        if (s == "-inf") {
            return -kInf;
        }
        throw ConfigError("expected a number, got string '" + s + "'");
    }
    if (!value.is_number()) {
        throw ConfigError("expected a number, got " + value.dump());
    }
    return value.get<double>();
}

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json sweep = nlohmann::json::array();
    for (const auto& row : r.threshold_sweep) {
        sweep.push_back({{"threshold", number_to_json(row.threshold)},
                         {"u_to_k_pct", number_to_json(row.u_to_k_pct)},
                         {"k_to_u_pct", number_to_json(row.k_to_u_pct)},
                         {"total_pct", number_to_json(row.total_pct)}});
    }
    return {
        {"accuracy", number_to_json(r.accuracy)},
        {"precision", number_to_json(r.precision)},
        {"recall", number_to_json(r.recall)},
        {"f1", number_to_json(r.f1)},
        {"fpr", number_to_json(r.fpr)},
        {"fnr", number_to_json(r.fnr)},
        {"misclassification_rate", number_to_json(r.misclassification_rate)},
        {"tnr", number_to_json(r.tnr)},
        {"eer", number_to_json(r.eer)},
        {"eer_threshold", number_to_json(r.eer_threshold)},
        {"reidentification_rate", number_to_json(r.reidentification_rate)},
        {"protection_rate", number_to_json(r.protection_rate)},
        {"known_accuracy", number_to_json(r.known_accuracy)},
        {"counts",
         {{"known_windows", r.counts.known_count},
          {"unknown_windows", r.counts.unknown_count},
          {"known_correct", r.counts.known_correct},
          {"known_wrong_class", r.counts.known_wrong_class},
          {"uk_to_k", r.counts.uk_to_k},
          {"k_to_u", r.counts.k_to_u},
          {"known_participants", r.known_participants},
          {"unknown_participants", r.unknown_participants}}},
        {"threshold_sweep", sweep},
    };
}

MetricsReport report_from_json(const nlohmann::json& j) {
    try {
        MetricsReport r;
        r.accuracy = number_from_json(j.at("accuracy"));
        r.precision = number_from_json(j.at("precision"));
        r.recall = number_from_json(j.at("recall"));
        r.f1 = number_from_json(j.at("f1"));
        r.fpr = number_from_json(j.at("fpr"));
        r.fnr = number_from_json(j.at("fnr"));
        r.misclassification_rate = number_from_json(j.at("misclassification_rate"));
        r.tnr = number_from_json(j.at("tnr"));
        r.eer = number_from_json(j.at("eer"));
        r.eer_threshold = number_from_json(j.at("eer_threshold"));
        r.reidentification_rate = number_from_json(j.at("reidentification_rate"));
        r.protection_rate = number_from_json(j.at("protection_rate"));
        r.known_accuracy = number_from_json(j.at("known_accuracy"));
        const auto& c = j.at("counts");
        r.counts.known_count = c.at("known_windows").get<std::size_t>();
        r.counts.unknown_count = c.at("unknown_windows").get<std::size_t>();
        r.counts.known_correct = c.at("known_correct").get<std::size_t>();
        r.counts.known_wrong_class = c.at("known_wrong_class").get<std::size_t>();
        r.counts.uk_to_k = c.at("uk_to_k").get<std::size_t>();
        r.counts.k_to_u = c.at("k_to_u").get<std::size_t>();
        r.known_participants = c.at("known_participants").get<std::size_t>();
        r.unknown_participants = c.at("unknown_participants").get<std::size_t>();
        for (const auto& row : j.at("threshold_sweep")) {
            r.threshold_sweep.push_back({number_from_json(row.at("threshold")), number_from_json(row.at("u_to_k_pct")),
                                         number_from_json(row.at("k_to_u_pct")), number_from_json(row.at("total_pct"))});
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("metrics report: ") + e.what());
    }
}

}  // namespace ecglink::metrics
