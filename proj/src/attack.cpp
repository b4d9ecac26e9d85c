#include "ecglink/attack.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include "ecglink/error.hpp"
#include "ecglink/parallel.hpp"

namespace ecglink::attack {

ThresholdPolicy ThresholdPolicy::percentile(double p) {
    ThresholdPolicy t;
    t.mode = Mode::percentile;
    t.p = p;
    t.validate();
    return t;
}

ThresholdPolicy ThresholdPolicy::absolute(double phi) {
    ThresholdPolicy t;
    t.mode = Mode::absolute;
    t.phi = phi;
    t.validate();
    return t;
}

void ThresholdPolicy::validate() const {
    if (mode == Mode::percentile && !(p >= 0.0 && p <= 100.0)) {
        throw ConfigError("threshold: percentile must lie in [0, 100]");
    }
    if (mode == Mode::absolute && !(phi >= 0.0 && std::isfinite(phi))) {
        throw ConfigError("threshold: absolute phi must be a non-negative number");
    }
}

Stage1 stage1_match(std::span<const double> logits) {
    if (logits.empty()) {
        throw DimensionError("stage1_match: no classes");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) {
            best = i;
        }
    }
    double denom = 0.0;
    for (double v : logits) {
        denom += std::exp(v - logits[best]);
    }
    return {Label(static_cast<int>(best)), 1.0 / denom};
}

double nearest_rank_percentile(std::span<const double> values, double p) {
    if (values.empty()) {
        throw CalibrationError("percentile of an empty calibration set");
    }
    if (!(p >= 0.0 && p <= 100.0)) {
        throw ConfigError("percentile must lie in [0, 100]");
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    // p * n is formed first so integral products stay exact.
    const double x = p * n / 100.0;
    auto rank = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

double calibrate_threshold(std::span<const double> confidences, const ThresholdPolicy& policy) {
    policy.validate();
    if (policy.mode == ThresholdPolicy::Mode::absolute) {
        return policy.phi;
    }
    return nearest_rank_percentile(confidences, policy.p);
}

bool stage2_rejects(double tau, double phi) { return tau < phi; }

Label stage2_decide(Label stage1, double tau, double phi) {
    return stage2_rejects(tau, phi) ? Label::unknown() : stage1;
}

std::vector<double> confidences(const model::Model& model, std::span<const signal::Window> windows,
                                std::size_t threads) {
    std::vector<double> out(windows.size());
    parallel_for(windows.size(), threads, [&](std::size_t i) {
        const auto f = model.forward(windows[i].values, false, nullptr);
        out[i] = stage1_match(f.logits.values()).tau;
    });
    return out;
}

std::vector<AttackOutcome> run_attack(const model::Model& model, std::span<const signal::Window> probes, double phi,
                                      const AttackOptions& options) {
    for (const auto& w : probes) {
        if (w.values.size() != model.window_len()) {
            throw InputError("run_attack: probe " + w.id() + " has length " + std::to_string(w.values.size()) +
                             ", model expects " + std::to_string(model.window_len()));
        }
    }
    std::vector<AttackOutcome> out(probes.size());
    parallel_for(probes.size(), options.threads, [&](std::size_t i) {
        const auto& w = probes[i];
        const auto f = model.forward(w.values, false, nullptr);
        const Stage1 s = stage1_match(f.logits.values());
        AttackOutcome& o = out[i];
        o.window_id = w.id();
        o.subject_id = w.subject_id;
        o.truth = w.label;
        o.stage1 = s.label;
        o.tau = s.tau;
        o.phi = phi;
        o.stage2_fired = stage2_rejects(s.tau, phi);
        if (options.gate != nullptr) {
            model::DiscriminatorParams gate = *options.gate;
            o.discriminator_rejected =
                model::unknown_probability(f.embedding.values(), gate) > options.gate_threshold;
        }
        o.predicted = (o.stage2_fired || o.discriminator_rejected) ? Label::unknown() : s.label;
    });
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace

void write_outcomes_csv(const std::filesystem::path& path, std::span<const AttackOutcome> outcomes,
                        std::span<const std::string> class_names) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "window_id,subject_id_true,predicted,tau,phi,stage2_fired\n";
    for (const auto& o : outcomes) {
        std::string predicted = "unknown";
        if (o.predicted.is_known()) {
            const auto idx = static_cast<std::size_t>(o.predicted.value());
            if (idx >= class_names.size()) {
                throw LabelError("write_outcomes_csv: class " + std::to_string(idx) + " has no name");
            }
            predicted = class_names[idx];
        }
        out << o.window_id << ',' << o.subject_id << ',' << predicted << ',' << format_double(o.tau) << ','
            << format_double(o.phi) << ',' << (o.stage2_fired ? "true" : "false") << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

}  // namespace ecglink::attack
