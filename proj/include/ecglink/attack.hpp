#pragma once

// The two-stage linkage attack. Stage 1 matches a probe to its most probable
// known identity; stage 2 rejects the match as Unknown when the confidence tau
// falls below a calibrated threshold phi.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecglink/label.hpp"
#include "ecglink/model/discriminator.hpp"
#include "ecglink/model/model.hpp"
#include "ecglink/signal.hpp"

namespace ecglink::attack {

struct ThresholdPolicy {
    enum class Mode { percentile, absolute };
    Mode mode = Mode::percentile;
    double p = 5.0;    // percentile mode, in [0, 100]
    double phi = 0.0;  // absolute mode, in [0, 1]

    static ThresholdPolicy percentile(double p);
    static ThresholdPolicy absolute(double phi);
    // Throws ConfigError when the active parameter is out of range.
    void validate() const;
};

struct Stage1 {
    Label label;
    double tau = 0.0;
};

// Argmax of softmax(logits) with ties to the lowest index, and the maximum
// probability.
Stage1 stage1_match(std::span<const double> logits);

// Nearest-rank percentile: the ceil(p / 100 * n)-th smallest value (1-based),
// the minimum for p = 0. Throws CalibrationError on an empty set.
double nearest_rank_percentile(std::span<const double> values, double p);

double calibrate_threshold(std::span<const double> confidences, const ThresholdPolicy& policy);

// True when the probe is rejected: tau < phi.
bool stage2_rejects(double tau, double phi);
Label stage2_decide(Label stage1, double tau, double phi);

struct AttackOutcome {
    std::string window_id;
    std::string subject_id;  // true subject of the probe
    Label truth;             // known class of the subject, or Unknown
    Label stage1;
    Label predicted;
    double tau = 0.0;
    double phi = 0.0;
    bool stage2_fired = false;            // tau < phi
    bool discriminator_rejected = false;  // optional gate, off unless configured
};

struct AttackOptions {
    std::size_t threads = 1;
    // When set, a probe whose embedding the discriminator scores as unknown
    // with probability above gate_threshold is also rejected.
    const model::DiscriminatorParams* gate = nullptr;
    double gate_threshold = 0.5;
};

// Stage-1 confidences of the calibration windows under the frozen model.
std::vector<double> confidences(const model::Model& model, std::span<const signal::Window> windows,
                                std::size_t threads);

// Every probe window through both stages at threshold phi. Each probe's
// truth is taken from its label. Throws InputError on a window length
// mismatch.
std::vector<AttackOutcome> run_attack(const model::Model& model, std::span<const signal::Window> probes, double phi,
                                      const AttackOptions& options = {});

// Delimited table with the fixed columns
// window_id,subject_id_true,predicted,tau,phi,stage2_fired
// where predicted is a class name or "unknown".
void write_outcomes_csv(const std::filesystem::path& path, std::span<const AttackOutcome> outcomes,
                        std::span<const std::string> class_names);

}  // namespace ecglink::attack
