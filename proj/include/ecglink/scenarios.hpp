#pragma once

// Experiment construction: which identities the attacker knows, how their
// windows split into train / validation / test, and the knowledge scenario.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecglink/signal.hpp"
#include "json.hpp"

namespace ecglink::scenarios {

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.15;
    double test_frac = 0.15;
    double known_identity_frac = 0.7;
    std::uint64_t seed = 0;

    // Fractions positive and summing to 1 within 1e-9; known fraction in (0, 1].
    void validate() const;

    bool operator==(const SplitSpec&) const = default;
};

enum class ScenarioKind { partial, full, noisy };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& text);

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::partial;
    double noise_sigma = 0.0;  // noisy only
    SplitSpec split;

    void validate() const;
    // The split actually used: full knowledge forces known_identity_frac = 1.
    SplitSpec effective_split() const;
};

struct IdentityPartition {
    std::vector<std::string> known;    // sorted
    std::vector<std::string> unknown;  // sorted
};

// Shuffles the sorted identities by seed and keeps the first ceil(frac * n) as
// known. With frac < 1 at least one identity stays unknown. Throws
// ConfigError when fewer than two identities are given for frac < 1 or when
// no identity would be known.
IdentityPartition partition_identities(std::vector<std::string> identities, double known_frac, std::uint64_t seed);

struct SplitCounts {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

// Per-identity split sizes: largest-remainder apportionment of n over the
// three fractions, ties going to the earlier split, then topped up so every
// split receives at least one window. Throws ConfigError for n < 3.
SplitCounts split_counts(std::size_t n, const SplitSpec& spec);

struct ExperimentPlan {
    ScenarioKind kind = ScenarioKind::partial;
    double noise_sigma = 0.0;
    SplitSpec split;
    std::string dataset_hash;
    std::vector<std::string> known;
    std::vector<std::string> unknown;
    std::vector<std::string> train;  // window ids
    std::vector<std::string> val;
    std::vector<std::string> test;

    bool operator==(const ExperimentPlan&) const = default;
};

// Stratified per known identity (windows shuffled by a seed derived from the
// identity); every window of an unknown identity goes to test. Throws
// ConfigError naming a known identity with fewer than three windows.
ExperimentPlan make_splits(std::span<const signal::Window> windows, const SplitSpec& spec,
                           const IdentityPartition& partition);

// Partition plus splits for a scenario, with provenance filled in.
ExperimentPlan build_plan(std::span<const signal::Window> windows, const ScenarioConfig& scenario,
                          const std::string& dataset_hash);

// Checks pairwise disjointness, that unknown identities only reach test and
// that test mixes known and unknown identities whenever some are unknown.
// Throws ConfigError describing the first violation.
void validate_plan(const ExperimentPlan& plan, std::span<const signal::Window> windows);

// Test windows as the scenario presents them. Partial and full return them
// unchanged; noisy adds Gaussian noise of noise_sigma to each window (seeded
// per window id) and re-normalizes to [0, 1].
std::vector<signal::Window> apply_scenario(std::span<const signal::Window> test_windows,
                                           const ScenarioConfig& scenario, std::uint64_t seed);

nlohmann::json to_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_json(const nlohmann::json& json);

}  // namespace ecglink::scenarios
