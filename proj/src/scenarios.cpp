#include "ecglink/scenarios.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include "ecglink/error.hpp"

namespace ecglink::scenarios {

void SplitSpec::validate() const {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || !(test_frac > 0.0)) {
        throw ConfigError("split fractions must all be positive");
    }
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
    if (!(known_identity_frac > 0.0 && known_identity_frac <= 1.0)) {
        throw ConfigError("known_identity_frac must lie in (0, 1]");
    }
}

std::string to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::partial:
            return "partial";
        case ScenarioKind::full:
            return "full";
        case ScenarioKind::noisy:
            return "noisy";
    }
    return "partial";
}

ScenarioKind scenario_kind_from_string(const std::string& text) {
    if (text == "partial") {
        return ScenarioKind::partial;
    }
    if (text == "full") {
        return ScenarioKind::full;
    }
    if (text == "noisy") {
        return ScenarioKind::noisy;
    }
    throw ConfigError("unknown scenario '" + text + "' (expected partial, full or noisy)");
}

void ScenarioConfig::validate() const {
    split.validate();
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ConfigError("noise_sigma must be a non-negative number");
    }
    if (noise_sigma > 0.0 && kind != ScenarioKind::noisy) {
        throw ConfigError("noise_sigma may only be positive for the noisy scenario");
    }
}

SplitSpec ScenarioConfig::effective_split() const {
    SplitSpec s = split;
    if (kind == ScenarioKind::full) {
        s.known_identity_frac = 1.0;
    }
    return s;
}

IdentityPartition partition_identities(std::vector<std::string> identities, double known_frac, std::uint64_t seed) {
    if (!(known_frac > 0.0 && known_frac <= 1.0)) {
        throw ConfigError("known_identity_frac must lie in (0, 1]");
    }
    std::sort(identities.begin(), identities.end());
    if (std::adjacent_find(identities.begin(), identities.end()) != identities.end()) {
        throw ConfigError("partition_identities: duplicate identity");
    }
    const std::size_t n = identities.size();
    if (n == 0) {
        throw ConfigError("partition_identities: no identities");
    }
    if (known_frac < 1.0 && n < 2) {
        throw ConfigError("partition_identities: a known/unknown split needs at least two identities");
    }
    const double x = known_frac * static_cast<double>(n);
    auto known = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
    if (known_frac < 1.0) {
        known = std::min(known, n - 1);
    }
    if (known == 0) {
        throw ConfigError("partition_identities: known_identity_frac leaves no known identity");
    }
    Rng rng(derive_seed(seed, "partition"));
    rng.shuffle(identities);
    IdentityPartition p;
    p.known.assign(identities.begin(), identities.begin() + static_cast<std::ptrdiff_t>(known));
    p.unknown.assign(identities.begin() + static_cast<std::ptrdiff_t>(known), identities.end());
    std::sort(p.known.begin(), p.known.end());
    std::sort(p.unknown.begin(), p.unknown.end());
    return p;
}

SplitCounts split_counts(std::size_t n, const SplitSpec& spec) {
    if (n < 3) {
        throw ConfigError("split needs at least three windows, got " + std::to_string(n));
    }
    const std::array<double, 3> fracs{spec.train_frac, spec.val_frac, spec.test_frac};
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = fracs[i] * static_cast<double>(n);
        counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        remainders[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    while (assigned < n) {
        std::size_t pick = 0;
        for (std::size_t i = 1; i < 3; ++i) {
            if (remainders[i] > remainders[pick] + 1e-9) {
                pick = i;
            }
        }
        ++counts[pick];
        remainders[pick] = -1.0;
        ++assigned;
    }
    for (std::size_t i = 0; i < 3; ++i) {
        if (counts[i] == 0) {
            const auto donor = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
            --counts[donor];
            ++counts[i];
        }
    }
    return {counts[0], counts[1], counts[2]};
}

ExperimentPlan make_splits(std::span<const signal::Window> windows, const SplitSpec& spec,
                           const IdentityPartition& partition) {
    spec.validate();
    const std::set<std::string> known(partition.known.begin(), partition.known.end());
    const std::set<std::string> unknown(partition.unknown.begin(), partition.unknown.end());
    std::map<std::string, std::vector<std::string>> by_identity;
    for (const auto& w : windows) {
        if (!known.contains(w.subject_id) && !unknown.contains(w.subject_id)) {
            throw ConfigError("make_splits: window " + w.id() + " belongs to no partition");
        }
        by_identity[w.subject_id].push_back(w.id());
    }
    ExperimentPlan plan;
    plan.split = spec;
    plan.known = partition.known;
    plan.unknown = partition.unknown;
    for (auto& [identity, ids] : by_identity) {
        std::sort(ids.begin(), ids.end());
        if (unknown.contains(identity)) {
            plan.test.insert(plan.test.end(), ids.begin(), ids.end());
            continue;
        }
        if (ids.size() < 3) {
            throw ConfigError("make_splits: known identity '" + identity + "' has " + std::to_string(ids.size()) +
                              " windows; at least 3 are needed");
        }
        Rng rng(derive_seed(spec.seed, "split", fnv1a(identity)));
        rng.shuffle(ids);
        const SplitCounts c = split_counts(ids.size(), spec);
        auto it = ids.begin();
        plan.train.insert(plan.train.end(), it, it + static_cast<std::ptrdiff_t>(c.train));
        it += static_cast<std::ptrdiff_t>(c.train);
        plan.val.insert(plan.val.end(), it, it + static_cast<std::ptrdiff_t>(c.val));
        it += static_cast<std::ptrdiff_t>(c.val);
        plan.test.insert(plan.test.end(), it, ids.end());
    }
    for (const auto& identity : partition.known) {
        if (!by_identity.contains(identity)) {
            throw ConfigError("make_splits: known identity '" + identity + "' has no windows");
        }
    }
    return plan;
}

ExperimentPlan build_plan(std::span<const signal::Window> windows, const ScenarioConfig& scenario,
                          const std::string& dataset_hash) {
    scenario.validate();
    const SplitSpec spec = scenario.effective_split();
    std::set<std::string> ids;
    for (const auto& w : windows) {
        ids.insert(w.subject_id);
    }
    const auto partition =
        partition_identities(std::vector<std::string>(ids.begin(), ids.end()), spec.known_identity_frac, spec.seed);
    ExperimentPlan plan = make_splits(windows, spec, partition);
    plan.kind = scenario.kind;
    plan.noise_sigma = scenario.noise_sigma;
    plan.dataset_hash = dataset_hash;
    return plan;
}

void validate_plan(const ExperimentPlan& plan, std::span<const signal::Window> windows) {
    std::map<std::string, std::string> owner;
    for (const auto& w : windows) {
        owner[w.id()] = w.subject_id;
    }
    std::map<std::string, const char*> seen;
    const std::set<std::string> unknown(plan.unknown.begin(), plan.unknown.end());
    bool test_known = false, test_unknown = false;
    auto visit = [&](const std::vector<std::string>& ids, const char* split) {
        for (const auto& id : ids) {
            if (auto [it, inserted] = seen.emplace(id, split); !inserted) {
                throw ConfigError("plan: window " + id + " appears in both " + it->second + " and " + split);
            }
            const auto o = owner.find(id);
            if (o == owner.end()) {
                throw ConfigError("plan: window " + id + " is not in the dataset");
            }
            const bool is_unknown = unknown.contains(o->second);
            if (is_unknown && std::string(split) != "test") {
                throw ConfigError("plan: unknown identity '" + o->second + "' has window " + id + " in " + split);
            }
            if (std::string(split) == "test") {
                (is_unknown ? test_unknown : test_known) = true;
            }
        }
    };
    visit(plan.train, "train");
    visit(plan.val, "val");
    visit(plan.test, "test");
    if (!plan.unknown.empty() && (!test_known || !test_unknown)) {
        throw ConfigError("plan: test split must contain both known and unknown identities");
    }
}

std::vector<signal::Window> apply_scenario(std::span<const signal::Window> test_windows,
                                           const ScenarioConfig& scenario, std::uint64_t seed) {
    std::vector<signal::Window> out(test_windows.begin(), test_windows.end());
    if (scenario.kind != ScenarioKind::noisy || scenario.noise_sigma == 0.0) {
        return out;
    }
    for (auto& w : out) {
        Rng rng(derive_seed(seed, "scenario-noise", fnv1a(w.id())));
        for (double& v : w.values) {
            v += rng.normal(0.0, scenario.noise_sigma);
        }
        const auto n = signal::minmax_normalize(w.values);
        w.values = n.values;
        w.flat = n.flat;
    }
    return out;
}

nlohmann::json to_json(const ExperimentPlan& p) {
    return {
        {"scenario", to_string(p.kind)},
        {"noise_sigma", p.noise_sigma},
        {"seed", p.split.seed},
        {"fractions",
         {{"train", p.split.train_frac},
          {"val", p.split.val_frac},
          {"test", p.split.test_frac},
          {"known_identity", p.split.known_identity_frac}}},
        {"dataset_hash", p.dataset_hash},
        {"known_identities", p.known},
        {"unknown_identities", p.unknown},
        {"splits", {{"train", p.train}, {"val", p.val}, {"test", p.test}}},
    };
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
    try {
        ExperimentPlan p;
        p.kind = scenario_kind_from_string(j.at("scenario").get<std::string>());
        p.noise_sigma = j.at("noise_sigma").get<double>();
        p.split.seed = j.at("seed").get<std::uint64_t>();
        const auto& f = j.at("fractions");
        p.split.train_frac = f.at("train").get<double>();
        p.split.val_frac = f.at("val").get<double>();
        p.split.test_frac = f.at("test").get<double>();
        p.split.known_identity_frac = f.at("known_identity").get<double>();
        p.dataset_hash = j.at("dataset_hash").get<std::string>();
        p.known = j.at("known_identities").get<std::vector<std::string>>();
        p.unknown = j.at("unknown_identities").get<std::vector<std::string>>();
        const auto& s = j.at("splits");
        p.train = s.at("train").get<std::vector<std::string>>();
        p.val = s.at("val").get<std::vector<std::string>>();
        p.test = s.at("test").get<std::vector<std::string>>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("plan file: ") + e.what());
    }
}

}  // namespace ecglink::scenarios
