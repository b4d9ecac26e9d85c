#pragma once

// End-to-end experiment: dataset -> resample -> segment -> plan -> train ->
// calibrate -> attack -> metrics, repeated over seeds, and the run bundle
// that persists it.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ecglink/attack.hpp"
#include "ecglink/data.hpp"
#include "ecglink/error.hpp"
#include "ecglink/metrics.hpp"
#include "ecglink/model/discriminator.hpp"
#include "ecglink/model/trainer.hpp"
#include "ecglink/scenarios.hpp"
#include "json.hpp"

namespace ecglink::pipeline {

struct SyntheticDataset {
    std::size_t identities = 10;
    double duration_s = 120.0;
    double rate_hz = 250.0;
    std::uint64_t seed = 0;
};

struct DiscriminatorGate {
    bool enabled = false;
    std::size_t hidden = 128;
    std::size_t epochs = 30;
    double threshold = 0.5;
};

struct RunConfig {
    // Exactly one source: a manifest path (relative to the config file) or a
    // synthetic benchmark generated in memory.
    std::string manifest;
    std::optional<SyntheticDataset> synthetic;

    double target_rate_hz = 250.0;
    std::size_t window_len = signal::kWindowLength;

    model::ModelKind model_kind = model::ModelKind::vit;
    model::ViTConfig vit;  // num_classes and window_len are filled in per run
    model::TrainOptions training;
    scenarios::ScenarioConfig scenario;  // split.seed is derived per replicate
    attack::ThresholdPolicy threshold;
    DiscriminatorGate discriminator;
    std::vector<double> sweep_thresholds{0.01, 0.02, 0.03, 0.04, 0.05};

    std::uint64_t seed = 0;
    std::size_t replicates = 5;
    std::string output_dir = "runs";

    // Throws ConfigError describing the first invalid field.
    void validate() const;
};

// Strict: unknown keys at any level are a ConfigError. Missing keys keep
// their defaults.
RunConfig config_from_json(const nlohmann::json& json);
nlohmann::json to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

// A stage failure: names the stage and carries the underlying error text.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what, bool integrity = false)
        : Error(stage + ": " + what), stage_(std::move(stage)), integrity_(integrity) {}
    const std::string& stage() const { return stage_; }
    bool integrity() const { return integrity_; }

private:
    std::string stage_;
    bool integrity_;
};

using Progress = std::function<void(const std::string&)>;

struct Dataset {
    data::DatasetManifest manifest;
    std::vector<signal::EcgRecord> records;  // as ingested or synthesized
    std::vector<signal::Window> windows;     // resampled and segmented; labels unset
    std::string hash;                        // over the ingested records
};

// Manifest, records and hash of a generated dataset; windows are left empty.
Dataset synthetic_dataset(const SyntheticDataset& spec);

// `base_dir` resolves a relative manifest path.
Dataset prepare_dataset(const RunConfig& config, const std::filesystem::path& base_dir);

// Seed of replicate r, and the stage seeds fanned out from it.
std::uint64_t replicate_seed(std::uint64_t seed, std::size_t replicate);

struct TrainedReplicate {
    std::size_t replicate = 0;
    std::uint64_t seed = 0;
    scenarios::ExperimentPlan plan;
    data::IdentityLabelMap labels;  // known identities in class order
    std::vector<signal::Window> train, val, test;  // labeled
    std::optional<model::Model> model;  // set once training ran
    model::TrainResult training;
    double phi = 0.0;
    std::optional<model::DiscriminatorParams> gate;
};

// Plan, training and calibration for one replicate under `scenario`.
TrainedReplicate train_replicate(const RunConfig& config, const scenarios::ScenarioConfig& scenario,
                                 const Dataset& dataset, std::size_t replicate, std::size_t threads,
                                 const Progress& progress = {});

struct AttackResult {
    std::vector<attack::AttackOutcome> outcomes;
    metrics::MetricsReport report;
};

// Attack on the trained replicate's test windows as `scenario` presents them.
AttackResult attack_replicate(const RunConfig& config, const scenarios::ScenarioConfig& scenario,
                              const TrainedReplicate& trained, std::size_t threads);

struct ReplicateRun {
    TrainedReplicate trained;
    AttackResult attack;
};

struct RunResult {
    RunConfig config;
    Dataset dataset;
    std::vector<ReplicateRun> replicates;
};

// Every replicate of the configured scenario. Stage failures surface as
// StageError.
RunResult run_experiment(const RunConfig& config, const std::filesystem::path& base_dir, std::size_t threads,
                         const Progress& progress = {});

// Mean and sample sd of every scalar report field across replicates.
nlohmann::json summarize(const std::vector<metrics::MetricsReport>& reports);

// Bundle layout, all names fixed:
//   manifest.json config.json report.json hashes.txt
//   replicate_<r>/ plan.json model.ckpt outcomes.csv scores.csv training_log.csv report.json
// hashes.txt lists the SHA-256 of every other file and ends with the bundle
// hash; it is written last. A failed write leaves an INCOMPLETE marker.
inline constexpr const char* kHashesFile = "hashes.txt";
inline constexpr const char* kIncompleteMarker = "INCOMPLETE";

// Writes into a new timestamped directory under the config's output_dir
// (or exactly `dir` when given) and returns it.
std::filesystem::path persist_run(const RunResult& run, const std::filesystem::path& base_dir,
                                  const std::optional<std::filesystem::path>& dir = std::nullopt);

// Recomputes every hash. Throws IntegrityError naming missing or altered
// files, or an incomplete bundle. Returns the bundle hash.
std::string verify_bundle(const std::filesystem::path& dir);

struct Score {
    std::string window_id;
    std::string subject_id;
    Label truth;
    Label stage1;
    double tau = 0.0;
};

struct LoadedReplicate {
    std::uint64_t seed = 0;
    double phi = 0.0;
    metrics::MetricsReport report;
    std::vector<Score> scores;
};

struct Bundle {
    std::string hash;
    nlohmann::json config;
    nlohmann::json manifest;
    nlohmann::json report;
    std::vector<LoadedReplicate> replicates;
};

// Verifies, then reads the persisted reports and scores.
Bundle load_bundle(const std::filesystem::path& dir);

std::vector<Score> read_scores_csv(const std::filesystem::path& path);

}  // namespace ecglink::pipeline
