#pragma once

// Datasets: manifests, CSV ingestion, synthetic identities and label encoding.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecglink/label.hpp"
#include "ecglink/signal.hpp"
#include "json.hpp"

namespace ecglink::data {

// One Gaussian bump of the beat template. center is seconds after the beat
// onset, width the standard deviation in seconds.
struct Wave {
    double amplitude = 0.0;
    double width = 0.01;
    double center = 0.0;

    bool operator==(const Wave&) const = default;
};

enum WaveIndex { P = 0, Q = 1, R = 2, S = 3, T = 4 };

struct SyntheticIdentitySpec {
    double heart_rate_bpm = 70.0;
    std::array<Wave, 5> waves{{
        {0.15, 0.025, 0.10},
        {-0.12, 0.010, 0.21},
        {1.20, 0.012, 0.25},
        {-0.25, 0.012, 0.29},
        {0.30, 0.060, 0.50},
    }};
    double hr_variability = 0.0;       // sd of the beat period, seconds
    double baseline_wander_amp = 0.0;
    double baseline_wander_hz = 0.2;
    double noise_sigma = 0.0;          // white measurement noise
    std::uint64_t seed = 0;

    // Throws ConfigError unless the rate and widths are positive, centers
    // strictly increase P..T, R dominates every other amplitude and the
    // variability terms are non-negative.
    void validate() const;
    double period_s() const { return 60.0 / heart_rate_bpm; }

    bool operator==(const SyntheticIdentitySpec&) const = default;
};

// A random but valid identity; distinct seeds give distinct morphologies.
SyntheticIdentitySpec random_identity(std::uint64_t seed);

// Beats placed back to back, each period drawn as N(60 / bpm, hr_variability)
// and clamped to at least 0.3 s, plus a sinusoidal baseline wander and white
// noise. The first beat starts one period before t = 0 so the record has no
// onset transient. Pure in (spec, duration, rate). Throws ConfigError when
// the duration covers fewer than two beats.
signal::EcgRecord synthesize(const SyntheticIdentitySpec& spec, double duration_s, double rate_hz,
                             const std::string& subject_id = "synthetic", const std::string& dataset_id = "synthetic");

// Largest normalized cross-correlation of two equal-length windows over lags
// in [-max_lag, max_lag], each side restricted to the overlap.
double max_normalized_xcorr(std::span<const double> a, std::span<const double> b, std::size_t max_lag);

struct ManifestEntry {
    std::string subject_id;
    std::string path;  // CSV file, relative to the manifest's directory
    double sampling_rate_hz = 250.0;
    std::string condition;  // metadata only
    std::optional<SyntheticIdentitySpec> synthetic;  // provenance of generated records

    bool operator==(const ManifestEntry&) const = default;
};

inline constexpr int kManifestSchemaVersion = 1;

struct DatasetManifest {
    std::string dataset_id;
    std::vector<ManifestEntry> entries;

    // Throws ConfigError on an empty id, duplicate subjects or a bad rate.
    void validate() const;

    bool operator==(const DatasetManifest&) const = default;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& json);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Share of malformed data lines tolerated before ingestion fails.
inline constexpr double kMalformedBudget = 0.01;

struct IngestStats {
    std::size_t data_lines = 0;
    std::size_t malformed = 0;
    std::vector<std::size_t> malformed_lines;  // 1-based
};

// One amplitude per line, or "time,amplitude" with strictly increasing
// times. Blank lines and lines starting with '#' are skipped. Malformed lines
// are dropped up to kMalformedBudget of the data lines; beyond that, or for a
// file without samples, IngestionError lists the offending line numbers.
signal::EcgRecord ingest_csv(const std::filesystem::path& path, const ManifestEntry& entry,
                             const std::string& dataset_id, IngestStats* stats = nullptr);

// Single-column export in shortest round-trip form, with a comment header.
void export_csv(const std::filesystem::path& path, const signal::EcgRecord& record);

// Every entry of a manifest located at `manifest_path`, in manifest order.
std::vector<signal::EcgRecord> load_records(const std::filesystem::path& manifest_path,
                                            const DatasetManifest& manifest);

// Hex SHA-256 of bytes, of a file, and of a set of records (ids, rates and
// sample bit patterns in order).
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
std::string records_hash(std::span<const signal::EcgRecord> records);

class IdentityLabelMap {
public:
    IdentityLabelMap() = default;
    // Subjects in class order. Throws LabelError on duplicates.
    explicit IdentityLabelMap(std::vector<std::string> subjects);

    std::size_t size() const { return subjects_.size(); }
    const std::vector<std::string>& subjects() const { return subjects_; }
    // Unknown for a subject outside the map.
    Label label_of(const std::string& subject) const;
    // Throws LabelError for Unknown or an out-of-range class.
    const std::string& subject_of(Label label) const;
    bool contains(const std::string& subject) const { return label_of(subject).is_known(); }
    // The same order restricted to `keep`.
    IdentityLabelMap restricted_to(std::span<const std::string> keep) const;

    bool operator==(const IdentityLabelMap&) const = default;

private:
    std::vector<std::string> subjects_;
};

// Subjects sorted by (dataset_id, subject_id). Throws LabelError when a
// subject id appears in more than one manifest and ConfigError when there
// are no subjects.
IdentityLabelMap encode_labels(std::span<const DatasetManifest> manifests);

}  // namespace ecglink::data
