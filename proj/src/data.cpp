#include "ecglink/data.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "ecglink/error.hpp"
#include "ecglink/rng.hpp"

namespace ecglink::data {

namespace {

constexpr const char* kWaveNames[5] = {"P", "Q", "R", "S", "T"};
constexpr double kMinPeriod = 0.3;
// Bumps are evaluated out to this many widths from their center.
constexpr double kReach = 10.0;

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::optional<double> parse_number(const std::string& text) {
    if (text.empty()) {
        return std::nullopt;
    }
    const char* first = text.data();
    if (*first == '+') {
        ++first;
    }
    double v = 0.0;
    const auto r = std::from_chars(first, text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

}  // namespace

void SyntheticIdentitySpec::validate() const {
    if (!(heart_rate_bpm > 0.0) || !std::isfinite(heart_rate_bpm)) {
        throw ConfigError("synthetic identity: heart_rate_bpm must be positive");
    }
    for (std::size_t k = 0; k < 5; ++k) {
        if (!(waves[k].width > 0.0) || !std::isfinite(waves[k].amplitude) || !std::isfinite(waves[k].center)) {
            throw ConfigError(std::string("synthetic identity: wave ") + kWaveNames[k] + " needs a positive width");
        }
        if (k > 0 && !(waves[k].center > waves[k - 1].center)) {
            throw ConfigError("synthetic identity: wave centers must increase P < Q < R < S < T");
        }
        if (k != R && !(waves[R].amplitude > std::abs(waves[k].amplitude))) {
            throw ConfigError(std::string("synthetic identity: R amplitude must exceed |") + kWaveNames[k] + "|");
        }
    }
    if (!(hr_variability >= 0.0) || !(baseline_wander_amp >= 0.0) || !(baseline_wander_hz >= 0.0) ||
        !(noise_sigma >= 0.0)) {
        throw ConfigError("synthetic identity: variability, wander and noise must be non-negative");
    }
}

SyntheticIdentitySpec random_identity(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "identity"));
    SyntheticIdentitySpec s;
    s.seed = seed;
    s.heart_rate_bpm = rng.uniform(55.0, 95.0);
    const double r = rng.uniform(0.22, 0.28);
    s.waves[R] = {rng.uniform(0.8, 1.6), rng.uniform(0.008, 0.016), r};
    s.waves[Q] = {-rng.uniform(0.05, 0.25), rng.uniform(0.008, 0.015), r - rng.uniform(0.025, 0.045)};
    s.waves[S] = {-rng.uniform(0.05, 0.4), rng.uniform(0.008, 0.016), r + rng.uniform(0.025, 0.045)};
    s.waves[P] = {rng.uniform(0.08, 0.25), rng.uniform(0.02, 0.04), r - rng.uniform(0.12, 0.18)};
    s.waves[T] = {rng.uniform(0.15, 0.5), rng.uniform(0.04, 0.08), r + rng.uniform(0.2, 0.32)};
    s.hr_variability = rng.uniform(0.01, 0.04);
    s.baseline_wander_amp = rng.uniform(0.02, 0.1);
    s.baseline_wander_hz = rng.uniform(0.1, 0.4);
    s.noise_sigma = 0.01;
    return s;
}

signal::EcgRecord synthesize(const SyntheticIdentitySpec& spec, double duration_s, double rate_hz,
                             const std::string& subject_id, const std::string& dataset_id) {
    spec.validate();
    if (!(rate_hz > 0.0)) {
        throw ConfigError("synthesize: rate must be positive");
    }
    if (!(duration_s >= 2.0 * spec.period_s())) {
        throw ConfigError("synthesize: duration must cover at least two beats");
    }
    const auto n = static_cast<std::size_t>(std::floor(duration_s * rate_hz + 1e-9));
    signal::EcgRecord rec;
    rec.subject_id = subject_id;
    rec.dataset_id = dataset_id;
    rec.sampling_rate_hz = rate_hz;
    rec.samples.assign(n, 0.0);

    Rng beat_rng(derive_seed(spec.seed, "beats"));
    const double reach = kReach * std::max({spec.waves[0].width, spec.waves[1].width, spec.waves[2].width,
                                         spec.waves[3].width, spec.waves[4].width});
    // Start early enough that no beat's tail is cut off at t = 0.
    const double first = std::ceil((spec.waves[T].center + reach) / spec.period_s());
    double onset = -first * spec.period_s();
    for (double beat = 1.0; onset < duration_s; beat += 1.0) {
        for (const Wave& w : spec.waves) {
            const double c = onset + w.center;
            const double lo = std::max(0.0, std::ceil((c - kReach * w.width) * rate_hz));
            const double hi = std::min(static_cast<double>(n) - 1.0, std::floor((c + kReach * w.width) * rate_hz));
            for (double i = lo; i <= hi; i += 1.0) {
                const double dt = i / rate_hz - c;
                rec.samples[static_cast<std::size_t>(i)] += w.amplitude * std::exp(-dt * dt / (2.0 * w.width * w.width));
            }
        }
        if (spec.hr_variability == 0.0) {
            onset = (beat - first) * spec.period_s();
        } else {
            onset += std::max(kMinPeriod, spec.period_s() + beat_rng.normal(0.0, spec.hr_variability));
        }
    }

    Rng noise_rng(derive_seed(spec.seed, "noise"));
    const double phase = Rng(derive_seed(spec.seed, "wander")).uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        if (spec.baseline_wander_amp > 0.0) {
            rec.samples[i] +=
                spec.baseline_wander_amp * std::sin(2.0 * std::numbers::pi * spec.baseline_wander_hz * t + phase);
        }
        if (spec.noise_sigma > 0.0) {
            rec.samples[i] += noise_rng.normal(0.0, spec.noise_sigma);
        }
    }
    return rec;
}

double max_normalized_xcorr(std::span<const double> a, std::span<const double> b, std::size_t max_lag) {
    if (a.size() != b.size() || a.empty()) {
        throw DimensionError("max_normalized_xcorr: windows must be non-empty and equal length");
    }
    const std::size_t n = a.size();
    max_lag = std::min(max_lag, n - 2);
    double best = -1.0;
    for (std::size_t s = 0; s <= 2 * max_lag; ++s) {
        const auto lag = static_cast<std::ptrdiff_t>(s) - static_cast<std::ptrdiff_t>(max_lag);
        const std::size_t ia = lag >= 0 ? static_cast<std::size_t>(lag) : 0;
        const std::size_t ib = lag >= 0 ? 0 : static_cast<std::size_t>(-lag);
        const std::size_t len = n - static_cast<std::size_t>(std::abs(lag));
        double ma = 0.0, mb = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            ma += a[ia + i];
            mb += b[ib + i];
        }
        ma /= static_cast<double>(len);
        mb /= static_cast<double>(len);
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            const double x = a[ia + i] - ma, y = b[ib + i] - mb;
            sab += x * y;
            saa += x * x;
            sbb += y * y;
        }
        if (saa > 0.0 && sbb > 0.0) {
            best = std::max(best, sab / std::sqrt(saa * sbb));
        }
    }
    return best;
}

void DatasetManifest::validate() const {
    if (dataset_id.empty()) {
        throw ConfigError("manifest: dataset_id is empty");
    }
    std::set<std::string> seen;
    for (const auto& e : entries) {
        if (e.subject_id.empty()) {
            throw ConfigError("manifest: entry without subject_id");
        }
        if (!seen.insert(e.subject_id).second) {
            throw ConfigError("manifest: duplicate subject '" + e.subject_id + "'");
        }
        if (!(e.sampling_rate_hz > 0.0)) {
            throw ConfigError("manifest: subject '" + e.subject_id + "' has a non-positive sampling rate");
        }
    }
}

namespace {

nlohmann::json spec_to_json(const SyntheticIdentitySpec& s) {
    nlohmann::json waves = nlohmann::json::object();
    for (std::size_t k = 0; k < 5; ++k) {
        waves[kWaveNames[k]] = {{"amplitude", s.waves[k].amplitude},
                                {"width", s.waves[k].width},
                                {"center", s.waves[k].center}};
    }
    return {{"heart_rate_bpm", s.heart_rate_bpm},
            {"waves", waves},
            {"hr_variability", s.hr_variability},
            {"baseline_wander_amp", s.baseline_wander_amp},
            {"baseline_wander_hz", s.baseline_wander_hz},
            {"noise_sigma", s.noise_sigma},
            {"seed", s.seed}};
}

SyntheticIdentitySpec spec_from_json(const nlohmann::json& j) {
    SyntheticIdentitySpec s;
    s.heart_rate_bpm = j.at("heart_rate_bpm").get<double>();
    for (std::size_t k = 0; k < 5; ++k) {
        const auto& w = j.at("waves").at(kWaveNames[k]);
        s.waves[k] = {w.at("amplitude").get<double>(), w.at("width").get<double>(), w.at("center").get<double>()};
    }
    s.hr_variability = j.at("hr_variability").get<double>();
    s.baseline_wander_amp = j.at("baseline_wander_amp").get<double>();
    s.baseline_wander_hz = j.at("baseline_wander_hz").get<double>();
    s.noise_sigma = j.at("noise_sigma").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

}  // namespace

nlohmann::json to_json(const DatasetManifest& m) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json j = {{"subject_id", e.subject_id},
                            {"path", e.path},
                            {"sampling_rate_hz", e.sampling_rate_hz},
                            {"condition", e.condition}};
        if (e.synthetic) {
            j["synthetic"] = spec_to_json(*e.synthetic);
        }
        entries.push_back(std::move(j));
    }
    return {{"schema_version", kManifestSchemaVersion}, {"dataset_id", m.dataset_id}, {"subjects", entries}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
        const int version = j.at("schema_version").get<int>();
        if (version != kManifestSchemaVersion) {
            throw ConfigError("manifest: unsupported schema_version " + std::to_string(version));
        }
        m.dataset_id = j.at("dataset_id").get<std::string>();
        for (const auto& e : j.at("subjects")) {
            ManifestEntry entry;
            entry.subject_id = e.at("subject_id").get<std::string>();
            entry.path = e.at("path").get<std::string>();
            entry.sampling_rate_hz = e.at("sampling_rate_hz").get<double>();
            entry.condition = e.value("condition", std::string{});
            if (e.contains("synthetic")) {
                entry.synthetic = spec_from_json(e.at("synthetic"));
            }
            m.entries.push_back(std::move(entry));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    manifest.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << to_json(manifest).dump(2) << '\n';
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read manifest " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest " + path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

signal::EcgRecord ingest_csv(const std::filesystem::path& path, const ManifestEntry& entry,
                             const std::string& dataset_id, IngestStats* stats) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    signal::EcgRecord rec;
    rec.subject_id = entry.subject_id;
    rec.dataset_id = dataset_id;
    rec.sampling_rate_hz = entry.sampling_rate_hz;
    IngestStats local;
    IngestStats& st = stats != nullptr ? *stats : local;
    st = {};
    int columns = 0;
    double last_time = -std::numeric_limits<double>::infinity();
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        ++st.data_lines;
        const auto comma = t.find(',');
        std::optional<double> value;
        int cols = 1;
        if (comma == std::string::npos) {
            value = parse_number(t);
        } else {
            cols = 2;
            const auto time = parse_number(trim(std::string_view(t).substr(0, comma)));
            const auto amp = parse_number(trim(std::string_view(t).substr(comma + 1)));
            if (time && amp) {
                if (!(*time > last_time)) {
                    throw IngestionError(path.string() + ":" + std::to_string(lineno) +
                                         ": time column is not strictly increasing");
                }
                last_time = *time;
                value = amp;
            }
        }
        if (value && columns != 0 && cols != columns) {
            value.reset();
        }
        if (!value) {
            ++st.malformed;
            st.malformed_lines.push_back(lineno);
            continue;
        }
        columns = cols;
        rec.samples.push_back(*value);
    }
    auto list_lines = [&] {
        std::string s;
        for (std::size_t i = 0; i < st.malformed_lines.size() && i < 20; ++i) {
            s += (i ? ", " : "") + std::to_string(st.malformed_lines[i]);
        }
        if (st.malformed_lines.size() > 20) {
            s += ", ...";
        }
        return s;
    };
    if (rec.samples.empty()) {
        throw IngestionError(path.string() + ": no samples" +
                             (st.malformed ? " (malformed lines: " + list_lines() + ")" : std::string{}));
    }
    if (static_cast<double>(st.malformed) > kMalformedBudget * static_cast<double>(st.data_lines)) {
        throw IngestionError(path.string() + ": " + std::to_string(st.malformed) + " of " +
                             std::to_string(st.data_lines) + " lines malformed (lines " + list_lines() + ")");
    }
    return rec;
}

void export_csv(const std::filesystem::path& path, const signal::EcgRecord& record) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << "# subject " << record.subject_id << ", " << format_double(record.sampling_rate_hz) << " Hz\n";
    for (double v : record.samples) {
        out << format_double(v) << '\n';
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::vector<signal::EcgRecord> load_records(const std::filesystem::path& manifest_path,
                                            const DatasetManifest& manifest) {
    manifest.validate();
    const auto base = manifest_path.parent_path();
    std::vector<signal::EcgRecord> out;
    for (const auto& e : manifest.entries) {
        const std::filesystem::path rel(e.path);
        const std::filesystem::path p = rel.is_absolute() ? rel : base / rel;
        out.push_back(ingest_csv(p, e, manifest.dataset_id));
    }
    return out;
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw IoError("sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

std::string records_hash(std::span<const signal::EcgRecord> records) {
    std::string buf;
    for (const auto& r : records) {
        buf += r.dataset_id + '\0' + r.subject_id + '\0' + format_double(r.sampling_rate_hz) + '\0';
        buf += std::to_string(r.samples.size()) + '\0';
        for (double v : r.samples) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int k = 0; k < 8; ++k) {
                buf += static_cast<char>((bits >> (8 * k)) & 0xff);
            }
        }
    }
    return sha256_hex(buf);
}

IdentityLabelMap::IdentityLabelMap(std::vector<std::string> subjects) : subjects_(std::move(subjects)) {
    std::vector<std::string> sorted = subjects_;
    std::sort(sorted.begin(), sorted.end());
    if (const auto it = std::adjacent_find(sorted.begin(), sorted.end()); it != sorted.end()) {
        throw LabelError("label map: duplicate subject '" + *it + "'");
    }
}

Label IdentityLabelMap::label_of(const std::string& subject) const {
    const auto it = std::find(subjects_.begin(), subjects_.end(), subject);
    return it == subjects_.end() ? Label::unknown() : Label(static_cast<int>(it - subjects_.begin()));
}

const std::string& IdentityLabelMap::subject_of(Label label) const {
    if (label.is_unknown() || static_cast<std::size_t>(label.value()) >= subjects_.size()) {
        throw LabelError("label map: no subject for label " + label.to_string());
    }
    return subjects_[static_cast<std::size_t>(label.value())];
}

IdentityLabelMap IdentityLabelMap::restricted_to(std::span<const std::string> keep) const {
    const std::set<std::string> k(keep.begin(), keep.end());
    std::vector<std::string> out;
    for (const auto& s : subjects_) {
        if (k.contains(s)) {
            out.push_back(s);
        }
    }
    return IdentityLabelMap(std::move(out));
}

IdentityLabelMap encode_labels(std::span<const DatasetManifest> manifests) {
    std::vector<std::pair<std::string, std::string>> keys;
    std::set<std::string> seen;
    for (const auto& m : manifests) {
        for (const auto& e : m.entries) {
            if (!seen.insert(e.subject_id).second) {
                throw LabelError("label encoding: subject '" + e.subject_id + "' appears in more than one place");
            }
            keys.emplace_back(m.dataset_id, e.subject_id);
        }
    }
    if (keys.empty()) {
        throw ConfigError("label encoding: no subjects");
    }
    std::sort(keys.begin(), keys.end());
    std::vector<std::string> subjects;
    for (auto& k : keys) {
        subjects.push_back(std::move(k.second));
    }
    return IdentityLabelMap(std::move(subjects));
}

}  // namespace ecglink::data
