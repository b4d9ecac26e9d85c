#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ecglink/data.hpp"
#include "ecglink/error.hpp"

using namespace ecglink;
using namespace ecglink::data;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = std::filesystem::temp_directory_path() /
                ("ecglink_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p) << text;
}

ManifestEntry entry(const std::string& subject, double rate = 250.0) {
    ManifestEntry e;
    e.subject_id = subject;
    e.path = subject + ".csv";
    e.sampling_rate_hz = rate;
    return e;
}

}  // namespace

TEST(Synthetic, DefaultSpecValid) { EXPECT_NO_THROW(SyntheticIdentitySpec{}.validate()); }

TEST(Synthetic, SpecInvariants) {
    SyntheticIdentitySpec s;
    s.waves[Q].center = s.waves[R].center;
    EXPECT_THROW(s.validate(), ConfigError);
    s = {};
    s.waves[T].amplitude = 2.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = {};
    s.heart_rate_bpm = 0.0;
    EXPECT_THROW(s.validate(), ConfigError);
    s = {};
    s.hr_variability = -0.1;
    EXPECT_THROW(s.validate(), ConfigError);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        EXPECT_NO_THROW(random_identity(seed).validate());
    }
    EXPECT_NE(random_identity(1), random_identity(2));
}

TEST(Synthetic, ExactlyPeriodicWithoutVariability) {
    SyntheticIdentitySpec s;
    s.heart_rate_bpm = 75.0;  // 0.8 s = 200 samples at 250 Hz
    const auto rec = synthesize(s, 10.0, 250.0);
    ASSERT_EQ(rec.samples.size(), 2500u);
    double peak = 0.0;
    for (std::size_t i = 0; i + 200 < rec.samples.size(); ++i) {
        EXPECT_NEAR(rec.samples[i + 200], rec.samples[i], 1e-12) << i;
        peak = std::max(peak, rec.samples[i]);
    }
    EXPECT_NEAR(peak, 1.2, 0.05);
}

TEST(Synthetic, TooShort) {
    SyntheticIdentitySpec s;
    EXPECT_THROW(synthesize(s, 1.0, 250.0), ConfigError);
}

TEST(Synthetic, AutocorrelationPeakAtOnePeriod) {
    for (std::uint64_t seed : {3u, 17u, 29u}) {
        SyntheticIdentitySpec s = random_identity(seed);
        s.hr_variability = 0.0;
        s.baseline_wander_amp = 0.0;
        s.noise_sigma = 0.0;
        const auto rec = synthesize(s, 20.0, 250.0);
        const double expected = s.period_s() * 250.0;
        const auto lo = static_cast<std::size_t>(0.5 * expected);
        const auto hi = static_cast<std::size_t>(1.5 * expected);
        const std::size_t n = rec.samples.size() - hi;
        std::size_t best_lag = 0;
        double best = -1e300;
        for (std::size_t lag = lo; lag <= hi; ++lag) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += rec.samples[i] * rec.samples[i + lag];
            }
            if (acc > best) {
                best = acc;
                best_lag = lag;
            }
        }
        EXPECT_LE(std::abs(static_cast<double>(best_lag) - expected), 1.0) << "seed " << seed;
    }
}

TEST(Synthetic, PureInSpecDurationRate) {
    const auto s = random_identity(5);
    const auto a = synthesize(s, 12.0, 250.0);
    const auto b = synthesize(s, 12.0, 250.0);
    EXPECT_EQ(a.samples, b.samples);
    auto other = s;
    other.seed = 6;
    EXPECT_NE(synthesize(other, 12.0, 250.0).samples, a.samples);
}

TEST(Synthetic, IdentitiesAreSeparable) {
    // 50 windows per identity, correlation over lags up to one beat
    const auto sa = random_identity(101), sb = random_identity(202);
    const auto wa = signal::segment(synthesize(sa, 400.0, 250.0));
    const auto wb = signal::segment(synthesize(sb, 400.0, 250.0));
    ASSERT_EQ(wa.size(), 50u);
    ASSERT_EQ(wb.size(), 50u);
    const auto lag = static_cast<std::size_t>(250.0 * std::max(sa.period_s(), sb.period_s()));
    double within = 0.0, across = 0.0;
    int nw = 0, nx = 0;
    for (std::size_t i = 0; i < 50; i += 5) {
        for (std::size_t j = i + 1; j < 50; j += 7) {
            within += max_normalized_xcorr(wa[i].values, wa[j].values, lag);
            within += max_normalized_xcorr(wb[i].values, wb[j].values, lag);
            nw += 2;
        }
        for (std::size_t j = 0; j < 50; j += 7) {
            across += max_normalized_xcorr(wa[i].values, wb[j].values, lag);
            ++nx;
        }
    }
    EXPECT_LT(across / nx, within / nw);
}

TEST(Xcorr, ShiftedCopyIsPerfect) {
    std::vector<double> a(100), b(100);
    for (std::size_t i = 0; i < 100; ++i) {
        a[i] = std::sin(0.3 * static_cast<double>(i)) + 0.01 * static_cast<double>(i % 7);
    }
    for (std::size_t i = 0; i < 100; ++i) {
        b[i] = i >= 4 ? a[i - 4] : 0.0;
    }
    EXPECT_NEAR(max_normalized_xcorr(a, b, 10), 1.0, 1e-12);
    EXPECT_LT(max_normalized_xcorr(a, b, 2), 0.999);
}

TEST(Manifest, JsonRoundTrip) {
    DatasetManifest m;
    m.dataset_id = "bench";
    m.entries.push_back(entry("a"));
    m.entries.push_back(entry("b", 360.0));
    m.entries.back().condition = "arrhythmia";
    m.entries.back().synthetic = random_identity(4);
    EXPECT_EQ(manifest_from_json(nlohmann::json::parse(to_json(m).dump())), m);
    TempDir dir;
    save_manifest(dir.path() / "m.json", m);
    EXPECT_EQ(load_manifest(dir.path() / "m.json"), m);
}

TEST(Manifest, Validation) {
    DatasetManifest m;
    m.dataset_id = "x";
    m.entries = {entry("a"), entry("a")};
    EXPECT_THROW(m.validate(), ConfigError);
    m.entries = {entry("a", 0.0)};
    EXPECT_THROW(m.validate(), ConfigError);
    auto j = to_json(DatasetManifest{"x", {entry("a")}});
    j["schema_version"] = 99;
    EXPECT_THROW(manifest_from_json(j), ConfigError);
    EXPECT_THROW(manifest_from_json(nlohmann::json::object()), ConfigError);
}

TEST(Ingest, SingleColumn) {
    TempDir dir;
    write_file(dir.path() / "a.csv", "0.1\n0.2\n0.3");
    const auto rec = ingest_csv(dir.path() / "a.csv", entry("a"), "d");
    EXPECT_EQ(rec.samples, (std::vector<double>{0.1, 0.2, 0.3}));
    EXPECT_EQ(rec.sampling_rate_hz, 250.0);
    EXPECT_EQ(rec.subject_id, "a");
    EXPECT_EQ(rec.dataset_id, "d");
}

TEST(Ingest, TwoColumnsAndComments) {
    TempDir dir;
    write_file(dir.path() / "a.csv", "# time,mv\n0.000, 1.5\n\n0.004,-2\n0.008,+3e-1\r\n");
    const auto rec = ingest_csv(dir.path() / "a.csv", entry("a"), "d");
    EXPECT_EQ(rec.samples, (std::vector<double>{1.5, -2.0, 0.3}));
}

TEST(Ingest, NonMonotonicTime) {
    TempDir dir;
    write_file(dir.path() / "a.csv", "0,1\n0.004,2\n0.004,3\n");
    try {
        ingest_csv(dir.path() / "a.csv", entry("a"), "d");
        FAIL();
    } catch (const IngestionError& e) {
        EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
    }
}

TEST(Ingest, MalformedBudget) {
    TempDir dir;
    std::string ok, bad;
    for (int i = 0; i < 200; ++i) {
        ok += (i == 57 || i == 133) ? "x\n" : "1.0\n";
        bad += (i == 10 || i == 20 || i == 30) ? "nan?\n" : "1.0\n";
    }
    write_file(dir.path() / "ok.csv", ok);
    write_file(dir.path() / "bad.csv", bad);
    IngestStats st;
    const auto rec = ingest_csv(dir.path() / "ok.csv", entry("a"), "d", &st);
    EXPECT_EQ(rec.samples.size(), 198u);
    EXPECT_EQ(st.malformed_lines, (std::vector<std::size_t>{58, 134}));
    try {
        ingest_csv(dir.path() / "bad.csv", entry("a"), "d");
        FAIL();
    } catch (const IngestionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("11, 21, 31"), std::string::npos) << msg;
    }
}

TEST(Ingest, EmptyAndMissing) {
    TempDir dir;
    write_file(dir.path() / "empty.csv", "# nothing\n");
    EXPECT_THROW(ingest_csv(dir.path() / "empty.csv", entry("a"), "d"), IngestionError);
    EXPECT_THROW(ingest_csv(dir.path() / "missing.csv", entry("a"), "d"), IoError);
}

TEST(Ingest, ExportRoundTrip) {
    TempDir dir;
    auto rec = synthesize(random_identity(8), 6.0, 250.0, "s8", "d");
    rec.samples[3] = -0.0;
    rec.samples[4] = 1e-310;
    export_csv(dir.path() / "s8.csv", rec);
    const auto back = ingest_csv(dir.path() / "s8.csv", entry("s8"), "d");
    ASSERT_EQ(back.samples.size(), rec.samples.size());
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(back.samples[i]), std::bit_cast<std::uint64_t>(rec.samples[i]));
    }
    EXPECT_EQ(records_hash(std::vector<signal::EcgRecord>{back}), records_hash(std::vector<signal::EcgRecord>{rec}));
}

TEST(Ingest, LoadRecordsRelativeToManifest) {
    TempDir dir;
    std::filesystem::create_directories(dir.path() / "sub");
    write_file(dir.path() / "sub" / "a.csv", "1\n2\n");
    write_file(dir.path() / "sub" / "b.csv", "3\n");
    DatasetManifest m{"d", {entry("a"), entry("b")}};
    const auto recs = load_records(dir.path() / "sub" / "manifest.json", m);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[1].samples, std::vector<double>{3.0});
}

TEST(Hash, KnownVectors) {
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Labels, SortedByDatasetThenSubject) {
    const std::vector<DatasetManifest> ms{{"zeta", {entry("b"), entry("a")}}, {"alpha", {entry("q")}}};
    const auto map = encode_labels(ms);
    EXPECT_EQ(map.subjects(), (std::vector<std::string>{"q", "a", "b"}));
    EXPECT_EQ(map.label_of("a"), Label(1));
    EXPECT_EQ(map.subject_of(Label(2)), "b");
    EXPECT_TRUE(map.label_of("nobody").is_unknown());
    EXPECT_EQ(encode_labels(ms), map);
    const std::vector<DatasetManifest> one{{"d", {entry("b"), entry("a")}}};
    EXPECT_EQ(encode_labels(one).label_of("a"), Label(0));
}

TEST(Labels, BijectionAndErrors) {
    const std::vector<DatasetManifest> clash{{"x", {entry("s1")}}, {"y", {entry("s1")}}};
    EXPECT_THROW(encode_labels(clash), LabelError);
    EXPECT_THROW(encode_labels(std::vector<DatasetManifest>{}), ConfigError);
    const IdentityLabelMap map({"c", "a", "b"});
    for (std::size_t i = 0; i < map.size(); ++i) {
        EXPECT_EQ(map.label_of(map.subject_of(Label(static_cast<int>(i)))), Label(static_cast<int>(i)));
    }
    EXPECT_THROW(map.subject_of(Label::unknown()), LabelError);
    EXPECT_THROW(map.subject_of(Label(3)), LabelError);
    EXPECT_THROW(IdentityLabelMap({"a", "a"}), LabelError);
    const std::vector<std::string> keep{"b", "c"};
    EXPECT_EQ(map.restricted_to(keep).subjects(), (std::vector<std::string>{"c", "b"}));
}
