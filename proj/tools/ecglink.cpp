// ecglink: synth | run | sweep | report

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ecglink/error.hpp"
#include "ecglink/parallel.hpp"
#include "ecglink/pipeline.hpp"
#include "ecglink/rng.hpp"

namespace fs = std::filesystem;
using namespace ecglink;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kStage = 2, kIntegrity = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void progress(const std::string& msg) { std::cerr << msg << '\n'; }

std::string fmt(double v, int precision = 4) {
    if (std::isnan(v)) {
        return "n/a";
    }
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(precision) << v;
    return ss.str();
}

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

// Refuses a non-empty directory unless forced, in which case it is cleared.
void claim_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir) && !fs::is_directory(dir)) {
        throw UsageError(dir.string() + " exists and is not a directory");
    }
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!force) {
            throw UsageError(dir.string() + " is not empty (use --force to replace it)");
        }
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

struct Column {
    const char* title;
    const char* key;
};

const Column kColumns[] = {
    {"acc", "accuracy"},          {"f1", "f1"},         {"eer", "eer"},
    {"fpr", "fpr"},               {"fnr", "fnr"},       {"re-id", "reidentification_rate"},
    {"protect", "protection_rate"}, {"known_acc", "known_accuracy"},
};

void print_summary(std::ostream& out, const json& replicates, const json& summary) {
    out << std::left << std::setw(10) << "replicate";
    for (const auto& c : kColumns) {
        out << std::right << std::setw(11) << c.title;
    }
    out << '\n';
    for (const auto& r : replicates) {
        out << std::left << std::setw(10) << r.at("replicate").get<std::size_t>();
        for (const auto& c : kColumns) {
            out << std::right << std::setw(11) << fmt(metrics::number_from_json(r.at("metrics").at(c.key)));
        }
        out << '\n';
    }
    for (const char* stat : {"mean", "sd"}) {
        out << std::left << std::setw(10) << stat;
        for (const auto& c : kColumns) {
            out << std::right << std::setw(11) << fmt(metrics::number_from_json(summary.at(c.key).at(stat)));
        }
        out << '\n';
    }
}

std::vector<double> parse_thresholds(const std::vector<std::string>& items) {
    std::vector<double> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        for (std::string tok; std::getline(ss, tok, ',');) {
            double v = 0.0;
            const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (tok.empty() || r.ec != std::errc() || r.ptr != tok.data() + tok.size() || !std::isfinite(v)) {
                throw UsageError("bad threshold '" + tok + "'");
            }
            if (!out.empty() && !(v > out.back())) {
                throw UsageError("thresholds must be strictly increasing");
            }
            out.push_back(v);
        }
    }
    if (out.empty()) {
        throw UsageError("no thresholds given");
    }
    return out;
}

fs::path existing_bundle(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw UsageError("no bundle directory at " + dir.string());
    }
    return dir;
}

struct Sweep {
    std::vector<std::vector<metrics::SweepRow>> per_replicate;
};

Sweep sweep_bundle(const pipeline::Bundle& b, const std::vector<double>& thresholds) {
    Sweep s;
    for (const auto& r : b.replicates) {
        std::vector<Label> stage1, truth;
        std::vector<double> tau;
        for (const auto& sc : r.scores) {
            stage1.push_back(sc.stage1);
            truth.push_back(sc.truth);
            tau.push_back(sc.tau);
        }
        s.per_replicate.push_back(metrics::confidence_sweep(stage1, tau, truth, thresholds));
    }
    return s;
}

void write_sweep_csv(std::ostream& out, const Sweep& s, const std::vector<double>& thresholds) {
    out << "replicate,threshold,u_to_k_pct,k_to_u_pct,total_pct\n";
    for (std::size_t r = 0; r < s.per_replicate.size(); ++r) {
        for (const auto& row : s.per_replicate[r]) {
            out << r << ',' << shortest(row.threshold) << ',' << shortest(row.u_to_k_pct) << ','
                << shortest(row.k_to_u_pct) << ',' << shortest(row.total_pct) << '\n';
        }
    }
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
        std::vector<double> u, k, total;
        for (const auto& rows : s.per_replicate) {
            u.push_back(rows[t].u_to_k_pct);
            k.push_back(rows[t].k_to_u_pct);
            total.push_back(rows[t].total_pct);
        }
        out << "mean," << shortest(thresholds[t]) << ',' << shortest(metrics::mean_sd(u).mean) << ','
            << shortest(metrics::mean_sd(k).mean) << ',' << shortest(metrics::mean_sd(total).mean) << '\n';
    }
}

int cmd_synth(const fs::path& out, std::size_t identities, double duration, double rate, std::uint64_t seed,
              bool force) {
    if (identities < 2) {
        throw UsageError("--identities must be at least 2");
    }
    if (!(duration > 0.0) || !(rate > 0.0)) {
        throw UsageError("--duration and --rate must be positive");
    }
    const auto dataset = pipeline::synthetic_dataset({identities, duration, rate, seed});
    claim_dir(out, force);
    data::DatasetManifest manifest = dataset.manifest;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        manifest.entries[i].path = manifest.entries[i].subject_id + ".csv";
        data::export_csv(out / manifest.entries[i].path, dataset.records[i]);
    }
    data::save_manifest(out / "manifest.json", manifest);
    std::cout << (out / "manifest.json").string() << '\n';
    progress("wrote " + std::to_string(identities) + " identities, dataset hash " + dataset.hash);
    return kOk;
}

int cmd_run(const fs::path& config_path, std::optional<std::uint64_t> seed, std::size_t threads, bool dry_run,
            const std::optional<fs::path>& out, bool force) {
    pipeline::RunConfig config = pipeline::load_config(config_path);
    const fs::path base = fs::absolute(config_path).parent_path();
    if (seed) {
        config.seed = *seed;
    }
    if (!config.manifest.empty() && fs::path(config.manifest).is_relative()) {
        config.manifest = (base / config.manifest).lexically_normal().string();
    }

    if (dry_run) {
        pipeline::Dataset dataset;
        try {
            dataset = pipeline::prepare_dataset(config, base);
        } catch (const Error& e) {
            throw pipeline::StageError("ingest", e.what(), dynamic_cast<const IntegrityError*>(&e) != nullptr);
        }
        std::cout << "dataset " << dataset.manifest.dataset_id << ": " << dataset.records.size() << " records, "
                  << dataset.windows.size() << " windows, hash " << dataset.hash << '\n';
        std::cout << "scenario " << scenarios::to_string(config.scenario.kind) << ", seed " << config.seed << ", "
                  << config.replicates << " replicate(s), " << config.training.epochs << " epochs max\n";
        for (std::size_t r = 0; r < config.replicates; ++r) {
            scenarios::ScenarioConfig sc = config.scenario;
            sc.split.seed = derive_seed(pipeline::replicate_seed(config.seed, r), "split");
            const auto plan = scenarios::build_plan(dataset.windows, sc, dataset.hash);
            std::cout << "replicate " << r << ": known " << plan.known.size() << ", unknown " << plan.unknown.size()
                      << ", windows train " << plan.train.size() << " val " << plan.val.size() << " test "
                      << plan.test.size() << '\n';
        }
        return kOk;
    }

    if (out) {
        claim_dir(*out, force);
    }
    const auto run = pipeline::run_experiment(config, base, threads, progress);
    const fs::path dir = pipeline::persist_run(run, base, out);
    const json report = json::parse(std::ifstream(dir / "report.json"));
    std::cout << "bundle " << dir.string() << '\n';
    std::cout << "hash " << pipeline::verify_bundle(dir) << '\n';
    print_summary(std::cout, report.at("replicates"), report.at("summary"));
    return kOk;
}

int cmd_sweep(const fs::path& bundle_dir, const std::vector<std::string>& items, const std::optional<fs::path>& out) {
    const auto thresholds = parse_thresholds(items);
    const auto bundle = pipeline::load_bundle(existing_bundle(bundle_dir));
    const Sweep s = sweep_bundle(bundle, thresholds);
    if (out) {
        std::ofstream f(*out);
        if (!f) {
            throw UsageError("cannot write " + out->string());
        }
        write_sweep_csv(f, s, thresholds);
    } else {
        write_sweep_csv(std::cout, s, thresholds);
    }
    return kOk;
}

int cmd_report(const fs::path& bundle_dir, const std::optional<fs::path>& roc_out) {
    const auto b = pipeline::load_bundle(existing_bundle(bundle_dir));
    const json& report = b.report;
    std::cout << "bundle " << bundle_dir.string() << "\nhash " << b.hash << '\n'
              << "scenario " << report.at("scenario").get<std::string>() << ", seed " << report.at("seed") << ", "
              << b.replicates.size() << " replicate(s)\n\n";
    print_summary(std::cout, report.at("replicates"), report.at("summary"));

    std::cout << "\nconfidence sweep (mean over replicates)\n";
    std::cout << std::setw(10) << "threshold" << std::setw(10) << "U->K %" << std::setw(10) << "K->U %"
              << std::setw(10) << "total %" << '\n';
    const auto thresholds = b.config.at("sweep_thresholds").get<std::vector<double>>();
    if (!thresholds.empty()) {
        const Sweep s = sweep_bundle(b, thresholds);
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            std::vector<double> u, k, total;
            for (const auto& rows : s.per_replicate) {
                u.push_back(rows[t].u_to_k_pct);
                k.push_back(rows[t].k_to_u_pct);
                total.push_back(rows[t].total_pct);
            }
            std::cout << std::setw(10) << shortest(thresholds[t]) << std::setw(10) << fmt(metrics::mean_sd(u).mean, 2)
                      << std::setw(10) << fmt(metrics::mean_sd(k).mean, 2) << std::setw(10)
                      << fmt(metrics::mean_sd(total).mean, 2) << '\n';
        }
    }

    std::ofstream roc_file;
    if (roc_out) {
        roc_file.open(*roc_out);
        if (!roc_file) {
            throw UsageError("cannot write " + roc_out->string());
        }
    }
    std::ostream& roc = roc_out ? static_cast<std::ostream&>(roc_file) : std::cout;
    if (!roc_out) {
        roc << '\n';
    }
    roc << "replicate,threshold,far,frr\n";
    for (std::size_t r = 0; r < b.replicates.size(); ++r) {
        std::vector<double> genuine, impostor;
        for (const auto& s : b.replicates[r].scores) {
            if (s.truth.is_unknown()) {
                impostor.push_back(s.tau);
            } else if (s.stage1 == s.truth) {
                genuine.push_back(s.tau);
            }
        }
        if (genuine.empty() || impostor.empty()) {
            continue;
        }
        for (const auto& p : metrics::roc_points(genuine, impostor)) {
            roc << r << ',' << (std::isinf(p.threshold) ? (p.threshold > 0 ? "inf" : "-inf") : shortest(p.threshold))
                << ',' << shortest(p.far) << ',' << shortest(p.frr) << '\n';
        }
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECG linkage attack experiments"};
    app.require_subcommand(1);
    std::size_t threads = default_threads();
    bool force = false;

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset (CSV records and a manifest)");
    std::string synth_out;
    std::size_t identities = 10;
    double duration = 120.0, rate = 250.0;
    std::uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--identities", identities, "number of identities")->capture_default_str();
    synth->add_option("--duration", duration, "seconds per record")->capture_default_str();
    synth->add_option("--rate", rate, "sampling rate, Hz")->capture_default_str();
    synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
    synth->add_flag("--force", force, "replace a non-empty output directory");

    auto* run = app.add_subcommand("run", "run an experiment and write a bundle");
    std::string config_path, run_out;
    std::optional<std::uint64_t> run_seed;
    bool dry_run = false;
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--seed", run_seed, "override the config seed");
    run->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    run->add_flag("--dry-run", dry_run, "validate and print the plan without training");
    run->add_option("--out", run_out, "bundle directory (default: timestamped under output_dir)");
    run->add_flag("--force", force, "replace a non-empty --out directory");

    auto* sweep = app.add_subcommand("sweep", "re-decide a bundle's outcomes over confidence thresholds");
    std::string sweep_bundle_dir, sweep_out;
    std::vector<std::string> thresholds{"0.01,0.02,0.03,0.04,0.05"};
    sweep->add_option("bundle", sweep_bundle_dir, "run bundle directory")->required();
    sweep->add_option("--thresholds", thresholds, "strictly increasing, comma separated")->capture_default_str();
    sweep->add_option("--out", sweep_out, "CSV file (default: stdout)");

    auto* report = app.add_subcommand("report", "summarize a bundle");
    std::string report_bundle_dir, roc_out;
    report->add_option("bundle", report_bundle_dir, "run bundle directory")->required();
    report->add_option("--roc", roc_out, "write (threshold, FAR, FRR) CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    auto opt_path = [](const std::string& s) { return s.empty() ? std::nullopt : std::optional<fs::path>(s); };
    try {
        if (*synth) {
            return cmd_synth(synth_out, identities, duration, rate, synth_seed, force);
        }
        if (*run) {
            return cmd_run(config_path, run_seed, threads, dry_run, opt_path(run_out), force);
        }
        if (*sweep) {
            return cmd_sweep(sweep_bundle_dir, thresholds, opt_path(sweep_out));
        }
        return cmd_report(report_bundle_dir, opt_path(roc_out));
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const pipeline::StageError& e) {
        std::cerr << "stage failure: " << e.what() << '\n';
        return e.integrity() ? kIntegrity : kStage;
    } catch (const IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << '\n';
        return kIntegrity;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kStage;
    }
}
