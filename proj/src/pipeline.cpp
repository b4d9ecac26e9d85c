#include "ecglink/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "ecglink/error.hpp"
#include "ecglink/model/checkpoint.hpp"
#include "ecglink/rng.hpp"

#ifndef ECGLINK_VERSION
#define ECGLINK_VERSION "0.0.0"
#endif

namespace ecglink::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be rejected.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) {
            throw ConfigError("config: '" + name_ + "' must be an object");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) {
            return;
        }
        seen_.insert(key);
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) {
                fail(key, "expected true or false");
            }
        } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
                fail(key, "expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) {
                fail(key, "expected a number");
            }
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) {
                fail(key, "expected a string");
            }
        }
        try {
            out = v.get<T>();
        } catch (const json::exception& e) {
            fail(key, e.what());
        }
    }

    Section sub(const char* key) {
        seen_.insert(key);
        return Section(j_.at(key), name_.empty() ? std::string(key) : name_ + "." + key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.contains(k)) {
                throw ConfigError("config: unknown key '" + (name_.empty() ? k : name_ + "." + k) + "'");
            }
        }
    }

private:
    [[noreturn]] void fail(const char* key, const std::string& what) const {
        throw ConfigError("config: '" + (name_.empty() ? std::string(key) : name_ + "." + key) + "': " + what);
    }

    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

template <class F>
auto in_stage(const char* stage, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const IntegrityError& e) {
        throw StageError(stage, e.what(), true);
    } catch (const Error& e) {
        throw StageError(stage, e.what());
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
}

std::string label_text(Label l) { return l.is_unknown() ? "unknown" : std::to_string(l.value()); }

Label label_from_text(const std::string& s) {
    if (s == "unknown") {
        return Label::unknown();
    }
    int v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || v < 0) {
        throw IntegrityError("scores: bad label '" + s + "'");
    }
    return Label(v);
}

std::string replicate_dir(std::size_t r) { return "replicate_" + std::to_string(r); }

// Known windows with their patches permuted: same amplitude statistics, no
// beat structure.
std::vector<double> patch_shuffled(std::span<const double> values, std::size_t patch, Rng& rng) {
    std::vector<std::size_t> order(values.size() / patch);
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    rng.shuffle(order);
    std::vector<double> out;
    out.reserve(values.size());
    for (std::size_t p : order) {
        out.insert(out.end(), values.begin() + static_cast<std::ptrdiff_t>(p * patch),
                   values.begin() + static_cast<std::ptrdiff_t>((p + 1) * patch));
    }
    return out;
}

}  // namespace

void RunConfig::validate() const {
    if (manifest.empty() == !synthetic.has_value()) {
        throw ConfigError("config: dataset needs exactly one of 'manifest' or 'synthetic'");
    }
    if (synthetic) {
        if (synthetic->identities < 2) {
            throw ConfigError("config: dataset.synthetic.identities must be at least 2");
        }
        if (!(synthetic->duration_s > 0.0) || !(synthetic->rate_hz > 0.0)) {
            throw ConfigError("config: dataset.synthetic duration_s and rate_hz must be positive");
        }
    }
    if (!(target_rate_hz > 0.0)) {
        throw ConfigError("config: preprocess.target_rate_hz must be positive");
    }
    if (window_len == 0) {
        throw ConfigError("config: preprocess.window_len must be positive");
    }
    model::ViTConfig v = vit;
    v.window_len = window_len;
    v.num_classes = 2;
    if (model_kind == model::ModelKind::vit) {
        v.validate();
    }
    training.validate();
    if (!training.augment.is_identity()) {
        training.augment.validate(window_len);
    }
    scenario.validate();
    threshold.validate();
    for (std::size_t i = 0; i < sweep_thresholds.size(); ++i) {
        if (!std::isfinite(sweep_thresholds[i]) || (i > 0 && !(sweep_thresholds[i] > sweep_thresholds[i - 1]))) {
            throw ConfigError("config: sweep_thresholds must be finite and strictly increasing");
        }
    }
    if (replicates == 0) {
        throw ConfigError("config: replicates must be at least 1");
    }
    if (discriminator.enabled &&
        (discriminator.hidden == 0 || discriminator.epochs == 0 ||
         !(discriminator.threshold > 0.0 && discriminator.threshold < 1.0))) {
        throw ConfigError("config: discriminator needs positive hidden and epochs and a threshold in (0, 1)");
    }
    if (output_dir.empty()) {
        throw ConfigError("config: output_dir is empty");
    }
}

RunConfig config_from_json(const json& j) {
    RunConfig c;
    Section root(j, "");
    if (root.has("dataset")) {
        Section d = root.sub("dataset");
        d.get("manifest", c.manifest);
        if (d.has("synthetic")) {
            Section s = d.sub("synthetic");
            SyntheticDataset syn;
            s.get("identities", syn.identities);
            s.get("duration_s", syn.duration_s);
            s.get("rate_hz", syn.rate_hz);
            s.get("seed", syn.seed);
            s.finish();
            c.synthetic = syn;
        }
        d.finish();
    }
    if (root.has("preprocess")) {
        Section p = root.sub("preprocess");
        p.get("target_rate_hz", c.target_rate_hz);
        p.get("window_len", c.window_len);
        p.finish();
    }
    if (root.has("model")) {
        Section m = root.sub("model");
        std::string kind = model::to_string(c.model_kind);
        m.get("kind", kind);
        c.model_kind = model::model_kind_from_string(kind);
        m.get("patch_size", c.vit.patch_size);
        m.get("embed_dim", c.vit.embed_dim);
        m.get("num_layers", c.vit.num_layers);
        m.get("num_heads", c.vit.num_heads);
        m.get("mlp_dim", c.vit.mlp_dim);
        m.get("survival_prob", c.vit.survival_prob);
        m.finish();
    }
    if (root.has("training")) {
        Section t = root.sub("training");
        t.get("epochs", c.training.epochs);
        t.get("batch_size", c.training.batch_size);
        t.get("patience", c.training.patience);
        t.get("lr_max", c.training.lr_max);
        t.get("lr_min", c.training.lr_min);
        t.get("weight_decay", c.training.weight_decay);
        t.get("warmup_fraction", c.training.warmup_fraction);
        if (t.has("augment")) {
            Section a = t.sub("augment");
            a.get("noise_sigma", c.training.augment.noise_sigma);
            a.get("scale_lo", c.training.augment.scale_lo);
            a.get("scale_hi", c.training.augment.scale_hi);
            a.get("flip_prob", c.training.augment.flip_prob);
            a.get("max_shift", c.training.augment.max_shift);
            a.finish();
        }
        t.finish();
    }
    if (root.has("scenario")) {
        Section s = root.sub("scenario");
        std::string kind = scenarios::to_string(c.scenario.kind);
        s.get("kind", kind);
        c.scenario.kind = scenarios::scenario_kind_from_string(kind);
        s.get("noise_sigma", c.scenario.noise_sigma);
        s.get("train_frac", c.scenario.split.train_frac);
        s.get("val_frac", c.scenario.split.val_frac);
        s.get("test_frac", c.scenario.split.test_frac);
        s.get("known_identity_frac", c.scenario.split.known_identity_frac);
        s.finish();
    }
    if (root.has("threshold")) {
        Section t = root.sub("threshold");
        std::string mode = "percentile";
        t.get("mode", mode);
        if (mode == "percentile") {
            c.threshold.mode = attack::ThresholdPolicy::Mode::percentile;
            t.get("p", c.threshold.p);
            if (t.has("phi")) {
                throw ConfigError("config: threshold.phi is only valid in absolute mode");
            }
        } else if (mode == "absolute") {
            c.threshold.mode = attack::ThresholdPolicy::Mode::absolute;
            t.get("phi", c.threshold.phi);
            if (t.has("p")) {
                throw ConfigError("config: threshold.p is only valid in percentile mode");
            }
        } else {
            throw ConfigError("config: threshold.mode must be 'percentile' or 'absolute'");
        }
        t.finish();
    }
    if (root.has("discriminator")) {
        Section d = root.sub("discriminator");
        d.get("enabled", c.discriminator.enabled);
        d.get("hidden", c.discriminator.hidden);
        d.get("epochs", c.discriminator.epochs);
        d.get("threshold", c.discriminator.threshold);
        d.finish();
    }
    root.get("sweep_thresholds", c.sweep_thresholds);
    root.get("seed", c.seed);
    root.get("replicates", c.replicates);
    root.get("output_dir", c.output_dir);
    root.finish();
    c.validate();
    return c;
}

json to_json(const RunConfig& c) {
    json dataset = json::object();
    if (c.synthetic) {
        dataset["synthetic"] = {{"identities", c.synthetic->identities},
                                {"duration_s", c.synthetic->duration_s},
                                {"rate_hz", c.synthetic->rate_hz},
                                {"seed", c.synthetic->seed}};
    } else {
        dataset["manifest"] = c.manifest;
    }
    json threshold = {{"mode", c.threshold.mode == attack::ThresholdPolicy::Mode::percentile ? "percentile" : "absolute"}};
    if (c.threshold.mode == attack::ThresholdPolicy::Mode::percentile) {
        threshold["p"] = c.threshold.p;
    } else {
        threshold["phi"] = c.threshold.phi;
    }
    const auto& a = c.training.augment;
    return {
        {"dataset", dataset},
        {"preprocess", {{"target_rate_hz", c.target_rate_hz}, {"window_len", c.window_len}}},
        {"model",
         {{"kind", model::to_string(c.model_kind)},
          {"patch_size", c.vit.patch_size},
          {"embed_dim", c.vit.embed_dim},
          {"num_layers", c.vit.num_layers},
          {"num_heads", c.vit.num_heads},
          {"mlp_dim", c.vit.mlp_dim},
          {"survival_prob", c.vit.survival_prob}}},
        {"training",
         {{"epochs", c.training.epochs},
          {"batch_size", c.training.batch_size},
          {"patience", c.training.patience},
          {"lr_max", c.training.lr_max},
          {"lr_min", c.training.lr_min},
          {"weight_decay", c.training.weight_decay},
          {"warmup_fraction", c.training.warmup_fraction},
          {"augment",
           {{"noise_sigma", a.noise_sigma},
            {"scale_lo", a.scale_lo},
            {"scale_hi", a.scale_hi},
            {"flip_prob", a.flip_prob},
            {"max_shift", a.max_shift}}}}},
        {"scenario",
         {{"kind", scenarios::to_string(c.scenario.kind)},
          {"noise_sigma", c.scenario.noise_sigma},
          {"train_frac", c.scenario.split.train_frac},
          {"val_frac", c.scenario.split.val_frac},
          {"test_frac", c.scenario.split.test_frac},
          {"known_identity_frac", c.scenario.split.known_identity_frac}}},
        {"threshold", threshold},
        {"discriminator",
         {{"enabled", c.discriminator.enabled},
          {"hidden", c.discriminator.hidden},
          {"epochs", c.discriminator.epochs},
          {"threshold", c.discriminator.threshold}}},
        {"sweep_thresholds", c.sweep_thresholds},
        {"seed", c.seed},
        {"replicates", c.replicates},
        {"output_dir", c.output_dir},
    };
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

Dataset synthetic_dataset(const SyntheticDataset& s) {
    Dataset d;
    d.manifest.dataset_id = "synthetic";
    const std::size_t width = std::to_string(s.identities - 1).size();
    for (std::size_t i = 0; i < s.identities; ++i) {
        std::string id = std::to_string(i);
        id = "s" + std::string(width - id.size(), '0') + id;
        data::ManifestEntry e;
        e.subject_id = id;
        e.sampling_rate_hz = s.rate_hz;
        e.synthetic = data::random_identity(derive_seed(s.seed, "identity", i));
        d.records.push_back(data::synthesize(*e.synthetic, s.duration_s, s.rate_hz, id, d.manifest.dataset_id));
        d.manifest.entries.push_back(std::move(e));
    }
    d.hash = data::records_hash(d.records);
    return d;
}

Dataset prepare_dataset(const RunConfig& config, const fs::path& base_dir) {
    Dataset d;
    if (config.synthetic) {
        d = synthetic_dataset(*config.synthetic);
    } else {
        const fs::path path = fs::path(config.manifest).is_absolute() ? fs::path(config.manifest)
                                                                        : base_dir / config.manifest;
        d.manifest = data::load_manifest(path);
        d.records = data::load_records(path, d.manifest);
        d.hash = data::records_hash(d.records);
    }
    data::encode_labels(std::span<const data::DatasetManifest>(&d.manifest, 1));
    for (const auto& rec : d.records) {
        const auto windows = signal::segment(signal::resample(rec, config.target_rate_hz), config.window_len);
        d.windows.insert(d.windows.end(), windows.begin(), windows.end());
    }
    if (d.windows.empty()) {
        throw InputError("no record is long enough for a single window");
    }
    return d;
}

std::uint64_t replicate_seed(std::uint64_t seed, std::size_t replicate) {
    return derive_seed(seed, "replicate", replicate);
}

TrainedReplicate train_replicate(const RunConfig& config, const scenarios::ScenarioConfig& scenario,
                                 const Dataset& dataset, std::size_t replicate, std::size_t threads,
                                 const Progress& progress) {
    TrainedReplicate t;
    t.replicate = replicate;
    t.seed = replicate_seed(config.seed, replicate);
    auto say = [&](const std::string& msg) {
        if (progress) {
            progress("[replicate " + std::to_string(replicate) + "] " + msg);
        }
    };

    in_stage("split", [&] {
        scenarios::ScenarioConfig sc = scenario;
        sc.split.seed = derive_seed(t.seed, "split");
        t.plan = scenarios::build_plan(dataset.windows, sc, dataset.hash);
        scenarios::validate_plan(t.plan, dataset.windows);
        t.labels = data::encode_labels(std::span<const data::DatasetManifest>(&dataset.manifest, 1))
                       .restricted_to(t.plan.known);
        std::map<std::string, const signal::Window*> by_id;
        for (const auto& w : dataset.windows) {
            by_id[w.id()] = &w;
        }
        auto pick = [&](const std::vector<std::string>& ids, std::vector<signal::Window>& out) {
            for (const auto& id : ids) {
                signal::Window w = *by_id.at(id);
                w.label = t.labels.label_of(w.subject_id);
                out.push_back(std::move(w));
            }
        };
        pick(t.plan.train, t.train);
        pick(t.plan.val, t.val);
        pick(t.plan.test, t.test);
        say("plan: " + std::to_string(t.plan.known.size()) + " known / " + std::to_string(t.plan.unknown.size()) +
            " unknown identities, " + std::to_string(t.train.size()) + "/" + std::to_string(t.val.size()) + "/" +
            std::to_string(t.test.size()) + " windows");
    });

    in_stage("train", [&] {
        model::ViTConfig vit = config.vit;
        vit.window_len = config.window_len;
        vit.num_classes = t.labels.size();
        t.model.emplace(config.model_kind, vit, derive_seed(t.seed, "init"));
        model::TrainOptions opts = config.training;
        opts.threads = threads;
        t.training = model::train(*t.model, t.train, t.val, opts, derive_seed(t.seed, "train"),
                                  [&](const model::EpochRecord& r) {
                                      if (r.epoch % 10 == 0 || r.epoch + 1 == opts.epochs) {
                                          std::ostringstream ss;
                                          ss << "epoch " << r.epoch << " loss " << std::setprecision(4) << r.train_loss
                                             << " val_loss " << r.val_loss << " val_f1 " << r.val_f1;
                                          say(ss.str());
                                      }
                                  });
        say("best epoch " + std::to_string(t.training.best_epoch) + (t.training.early_stopped ? " (early stop)" : ""));
    });

    in_stage("calibrate", [&] {
        const auto conf = attack::confidences(*t.model, t.val, threads);
        t.phi = attack::calibrate_threshold(conf, config.threshold);
        say("phi " + format_double(t.phi));
    });

    if (config.discriminator.enabled) {
        in_stage("discriminator", [&] {
            const auto known = model::predict_embeddings(*t.model, t.train, threads);
            std::vector<signal::Window> negatives = t.train;
            Rng rng(derive_seed(t.seed, "gate-negatives"));
            const std::size_t patch = config.model_kind == model::ModelKind::vit ? config.vit.patch_size : 1;
            for (auto& w : negatives) {
                w.values = patch_shuffled(w.values, patch, rng);
            }
            const auto unknown = model::predict_embeddings(*t.model, negatives, threads);
            model::DiscriminatorTraining dt;
            dt.epochs = config.discriminator.epochs;
            dt.seed = derive_seed(t.seed, "gate");
            t.gate = model::train_discriminator(known, unknown, config.discriminator.hidden, dt);
        });
    }
    return t;
}

AttackResult attack_replicate(const RunConfig& config, const scenarios::ScenarioConfig& scenario,
                              const TrainedReplicate& trained, std::size_t threads) {
    AttackResult r;
    in_stage("attack", [&] {
        const auto probes = scenarios::apply_scenario(trained.test, scenario, derive_seed(trained.seed, "noise"));
        attack::AttackOptions opts;
        opts.threads = threads;
        if (trained.gate) {
            opts.gate = &*trained.gate;
            opts.gate_threshold = config.discriminator.threshold;
        }
        r.outcomes = attack::run_attack(*trained.model, probes, trained.phi, opts);
    });
    in_stage("metrics", [&] {
        std::vector<std::string> participant;
        std::vector<Label> truth, stage1, predicted;
        std::vector<double> tau;
        for (const auto& o : r.outcomes) {
            participant.push_back(o.subject_id);
            truth.push_back(o.truth);
            stage1.push_back(o.stage1);
            predicted.push_back(o.predicted);
            tau.push_back(o.tau);
        }
        r.report = metrics::build_report(participant, truth, stage1, predicted, tau, config.sweep_thresholds);
    });
    return r;
}

RunResult run_experiment(const RunConfig& config, const fs::path& base_dir, std::size_t threads,
                         const Progress& progress) {
    config.validate();
    RunResult run;
    run.config = config;
    run.dataset = in_stage("ingest", [&] { return prepare_dataset(config, base_dir); });
    if (progress) {
        progress("dataset " + run.dataset.manifest.dataset_id + ": " + std::to_string(run.dataset.records.size()) +
                 " records, " + std::to_string(run.dataset.windows.size()) + " windows");
    }
    for (std::size_t r = 0; r < config.replicates; ++r) {
        ReplicateRun rep;
        rep.trained = train_replicate(config, config.scenario, run.dataset, r, threads, progress);
        rep.attack = attack_replicate(config, config.scenario, rep.trained, threads);
        if (progress) {
            const auto& m = rep.attack.report;
            std::ostringstream ss;
            ss << "[replicate " << r << "] accuracy " << std::setprecision(4) << m.accuracy << " known_accuracy "
               << m.known_accuracy << " protection " << m.protection_rate << " eer " << m.eer;
            progress(ss.str());
        }
        run.replicates.push_back(std::move(rep));
    }
    return run;
}

json summarize(const std::vector<metrics::MetricsReport>& reports) {
    static const char* fields[] = {"accuracy", "precision", "recall", "f1", "fpr", "fnr", "misclassification_rate",
                                   "tnr", "eer", "reidentification_rate", "protection_rate", "known_accuracy"};
    std::vector<json> js;
    for (const auto& r : reports) {
        js.push_back(metrics::to_json(r));
    }
    json out = json::object();
    for (const char* f : fields) {
        std::vector<double> v;
        for (const auto& j : js) {
            const double x = metrics::number_from_json(j.at(f));
            if (std::isfinite(x)) {
                v.push_back(x);
            }
        }
        const auto ms = metrics::mean_sd(v);
        out[f] = {{"mean", metrics::number_to_json(ms.mean)}, {"sd", metrics::number_to_json(ms.sd)}, {"n", ms.n}};
    }
    return out;
}

namespace {

std::string training_log_csv(const model::TrainResult& t) {
    std::string s = "epoch,train_loss,val_loss,val_f1,lr,improved\n";
    for (const auto& r : t.log) {
        s += std::to_string(r.epoch) + ',' + format_double(r.train_loss) + ',' + format_double(r.val_loss) + ',' +
             format_double(r.val_f1) + ',' + format_double(r.lr) + ',' + (r.improved ? "true" : "false") + '\n';
    }
    return s;
}

std::string scores_csv(const std::vector<attack::AttackOutcome>& outcomes) {
    std::string s = "window_id,subject_id,truth,stage1,tau\n";
    for (const auto& o : outcomes) {
        s += o.window_id + ',' + o.subject_id + ',' + label_text(o.truth) + ',' + label_text(o.stage1) + ',' +
             format_double(o.tau) + '\n';
    }
    return s;
}

json replicate_summary(const ReplicateRun& r) {
    return {{"replicate", r.trained.replicate},
            {"seed", r.trained.seed},
            {"phi", metrics::number_to_json(r.trained.phi)},
            {"best_epoch", r.trained.training.best_epoch},
            {"epochs_run", r.trained.training.log.size()},
            {"classes", r.trained.labels.subjects()},
            {"metrics", metrics::to_json(r.attack.report)}};
}

fs::path fresh_run_dir(const fs::path& root) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << "run-" << std::put_time(&tm, "%Y%m%d-%H%M%S");
    fs::path dir = root / ss.str();
    for (int k = 2; fs::exists(dir); ++k) {
        dir = root / (ss.str() + "-" + std::to_string(k));
    }
    return dir;
}

// "<sha256>  <relative path>" for every file but the hash list and marker,
// sorted by path.
std::string hash_listing(const fs::path& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) {
            continue;
        }
        const std::string rel = fs::relative(e.path(), dir).generic_string();
        if (rel != kHashesFile && rel != kIncompleteMarker) {
            files.push_back(rel);
        }
    }
    std::sort(files.begin(), files.end());
    std::string listing;
    for (const auto& f : files) {
        listing += data::sha256_file(dir / f) + "  " + f + "\n";
    }
    return listing;
}

}  // namespace

fs::path persist_run(const RunResult& run, const fs::path& base_dir, const std::optional<fs::path>& dir) {
    return in_stage("persist", [&] {
        const fs::path root = fs::path(run.config.output_dir).is_absolute() ? fs::path(run.config.output_dir)
                                                                            : base_dir / run.config.output_dir;
        const fs::path out = dir ? *dir : fresh_run_dir(root);
        fs::create_directories(out);
        write_text(out / kIncompleteMarker, "");

        json manifest = data::to_json(run.dataset.manifest);
        manifest["dataset_hash"] = run.dataset.hash;
        write_text(out / "manifest.json", manifest.dump(2) + "\n");
        write_text(out / "config.json", to_json(run.config).dump(2) + "\n");

        std::vector<metrics::MetricsReport> reports;
        json replicates = json::array();
        for (const auto& r : run.replicates) {
            const fs::path rd = out / replicate_dir(r.trained.replicate);
            fs::create_directories(rd);
            write_text(rd / "plan.json", scenarios::to_json(r.trained.plan).dump(2) + "\n");
            model::save_checkpoint(rd / "model.ckpt", *r.trained.model, r.trained.training.optimizer,
                                   r.trained.training.best_epoch, r.trained.training.rng_state);
            attack::write_outcomes_csv(rd / "outcomes.csv", r.attack.outcomes, r.trained.labels.subjects());
            write_text(rd / "scores.csv", scores_csv(r.attack.outcomes));
            write_text(rd / "training_log.csv", training_log_csv(r.trained.training));
            const json summary = replicate_summary(r);
            write_text(rd / "report.json", summary.dump(2) + "\n");
            replicates.push_back(summary);
            reports.push_back(r.attack.report);
        }
        const json report = {{"version", ECGLINK_VERSION},
                             {"scenario", scenarios::to_string(run.config.scenario.kind)},
                             {"seed", run.config.seed},
                             {"dataset_hash", run.dataset.hash},
                             {"config", to_json(run.config)},
                             {"replicates", replicates},
                             {"summary", summarize(reports)}};
        write_text(out / "report.json", report.dump(2) + "\n");

        const std::string listing = hash_listing(out);
        write_text(out / kHashesFile, listing + "bundle " + data::sha256_hex(listing) + "\n");
        fs::remove(out / kIncompleteMarker);
        return out;
    });
}

std::string verify_bundle(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw IntegrityError("no bundle at " + dir.string());
    }
    if (fs::exists(dir / kIncompleteMarker)) {
        throw IntegrityError("bundle " + dir.string() + " is incomplete");
    }
    if (!fs::exists(dir / kHashesFile)) {
        throw IntegrityError("bundle " + dir.string() + " is missing " + kHashesFile);
    }
    std::istringstream in(read_text(dir / kHashesFile));
    std::string line, listing, recorded;
    std::vector<std::string> missing, altered;
    std::set<std::string> listed;
    while (std::getline(in, line)) {
        if (line.rfind("bundle ", 0) == 0) {
            recorded = line.substr(7);
            continue;
        }
        const auto sep = line.find("  ");
        if (sep == std::string::npos) {
            throw IntegrityError("malformed line in " + std::string(kHashesFile) + ": " + line);
        }
        listing += line + "\n";
        const std::string rel = line.substr(sep + 2);
        listed.insert(rel);
        if (!fs::exists(dir / rel)) {
            missing.push_back(rel);
        } else if (data::sha256_file(dir / rel) != line.substr(0, sep)) {
            altered.push_back(rel);
        }
    }
    for (const char* required : {"manifest.json", "config.json", "report.json"}) {
        if (!listed.contains(required) && !fs::exists(dir / required)) {
            missing.emplace_back(required);
        }
    }
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) {
            s += (s.empty() ? "" : ", ") + x;
        }
        return s;
    };
    if (!missing.empty()) {
        throw IntegrityError("bundle " + dir.string() + " is missing " + join(missing));
    }
    if (!altered.empty()) {
        throw IntegrityError("hash mismatch in " + join(altered));
    }
    if (recorded.empty() || data::sha256_hex(listing) != recorded) {
        throw IntegrityError("bundle hash mismatch in " + std::string(kHashesFile));
    }
    return recorded;
}

std::vector<Score> read_scores_csv(const fs::path& path) {
    std::istringstream in(read_text(path));
    std::string line;
    std::getline(in, line);
    if (line != "window_id,subject_id,truth,stage1,tau") {
        throw IntegrityError(path.string() + ": unexpected header");
    }
    std::vector<Score> out;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::size_t start = 0;
        for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1) {
            f.push_back(line.substr(start, pos - start));
        }
        f.push_back(line.substr(start));
        if (f.size() != 5) {
            throw IntegrityError(path.string() + ": malformed row '" + line + "'");
        }
        Score s{f[0], f[1], label_from_text(f[2]), label_from_text(f[3]), 0.0};
        const auto r = std::from_chars(f[4].data(), f[4].data() + f[4].size(), s.tau);
        if (r.ec != std::errc() || r.ptr != f[4].data() + f[4].size()) {
            throw IntegrityError(path.string() + ": bad tau '" + f[4] + "'");
        }
        out.push_back(std::move(s));
    }
    return out;
}

Bundle load_bundle(const fs::path& dir) {
    Bundle b;
    b.hash = verify_bundle(dir);
    b.config = read_json(dir / "config.json");
    b.manifest = read_json(dir / "manifest.json");
    b.report = read_json(dir / "report.json");
    try {
        for (const auto& rj : b.report.at("replicates")) {
            const auto r = rj.at("replicate").get<std::size_t>();
            const fs::path rd = dir / replicate_dir(r);
            const json persisted = read_json(rd / "report.json");
            LoadedReplicate lr;
            lr.seed = persisted.at("seed").get<std::uint64_t>();
            lr.phi = metrics::number_from_json(persisted.at("phi"));
            lr.report = metrics::report_from_json(persisted.at("metrics"));
            lr.scores = read_scores_csv(rd / "scores.csv");
            b.replicates.push_back(std::move(lr));
        }
    } catch (const json::exception& e) {
        throw IntegrityError("bundle " + dir.string() + ": " + e.what());
    }
    return b;
}

}  // namespace ecglink::pipeline
