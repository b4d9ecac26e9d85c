// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--cli PATH] [--expect-fail N]... [N...]
//
// With no numbers every criterion runs. --cli names the ecglink executable
// used by the determinism check. A criterion listed with --expect-fail still
// prints its real verdict; it just does not fail the process.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "ecglink/data.hpp"
#include "ecglink/metrics.hpp"
#include "ecglink/model/checkpoint.hpp"
#include "ecglink/model/vit.hpp"
#include "ecglink/numerics/gradcheck.hpp"
#include "ecglink/numerics/ops.hpp"
#include "ecglink/parallel.hpp"
#include "ecglink/pipeline.hpp"
#include "ecglink/rng.hpp"

namespace fs = std::filesystem;
using namespace ecglink;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v, int precision = 4) {
    std::ostringstream ss;
    ss << std::setprecision(precision) << v;
    return ss.str();
}

void note(const std::string& msg) { std::cerr << "  " << msg << std::endl; }

// ------------------------------------------------------------ 1 gradients

Verdict gradient_check() {
    const auto t0 = Clock::now();
    model::ViTConfig c;
    c.window_len = 8;
    c.patch_size = 4;
    c.embed_dim = 4;
    c.num_heads = 2;
    c.num_layers = 1;
    c.mlp_dim = 8;
    c.num_classes = 3;
    c.survival_prob = 1.0;
    model::ViTParams p = model::ViTParams::init(c, 5);
    Rng rng(6);
    for (auto& t : p.flatten()) {
        for (double& x : t.mutable_values()) {
            x += rng.uniform(-0.5, 0.5);
        }
    }
    std::vector<double> window(8);
    for (double& x : window) {
        x = rng.uniform();
    }
    const int target = 2;
    const auto names = model::ViTParams::names(c);
    std::vector<numerics::Tensor> flat = p.flatten();
    double worst = 0.0;
    std::string worst_name;
    for (std::size_t g = 0; g < flat.size(); ++g) {
        std::vector<numerics::Tensor> group{flat[g].clone(true)};
        const auto r = numerics::grad_check(
            [&](std::span<const numerics::Tensor> x) {
                std::vector<numerics::Tensor> all = flat;
                all[g] = x[0];
                const auto q = model::ViTParams::unflatten(c, all);
                return numerics::cross_entropy(model::vit_forward(window, q, c, false, nullptr),
                                               std::span<const int>(&target, 1));
            },
            group, 1e-5);
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_name = names[g];
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-3 && secs < 10.0, std::to_string(flat.size()) + " parameter groups, max rel error " +
                                              num(worst, 3) + " (" + worst_name + ") <= 1e-3, " + num(secs, 3) +
                                              " s < 10 s"};
}

// ------------------------------------------------------------ 2 oracles

std::vector<double> oracle_softmax(const std::vector<double>& x) {
    long double m = *std::max_element(x.begin(), x.end()), s = 0;
    for (double v : x) {
        s += std::exp(static_cast<long double>(v) - m);
    }
    std::vector<double> out;
    for (double v : x) {
        out.push_back(static_cast<double>(std::exp(static_cast<long double>(v) - m) / s));
    }
    return out;
}

std::vector<double> oracle_layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const std::vector<double>& b) {
    long double mean = 0, var = 0;
    for (double v : x) {
        mean += v;
    }
    mean /= x.size();
    for (double v : x) {
        var += (v - mean) * (v - mean);
    }
    var /= x.size();
    std::vector<double> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.push_back(static_cast<double>((x[i] - mean) / std::sqrt(var + 1e-5L) * g[i] + b[i]));
    }
    return out;
}

// Smallest sample value whose count of values at or below it reaches p% of n.
double oracle_percentile(const std::vector<double>& v, double p) {
    double best = std::numeric_limits<double>::infinity();
    for (double c : v) {
        std::size_t at_or_below = 0;
        for (double x : v) {
            at_or_below += x <= c;
        }
        if (static_cast<double>(at_or_below) * 100.0 >= p * static_cast<double>(v.size()) && c < best) {
            best = c;
        }
    }
    return best;
}

std::pair<double, double> oracle_eer(const std::vector<double>& gen, const std::vector<double>& imp) {
    std::vector<double> cands{-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    cands.insert(cands.end(), gen.begin(), gen.end());
    cands.insert(cands.end(), imp.begin(), imp.end());
    double best_gap = 2.0, best_t = 0.0, best_eer = 0.0;
    for (double t : cands) {
        double far = 0, frr = 0;
        for (double s : imp) {
            far += s >= t;
        }
        for (double s : gen) {
            frr += s < t;
        }
        far /= imp.size();
        frr /= gen.size();
        const double gap = std::fabs(far - frr);
        if (gap < best_gap || (gap == best_gap && t < best_t)) {
            best_gap = gap;
            best_t = t;
            best_eer = (far + frr) / 2;
        }
    }
    return {best_eer, best_t};
}

struct Fixture {
    std::vector<std::string> participant;
    std::vector<Label> truth, stage1, predicted;
    std::vector<double> tau;
};

Fixture random_fixture(Rng& rng) {
    Fixture f;
    const int classes = 1 + static_cast<int>(rng.below(5));
    const int unknown_people = static_cast<int>(rng.below(4));
    const std::size_t n = 1 + rng.below(200);
    const double phi = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
        const int who = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes + unknown_people)));
        f.participant.push_back("p" + std::to_string(who));
        f.truth.push_back(who < classes ? Label(who) : Label::unknown());
        f.stage1.push_back(Label(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)))));
        f.tau.push_back(rng.below(4) == 0 ? 0.5 : rng.uniform());
        f.predicted.push_back(f.tau.back() < phi ? Label::unknown() : f.stage1.back());
    }
    return f;
}

struct Tally {
    std::size_t cases = 0, failures = 0;
    std::string first;
    void check(bool ok, const std::string& what) {
        ++cases;
        if (!ok && failures++ == 0) {
            first = what;
        }
    }
};

bool close(double a, double b, double tol = 1e-9) {
    return (std::isnan(a) && std::isnan(b)) || a == b || std::fabs(a - b) <= tol;
}

Verdict oracle_equivalence() {
    Rng rng(2024);
    Tally t;
    const int kInstances = 200;
    for (int k = 0; k < kInstances; ++k) {
        // softmax along rows of an r x c matrix
        const std::size_t rows = 1 + rng.below(4), cols = 1 + rng.below(50);
        std::vector<double> x(rows * cols);
        for (double& v : x) {
            v = rng.uniform(-30, 30);
        }
        const auto sm = numerics::softmax(numerics::Tensor({rows, cols}, x), 1);
        for (std::size_t r = 0; r < rows; ++r) {
            const auto ref = oracle_softmax({x.begin() + r * cols, x.begin() + (r + 1) * cols});
            for (std::size_t j = 0; j < cols; ++j) {
                t.check(close(sm.at(r, j), ref[j]), "softmax");
            }
        }
        // layer norm
        std::vector<double> g(cols), b(cols);
        for (std::size_t j = 0; j < cols; ++j) {
            g[j] = rng.uniform(0.5, 2);
            b[j] = rng.uniform(-1, 1);
        }
        const auto ln = numerics::layer_norm(numerics::Tensor({rows, cols}, x), numerics::Tensor({cols}, g),
                                             numerics::Tensor({cols}, b));
        for (std::size_t r = 0; r < rows; ++r) {
            const auto ref = oracle_layer_norm({x.begin() + r * cols, x.begin() + (r + 1) * cols}, g, b);
            for (std::size_t j = 0; j < cols; ++j) {
                t.check(close(ln.at(r, j), ref[j]), "layer_norm");
            }
        }
        // cross entropy, mean over rows
        std::vector<int> targets;
        long double ce = 0;
        for (std::size_t r = 0; r < rows; ++r) {
            targets.push_back(static_cast<int>(rng.below(cols)));
            const auto ref = oracle_softmax({x.begin() + r * cols, x.begin() + (r + 1) * cols});
            ce -= std::log(static_cast<long double>(ref[static_cast<std::size_t>(targets.back())]));
        }
        const double got = numerics::cross_entropy(numerics::Tensor({rows, cols}, x), targets).item();
        t.check(close(got, static_cast<double>(ce / rows), 1e-9 * std::max(1.0, got)), "cross_entropy");

        // nearest-rank percentile, exact
        std::vector<double> scores(1 + rng.below(200));
        for (double& s : scores) {
            s = rng.below(3) == 0 ? std::round(rng.uniform() * 10) / 10 : rng.uniform();
        }
        const double p = static_cast<double>(rng.below(401)) / 4.0;
        t.check(attack::nearest_rank_percentile(scores, p) == oracle_percentile(scores, p), "percentile");

        // EER
        std::vector<double> gen(1 + rng.below(100)), imp(1 + rng.below(100));
        for (double& s : gen) {
            s = std::round(rng.uniform(0.2, 1.0) * 50) / 50;
        }
        for (double& s : imp) {
            s = std::round(rng.uniform(0.0, 0.8) * 50) / 50;
        }
        const auto e = metrics::eer(gen, imp);
        const auto [ref_eer, ref_t] = oracle_eer(gen, imp);
        t.check(close(e.eer, ref_eer) && e.threshold == ref_t, "eer");

        // metric operations on an outcome fixture
        const Fixture f = random_fixture(rng);
        const std::size_t n = f.truth.size();
        std::set<int> present;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            correct += f.truth[i] == f.predicted[i];
            if (f.truth[i].is_known()) {
                present.insert(f.truth[i].value());
            }
        }
        long double P = 0, R = 0, F = 0;
        for (int c : present) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const bool is_t = f.truth[i] == Label(c), is_p = f.predicted[i] == Label(c);
                tp += is_t && is_p;
                fp += !is_t && is_p;
                fn += is_t && !is_p;
            }
            const long double prec = tp + fp ? static_cast<long double>(tp) / (tp + fp) : 0;
            const long double rec = tp + fn ? static_cast<long double>(tp) / (tp + fn) : 0;
            P += prec;
            R += rec;
            F += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
        }
        const auto sm2 = metrics::sample_metrics(f.truth, f.predicted);
        t.check(close(sm2.accuracy, static_cast<double>(correct) / n), "accuracy");
        if (!present.empty()) {
            t.check(close(sm2.precision, static_cast<double>(P / present.size())) &&
                        close(sm2.recall, static_cast<double>(R / present.size())) &&
                        close(sm2.f1, static_cast<double>(F / present.size())),
                    "macro precision/recall/f1");
        }

        std::size_t kn = 0, un = 0, kc = 0, kw = 0, uk = 0, ku = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (f.truth[i].is_known()) {
                ++kn;
                kc += f.predicted[i] == f.truth[i];
                ku += f.predicted[i].is_unknown();
                kw += f.predicted[i].is_known() && f.predicted[i] != f.truth[i];
            } else {
                ++un;
                uk += f.predicted[i].is_known();
            }
        }
        const auto cc = metrics::confusion(f.truth, f.predicted);
        t.check(cc.known_count == kn && cc.unknown_count == un && cc.known_correct == kc &&
                    cc.known_wrong_class == kw && cc.uk_to_k == uk && cc.k_to_u == ku,
                "confusion counts");
        const auto mr = metrics::misclassification_rates(f.truth, f.predicted);
        const double nan = std::numeric_limits<double>::quiet_NaN();
        t.check(close(mr.fpr, un ? double(uk) / un : nan) && close(mr.fnr, kn ? double(ku) / kn : nan) &&
                    close(mr.total, double(uk + ku) / n),
                "misclassification rates");

        std::map<std::string, std::map<Label, std::size_t>> votes;
        std::map<std::string, Label> who;
        for (std::size_t i = 0; i < n; ++i) {
            ++votes[f.participant[i]][f.predicted[i]];
            who[f.participant[i]] = f.truth[i];
        }
        std::size_t known_people = 0, unknown_people = 0, linked = 0, protected_people = 0;
        for (const auto& [id, v] : votes) {
            std::size_t top = 0;
            for (const auto& [l, c] : v) {
                top = std::max(top, c);
            }
            std::size_t winners = 0;
            Label winner;
            for (const auto& [l, c] : v) {
                if (c == top) {
                    ++winners;
                    winner = l;
                }
            }
            const Label decided = winners > 1 ? Label::unknown() : winner;
            if (who[id].is_known()) {
                ++known_people;
                linked += decided == who[id];
            } else {
                ++unknown_people;
                protected_people += decided.is_unknown();
            }
        }
        const auto pm = metrics::participant_metrics(f.participant, f.truth, f.predicted);
        t.check(pm.linked == linked && pm.protected_count == protected_people && pm.known_participants == known_people &&
                    pm.unknown_participants == unknown_people,
                "participant votes");

        std::vector<double> thresholds;
        for (double th = rng.uniform(0, 0.1); th < 1.0; th += rng.uniform(0.01, 0.2)) {
            thresholds.push_back(th);
        }
        const auto sweep = metrics::confidence_sweep(f.stage1, f.tau, f.truth, thresholds);
        for (std::size_t j = 0; j < thresholds.size(); ++j) {
            std::size_t u2k = 0, k2u = 0, wrong = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const Label d = f.tau[i] < thresholds[j] ? Label::unknown() : f.stage1[i];
                u2k += f.truth[i].is_unknown() && d.is_known();
                k2u += f.truth[i].is_known() && d.is_unknown();
                wrong += d != f.truth[i];
            }
            (void)wrong;
            t.check(close(sweep[j].u_to_k_pct, un ? 100.0 * u2k / un : nan) &&
                        close(sweep[j].k_to_u_pct, kn ? 100.0 * k2u / kn : nan) &&
                        close(sweep[j].total_pct, 100.0 * (u2k + k2u) / n),
                    "confidence sweep");
        }
    }
    return {t.failures == 0, std::to_string(kInstances) + " instances x 11 operations, " + std::to_string(t.cases) +
                                 " comparisons, " + std::to_string(t.failures) + " mismatches" +
                                 (t.failures ? " (first: " + t.first + ")" : "")};
}

// ------------------------------------------------------------ 3 invariants

Verdict normalization_attention_invariants() {
    Rng rng(77);
    const int kInputs = 1000;
    double worst_row = 0.0, worst_norm = 0.0;
    std::size_t rows = 0;
    for (int k = 0; k < kInputs; ++k) {
        model::ViTConfig c;
        c.patch_size = std::size_t{2} << rng.below(3);
        c.window_len = c.patch_size * (1 + rng.below(12));
        c.num_heads = std::size_t{1} << rng.below(3);
        c.embed_dim = c.num_heads * (1 + rng.below(4));
        c.num_layers = 1 + rng.below(2);
        c.mlp_dim = 4;
        c.num_classes = 2;
        model::ViTParams p = model::ViTParams::init(c, rng.below(1u << 30));
        const double spread = rng.uniform(0.1, 4.0);
        for (auto& t : p.flatten()) {
            for (double& x : t.mutable_values()) {
                x += rng.uniform(-spread, spread);
            }
        }
        std::vector<double> w(c.window_len);
        const double scale = std::pow(10.0, rng.uniform(-3, 3)), offset = rng.uniform(-100, 100);
        for (double& x : w) {
            x = offset + scale * rng.normal();
        }
        const auto norm = signal::minmax_normalize(w);
        const auto [lo, hi] = std::minmax_element(norm.values.begin(), norm.values.end());
        worst_norm = std::max({worst_norm, std::fabs(*lo), std::fabs(*hi - 1.0)});
        if (norm.flat) {
            worst_norm = 1.0;
        }
        const auto out = model::vit_forward_full(norm.values, p, c, false, nullptr, true);
        for (const auto& layer : out.attention) {
            for (const auto& a : layer) {
                for (std::size_t i = 0; i < a.dim(0); ++i) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < a.dim(1); ++j) {
                        s += a.at(i, j);
                        if (a.at(i, j) < 0.0) {
                            worst_row = 1.0;
                        }
                    }
                    worst_row = std::max(worst_row, std::fabs(s - 1.0));
                    ++rows;
                }
            }
        }
    }
    return {worst_row <= 1e-6 && worst_norm <= 1e-9,
            std::to_string(kInputs) + " random inputs, " + std::to_string(rows) +
                " attention rows, max |row sum - 1| " + num(worst_row, 3) + " <= 1e-6, max normalization error " +
                num(worst_norm, 3) + " <= 1e-9"};
}

// ------------------------------------------------------------ synthetic benchmark

pipeline::RunConfig benchmark_config() {
    return pipeline::config_from_json(json::parse(R"({
      "dataset": {"synthetic": {"identities": 10, "duration_s": 120, "rate_hz": 250, "seed": 0}},
      "model": {"patch_size": 20, "embed_dim": 64, "num_layers": 2, "num_heads": 4, "mlp_dim": 128,
                "survival_prob": 0.8},
      "training": {"epochs": 150, "batch_size": 16, "patience": 30, "lr_max": 0.001,
                   "augment": {"max_shift": 250}},
      "scenario": {"kind": "partial"},
      "threshold": {"mode": "percentile", "p": 5},
      "seed": 0,
      "replicates": 1
    })"));
}

Verdict end_to_end_separability() {
    const auto t0 = Clock::now();
    const auto config = benchmark_config();
    const auto run = pipeline::run_experiment(config, ".", default_threads(), note);
    const double secs = seconds_since(t0);
    const auto& r = run.replicates.front();
    const auto& m = r.attack.report;
    const bool pass = m.known_accuracy >= 0.90 && m.protection_rate >= 2.0 / 3.0 - 1e-12 && secs < 300.0;
    return {pass, std::to_string(r.trained.plan.known.size()) + " known / " +
                      std::to_string(r.trained.plan.unknown.size()) + " unknown, known-window accuracy " +
                      num(m.known_accuracy) + " (>= 0.90), protection " + num(m.protection_rate) +
                      " (>= 0.667), EER " + num(m.eer) + ", " + num(secs, 3) + " s (< 300 s)"};
}

// Shared by criteria 5-7: five seeds per arm, each arm trained once.
struct Benchmark {
    static constexpr std::size_t kSeeds = 5;
    std::map<std::string, std::vector<metrics::MetricsReport>> arms;
    std::vector<std::vector<attack::AttackOutcome>> partial_outcomes;
};

pipeline::RunConfig trend_config() {
    pipeline::RunConfig c = benchmark_config();
    c.training.epochs = 60;
    c.training.patience = 15;
    return c;
}

const Benchmark& benchmark() {
    static std::optional<Benchmark> cache;
    if (cache) {
        return *cache;
    }
    Benchmark b;
    const auto config = trend_config();
    const auto dataset = pipeline::prepare_dataset(config, ".");
    const std::size_t threads = default_threads();

    auto scenario = [&](scenarios::ScenarioKind kind, double train, double val, double test) {
        scenarios::ScenarioConfig s = config.scenario;
        s.kind = kind;
        s.noise_sigma = kind == scenarios::ScenarioKind::noisy ? 0.1 : 0.0;
        s.split.train_frac = train;
        s.split.val_frac = val;
        s.split.test_frac = test;
        return s;
    };
    const auto full = scenario(scenarios::ScenarioKind::full, 0.7, 0.15, 0.15);
    const auto noisy = scenario(scenarios::ScenarioKind::noisy, 0.7, 0.15, 0.15);
    const std::pair<std::string, scenarios::ScenarioConfig> partial_arms[] = {
        {"partial 50/25/25", scenario(scenarios::ScenarioKind::partial, 0.5, 0.25, 0.25)},
        {"partial 60/20/20", scenario(scenarios::ScenarioKind::partial, 0.6, 0.2, 0.2)},
        {"partial 70/15/15", scenario(scenarios::ScenarioKind::partial, 0.7, 0.15, 0.15)},
    };
    for (std::size_t r = 0; r < Benchmark::kSeeds; ++r) {
        const auto t0 = Clock::now();
        const auto f = pipeline::train_replicate(config, full, dataset, r, threads);
        b.arms["full 70/15/15"].push_back(pipeline::attack_replicate(config, full, f, threads).report);
        for (const auto& [name, sc] : partial_arms) {
            const auto t = pipeline::train_replicate(config, sc, dataset, r, threads);
            const auto a = pipeline::attack_replicate(config, sc, t, threads);
            b.arms[name].push_back(a.report);
            if (name == "partial 70/15/15") {
                b.partial_outcomes.push_back(a.outcomes);
                // the noisy arm probes the same model with perturbed test windows
                b.arms["noisy 70/15/15"].push_back(pipeline::attack_replicate(config, noisy, t, threads).report);
            }
        }
        std::ostringstream ss;
        ss << "seed " << r << " done in " << num(seconds_since(t0), 3) << " s:";
        for (const auto& [name, reports] : b.arms) {
            ss << ' ' << name << ' ' << num(reports.back().accuracy, 3) << ';';
        }
        note(ss.str());
    }
    cache = std::move(b);
    return *cache;
}

double mean_of(const std::vector<metrics::MetricsReport>& reports, double metrics::MetricsReport::*field) {
    std::vector<double> v;
    for (const auto& r : reports) {
        v.push_back(r.*field);
    }
    return metrics::mean_sd(v).mean;
}

double mean_accuracy(const std::vector<metrics::MetricsReport>& reports) {
    return mean_of(reports, &metrics::MetricsReport::accuracy);
}

double mean_known_accuracy(const std::vector<metrics::MetricsReport>& reports) {
    return mean_of(reports, &metrics::MetricsReport::known_accuracy);
}

Verdict scenario_ordering() {
    const auto& b = benchmark();
    const double full = mean_accuracy(b.arms.at("full 70/15/15"));
    const double partial = mean_accuracy(b.arms.at("partial 70/15/15"));
    const double noisy = mean_accuracy(b.arms.at("noisy 70/15/15"));
    return {full >= partial && partial >= noisy,
            "mean accuracy over 5 seeds: full " + num(full) + " >= partial " + num(partial) + " >= noisy(0.1) " +
                num(noisy) + "; known-window accuracy " + num(mean_known_accuracy(b.arms.at("full 70/15/15"))) + " / " +
                num(mean_known_accuracy(b.arms.at("partial 70/15/15"))) + " / " +
                num(mean_known_accuracy(b.arms.at("noisy 70/15/15")))};
}

bool sweep_monotone(const std::vector<metrics::SweepRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const bool u_ok = std::isnan(rows[i].u_to_k_pct) || rows[i].u_to_k_pct <= rows[i - 1].u_to_k_pct;
        const bool k_ok = std::isnan(rows[i].k_to_u_pct) || rows[i].k_to_u_pct >= rows[i - 1].k_to_u_pct;
        if (!u_ok || !k_ok) {
            return false;
        }
    }
    return true;
}

Verdict threshold_monotonicity() {
    std::size_t sweeps = 0, violations = 0;
    Rng rng(606);
    for (int k = 0; k < 500; ++k) {
        const Fixture f = random_fixture(rng);
        std::vector<double> th;
        for (double x = rng.uniform(-0.1, 0.1); x < 1.1; x += rng.uniform(0.001, 0.3)) {
            th.push_back(x);
        }
        violations += !sweep_monotone(metrics::confidence_sweep(f.stage1, f.tau, f.truth, th));
        ++sweeps;
    }
    std::vector<double> fine;  // 0.00 .. 1.00
    for (int i = 0; i <= 100; ++i) {
        fine.push_back(i / 100.0);
    }
    std::vector<double> table{0.01, 0.02, 0.03, 0.04, 0.05};
    for (const auto& outcomes : benchmark().partial_outcomes) {
        std::vector<Label> stage1, truth;
        std::vector<double> tau;
        for (const auto& o : outcomes) {
            stage1.push_back(o.stage1);
            truth.push_back(o.truth);
            tau.push_back(o.tau);
        }
        for (const std::vector<double>* th : {&fine, &table}) {
            violations += !sweep_monotone(metrics::confidence_sweep(stage1, tau, truth, *th));
            ++sweeps;
        }
    }
    return {violations == 0, std::to_string(sweeps) + " sweeps (500 random fixtures, 10 over synthetic runs), " +
                                 std::to_string(violations) + " violations"};
}

Verdict split_trend() {
    const auto& b = benchmark();
    const double a50 = mean_accuracy(b.arms.at("partial 50/25/25"));
    const double a60 = mean_accuracy(b.arms.at("partial 60/20/20"));
    const double a70 = mean_accuracy(b.arms.at("partial 70/15/15"));
    auto known_acc = [&](const char* arm) {
        return mean_of(b.arms.at(arm), &metrics::MetricsReport::known_accuracy);
    };
    return {a50 <= a60 && a60 <= a70,
            "mean accuracy over 5 seeds: 50/25/25 " + num(a50) + " <= 60/20/20 " + num(a60) + " <= 70/15/15 " +
                num(a70) + "; known-window accuracy " + num(known_acc("partial 50/25/25")) + " / " +
                num(known_acc("partial 60/20/20")) + " / " + num(known_acc("partial 70/15/15")) +
                "; protection " + num(mean_of(b.arms.at("partial 50/25/25"), &metrics::MetricsReport::protection_rate)) +
                " / " + num(mean_of(b.arms.at("partial 60/20/20"), &metrics::MetricsReport::protection_rate)) + " / " +
                num(mean_of(b.arms.at("partial 70/15/15"), &metrics::MetricsReport::protection_rate))};
}

// ------------------------------------------------------------ 8 determinism

const char* kSmallConfig = R"({
  "dataset": {"synthetic": {"identities": 5, "duration_s": 40, "rate_hz": 250, "seed": 9}},
  "model": {"patch_size": 20, "embed_dim": 16, "num_layers": 1, "num_heads": 2, "mlp_dim": 32},
  "training": {"epochs": 4, "batch_size": 8, "lr_max": 0.001, "augment": {"max_shift": 100, "noise_sigma": 0.01}},
  "scenario": {"kind": "partial", "known_identity_frac": 0.6},
  "seed": 21,
  "replicates": 2,
  "output_dir": "runs"
})";

std::string run_cli(const std::string& cli, const fs::path& config, const fs::path& out, std::size_t threads) {
    const fs::path log = out.string() + ".log";
    const std::string cmd = "\"" + cli + "\" run --config \"" + config.string() + "\" --threads " +
                            std::to_string(threads) + " --out \"" + out.string() + "\" --force > \"" + log.string() +
                            "\" 2>/dev/null";
    if (std::system(cmd.c_str()) != 0) {
        return "";
    }
    std::ifstream in(log);
    for (std::string line; std::getline(in, line);) {
        if (line.rfind("hash ", 0) == 0) {
            return line.substr(5);
        }
    }
    return "";
}

Verdict determinism(const std::string& cli) {
    if (cli.empty()) {
        return {false, "no --cli executable given"};
    }
    const fs::path dir = fs::temp_directory_path() / "ecglink_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << kSmallConfig;
    const std::string h1 = run_cli(cli, dir / "config.json", dir / "threads1", 1);
    const std::string h3 = run_cli(cli, dir / "config.json", dir / "threads3", 3);
    const std::string again = run_cli(cli, dir / "config.json", dir / "threads1_again", 1);
    bool files_equal = !h1.empty();
    if (files_equal) {
        for (const auto& e : fs::recursive_directory_iterator(dir / "threads1")) {
            if (e.is_regular_file()) {
                const auto rel = fs::relative(e.path(), dir / "threads1");
                files_equal = files_equal && data::sha256_file(e.path()) == data::sha256_file(dir / "threads3" / rel);
            }
        }
    }
    fs::remove_all(dir);
    const bool pass = !h1.empty() && h1 == h3 && h1 == again && files_equal;
    return {pass, "cmd_run x3 (threads 1, 3, 1): bundle hashes " + (h1.empty() ? "<missing>" : h1.substr(0, 16)) +
                      " / " + (h3.empty() ? "<missing>" : h3.substr(0, 16)) + " / " +
                      (again.empty() ? "<missing>" : again.substr(0, 16)) +
                      (files_equal ? ", every file byte-identical" : ", files differ")};
}

// ------------------------------------------------------------ 9 round trips

Verdict round_trips() {
    const fs::path dir = fs::temp_directory_path() / "ecglink_acceptance_roundtrip";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto config = pipeline::config_from_json(json::parse(kSmallConfig));
    const auto run = pipeline::run_experiment(config, ".", 1);
    const auto& trained = run.replicates.front().trained;

    // checkpoint
    model::save_checkpoint(dir / "a.ckpt", *trained.model, trained.training.optimizer, trained.training.best_epoch,
                           trained.training.rng_state);
    const auto loaded = model::load_checkpoint(dir / "a.ckpt");
    const auto sa = trained.model->snapshot(), sb = loaded.model.snapshot();
    bool ckpt = sa.size() == sb.size() && loaded.model.config() == trained.model->config() &&
                loaded.optimizer.first_moment == trained.training.optimizer.first_moment &&
                loaded.optimizer.second_moment == trained.training.optimizer.second_moment &&
                loaded.rng_state == trained.training.rng_state;
    for (std::size_t i = 0; ckpt && i < sa.size(); ++i) {
        ckpt = sa[i].size() == sb[i].size() && std::memcmp(sa[i].data(), sb[i].data(), sa[i].size() * 8) == 0;
    }
    model::save_checkpoint(dir / "b.ckpt", loaded.model, loaded.optimizer, loaded.epoch, loaded.rng_state);
    ckpt = ckpt && data::sha256_file(dir / "a.ckpt") == data::sha256_file(dir / "b.ckpt");

    // CSV export and ingest
    bool csv = true;
    std::size_t samples = 0;
    for (const auto& rec : run.dataset.records) {
        data::export_csv(dir / "r.csv", rec);
        data::ManifestEntry e{rec.subject_id, "r.csv", rec.sampling_rate_hz, "", std::nullopt};
        const auto back = data::ingest_csv(dir / "r.csv", e, rec.dataset_id);
        csv = csv && back.samples.size() == rec.samples.size() &&
              std::memcmp(back.samples.data(), rec.samples.data(), rec.samples.size() * 8) == 0;
        samples += rec.samples.size();
    }

    // bundle reload
    pipeline::persist_run(run, ".", dir / "bundle");
    const auto bundle = pipeline::load_bundle(dir / "bundle");
    bool reload = bundle.replicates.size() == run.replicates.size();
    for (std::size_t r = 0; reload && r < run.replicates.size(); ++r) {
        reload = bundle.replicates[r].report == run.replicates[r].attack.report &&
                 metrics::to_json(bundle.replicates[r].report).dump() ==
                     metrics::to_json(run.replicates[r].attack.report).dump();
    }
    fs::remove_all(dir);
    return {ckpt && csv && reload, std::string("checkpoint ") + (ckpt ? "bit-exact" : "DIFFERS") + ", CSV " +
                                       std::to_string(samples) + " samples " + (csv ? "value-exact" : "DIFFER") +
                                       ", bundle reports " + (reload ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    std::set<int> only, expect_fail;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--cli" && i + 1 < argc) {
            cli = argv[++i];
        } else if (a == "--expect-fail" && i + 1 < argc) {
            expect_fail.insert(std::stoi(argv[++i]));
        } else {
            only.insert(std::stoi(a));
        }
    }

    const std::pair<const char*, std::function<Verdict()>> criteria[] = {
        {"gradient correctness", gradient_check},
        {"oracle equivalence", oracle_equivalence},
        {"normalization and attention invariants", normalization_attention_invariants},
        {"end-to-end synthetic separability", end_to_end_separability},
        {"scenario ordering", scenario_ordering},
        {"threshold monotonicity", threshold_monotonicity},
        {"split-size trend", split_trend},
        {"determinism", [&] { return determinism(cli); }},
        {"round trips", round_trips},
    };

    int unexpected = 0;
    for (int k = 1; k <= static_cast<int>(std::size(criteria)); ++k) {
        if (!only.empty() && !only.contains(k)) {
            continue;
        }
        const auto& [name, check] = criteria[k - 1];
        std::cerr << "[" << k << "] " << name << std::endl;
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("threw: ") + e.what()};
        }
        const bool excused = !v.pass && expect_fail.contains(k);
        std::cout << (v.pass ? "PASS" : "FAIL") << "  " << k << ". " << name << ": " << v.detail
                  << (excused ? "  [known failure]" : "") << std::endl;
        unexpected += !v.pass && !excused;
    }
    return unexpected == 0 ? 0 : 1;
}
