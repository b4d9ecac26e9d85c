#include "ecglink/model/trainer.hpp"

#include <cmath>
#include <numeric>

#include "ecglink/error.hpp"
#include "ecglink/metrics.hpp"
#include "ecglink/numerics/ops.hpp"
#include "ecglink/parallel.hpp"

namespace ecglink::model {

namespace ops = numerics;

void TrainOptions::validate() const {
    if (epochs == 0 || batch_size == 0) {
        throw ConfigError("training: epochs and batch_size must be positive");
    }
    if (!(lr_max >= 0.0) || !(lr_min >= 0.0) || lr_min > lr_max) {
        throw ConfigError("training: learning rates must satisfy 0 <= lr_min <= lr_max");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("training: weight_decay must be non-negative");
    }
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
        throw ConfigError("training: warmup_fraction must lie in [0, 1)");
    }
}

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    return order;
}

std::vector<std::vector<double>> predict_logits(const Model& model, std::span<const signal::Window> windows,
                                                std::size_t threads) {
    std::vector<std::vector<double>> out(windows.size());
    parallel_for(windows.size(), threads, [&](std::size_t i) {
        const ForwardOutput f = model.forward(windows[i].values, false, nullptr);
        out[i].assign(f.logits.values().begin(), f.logits.values().end());
    });
    return out;
}

std::vector<std::vector<double>> predict_embeddings(const Model& model, std::span<const signal::Window> windows,
                                                    std::size_t threads) {
    std::vector<std::vector<double>> out(windows.size());
    parallel_for(windows.size(), threads, [&](std::size_t i) {
        const ForwardOutput f = model.forward(windows[i].values, false, nullptr);
        out[i].assign(f.embedding.values().begin(), f.embedding.values().end());
    });
    return out;
}

namespace {

void check_split(std::span<const signal::Window> windows, std::size_t num_classes, const char* name) {
    if (windows.empty()) {
        throw ConfigError(std::string("training: ") + name + " split is empty");
    }
    for (const auto& w : windows) {
        if (w.label.is_unknown() || static_cast<std::size_t>(w.label.value()) >= num_classes) {
            throw LabelError(std::string("training: ") + name + " window " + w.id() + " has label " +
                             w.label.to_string() + " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) {
            best = i;
        }
    }
    return best;
}

double log_softmax_at(std::span<const double> logits, std::size_t target) {
    double m = logits[0];
    for (double v : logits) {
        m = std::max(m, v);
    }
    double s = 0.0;
    for (double v : logits) {
        s += std::exp(v - m);
    }
    return logits[target] - m - std::log(s);
}

struct ChunkResult {
    std::vector<std::vector<double>> grads;
    double loss = 0.0;
};

}  // namespace

TrainResult train(Model& model, std::span<const signal::Window> train_windows,
                  std::span<const signal::Window> val_windows, const TrainOptions& options, std::uint64_t seed,
                  const EpochCallback& on_epoch) {
    options.validate();
    check_split(train_windows, model.num_classes(), "train");
    check_split(val_windows, model.num_classes(), "validation");
    if (!options.augment.is_identity()) {
        options.augment.validate(model.window_len());
    }

    const std::size_t n = train_windows.size();
    const std::size_t batches_per_epoch = (n + options.batch_size - 1) / options.batch_size;
    const auto schedule = numerics::LrSchedule::with_warmup_fraction(
        static_cast<std::uint64_t>(options.epochs * batches_per_epoch), options.warmup_fraction);

    TrainResult result;
    result.optimizer =
        numerics::OptimizerState::for_params(model.params(), options.lr_max, options.lr_min, options.weight_decay);
    Rng shuffle_rng(derive_seed(seed, "epoch-order"));

    std::vector<Label> val_truth;
    for (const auto& w : val_windows) {
        val_truth.push_back(w.label);
    }

    auto best = model.snapshot();
    bool have_best = false;
    std::size_t since_improvement = 0;
    std::uint64_t step = 0;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        const auto order = epoch_order(n, shuffle_rng);
        EpochRecord record;
        record.epoch = epoch;
        double loss_sum = 0.0;

        for (std::size_t b = 0; b < batches_per_epoch; ++b, ++step) {
            const std::size_t begin = b * options.batch_size;
            const std::size_t end = std::min(n, begin + options.batch_size);
            const std::size_t batch = end - begin;
            const std::size_t chunks = (batch + kGradChunk - 1) / kGradChunk;
            std::vector<ChunkResult> results(chunks);

            parallel_for(chunks, options.threads, [&](std::size_t c) {
                const std::vector<Tensor> views = model.views();
                ChunkResult& out = results[c];
                for (std::size_t i = begin + c * kGradChunk; i < std::min(end, begin + (c + 1) * kGradChunk); ++i) {
                    const signal::Window& w = train_windows[order[i]];
                    Rng rng(derive_seed(seed, "sample", step, i - begin));
                    const signal::Window x = signal::augment(w, options.augment, rng);
                    const int target = w.label.value();
                    numerics::GradTape tape;
                    const Tensor logits = model.forward_with(views, x.values, true, &rng).logits;
                    const Tensor loss = ops::cross_entropy(logits, std::span<const int>(&target, 1));
                    out.loss += loss.item();
                    tape.backward(ops::scale(loss, 1.0 / static_cast<double>(batch)));
                }
                out.grads.reserve(views.size());
                for (const auto& v : views) {
                    out.grads.emplace_back(v.grad().begin(), v.grad().end());
                    out.grads.back().resize(v.size(), 0.0);
                }
            });

            std::vector<std::vector<double>> grads = std::move(results[0].grads);
            loss_sum += results[0].loss;
            for (std::size_t c = 1; c < chunks; ++c) {
                for (std::size_t k = 0; k < grads.size(); ++k) {
                    for (std::size_t j = 0; j < grads[k].size(); ++j) {
                        grads[k][j] += results[c].grads[k][j];
                    }
                }
                loss_sum += results[c].loss;
            }
            record.lr = numerics::cosine_lr(step, schedule, options.lr_max, options.lr_min);
            numerics::adamw_step(model.params(), grads, result.optimizer, record.lr);
            record.examples_seen += batch;
        }
        record.train_loss = loss_sum / static_cast<double>(n);

        const auto logits = predict_logits(model, val_windows, options.threads);
        std::vector<Label> predicted;
        double val_loss = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            predicted.emplace_back(static_cast<int>(argmax(logits[i])));
            val_loss -= log_softmax_at(logits[i], static_cast<std::size_t>(val_truth[i].value()));
        }
        record.val_loss = val_loss / static_cast<double>(logits.size());
        record.val_f1 = metrics::sample_metrics(val_truth, predicted).f1;

        record.improved = !have_best || record.val_f1 > result.best_val_f1 ||
                          (record.val_f1 == result.best_val_f1 && record.val_loss < result.best_val_loss);
        if (record.improved) {
            have_best = true;
            best = model.snapshot();
            result.best_epoch = epoch;
            result.best_val_f1 = record.val_f1;
            result.best_val_loss = record.val_loss;
            since_improvement = 0;
        } else {
            ++since_improvement;
        }
        result.log.push_back(record);
        if (on_epoch) {
            on_epoch(record);
        }
        if (options.patience > 0 && since_improvement >= options.patience) {
            result.early_stopped = true;
            break;
        }
    }
    model.restore(best);
    result.rng_state = shuffle_rng.serialize();
    return result;
}

}  // namespace ecglink::model
