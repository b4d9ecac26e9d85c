#pragma once

// Supervised training of a Model on labeled windows: mini-batch AdamW under a
// warmup + cosine schedule, augmentation on training batches only, and early
// stopping on validation macro-F1.
//
// Each batch is cut into fixed chunks of windows. Every chunk differentiates
// through its own parameter views; chunk gradients are summed in chunk order,
// so results are bit-identical at any thread count.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ecglink/model/model.hpp"
#include "ecglink/numerics/optim.hpp"
#include "ecglink/signal.hpp"

namespace ecglink::model {

struct TrainOptions {
    std::size_t epochs = 300;
    std::size_t batch_size = 64;
    std::size_t patience = 20;
    double lr_max = 1e-4;
    double lr_min = 0.0;
    double weight_decay = 1e-4;
    double warmup_fraction = 0.05;
    signal::AugmentSpec augment;  // its seed is ignored; draws come from the training seed
    std::size_t threads = 1;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_f1 = 0.0;
    double lr = 0.0;  // rate used by the epoch's last step
    std::size_t examples_seen = 0;
    bool improved = false;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
    double best_val_loss = 0.0;
    bool early_stopped = false;
    numerics::OptimizerState optimizer;
    std::string rng_state;  // epoch-shuffle generator after the last epoch
};

using EpochCallback = std::function<void(const EpochRecord&)>;

inline constexpr std::size_t kGradChunk = 4;

// Trains `model` in place and leaves it holding the parameters of the best
// validation epoch (highest macro-F1, lower validation loss on ties).
// Throws ConfigError on an empty split and LabelError on a label outside
// [0, C).
TrainResult train(Model& model, std::span<const signal::Window> train_windows,
                  std::span<const signal::Window> val_windows, const TrainOptions& options, std::uint64_t seed,
                  const EpochCallback& on_epoch = {});

// The order in which an epoch visits n training windows.
std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng);

// Evaluation-mode logits for each window, computed in parallel.
std::vector<std::vector<double>> predict_logits(const Model& model, std::span<const signal::Window> windows,
                                                std::size_t threads);

// Evaluation-mode final embeddings (cls token, or raw samples for the linear model).
std::vector<std::vector<double>> predict_embeddings(const Model& model, std::span<const signal::Window> windows,
                                                    std::size_t threads);

}  // namespace ecglink::model
