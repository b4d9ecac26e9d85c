#pragma once

// Known/unknown discriminator over final cls embeddings:
// linear(hidden) -> batch norm -> ReLU -> dropout -> linear(2).
// Output column 0 scores "known", column 1 "unknown".

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ecglink/numerics/tensor.hpp"
#include "ecglink/rng.hpp"

namespace ecglink::model {

using numerics::Tensor;

struct DiscriminatorParams {
    Tensor w1, b1;            // hidden x input, hidden
    Tensor bn_gain, bn_bias;  // hidden
    Tensor w2, b2;            // 2 x hidden, 2
    std::vector<double> running_mean;  // starts at 0
    std::vector<double> running_var;   // starts at 1
    double dropout_prob = 0.3;
    double momentum = 0.1;
    double eps = 1e-5;

    static DiscriminatorParams init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);
    std::size_t input_dim() const { return w1.dim(1); }
    std::size_t hidden_dim() const { return w1.dim(0); }
    std::vector<Tensor> trainable() const;
    // Same running statistics, gradient-tracking views of the trainable tensors.
    DiscriminatorParams with_views() const;
};

// embeddings [B x input] -> logits [B x 2]. Training mode normalizes with the
// batch statistics, folds them into the running statistics and applies
// inverted dropout; evaluation mode uses the running statistics only.
Tensor discriminator_forward(const Tensor& embeddings, DiscriminatorParams& params, bool training, Rng* rng);

struct DiscriminatorTraining {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;
};

// Cross-entropy training on labeled embeddings (0 known, 1 unknown).
DiscriminatorParams train_discriminator(std::span<const std::vector<double>> known,
                                        std::span<const std::vector<double>> unknown, std::size_t hidden_dim,
                                        const DiscriminatorTraining& options);

// Softmax probability of the unknown class in evaluation mode.
double unknown_probability(std::span<const double> embedding, DiscriminatorParams& params);

}  // namespace ecglink::model
