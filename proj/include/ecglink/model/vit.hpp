#pragma once

// One-dimensional Vision Transformer over single-lead ECG windows.
//
// A window of L samples is cut into N = L / P patches, each projected to d
// dimensions; a learnable cls token is prepended and a learnable positional
// table added. Pre-norm transformer layers follow, and the final cls token
// feeds a linear classifier head.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecglink/numerics/tensor.hpp"
#include "ecglink/rng.hpp"

namespace ecglink::model {

using numerics::Tensor;

struct ViTConfig {
    std::size_t patch_size = 20;
    std::size_t embed_dim = 256;
    std::size_t num_layers = 6;
    std::size_t num_heads = 8;
    std::size_t mlp_dim = 128;
    double survival_prob = 0.8;
    std::size_t num_classes = 2;
    std::size_t window_len = 2000;

    // Throws ConfigError when an extent is zero, L mod P != 0, d mod H != 0 or
    // survival_prob is outside (0, 1].
    void validate() const;
    std::size_t num_patches() const { return window_len / patch_size; }
    std::size_t head_dim() const { return embed_dim / num_heads; }

    bool operator==(const ViTConfig&) const = default;
};

struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor w_q, w_k, w_v, w_o;  // d x d, no bias
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1;  // mlp_dim x d, mlp_dim
    Tensor w2, b2;  // d x mlp_dim, d
};

struct ViTParams {
    Tensor w_p, b_p;  // d x P, d
    Tensor cls;       // d
    Tensor pos;       // (N + 1) x d
    std::vector<LayerParams> layers;
    Tensor head_w, head_b;  // C x d, C

    // Linear maps and biases uniform in +-1/sqrt(fan_in); layer-norm gains 1
    // and biases 0; cls and pos uniform in +-0.02.
    static ViTParams init(const ViTConfig& config, std::uint64_t seed);
    static ViTParams zeros(const ViTConfig& config);

    // Stable flat ordering used by checkpoints and the optimizer.
    std::vector<Tensor> flatten() const;
    static ViTParams unflatten(const ViTConfig& config, std::span<const Tensor> flat);
    static std::vector<std::string> names(const ViTConfig& config);

    // Throws ConfigError on a shape mismatch and NumericalError on a
    // non-finite entry.
    void validate(const ViTConfig& config) const;
};

// Token i = W_p * patch_i + b_p, returned as [N x d].
Tensor patch_embed(std::span<const double> window, const ViTParams& params, const ViTConfig& config);

// [z_cls; tokens] + E, returned as [(N + 1) x d].
Tensor add_cls_and_positions(const Tensor& tokens, const ViTParams& params);

// Multi-head self-attention without biases. When `attention` is non-null the
// per-head attention matrices are appended to it.
Tensor mhsa(const Tensor& z, const LayerParams& layer, std::size_t num_heads,
            std::vector<Tensor>* attention = nullptr);

// Z1 = Z + drop_path(mhsa(LN(Z))); Z' = Z1 + drop_path(FFN(LN(Z1))).
// In training each branch survives with probability survival_prob and is
// scaled by 1 / survival_prob when kept. Evaluation is deterministic and
// draws nothing from rng.
Tensor transformer_layer(const Tensor& z, const LayerParams& layer, std::size_t num_heads,
                         bool training, double survival_prob, Rng* rng,
                         std::vector<Tensor>* attention = nullptr);

struct ForwardOutput {
    Tensor logits;     // [1 x C]
    Tensor embedding;  // final cls token, [1 x d]
    std::vector<std::vector<Tensor>> attention;  // [layer][head], when requested
};

ForwardOutput vit_forward_full(std::span<const double> window, const ViTParams& params,
                               const ViTConfig& config, bool training, Rng* rng,
                               bool keep_attention = false);

// Logits [1 x C]. Throws NumericalError naming the layer on a non-finite
// activation.
Tensor vit_forward(std::span<const double> window, const ViTParams& params, const ViTConfig& config,
                   bool training, Rng* rng);

}  // namespace ecglink::model
