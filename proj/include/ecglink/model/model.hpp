#pragma once

// A classifier over fixed-length windows: the ViT, or a linear-softmax
// baseline on the raw samples. Parameters are held as a flat list of named
// leaf tensors so the optimizer, trainer and checkpoints stay model-agnostic.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecglink/model/vit.hpp"

namespace ecglink::model {

enum class ModelKind { vit, linear };

std::string to_string(ModelKind kind);
// Throws ConfigError for anything but "vit" or "linear".
ModelKind model_kind_from_string(const std::string& text);

class Model {
public:
    // For the linear kind only window_len and num_classes of `config` matter.
    Model(ModelKind kind, const ViTConfig& config, std::uint64_t init_seed);
    Model(ModelKind kind, const ViTConfig& config, std::vector<Tensor> params);

    ModelKind kind() const noexcept { return kind_; }
    const ViTConfig& config() const noexcept { return config_; }
    std::size_t num_classes() const noexcept { return config_.num_classes; }
    std::size_t window_len() const noexcept { return config_.window_len; }

    const std::vector<Tensor>& params() const noexcept { return params_; }
    std::vector<Tensor>& params() noexcept { return params_; }
    const std::vector<std::string>& names() const noexcept { return names_; }
    std::size_t parameter_count() const;

    // Forward with the model's own parameters or with a congruent replacement
    // list (for instance gradient-tracking views).
    ForwardOutput forward(std::span<const double> window, bool training, Rng* rng) const;
    ForwardOutput forward_with(std::span<const Tensor> params, std::span<const double> window, bool training,
                               Rng* rng) const;

    // Gradient-tracking views sharing this model's storage.
    std::vector<Tensor> views() const;
    // Deep copy of the parameter values.
    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& values);

private:
    ModelKind kind_;
    ViTConfig config_;
    std::vector<Tensor> params_;
    std::vector<std::string> names_;
};

}  // namespace ecglink::model
