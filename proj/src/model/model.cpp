#include "ecglink/model/model.hpp"

#include <algorithm>
#include <cmath>

#include "ecglink/error.hpp"
#include "ecglink/numerics/ops.hpp"

namespace ecglink::model {

std::string to_string(ModelKind kind) { return kind == ModelKind::vit ? "vit" : "linear"; }

ModelKind model_kind_from_string(const std::string& text) {
    if (text == "vit") {
        return ModelKind::vit;
    }
    if (text == "linear") {
        return ModelKind::linear;
    }
    throw ConfigError("unknown model kind '" + text + "' (expected vit or linear)");
}

namespace {

void validate_for(ModelKind kind, const ViTConfig& config) {
    if (kind == ModelKind::vit) {
        config.validate();
    } else if (config.window_len == 0 || config.num_classes == 0) {
        throw ConfigError("linear model: window_len and num_classes must be positive");
    }
}

std::vector<std::string> names_for(ModelKind kind, const ViTConfig& config) {
    if (kind == ModelKind::vit) {
        return ViTParams::names(config);
    }
    return {"linear.weight", "linear.bias"};
}

}  // namespace

Model::Model(ModelKind kind, const ViTConfig& config, std::uint64_t init_seed) : kind_(kind), config_(config) {
    validate_for(kind, config);
    if (kind == ModelKind::vit) {
        params_ = ViTParams::init(config, init_seed).flatten();
    } else {
        Rng rng(init_seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(config.window_len));
        std::vector<double> w(config.num_classes * config.window_len), b(config.num_classes);
        for (double& x : w) {
            x = rng.uniform(-bound, bound);
        }
        for (double& x : b) {
            x = rng.uniform(-bound, bound);
        }
        params_ = {Tensor({config.num_classes, config.window_len}, std::move(w), true),
                   Tensor({config.num_classes}, std::move(b), true)};
    }
    names_ = names_for(kind, config);
}

Model::Model(ModelKind kind, const ViTConfig& config, std::vector<Tensor> params)
    : kind_(kind), config_(config), params_(std::move(params)) {
    validate_for(kind, config);
    names_ = names_for(kind, config);
    if (kind == ModelKind::vit) {
        ViTParams::unflatten(config, params_).validate(config);
    } else if (params_.size() != 2 || params_[0].shape() != numerics::Shape{config.num_classes, config.window_len} ||
               params_[1].shape() != numerics::Shape{config.num_classes}) {
        throw ConfigError("linear model: parameter shapes do not match the configuration");
    }
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) {
        n += p.size();
    }
    return n;
}

ForwardOutput Model::forward(std::span<const double> window, bool training, Rng* rng) const {
    return forward_with(params_, window, training, rng);
}

ForwardOutput Model::forward_with(std::span<const Tensor> params, std::span<const double> window, bool training,
                                  Rng* rng) const {
    if (window.size() != config_.window_len) {
        throw InputError("window of length " + std::to_string(window.size()) + " does not match model window_len " +
                         std::to_string(config_.window_len));
    }
    if (kind_ == ModelKind::vit) {
        return vit_forward_full(window, ViTParams::unflatten(config_, params), config_, training, rng);
    }
    ForwardOutput out;
    out.embedding = Tensor({1, window.size()}, std::vector<double>(window.begin(), window.end()));
    out.logits = numerics::linear(out.embedding, params[0], params[1]);
    return out;
}

std::vector<Tensor> Model::views() const {
    std::vector<Tensor> v;
    v.reserve(params_.size());
    for (const auto& p : params_) {
        v.push_back(p.view());
    }
    return v;
}

std::vector<std::vector<double>> Model::snapshot() const {
    std::vector<std::vector<double>> s;
    s.reserve(params_.size());
    for (const auto& p : params_) {
        s.emplace_back(p.values().begin(), p.values().end());
    }
    return s;
}

void Model::restore(const std::vector<std::vector<double>>& values) {
    if (values.size() != params_.size()) {
        throw DimensionError("restore: parameter count mismatch");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto dst = params_[i].mutable_values();
        if (values[i].size() != dst.size()) {
            throw DimensionError("restore: size mismatch for " + names_[i]);
        }
        std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
}

}  // namespace ecglink::model
