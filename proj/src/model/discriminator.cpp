#include "ecglink/model/discriminator.hpp"

#include <cmath>

#include "ecglink/error.hpp"
#include "ecglink/numerics/ops.hpp"
#include "ecglink/numerics/optim.hpp"

namespace ecglink::model {

namespace ops = numerics;

namespace {

Tensor uniform_tensor(numerics::Shape shape, double bound, Rng& rng) {
    std::vector<double> v(numerics::shape_size(shape));
    for (double& x : v) {
        x = rng.uniform(-bound, bound);
    }
    return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

DiscriminatorParams DiscriminatorParams::init(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed) {
    if (input_dim == 0 || hidden_dim == 0) {
        throw ConfigError("discriminator: dimensions must be positive");
    }
    Rng rng(seed);
    const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    DiscriminatorParams p;
    p.w1 = uniform_tensor({hidden_dim, input_dim}, s1, rng);
    p.b1 = uniform_tensor({hidden_dim}, s1, rng);
    p.bn_gain = Tensor::filled({hidden_dim}, 1.0, true);
    p.bn_bias = Tensor::zeros({hidden_dim}, true);
    p.w2 = uniform_tensor({2, hidden_dim}, s2, rng);
    p.b2 = uniform_tensor({2}, s2, rng);
    p.running_mean.assign(hidden_dim, 0.0);
    p.running_var.assign(hidden_dim, 1.0);
    return p;
}

std::vector<Tensor> DiscriminatorParams::trainable() const { return {w1, b1, bn_gain, bn_bias, w2, b2}; }

DiscriminatorParams DiscriminatorParams::with_views() const {
    DiscriminatorParams p = *this;
    p.w1 = w1.view();
    p.b1 = b1.view();
    p.bn_gain = bn_gain.view();
    p.bn_bias = bn_bias.view();
    p.w2 = w2.view();
    p.b2 = b2.view();
    return p;
}

Tensor discriminator_forward(const Tensor& embeddings, DiscriminatorParams& params, bool training, Rng* rng) {
    if (embeddings.rank() != 2 || embeddings.dim(1) != params.input_dim()) {
        throw DimensionError("discriminator: embeddings " + numerics::to_string(embeddings.shape()) +
                             " do not match input dimension " + std::to_string(params.input_dim()));
    }
    Tensor h = ops::linear(embeddings, params.w1, params.b1);
    if (training) {
        std::vector<double> mean, var;
        h = ops::batch_norm_train(h, params.bn_gain, params.bn_bias, params.eps, mean, var);
        for (std::size_t j = 0; j < mean.size(); ++j) {
            params.running_mean[j] = (1.0 - params.momentum) * params.running_mean[j] + params.momentum * mean[j];
            params.running_var[j] = (1.0 - params.momentum) * params.running_var[j] + params.momentum * var[j];
        }
    } else {
        h = ops::batch_norm_eval(h, params.bn_gain, params.bn_bias, params.running_mean, params.running_var,
                                 params.eps);
    }
    h = ops::relu(h);
    if (training && params.dropout_prob > 0.0) {
        if (rng == nullptr) {
            throw ParameterError("discriminator: training with dropout needs an rng");
        }
        const double keep = 1.0 - params.dropout_prob;
        std::vector<double> mask(h.size());
        for (double& m : mask) {
            m = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        }
        h = ops::mul_constant(h, mask);
    }
    return ops::linear(h, params.w2, params.b2);
}

DiscriminatorParams train_discriminator(std::span<const std::vector<double>> known,
                                        std::span<const std::vector<double>> unknown, std::size_t hidden_dim,
                                        const DiscriminatorTraining& options) {
    if (known.empty() || unknown.empty()) {
        throw ConfigError("discriminator: both known and unknown examples are required");
    }
    if (options.batch_size < 2 || options.epochs == 0) {
        throw ConfigError("discriminator: batch_size must be at least 2 and epochs positive");
    }
    const std::size_t dim = known.front().size();
    std::vector<const std::vector<double>*> examples;
    std::vector<int> labels;
    for (const auto& e : known) {
        examples.push_back(&e);
        labels.push_back(0);
    }
    for (const auto& e : unknown) {
        examples.push_back(&e);
        labels.push_back(1);
    }
    for (const auto* e : examples) {
        if (e->size() != dim) {
            throw DimensionError("discriminator: embeddings have inconsistent dimensions");
        }
    }

    DiscriminatorParams params = DiscriminatorParams::init(dim, hidden_dim, derive_seed(options.seed, "disc-init"));
    auto leaves = params.trainable();
    auto state = numerics::OptimizerState::for_params(leaves, options.lr, options.lr, options.weight_decay);
    Rng order_rng(derive_seed(options.seed, "disc-order"));
    Rng dropout_rng(derive_seed(options.seed, "disc-dropout"));
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();) {
            std::size_t end = std::min(order.size(), start + options.batch_size);
            if (order.size() - end == 1) {
                ++end;  // never leave a single-example batch for batch norm
            }
            std::vector<double> batch;
            std::vector<int> batch_labels;
            for (std::size_t i = start; i < end; ++i) {
                batch.insert(batch.end(), examples[order[i]]->begin(), examples[order[i]]->end());
                batch_labels.push_back(labels[order[i]]);
            }
            const Tensor x({end - start, dim}, std::move(batch));
            DiscriminatorParams views = params.with_views();
            {
                numerics::GradTape tape;
                const Tensor loss = ops::cross_entropy(discriminator_forward(x, views, true, &dropout_rng), batch_labels);
                tape.backward(loss);
            }
            params.running_mean = views.running_mean;
            params.running_var = views.running_var;
            std::vector<std::vector<double>> grads;
            for (const auto& v : views.trainable()) {
                grads.emplace_back(v.grad().begin(), v.grad().end());
                grads.back().resize(v.size(), 0.0);
            }
            numerics::adamw_step(leaves, grads, state, options.lr);
            start = end;
        }
    }
    return params;
}

double unknown_probability(std::span<const double> embedding, DiscriminatorParams& params) {
    const Tensor x({1, embedding.size()}, std::vector<double>(embedding.begin(), embedding.end()));
    const Tensor p = ops::softmax(discriminator_forward(x, params, false, nullptr), 1);
    return p[1];
}

}  // namespace ecglink::model
