#include "ecglink/model/vit.hpp"

#include <cmath>

#include "ecglink/error.hpp"
#include "ecglink/numerics/ops.hpp"

namespace ecglink::model {

namespace ops = numerics;
using numerics::Shape;

void ViTConfig::validate() const {
    if (patch_size == 0 || embed_dim == 0 || num_layers == 0 || num_heads == 0 || mlp_dim == 0 ||
        num_classes == 0 || window_len == 0) {
        throw ConfigError("vit: every extent must be positive");
    }
    if (window_len % patch_size != 0) {
        throw ConfigError("vit: window_len " + std::to_string(window_len) + " is not a multiple of patch_size " +
                          std::to_string(patch_size));
    }
    if (embed_dim % num_heads != 0) {
        throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) + " is not a multiple of num_heads " +
                          std::to_string(num_heads));
    }
    if (!(survival_prob > 0.0 && survival_prob <= 1.0)) {
        throw ConfigError("vit: survival_prob must lie in (0, 1]");
    }
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
    std::vector<double> v(numerics::shape_size(shape));
    for (double& x : v) {
        x = rng.uniform(-bound, bound);
    }
    return Tensor(std::move(shape), std::move(v), true);
}

double fan_in_bound(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

template <class P, class F>
void for_each_tensor(P& p, F&& f) {
    f(p.w_p);
    f(p.b_p);
    f(p.cls);
    f(p.pos);
    for (auto& l : p.layers) {
        f(l.ln1_gain);
        f(l.ln1_bias);
        f(l.w_q);
        f(l.w_k);
        f(l.w_v);
        f(l.w_o);
        f(l.ln2_gain);
        f(l.ln2_bias);
        f(l.w1);
        f(l.b1);
        f(l.w2);
        f(l.b2);
    }
    f(p.head_w);
    f(p.head_b);
}

std::vector<Shape> expected_shapes(const ViTConfig& c) {
    const std::size_t d = c.embed_dim;
    std::vector<Shape> s{{d, c.patch_size}, {d}, {d}, {c.num_patches() + 1, d}};
    for (std::size_t i = 0; i < c.num_layers; ++i) {
        s.insert(s.end(), {{d}, {d}, {d, d}, {d, d}, {d, d}, {d, d}, {d}, {d}, {c.mlp_dim, d}, {c.mlp_dim},
                           {d, c.mlp_dim}, {d}});
    }
    s.push_back({c.num_classes, d});
    s.push_back({c.num_classes});
    return s;
}

void check_finite(const Tensor& t, const std::string& where) {
    for (double v : t.values()) {
        if (!std::isfinite(v)) {
            throw NumericalError("non-finite activation in " + where);
        }
    }
}

Tensor drop_path(const Tensor& branch, bool training, double survival_prob, Rng* rng) {
    if (!training || survival_prob >= 1.0) {
        return branch;
    }
    if (rng == nullptr) {
        throw ParameterError("transformer_layer: training with stochastic depth needs an rng");
    }
    if (!rng->bernoulli(survival_prob)) {
        return Tensor();
    }
    return ops::scale(branch, 1.0 / survival_prob);
}

}  // namespace

ViTParams ViTParams::init(const ViTConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    const std::size_t d = config.embed_dim;
    ViTParams p;
    p.w_p = uniform_tensor({d, config.patch_size}, fan_in_bound(config.patch_size), rng);
    p.b_p = uniform_tensor({d}, fan_in_bound(config.patch_size), rng);
    p.cls = uniform_tensor({d}, 0.02, rng);
    p.pos = uniform_tensor({config.num_patches() + 1, d}, 0.02, rng);
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        LayerParams l;
        l.ln1_gain = Tensor::filled({d}, 1.0, true);
        l.ln1_bias = Tensor::zeros({d}, true);
        l.w_q = uniform_tensor({d, d}, fan_in_bound(d), rng);
        l.w_k = uniform_tensor({d, d}, fan_in_bound(d), rng);
        l.w_v = uniform_tensor({d, d}, fan_in_bound(d), rng);
        l.w_o = uniform_tensor({d, d}, fan_in_bound(d), rng);
        l.ln2_gain = Tensor::filled({d}, 1.0, true);
        l.ln2_bias = Tensor::zeros({d}, true);
        l.w1 = uniform_tensor({config.mlp_dim, d}, fan_in_bound(d), rng);
        l.b1 = uniform_tensor({config.mlp_dim}, fan_in_bound(d), rng);
        l.w2 = uniform_tensor({d, config.mlp_dim}, fan_in_bound(config.mlp_dim), rng);
        l.b2 = uniform_tensor({d}, fan_in_bound(config.mlp_dim), rng);
        p.layers.push_back(std::move(l));
    }
    p.head_w = uniform_tensor({config.num_classes, d}, fan_in_bound(d), rng);
    p.head_b = uniform_tensor({config.num_classes}, fan_in_bound(d), rng);
    return p;
}

ViTParams ViTParams::zeros(const ViTConfig& config) {
    config.validate();
    const auto shapes = expected_shapes(config);
    std::vector<Tensor> flat;
    flat.reserve(shapes.size());
    for (const auto& s : shapes) {
        flat.push_back(Tensor::zeros(s, true));
    }
    return unflatten(config, flat);
}

std::vector<Tensor> ViTParams::flatten() const {
    std::vector<Tensor> out;
    for_each_tensor(*this, [&](const Tensor& t) { out.push_back(t); });
    return out;
}

ViTParams ViTParams::unflatten(const ViTConfig& config, std::span<const Tensor> flat) {
    const auto shapes = expected_shapes(config);
    if (flat.size() != shapes.size()) {
        throw ConfigError("vit: expected " + std::to_string(shapes.size()) + " parameter tensors, got " +
                          std::to_string(flat.size()));
    }
    ViTParams p;
    p.layers.resize(config.num_layers);
    std::size_t i = 0;
    for_each_tensor(p, [&](Tensor& t) {
        if (flat[i].shape() != shapes[i]) {
            throw ConfigError("vit: parameter " + names(config)[i] + " has shape " + numerics::to_string(flat[i].shape()) +
                              ", expected " + numerics::to_string(shapes[i]));
        }
        t = flat[i++];
    });
    return p;
}

std::vector<std::string> ViTParams::names(const ViTConfig& config) {
    std::vector<std::string> n{"patch.weight", "patch.bias", "cls", "pos"};
    for (std::size_t i = 0; i < config.num_layers; ++i) {
        const std::string pre = "layer" + std::to_string(i) + ".";
        for (const char* s : {"ln1.gain", "ln1.bias", "attn.q", "attn.k", "attn.v", "attn.o", "ln2.gain", "ln2.bias",
                              "ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2"}) {
            n.push_back(pre + s);
        }
    }
    n.push_back("head.weight");
    n.push_back("head.bias");
    return n;
}

void ViTParams::validate(const ViTConfig& config) const {
    const auto flat = flatten();
    const auto shapes = expected_shapes(config);
    const auto n = names(config);
    if (flat.size() != shapes.size()) {
        throw ConfigError("vit: parameter count does not match the configuration");
    }
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (!flat[i].defined() || flat[i].shape() != shapes[i]) {
            throw ConfigError("vit: parameter " + n[i] + " does not match the configured shape " +
                              numerics::to_string(shapes[i]));
        }
        for (double v : flat[i].values()) {
            if (!std::isfinite(v)) {
                throw NumericalError("vit: parameter " + n[i] + " is not finite");
            }
        }
    }
}

Tensor patch_embed(std::span<const double> window, const ViTParams& params, const ViTConfig& config) {
    if (window.size() != config.window_len || config.window_len % config.patch_size != 0) {
        throw ConfigError("patch_embed: window of length " + std::to_string(window.size()) +
                          " does not fit window_len " + std::to_string(config.window_len) + " / patch_size " +
                          std::to_string(config.patch_size));
    }
    const Tensor patches({config.num_patches(), config.patch_size}, std::vector<double>(window.begin(), window.end()));
    return ops::linear(patches, params.w_p, params.b_p);
}

Tensor add_cls_and_positions(const Tensor& tokens, const ViTParams& params) {
    const Tensor cls_row = ops::reshape(params.cls, {1, params.cls.size()});
    return ops::add(ops::concat_rows({cls_row, tokens}), params.pos);
}

Tensor mhsa(const Tensor& z, const LayerParams& layer, std::size_t num_heads, std::vector<Tensor>* attention) {
    const std::size_t d = z.dim(1);
    const std::size_t dk = d / num_heads;
    const Tensor none;
    const Tensor q = ops::linear(z, layer.w_q, none);
    const Tensor k = ops::linear(z, layer.w_k, none);
    const Tensor v = ops::linear(z, layer.w_v, none);
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Tensor> heads;
    heads.reserve(num_heads);
    for (std::size_t h = 0; h < num_heads; ++h) {
        const Tensor qh = ops::slice_cols(q, h * dk, dk);
        const Tensor kh = ops::slice_cols(k, h * dk, dk);
        const Tensor vh = ops::slice_cols(v, h * dk, dk);
        const Tensor a = ops::softmax(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt_dk), 1);
        if (attention != nullptr) {
            attention->push_back(a);
        }
        heads.push_back(ops::matmul(a, vh));
    }
    const Tensor concat = num_heads == 1 ? heads.front() : ops::concat_cols(heads);
    return ops::linear(concat, layer.w_o, none);
}

Tensor transformer_layer(const Tensor& z, const LayerParams& layer, std::size_t num_heads, bool training,
                         double survival_prob, Rng* rng, std::vector<Tensor>* attention) {
    Tensor z1 = z;
    const Tensor attn = drop_path(mhsa(ops::layer_norm(z, layer.ln1_gain, layer.ln1_bias), layer, num_heads, attention),
                                  training, survival_prob, rng);
    if (attn.defined()) {
        z1 = ops::add(z, attn);
    }
    const Tensor hidden = ops::gelu(ops::linear(ops::layer_norm(z1, layer.ln2_gain, layer.ln2_bias), layer.w1, layer.b1));
    const Tensor ffn = drop_path(ops::linear(hidden, layer.w2, layer.b2), training, survival_prob, rng);
    return ffn.defined() ? ops::add(z1, ffn) : z1;
}

ForwardOutput vit_forward_full(std::span<const double> window, const ViTParams& params, const ViTConfig& config,
                               bool training, Rng* rng, bool keep_attention) {
    ForwardOutput out;
    Tensor z = add_cls_and_positions(patch_embed(window, params, config), params);
    check_finite(z, "patch embedding");
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        std::vector<Tensor> maps;
        z = transformer_layer(z, params.layers[i], config.num_heads, training, config.survival_prob, rng,
                              keep_attention ? &maps : nullptr);
        check_finite(z, "transformer layer " + std::to_string(i));
        if (keep_attention) {
            out.attention.push_back(std::move(maps));
        }
    }
    out.embedding = ops::select_row(z, 0);
    out.logits = ops::linear(out.embedding, params.head_w, params.head_b);
    check_finite(out.logits, "classifier head");
    return out;
}

Tensor vit_forward(std::span<const double> window, const ViTParams& params, const ViTConfig& config, bool training,
                   Rng* rng) {
    return vit_forward_full(window, params, config, training, rng).logits;
}

}  // namespace ecglink::model
