#include "ecglink/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ecglink/error.hpp"
#include "ecglink/kernels/kernels.hpp"

namespace ecglink::numerics {
namespace {

using detail::Node;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (!t.defined() || t.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             ", got " + (t.defined() ? to_string(t.shape()) : "undefined"));
    }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) +
                         " and " + to_string(b.shape()));
}

const std::vector<double>& data(const Node& n) { return *n.data; }

// Gradient buffer of a parent if it takes part in differentiation.
double* grad_of(Node& parent) {
    return parent.requires_grad ? parent.grad_buffer().data() : nullptr;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        mismatch("matmul", a, b);
    }
    std::vector<double> out(m * n, 0.0);
    const auto& kt = kernels::active();
    kt.gemm_nn(m, n, k, a.values().data(), b.values().data(), out.data());
    return make_result({m, n}, std::move(out), {a, b}, [m, n, k](Node& self) {
        const auto& kt = kernels::active();
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (double* ga = grad_of(pa)) {
            kt.gemm_nt(m, k, n, self.grad.data(), data(pb).data(), ga);
        }
        if (double* gb = grad_of(pb)) {
            kt.gemm_tn(k, n, m, data(pa).data(), self.grad.data(), gb);
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_nt");
    require_rank(b, 2, "matmul_nt");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) {
        mismatch("matmul_nt", a, b);
    }
    std::vector<double> out(m * n, 0.0);
    kernels::active().gemm_nt(m, n, k, a.values().data(), b.values().data(), out.data());
    return make_result({m, n}, std::move(out), {a, b}, [m, n, k](Node& self) {
        const auto& kt = kernels::active();
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (double* ga = grad_of(pa)) {
            kt.gemm_nn(m, k, n, self.grad.data(), data(pb).data(), ga);
        }
        if (double* gb = grad_of(pb)) {
            kt.gemm_tn(n, k, m, self.grad.data(), data(pa).data(), gb);
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require_rank(x, 2, "linear");
    require_rank(w, 2, "linear");
    const std::size_t rows = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
    if (w.dim(1) != in) {
        mismatch("linear", x, w);
    }
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
        mismatch("linear(bias)", w, bias);
    }
    std::vector<double> out(rows * out_dim, 0.0);
    if (has_bias) {
        const auto b = bias.values();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy(b.begin(), b.end(), out.begin() + static_cast<std::ptrdiff_t>(r * out_dim));
        }
    }
    kernels::active().gemm_nt(rows, out_dim, in, x.values().data(), w.values().data(), out.data());
    std::vector<Tensor> parents{x, w};
    if (has_bias) {
        parents.push_back(bias);
    }
    return make_result({rows, out_dim}, std::move(out), std::move(parents),
                       [rows, in, out_dim, has_bias](Node& self) {
        const auto& kt = kernels::active();
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        const double* gy = self.grad.data();
        if (double* gx = grad_of(px)) {
            kt.gemm_nn(rows, in, out_dim, gy, data(pw).data(), gx);
        }
        if (double* gw = grad_of(pw)) {
            kt.gemm_tn(out_dim, in, rows, gy, data(px).data(), gw);
        }
        if (has_bias) {
            if (double* gb = grad_of(*self.parents[2])) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < out_dim; ++j) {
                        gb[j] += gy[r * out_dim + j];
                    }
                }
            }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        mismatch("add", a, b);
    }
    std::vector<double> out(a.values().begin(), a.values().end());
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += bv[i];
    }
    return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
        const std::size_t n = self.grad.size();
        for (std::size_t p = 0; p < 2; ++p) {
            if (double* g = grad_of(*self.parents[p])) {
                for (std::size_t i = 0; i < n; ++i) {
                    g[i] += self.grad[i];
                }
            }
        }
    });
}

Tensor add_rowwise(const Tensor& x, const Tensor& v) {
    require_rank(x, 2, "add_rowwise");
    require_rank(v, 1, "add_rowwise");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (v.dim(0) != cols) {
        mismatch("add_rowwise", x, v);
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    const auto vv = v.values();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            out[r * cols + c] += vv[c];
        }
    }
    return make_result(x.shape(), std::move(out), {x, v}, [rows, cols](Node& self) {
        if (double* gx = grad_of(*self.parents[0])) {
            for (std::size_t i = 0; i < rows * cols; ++i) {
                gx[i] += self.grad[i];
            }
        }
        if (double* gv = grad_of(*self.parents[1])) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    gv[c] += self.grad[r * cols + c];
                }
            }
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.values().begin(), x.values().end());
    for (double& v : out) {
        v *= factor;
    }
    return make_result(x.shape(), std::move(out), {x}, [factor](Node& self) {
        if (double* g = grad_of(*self.parents[0])) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i] += factor * self.grad[i];
            }
        }
    });
}

Tensor mul_constant(const Tensor& x, std::span<const double> mask) {
    if (mask.size() != x.size()) {
        throw DimensionError("mul_constant: mask of " + std::to_string(mask.size()) +
                             " values for tensor " + to_string(x.shape()));
    }
    std::vector<double> m(mask.begin(), mask.end());
    std::vector<double> out(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= m[i];
    }
    return make_result(x.shape(), std::move(out), {x}, [m = std::move(m)](Node& self) {
        if (double* g = grad_of(*self.parents[0])) {
            for (std::size_t i = 0; i < m.size(); ++i) {
                g[i] += m[i] * self.grad[i];
            }
        }
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) {
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + to_string(s));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) {
        outer *= s[i];
    }
    for (std::size_t i = axis + 1; i < s.size(); ++i) {
        inner *= s[i];
    }
    const std::size_t len = s[axis];
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = xv[base];
            for (std::size_t j = 1; j < len; ++j) {
                mx = std::max(mx, xv[base + j * inner]);
            }
            double total = 0.0;
            for (std::size_t j = 0; j < len; ++j) {
                const double e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < len; ++j) {
                out[base + j * inner] /= total;
            }
        }
    }
    return make_result(s, std::move(out), {x}, [outer, inner, len](Node& self) {
        double* g = grad_of(*self.parents[0]);
        if (g == nullptr) {
            return;
        }
        const auto& y = *self.data;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                double dot = 0.0;
                for (std::size_t j = 0; j < len; ++j) {
                    dot += self.grad[base + j * inner] * y[base + j * inner];
                }
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t idx = base + j * inner;
                    g[idx] += y[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (!x.defined() || x.rank() < 1) {
        throw DimensionError("layer_norm: undefined input");
    }
    const std::size_t cols = x.shape().back();
    const std::size_t rows = x.size() / cols;
    if (gain.rank() != 1 || gain.dim(0) != cols) {
        mismatch("layer_norm(gain)", x, gain);
    }
    if (bias.rank() != 1 || bias.dim(0) != cols) {
        mismatch("layer_norm(bias)", x, bias);
    }
    const auto xv = x.values();
    const auto gv = gain.values();
    const auto bv = bias.values();
    std::vector<double> xhat(xv.size());
    std::vector<double> rstd(rows);
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xv.data() + r * cols;
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            mu += row[c];
        }
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = row[c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const double h = (row[c] - mu) * rstd[r];
            xhat[r * cols + c] = h;
            out[r * cols + c] = h * gv[c] + bv[c];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [rows, cols, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const auto& gv = data(pg);
        const double* gy = self.grad.data();
        if (double* gg = grad_of(pg)) {
            for (std::size_t i = 0; i < rows * cols; ++i) {
                gg[i % cols] += gy[i] * xhat[i];
            }
        }
        if (double* gb = grad_of(pb)) {
            for (std::size_t i = 0; i < rows * cols; ++i) {
                gb[i % cols] += gy[i];
            }
        }
        if (double* gx = grad_of(px)) {
            const double inv_n = 1.0 / static_cast<double>(cols);
            for (std::size_t r = 0; r < rows; ++r) {
                double mean_d = 0.0, mean_dh = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    const double d = gy[r * cols + c] * gv[c];
                    mean_d += d;
                    mean_dh += d * xhat[r * cols + c];
                }
                mean_d *= inv_n;
                mean_dh *= inv_n;
                for (std::size_t c = 0; c < cols; ++c) {
                    const std::size_t i = r * cols + c;
                    const double d = gy[i] * gv[c];
                    gx[i] += rstd[r] * (d - mean_d - xhat[i] * mean_dh);
                }
            }
        }
    });
}

Tensor gelu(const Tensor& x) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
    }
    return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
        Node& px = *self.parents[0];
        double* g = grad_of(px);
        if (g == nullptr) {
            return;
        }
        const auto& xv = data(px);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            g[i] += self.grad[i] * (cdf + v * pdf);
        }
    });
}

Tensor relu(const Tensor& x) {
    const auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    }
    return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
        Node& px = *self.parents[0];
        if (double* g = grad_of(px)) {
            const auto& xv = data(px);
            for (std::size_t i = 0; i < xv.size(); ++i) {
                if (xv[i] > 0.0) {
                    g[i] += self.grad[i];
                }
            }
        }
    });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    require_rank(logits, 2, "cross_entropy");
    const std::size_t batch = logits.dim(0), classes = logits.dim(1);
    if (targets.size() != batch) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                             " targets for logits " + to_string(logits.shape()));
    }
    for (int t : targets) {
        if (t < 0 || static_cast<std::size_t>(t) >= classes) {
            throw LabelError("cross_entropy: target " + std::to_string(t) + " outside [0, " +
                             std::to_string(classes) + ")");
        }
    }
    const auto lv = logits.values();
    std::vector<double> probs(lv.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = lv.data() + b * classes;
        const double mx = *std::max_element(row, row + classes);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            total += std::exp(row[c] - mx);
        }
        const double lse = mx + std::log(total);
        for (std::size_t c = 0; c < classes; ++c) {
            probs[b * classes + c] = std::exp(row[c] - lse);
        }
        loss += lse - row[static_cast<std::size_t>(targets[b])];
    }
    loss /= static_cast<double>(batch);
    std::vector<int> tgt(targets.begin(), targets.end());
    return make_result({1}, {loss}, {logits},
                       [batch, classes, probs = std::move(probs), tgt = std::move(tgt)](Node& self) {
        double* g = grad_of(*self.parents[0]);
        if (g == nullptr) {
            return;
        }
        const double scale = self.grad[0] / static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < classes; ++c) {
                const double onehot = static_cast<std::size_t>(tgt[b]) == c ? 1.0 : 0.0;
                g[b * classes + c] += scale * (probs[b * classes + c] - onehot);
            }
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size()) {
        throw DimensionError("reshape: " + to_string(x.shape()) + " to " + to_string(shape));
    }
    return make_result(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()),
                       {x}, [](Node& self) {
        if (double* g = grad_of(*self.parents[0])) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                g[i] += self.grad[i];
            }
        }
    });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
    require_rank(x, 2, "slice_cols");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (count == 0 || start + count > cols) {
        throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") outside " + to_string(x.shape()));
    }
    const auto xv = x.values();
    std::vector<double> out(rows * count);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(xv.data() + r * cols + start, count, out.data() + r * count);
    }
    return make_result({rows, count}, std::move(out), {x}, [rows, cols, start, count](Node& self) {
        if (double* g = grad_of(*self.parents[0])) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t c = 0; c < count; ++c) {
                    g[r * cols + start + c] += self.grad[r * count + c];
                }
            }
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    const std::size_t rows = parts.front().dim(0);
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        require_rank(p, 2, "concat_cols");
        if (p.dim(0) != rows) {
            mismatch("concat_cols", parts.front(), p);
        }
        widths.push_back(p.dim(1));
        total += p.dim(1);
    }
    std::vector<double> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto pv = parts[k].values();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(pv.data() + r * widths[k], widths[k], out.data() + r * total + offset);
        }
        offset += widths[k];
    }
    return make_result({rows, total}, std::move(out), parts,
                       [rows, total, widths = std::move(widths)](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (double* g = grad_of(*self.parents[k])) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < widths[k]; ++c) {
                        g[r * widths[k] + c] += self.grad[r * total + offset + c];
                    }
                }
            }
            offset += widths[k];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    const std::size_t cols = parts.front().dim(1);
    std::vector<std::size_t> sizes;
    std::size_t rows = 0;
    std::vector<double> out;
    for (const Tensor& p : parts) {
        require_rank(p, 2, "concat_rows");
        if (p.dim(1) != cols) {
            mismatch("concat_rows", parts.front(), p);
        }
        rows += p.dim(0);
        sizes.push_back(p.size());
        out.insert(out.end(), p.values().begin(), p.values().end());
    }
    return make_result({rows, cols}, std::move(out), parts, [sizes = std::move(sizes)](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            if (double* g = grad_of(*self.parents[k])) {
                for (std::size_t i = 0; i < sizes[k]; ++i) {
                    g[i] += self.grad[offset + i];
                }
            }
            offset += sizes[k];
        }
    });
}

Tensor select_row(const Tensor& x, std::size_t row) {
    require_rank(x, 2, "select_row");
    const std::size_t cols = x.dim(1);
    if (row >= x.dim(0)) {
        throw DimensionError("select_row: row " + std::to_string(row) + " outside " +
                             to_string(x.shape()));
    }
    const auto xv = x.values();
    std::vector<double> out(xv.begin() + static_cast<std::ptrdiff_t>(row * cols),
                            xv.begin() + static_cast<std::ptrdiff_t>((row + 1) * cols));
    return make_result({1, cols}, std::move(out), {x}, [row, cols](Node& self) {
        if (double* g = grad_of(*self.parents[0])) {
            for (std::size_t c = 0; c < cols; ++c) {
                g[row * cols + c] += self.grad[c];
            }
        }
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.values()) {
        total += v;
    }
    return make_result({1}, {total}, {x}, [](Node& self) {
        if (double* g = grad_of(*self.parents[0])) {
            const std::size_t n = self.parents[0]->data->size();
            for (std::size_t i = 0; i < n; ++i) {
                g[i] += self.grad[0];
            }
        }
    });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor batch_norm_train(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                        std::vector<double>& batch_mean, std::vector<double>& batch_var) {
    require_rank(x, 2, "batch_norm");
    const std::size_t batch = x.dim(0), feats = x.dim(1);
    if (gain.rank() != 1 || gain.dim(0) != feats) {
        mismatch("batch_norm(gain)", x, gain);
    }
    if (bias.rank() != 1 || bias.dim(0) != feats) {
        mismatch("batch_norm(bias)", x, bias);
    }
    const auto xv = x.values();
    const auto gv = gain.values();
    const auto bv = bias.values();
    batch_mean.assign(feats, 0.0);
    batch_var.assign(feats, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < feats; ++f) {
            batch_mean[f] += xv[b * feats + f];
        }
    }
    for (double& m : batch_mean) {
        m /= static_cast<double>(batch);
    }
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < feats; ++f) {
            const double d = xv[b * feats + f] - batch_mean[f];
            batch_var[f] += d * d;
        }
    }
    std::vector<double> rstd(feats);
    for (std::size_t f = 0; f < feats; ++f) {
        batch_var[f] /= static_cast<double>(batch);
        rstd[f] = 1.0 / std::sqrt(batch_var[f] + eps);
    }
    std::vector<double> xhat(xv.size()), out(xv.size());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < feats; ++f) {
            const std::size_t i = b * feats + f;
            xhat[i] = (xv[i] - batch_mean[f]) * rstd[f];
            out[i] = xhat[i] * gv[f] + bv[f];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [batch, feats, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const auto& gv = data(*self.parents[1]);
        const double* gy = self.grad.data();
        if (double* gg = grad_of(*self.parents[1])) {
            for (std::size_t i = 0; i < batch * feats; ++i) {
                gg[i % feats] += gy[i] * xhat[i];
            }
        }
        if (double* gb = grad_of(*self.parents[2])) {
            for (std::size_t i = 0; i < batch * feats; ++i) {
                gb[i % feats] += gy[i];
            }
        }
        if (double* gx = grad_of(*self.parents[0])) {
            const double inv_n = 1.0 / static_cast<double>(batch);
            for (std::size_t f = 0; f < feats; ++f) {
                double mean_d = 0.0, mean_dh = 0.0;
                for (std::size_t b = 0; b < batch; ++b) {
                    const double d = gy[b * feats + f] * gv[f];
                    mean_d += d;
                    mean_dh += d * xhat[b * feats + f];
                }
                mean_d *= inv_n;
                mean_dh *= inv_n;
                for (std::size_t b = 0; b < batch; ++b) {
                    const std::size_t i = b * feats + f;
                    gx[i] += rstd[f] * (gy[i] * gv[f] - mean_d - xhat[i] * mean_dh);
                }
            }
        }
    });
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gain, const Tensor& bias,
                       std::span<const double> mean, std::span<const double> var, double eps) {
    require_rank(x, 2, "batch_norm");
    const std::size_t batch = x.dim(0), feats = x.dim(1);
    if (gain.dim(0) != feats || bias.dim(0) != feats || mean.size() != feats || var.size() != feats) {
        mismatch("batch_norm_eval", x, gain);
    }
    const auto xv = x.values();
    const auto gv = gain.values();
    const auto bv = bias.values();
    std::vector<double> rstd(feats), xhat(xv.size()), out(xv.size());
    for (std::size_t f = 0; f < feats; ++f) {
        rstd[f] = 1.0 / std::sqrt(var[f] + eps);
    }
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < feats; ++f) {
            const std::size_t i = b * feats + f;
            xhat[i] = (xv[i] - mean[f]) * rstd[f];
            out[i] = xhat[i] * gv[f] + bv[f];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [batch, feats, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
        const auto& gv = data(*self.parents[1]);
        const double* gy = self.grad.data();
        if (double* gx = grad_of(*self.parents[0])) {
            for (std::size_t i = 0; i < batch * feats; ++i) {
                gx[i] += gy[i] * gv[i % feats] * rstd[i % feats];
            }
        }
        if (double* gg = grad_of(*self.parents[1])) {
            for (std::size_t i = 0; i < batch * feats; ++i) {
                gg[i % feats] += gy[i] * xhat[i];
            }
        }
        if (double* gb = grad_of(*self.parents[2])) {
            for (std::size_t i = 0; i < batch * feats; ++i) {
                gb[i % feats] += gy[i];
            }
        }
    });
}

}  // namespace ecglink::numerics
