#include "ecglink/kernels/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

namespace ecglink::kernels {
namespace {

double dot(std::size_t n, const double* x, const double* y) {
    float64x2_t s0 = vdupq_n_f64(0.0), s1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 = vfmaq_f64(s0, vld1q_f64(x + i), vld1q_f64(y + i));
        s1 = vfmaq_f64(s1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    }
    double acc = vaddvq_f64(vaddq_f64(s0, s1));
    for (; i < n; ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            axpy(n, a[i * k + p], b + p * n, c + i * n);
        }
    }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] += dot(k, a + i * k, b + j * k);
        }
    }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t i = 0; i < m; ++i) {
            axpy(n, a[p * m + i], b + p * n, c + i * n);
        }
    }
}

constexpr KernelTable kTable{Backend::neon, gemm_nn, gemm_nt, gemm_tn, dot, axpy};

}  // namespace

const KernelTable* neon_kernels() noexcept { return &kTable; }

}  // namespace ecglink::kernels

#else

namespace ecglink::kernels {
const KernelTable* neon_kernels() noexcept { return nullptr; }
}  // namespace ecglink::kernels

#endif
