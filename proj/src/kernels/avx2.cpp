// Compiled with -mavx2 -mfma. Only reached through avx2_kernels(), which
// checks CPU support first.

#include "ecglink/kernels/kernels.hpp"

#if defined(__x86_64__) && defined(ECGLINK_HAVE_AVX2)

#include <immintrin.h>

namespace ecglink::kernels {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// C[m x n] += sum_p a(i, p) * B[p, :], with a(i, p) read through `aat`.
// Blocks four rows of C and eight columns at a time.
template <class AAt>
inline void rank_update(std::size_t m, std::size_t n, std::size_t k,
                        AAt aat, const double* b, double* c) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        std::size_t j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
            __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
            __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
            __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
                const __m256d b1 = _mm256_loadu_pd(b + p * n + j + 4);
                __m256d a = _mm256_set1_pd(aat(i, p));
                c00 = _mm256_fmadd_pd(a, b0, c00);
                c01 = _mm256_fmadd_pd(a, b1, c01);
                a = _mm256_set1_pd(aat(i + 1, p));
                c10 = _mm256_fmadd_pd(a, b0, c10);
                c11 = _mm256_fmadd_pd(a, b1, c11);
                a = _mm256_set1_pd(aat(i + 2, p));
                c20 = _mm256_fmadd_pd(a, b0, c20);
                c21 = _mm256_fmadd_pd(a, b1, c21);
                a = _mm256_set1_pd(aat(i + 3, p));
                c30 = _mm256_fmadd_pd(a, b0, c30);
                c31 = _mm256_fmadd_pd(a, b1, c31);
            }
            auto acc = [&](std::size_t row, std::size_t col, __m256d v) {
                double* dst = c + row * n + col;
                _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), v));
            };
            acc(i, j, c00);
            acc(i, j + 4, c01);
            acc(i + 1, j, c10);
            acc(i + 1, j + 4, c11);
            acc(i + 2, j, c20);
            acc(i + 2, j + 4, c21);
            acc(i + 3, j, c30);
            acc(i + 3, j + 4, c31);
        }
        for (; j + 4 <= n; j += 4) {
            __m256d c0 = _mm256_setzero_pd(), c1 = _mm256_setzero_pd();
            __m256d c2 = _mm256_setzero_pd(), c3 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d b0 = _mm256_loadu_pd(b + p * n + j);
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(aat(i, p)), b0, c0);
                c1 = _mm256_fmadd_pd(_mm256_set1_pd(aat(i + 1, p)), b0, c1);
                c2 = _mm256_fmadd_pd(_mm256_set1_pd(aat(i + 2, p)), b0, c2);
                c3 = _mm256_fmadd_pd(_mm256_set1_pd(aat(i + 3, p)), b0, c3);
            }
            const __m256d cs[4] = {c0, c1, c2, c3};
            for (std::size_t r = 0; r < 4; ++r) {
                double* dst = c + (i + r) * n + j;
                _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), cs[r]));
            }
        }
        for (; j < n; ++j) {
            for (std::size_t r = 0; r < 4; ++r) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) {
                    acc += aat(i + r, p) * b[p * n + j];
                }
                c[(i + r) * n + j] += acc;
            }
        }
    }
    for (; i < m; ++i) {
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            __m256d c0 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k; ++p) {
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(aat(i, p)),
                                     _mm256_loadu_pd(b + p * n + j), c0);
            }
            double* dst = c + i * n + j;
            _mm256_storeu_pd(dst, _mm256_add_pd(_mm256_loadu_pd(dst), c0));
        }
        for (; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += aat(i, p) * b[p * n + j];
            }
            c[i * n + j] += acc;
        }
    }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    rank_update(m, n, k, [a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    rank_update(m, n, k, [a, m](std::size_t i, std::size_t p) { return a[p * m + i]; }, b, c);
}

double dot(std::size_t n, const double* x, const double* y) {
    __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    }
    for (; i + 4 <= n; i += 4) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    }
    double acc = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] += dot(k, arow, b + j * k);
        }
    }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

constexpr KernelTable kTable{Backend::avx2, gemm_nn, gemm_nt, gemm_tn, dot, axpy};

}  // namespace

const KernelTable* avx2_kernels() noexcept {
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &kTable : nullptr;
}

}  // namespace ecglink::kernels

#else

namespace ecglink::kernels {
const KernelTable* avx2_kernels() noexcept { return nullptr; }
}  // namespace ecglink::kernels

#endif
