#pragma once

// Dense double-precision inner loops used by the tensor ops.
//
// Every kernel has a scalar reference implementation. Vectorized variants
// (AVX2+FMA on x86-64, NEON on aarch64) are compiled into separate
// translation units and selected once at runtime. All matrices are
// row-major and contiguous.

#include <cstddef>
#include <string_view>

namespace ecglink::kernels {

enum class Backend { scalar, avx2, neon };

std::string_view backend_name(Backend backend) noexcept;

struct KernelTable {
    Backend backend;

    // C[m x n] += A[m x k] * B[k x n]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c);
    // C[m x n] += A[m x k] * B[n x k]^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c);
    // C[m x n] += A[k x m]^T * B[k x n]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, const double* b, double* c);
    double (*dot)(std::size_t n, const double* x, const double* y);
    // y += alpha * x
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
};

// Scalar reference; always available.
const KernelTable& scalar_kernels() noexcept;

// Returns nullptr when the variant was not compiled in or the running CPU
// lacks the required instructions.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

// Best available table. Chosen on first use; the ECGLINK_KERNELS environment
// variable ("scalar", "avx2", "neon") overrides the automatic choice.
const KernelTable& active() noexcept;

// Forces a backend for the rest of the process. Returns false (and leaves the
// selection unchanged) if the backend is unavailable on this machine.
bool select(Backend backend) noexcept;

}  // namespace ecglink::kernels
