#include "ecglink/kernels/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace ecglink::kernels {
namespace {

const KernelTable* lookup(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar:
            return &scalar_kernels();
        case Backend::avx2:
            return avx2_kernels();
        case Backend::neon:
            return neon_kernels();
    }
    return nullptr;
}

const KernelTable* detect() noexcept {
    if (const char* env = std::getenv("ECGLINK_KERNELS")) {
        const std::string_view name{env};
        for (Backend b : {Backend::scalar, Backend::avx2, Backend::neon}) {
            if (name == backend_name(b)) {
                if (const KernelTable* t = lookup(b)) {
                    return t;
                }
            }
        }
    }
    if (const KernelTable* t = avx2_kernels()) {
        return t;
    }
    if (const KernelTable* t = neon_kernels()) {
        return t;
    }
    return &scalar_kernels();
}

std::atomic<const KernelTable*>& slot() noexcept {
    static std::atomic<const KernelTable*> current{detect()};
    return current;
}

}  // namespace

std::string_view backend_name(Backend backend) noexcept {
    switch (backend) {
        case Backend::scalar:
            return "scalar";
        case Backend::avx2:
            return "avx2";
        case Backend::neon:
            return "neon";
    }
    return "unknown";
}

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool select(Backend backend) noexcept {
    const KernelTable* t = lookup(backend);
    if (t == nullptr) {
        return false;
    }
    slot().store(t, std::memory_order_release);
    return true;
}

}  // namespace ecglink::kernels
