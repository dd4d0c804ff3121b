#include "umc/kernels.hpp"

#include <cstdlib>
#include <mutex>
#include <string>

#include "umc/errors.hpp"

namespace umc::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

const KernelTable* pick() {
    const char* env = std::getenv("UMC_KERNEL");
    std::string mode = env ? env : "auto";
    if (mode == "scalar") {
        return &scalar_table();
    }
    if (mode == "avx2") {
        const KernelTable* t = avx2_table();
        if (!t || !cpu_has_avx2()) {
            throw ConfigError("UMC_KERNEL=avx2 requested but AVX2 is unavailable");
        }
        return t;
    }
    if (mode != "auto") {
        throw ConfigError("unknown UMC_KERNEL value '" + mode + "' (want scalar|avx2|auto)");
    }
    const KernelTable* t = avx2_table();
    return (t && cpu_has_avx2()) ? t : &scalar_table();
}

}  // namespace

const KernelTable& active_table() {
    static const KernelTable* chosen = pick();
    return *chosen;
}

}  // namespace umc::kernels
