#include "dal/kernels.hpp"

#include <atomic>

namespace dal::kern {

#if defined(DAL_HAVE_AVX2_TU)
const Table<float>& avx2_table_f32();
const Table<double>& avx2_table_f64();
#endif

namespace {
std::atomic<bool> g_force_scalar{false};
}

bool cpu_has_avx2() {
#if defined(DAL_HAVE_AVX2_TU) && (defined(__x86_64__) || defined(__i386__))
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok;
#else
    return false;
#endif
}

void set_force_scalar(bool force) { g_force_scalar.store(force); }

const char* active_isa() {
    return (cpu_has_avx2() && !g_force_scalar.load()) ? "avx2" : "scalar";
}

template <>
const Table<float>& active<float>() {
#if defined(DAL_HAVE_AVX2_TU)
    if (cpu_has_avx2() && !g_force_scalar.load()) return avx2_table_f32();
#endif
    return scalar<float>();
}

template <>
const Table<double>& active<double>() {
#if defined(DAL_HAVE_AVX2_TU)
    if (cpu_has_avx2() && !g_force_scalar.load()) return avx2_table_f64();
#endif
    return scalar<double>();
}

} // namespace dal::kern
