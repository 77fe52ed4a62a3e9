#include <cstdlib>
#include <string_view>

#include "dla/common.hpp"
#include "kernels_internal.hpp"

namespace dla::kernels {

const char* to_string(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

const KernelTable* avx2_table() {
#if defined(DLA_HAVE_AVX2_KERNELS)
    return &avx2_table_impl();
#else
    return nullptr;
#endif
}

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return true;
        case Isa::Avx2:
#if defined(DLA_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
            return __builtin_cpu_supports("avx2");
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& table_for(Isa isa) {
    if (isa == Isa::Scalar) return scalar_table();
    if (!cpu_supports(isa) || avx2_table() == nullptr) {
        throw Error(ErrorCode::Device, std::string("kernel ISA '") + to_string(isa) + "' is not available");
    }
    return *avx2_table();
}

const KernelTable& active_table() {
    static const KernelTable& selected = [] () -> const KernelTable& {
        const char* forced = std::getenv("DLA_KERNELS");
        if (forced != nullptr && std::string_view(forced) == "scalar") return scalar_table();
        if (cpu_supports(Isa::Avx2)) return *avx2_table();
        return scalar_table();
    }();
    return selected;
}

}  // namespace dla::kernels
