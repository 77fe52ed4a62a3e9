#pragma once

#include "dla/kernels.hpp"

namespace dla::kernels {

#if defined(DLA_HAVE_AVX2_KERNELS)
/// Defined in the translation unit compiled with -mavx2.
const KernelTable& avx2_table_impl();
#endif

}  // namespace dla::kernels
