#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "dla/kernels.hpp"
#include "oracles.hpp"

using namespace dla;
using namespace dla::kernels;

namespace {

std::vector<const KernelTable*> tables() {
    std::vector<const KernelTable*> out{&scalar_table()};
    if (avx2_table() != nullptr && cpu_supports(Isa::Avx2)) out.push_back(avx2_table());
    return out;
}

std::vector<int8_t> random_s8(std::mt19937_64& rng, size_t n, bool extremes) {
    std::vector<int8_t> v(n);
    for (auto& x : v) {
        x = static_cast<int8_t>(rng());
        if (extremes && rng() % 3 == 0) x = rng() % 2 ? int8_t{-128} : int8_t{127};
    }
    return v;
}

std::vector<int32_t> random_s32(std::mt19937_64& rng, size_t n) {
    std::vector<int32_t> v(n);
    for (auto& x : v) {
        switch (rng() % 4) {
            case 0: x = static_cast<int32_t>(rng()); break;
            case 1: x = rng() % 2 ? INT32_MIN : INT32_MAX; break;
            default: x = static_cast<int32_t>(rng() % 20001) - 10000;
        }
    }
    return v;
}

size_t random_length(std::mt19937_64& rng) {
    static constexpr size_t kLengths[] = {0, 1, 7, 15, 16, 17, 31, 32, 33, 63, 64, 100, 255, 1000};
    return rng() % 2 ? kLengths[rng() % std::size(kLengths)] : rng() % 600;
}

int32_t naive_dot(const std::vector<int8_t>& a, const std::vector<int8_t>& b) {
    int64_t sum = 0;
    for (size_t i = 0; i < a.size(); ++i) sum += int64_t{a[i]} * b[i];
    return static_cast<int32_t>(static_cast<uint32_t>(sum));
}

int8_t sat8(int64_t v) { return static_cast<int8_t>(std::clamp<int64_t>(v, -128, 127)); }

}  // namespace

TEST(Kernels, ActiveTableIsAvailable) {
    const KernelTable& t = active_table();
    EXPECT_TRUE(cpu_supports(t.isa));
    EXPECT_EQ(&table_for(Isa::Scalar), &scalar_table());
}

TEST(Kernels, DotMatchesNaive) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 2000; ++i) {
        const size_t n = random_length(rng);
        const auto a = random_s8(rng, n, i % 2);
        const auto b = random_s8(rng, n, i % 2);
        const int32_t want = naive_dot(a, b);
        for (const auto* t : tables()) ASSERT_EQ(t->dot_s8(a.data(), b.data(), n), want) << to_string(t->isa) << " n=" << n;
    }
}

TEST(Kernels, DotWrapsOnLongVectors) {
    const size_t n = 200000;
    const std::vector<int8_t> a(n, -128), b(n, -128);
    const int32_t want = naive_dot(a, b);
    for (const auto* t : tables()) EXPECT_EQ(t->dot_s8(a.data(), b.data(), n), want) << to_string(t->isa);
}

TEST(Kernels, RequantizeMatchesExactOracle) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 2000; ++i) {
        const size_t n = random_length(rng);
        const auto src = random_s32(rng, n);
        const int32_t mult = rng() % 4 == 0 ? static_cast<int32_t>(1 + rng() % INT32_MAX)
                                            : static_cast<int32_t>((1u << 30) + rng() % (1u << 30));
        const int32_t shift = static_cast<int32_t>(rng() % (kMaxShift + 1));
        const int32_t lo = rng() % 2 ? -128 : static_cast<int32_t>(rng() % 50) - 40;
        const int32_t hi = rng() % 2 ? 127 : std::max(lo, static_cast<int32_t>(rng() % 128));
        std::vector<int8_t> want(n);
        for (size_t j = 0; j < n; ++j) want[j] = static_cast<int8_t>(dla::testing::oracle_requant(src[j], mult, shift, lo, hi));
        for (const auto* t : tables()) {
            std::vector<int8_t> got(n, 0x55);
            t->requantize_s32(src.data(), got.data(), n, mult, shift, lo, hi);
            ASSERT_EQ(got, want) << to_string(t->isa) << " m=" << mult << " s=" << shift;
        }
    }
}

TEST(Kernels, BinaryAndUnaryMatchNaive) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 1000; ++i) {
        const size_t n = random_length(rng);
        const auto a = random_s8(rng, n, true);
        const auto b = random_s8(rng, n, true);
        const auto x = random_s32(rng, n);
        const auto y = random_s32(rng, n);
        std::vector<int8_t> add(n), mn(n), mx(n), abs(n), relu(n);
        std::vector<int32_t> add32(n);
        for (size_t j = 0; j < n; ++j) {
            add[j] = sat8(int64_t{a[j]} + b[j]);
            mn[j] = std::min(a[j], b[j]);
            mx[j] = std::max(a[j], b[j]);
            abs[j] = sat8(a[j] < 0 ? -int64_t{a[j]} : a[j]);
            relu[j] = std::max<int8_t>(a[j], 0);
            add32[j] = static_cast<int32_t>(static_cast<uint32_t>(x[j]) + static_cast<uint32_t>(y[j]));
        }
        for (const auto* t : tables()) {
            std::vector<int8_t> got(n);
            std::vector<int32_t> got32(n);
            t->add_sat_s8(a.data(), b.data(), got.data(), n);
            ASSERT_EQ(got, add) << to_string(t->isa);
            t->min_s8(a.data(), b.data(), got.data(), n);
            ASSERT_EQ(got, mn) << to_string(t->isa);
            t->max_s8(a.data(), b.data(), got.data(), n);
            ASSERT_EQ(got, mx) << to_string(t->isa);
            t->abs_sat_s8(a.data(), got.data(), n);
            ASSERT_EQ(got, abs) << to_string(t->isa);
            t->relu_s8(a.data(), got.data(), n);
            ASSERT_EQ(got, relu) << to_string(t->isa);
            t->add_wrap_s32(x.data(), y.data(), got32.data(), n);
            ASSERT_EQ(got32, add32) << to_string(t->isa);
        }
    }
}

TEST(Kernels, Avx2MatchesScalarBitForBit) {
    if (avx2_table() == nullptr || !cpu_supports(Isa::Avx2)) GTEST_SKIP() << "AVX2 kernels unavailable";
    const KernelTable& s = scalar_table();
    const KernelTable& v = *avx2_table();
    std::mt19937_64 rng(4);
    for (int i = 0; i < 2000; ++i) {
        const size_t n = random_length(rng);
        const auto src = random_s32(rng, n);
        const int32_t mult = static_cast<int32_t>(1 + rng() % INT32_MAX);
        const int32_t shift = static_cast<int32_t>(rng() % (kMaxShift + 1));
        std::vector<int8_t> a(n), b(n);
        s.requantize_s32(src.data(), a.data(), n, mult, shift, -128, 127);
        v.requantize_s32(src.data(), b.data(), n, mult, shift, -128, 127);
        ASSERT_EQ(a, b);
        const auto p = random_s8(rng, n, true);
        const auto q = random_s8(rng, n, true);
        ASSERT_EQ(s.dot_s8(p.data(), q.data(), n), v.dot_s8(p.data(), q.data(), n));
    }
}
