#include "dla/sim.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>

namespace dla {

Sram::Sram(int64_t bytes) : size_(bytes), bytes_(static_cast<uint8_t*>(std::calloc(static_cast<size_t>(bytes), 1))) {
    if (!bytes_) throw Error(ErrorCode::Device, "cannot allocate " + std::to_string(bytes) + " bytes of SRAM");
}

void Sram::FreeDeleter::operator()(uint8_t* p) const { std::free(p); }

void Sram::tag(uint64_t begin, uint64_t end, int32_t elem_bytes) {
    if (begin >= end) return;
    auto it = tags_.lower_bound(begin);
    if (it != tags_.begin()) {
        auto prev = std::prev(it);
        if (prev->second.end > begin) {
            const Span old = prev->second;
            prev->second.end = begin;
            if (old.end > end) tags_.emplace(end, old);
        }
    }
    it = tags_.lower_bound(begin);
    while (it != tags_.end() && it->first < end) {
        if (it->second.end > end) {
            const Span old = it->second;
            tags_.erase(it);
            tags_.emplace(end, old);
            break;
        }
        it = tags_.erase(it);
    }
    auto [inserted, ok] = tags_.emplace(begin, Span{end, elem_bytes});
    auto next = std::next(inserted);
    if (next != tags_.end() && next->first == end && next->second.elem_bytes == elem_bytes) {
        inserted->second.end = next->second.end;
        tags_.erase(next);
    }
    if (inserted != tags_.begin()) {
        auto prev = std::prev(inserted);
        if (prev->second.end == begin && prev->second.elem_bytes == elem_bytes) {
            prev->second.end = inserted->second.end;
            tags_.erase(inserted);
        }
    }
}

bool Sram::holds(uint64_t begin, uint64_t end, int32_t elem_bytes) const {
    if (begin >= end) return true;
    auto it = tags_.upper_bound(begin);
    if (it == tags_.begin()) return false;
    --it;
    uint64_t pos = begin;
    while (true) {
        if (it == tags_.end() || it->first > pos || it->second.end <= pos) return false;
        if (it->second.elem_bytes != elem_bytes) return false;
        pos = it->second.end;
        if (pos >= end) return true;
        ++it;
    }
}

KindMetrics& KindMetrics::operator+=(const KindMetrics& other) {
    cycles += other.cycles;
    macs += other.macs;
    dma_bytes_read += other.dma_bytes_read;
    dma_bytes_written += other.dma_bytes_written;
    dma_cycles += other.dma_cycles;
    register_writes += other.register_writes;
    units += other.units;
    return *this;
}

KindMetrics Metrics::total() const {
    KindMetrics sum;
    for (const auto& k : kinds) sum += k;
    return sum;
}

namespace {

double ratio(uint64_t macs, uint64_t cycles, int32_t pes) {
    if (cycles == 0) return 0.0;
    return static_cast<double>(macs) / (static_cast<double>(pes) * static_cast<double>(cycles));
}

nlohmann::json kind_json(const KindMetrics& k, double utilization) {
    return nlohmann::json{{"cycles", k.cycles},
                          {"macs", k.macs},
                          {"utilization", utilization},
                          {"dma_bytes_read", k.dma_bytes_read},
                          {"dma_bytes_written", k.dma_bytes_written},
                          {"dma_cycles", k.dma_cycles},
                          {"register_writes", k.register_writes},
                          {"units", k.units}};
}

}  // namespace

double Metrics::utilization(SubgraphKind kind) const {
    const auto& k = (*this)[kind];
    return ratio(k.macs, k.cycles, pe_count);
}

double Metrics::total_utilization() const {
    const auto t = total();
    return ratio(t.macs, t.cycles, pe_count);
}

Metrics& Metrics::operator+=(const Metrics& other) {
    for (size_t i = 0; i < kinds.size(); ++i) kinds[i] += other.kinds[i];
    cpu_fallback_node_count += other.cpu_fallback_node_count;
    return *this;
}

nlohmann::json metrics_to_json(const Metrics& metrics) {
    nlohmann::json kinds = nlohmann::json::object();
    for (size_t i = 0; i < kSubgraphKindCount; ++i) {
        const auto kind = static_cast<SubgraphKind>(i);
        kinds[to_string(kind)] = kind_json(metrics[kind], metrics.utilization(kind));
    }
    return nlohmann::json{{"pe_count", metrics.pe_count},
                          {"cpu_fallback_node_count", metrics.cpu_fallback_node_count},
                          {"kinds", kinds},
                          {"total", kind_json(metrics.total(), metrics.total_utilization())}};
}

namespace {

class Executor {
public:
    Executor(const CommandStream& stream, DeviceState& state, const ExecOptions& options)
        : stream_(stream),
          state_(state),
          functional_(options.functional),
          k_(options.kernels != nullptr ? *options.kernels : kernels::active_table()) {}

    Metrics run() {
        Metrics metrics;
        metrics.pe_count = state_.variant.pe_count;
        state_.regs = RegisterFile{};
        state_.sram.clear_tags();
        for (index_ = 0; index_ < stream_.units.size(); ++index_) {
            const CommandUnit& unit = stream_.units[index_];
            for (const auto& w : unit.regs) state_.regs.write(w.reg, w.value);
            check_registers(unit);
            const auto ranges = sram_ranges(unit.op, state_.regs);
            check_ranges(ranges);

            KindMetrics& bucket = metrics[unit.kind];
            const UnitCost cost = cycle_cost(unit.op, shape_params(unit.op, state_.regs), state_.variant);
            bucket.cycles += cost.cycles;
            bucket.macs += cost.macs;
            bucket.dma_cycles += cost.dma_cycles;
            bucket.register_writes += unit.regs.size();
            bucket.units += 1;
            if (is_dma(unit.op)) {
                const uint64_t bytes = uint64_t{reg(Reg::DmaRows)} * reg(Reg::DmaRowBytes);
                (unit.op == Opcode::DmaRead ? bucket.dma_bytes_read : bucket.dma_bytes_written) += bytes;
                transfer(unit.op);
            } else if (functional_) {
                compute(unit.op);
            }
            for (const auto& range : ranges) {
                if (range.use == RangeUse::Write) state_.sram.tag(range.begin, range.end, range.elem_bytes);
            }
        }
        return metrics;
    }

private:
    [[noreturn]] void fail(const std::string& message) const {
        const CommandUnit& unit = stream_.units[index_];
        throw Error(ErrorCode::Device,
                    "stream " + std::to_string(stream_.subgraph_id) + " unit " + std::to_string(index_) + " (" +
                        mnemonic(unit.op) + "): " + message,
                    unit.node);
    }

    uint32_t reg(Reg r) const { return state_.regs.get(r); }
    int32_t sreg(Reg r) const { return state_.regs.get_signed(r); }

    void check_registers(const CommandUnit& unit) const {
        for (Reg r : registers_read(unit.op, state_.regs)) {
            if (!state_.regs.written(r)) fail(std::string("reads ") + register_name(r) + " before any write");
        }
    }

    void check_ranges(const std::vector<SramRange>& ranges) const {
        const auto limit = static_cast<uint64_t>(state_.variant.sram_bytes);
        for (const auto& range : ranges) {
            if (range.end > limit || range.begin > range.end) {
                fail("SRAM range [" + std::to_string(range.begin) + ", " + std::to_string(range.end) +
                     ") outside [0, " + std::to_string(limit) + ")");
            }
            if (range.use == RangeUse::Read && !state_.sram.holds(range.begin, range.end, range.elem_bytes)) {
                fail("SRAM range [" + std::to_string(range.begin) + ", " + std::to_string(range.end) +
                     ") does not hold " + (range.elem_bytes == 1 ? "i8" : "i32") + " data");
            }
        }
    }

    uint8_t* sram(uint64_t addr) { return state_.sram.data() + addr; }
    int8_t* s8(uint64_t addr) { return reinterpret_cast<int8_t*>(sram(addr)); }

    std::vector<int32_t> load_i32(uint64_t addr, size_t count) {
        std::vector<int32_t> values(count);
        std::memcpy(values.data(), sram(addr), count * 4);
        return values;
    }
    void store_i32(uint64_t addr, const int32_t* values, size_t count) { std::memcpy(sram(addr), values, count * 4); }

    void transfer(Opcode op) {
        const uint32_t handle = reg(Reg::DmaTensor);
        const uint64_t offset = reg(Reg::DmaSysOffset);
        const uint64_t row_bytes = reg(Reg::DmaRowBytes);
        const uint64_t stride = reg(Reg::DmaRowStride);
        const uint64_t rows = reg(Reg::DmaRows);
        const uint64_t addr = reg(Reg::DmaSramAddr);
        if (rows == 0 || row_bytes == 0) return;
        const uint64_t extent = offset + (rows - 1) * stride + row_bytes;

        if (handle == kWeightsHandle) {
            if (op == Opcode::DmaWrite) fail("weight blob is read-only");
            if (extent > state_.memory.weights.size()) fail("transfer past the end of the weight blob");
            if (functional_) copy_rows(sram(addr), state_.memory.weights.data() + offset, row_bytes, row_bytes, stride, rows);
            return;
        }
        if (handle > stream_.tensors.size()) fail("unknown tensor handle " + std::to_string(handle));
        const StreamTensor& tensor = stream_.tensors[handle - 1];
        if (extent > static_cast<uint64_t>(tensor.bytes)) fail("transfer past the end of tensor '" + tensor.name + "'");
        if (!functional_) return;
        auto& store = state_.memory.tensors;
        if (op == Opcode::DmaRead) {
            const auto found = store.find(tensor.name);
            if (found == store.end()) fail("tensor '" + tensor.name + "' is not in system memory");
            if (found->second.size() != static_cast<size_t>(tensor.bytes)) fail("tensor '" + tensor.name + "' size mismatch");
            copy_rows(sram(addr), found->second.data() + offset, row_bytes, row_bytes, stride, rows);
        } else {
            auto& bytes = store[tensor.name];
            bytes.resize(static_cast<size_t>(tensor.bytes));
            copy_rows(bytes.data() + offset, sram(addr), row_bytes, stride, row_bytes, rows);
        }
    }

    static void copy_rows(uint8_t* dst, const uint8_t* src, uint64_t row_bytes, uint64_t dst_stride, uint64_t src_stride,
                          uint64_t rows) {
        if (dst_stride == row_bytes && src_stride == row_bytes) {
            std::memcpy(dst, src, row_bytes * rows);
            return;
        }
        for (uint64_t r = 0; r < rows; ++r) std::memcpy(dst + r * dst_stride, src + r * src_stride, row_bytes);
    }

    void compute(Opcode op) {
        switch (op) {
            case Opcode::Conv:
            case Opcode::ConvRelu: conv(op); break;
            case Opcode::DepthConv: depth_conv(); break;
            case Opcode::MatMul: mat_mul(); break;
            case Opcode::Pool: pool(); break;
            case Opcode::ActRelu: k_.relu_s8(s8(reg(Reg::Src0Addr)), s8(reg(Reg::DstAddr)), reg(Reg::Count)); break;
            case Opcode::ActLRelu: leaky_relu(); break;
            case Opcode::EAbs: k_.abs_sat_s8(s8(reg(Reg::Src0Addr)), s8(reg(Reg::DstAddr)), reg(Reg::Count)); break;
            case Opcode::CMin: binary(k_.min_s8); break;
            case Opcode::CMax: binary(k_.max_s8); break;
            case Opcode::EAdd: binary(k_.add_sat_s8); break;
            case Opcode::E32Add: add32(); break;
            case Opcode::Requant: requant(); break;
            case Opcode::DmaRead:
            case Opcode::DmaWrite: break;
        }
    }

    struct Window {
        int64_t in_h, in_w, in_stride, out_h, out_w, out_stride, kh, kw, stride, pad_top, pad_left, channels;
    };

    Window window() const {
        return {reg(Reg::InH),      reg(Reg::InW),     reg(Reg::InPixelStride), reg(Reg::OutH),
                reg(Reg::OutW),     reg(Reg::OutPixelStride), reg(Reg::KernelH), reg(Reg::KernelW),
                reg(Reg::Stride),   reg(Reg::PadTop),  reg(Reg::PadLeft),       reg(Reg::OutC)};
    }

    /// Writes one output pixel of `count` accumulators, requantized or raw.
    void finish_pixel(const int32_t* acc, size_t count, uint64_t out_addr, bool requantize, int32_t lo) {
        if (requantize) {
            k_.requantize_s32(acc, s8(out_addr), count, sreg(Reg::ReqMult), sreg(Reg::ReqShift), lo, 127);
        } else {
            store_i32(out_addr, acc, count);
        }
    }

    void conv(Opcode op) {
        const Window w = window();
        const int64_t in_c = reg(Reg::InC);
        const int64_t taps = w.kh * w.kw;
        const bool requantize = op == Opcode::ConvRelu || reg(Reg::ReqEnable) != 0;
        const int32_t lo = op == Opcode::ConvRelu ? 0 : -128;
        const int64_t out_eb = requantize ? 1 : 4;
        const int8_t* in = s8(reg(Reg::InAddr));
        const int8_t* weights = s8(reg(Reg::WeightAddr));
        const std::vector<int32_t> bias = load_i32(reg(Reg::BiasAddr), static_cast<size_t>(w.channels));
        std::vector<int32_t> acc(static_cast<size_t>(w.channels));

        for (int64_t oy = 0; oy < w.out_h; ++oy) {
            for (int64_t ox = 0; ox < w.out_w; ++ox) {
                std::copy(bias.begin(), bias.end(), acc.begin());
                for (int64_t ky = 0; ky < w.kh; ++ky) {
                    const int64_t iy = oy * w.stride - w.pad_top + ky;
                    if (iy < 0 || iy >= w.in_h) continue;
                    for (int64_t kx = 0; kx < w.kw; ++kx) {
                        const int64_t ix = ox * w.stride - w.pad_left + kx;
                        if (ix < 0 || ix >= w.in_w) continue;
                        const int8_t* pixel = in + (iy * w.in_w + ix) * w.in_stride;
                        const int8_t* tap = weights + (ky * w.kw + kx) * in_c;
                        for (int64_t o = 0; o < w.channels; ++o) {
                            const int32_t dot = k_.dot_s8(pixel, tap + o * taps * in_c, static_cast<size_t>(in_c));
                            acc[size_t(o)] = static_cast<int32_t>(static_cast<uint32_t>(acc[size_t(o)]) +
                                                                  static_cast<uint32_t>(dot));
                        }
                    }
                }
                const uint64_t out = reg(Reg::OutAddr) + uint64_t((oy * w.out_w + ox) * w.out_stride * out_eb);
                finish_pixel(acc.data(), acc.size(), out, requantize, lo);
            }
        }
    }

    void depth_conv() {
        const Window w = window();
        const int64_t taps = w.kh * w.kw;
        const bool requantize = reg(Reg::ReqEnable) != 0;
        const int64_t out_eb = requantize ? 1 : 4;
        const int8_t* in = s8(reg(Reg::InAddr));
        const int8_t* weights = s8(reg(Reg::WeightAddr));
        const std::vector<int32_t> bias = load_i32(reg(Reg::BiasAddr), static_cast<size_t>(w.channels));
        std::vector<uint32_t> acc(static_cast<size_t>(w.channels));

        for (int64_t oy = 0; oy < w.out_h; ++oy) {
            for (int64_t ox = 0; ox < w.out_w; ++ox) {
                for (int64_t c = 0; c < w.channels; ++c) acc[size_t(c)] = static_cast<uint32_t>(bias[size_t(c)]);
                for (int64_t ky = 0; ky < w.kh; ++ky) {
                    const int64_t iy = oy * w.stride - w.pad_top + ky;
                    if (iy < 0 || iy >= w.in_h) continue;
                    for (int64_t kx = 0; kx < w.kw; ++kx) {
                        const int64_t ix = ox * w.stride - w.pad_left + kx;
                        if (ix < 0 || ix >= w.in_w) continue;
                        const int8_t* pixel = in + (iy * w.in_w + ix) * w.in_stride;
                        const int64_t t = ky * w.kw + kx;
                        for (int64_t c = 0; c < w.channels; ++c) {
                            acc[size_t(c)] += static_cast<uint32_t>(int32_t{pixel[c]} * int32_t{weights[c * taps + t]});
                        }
                    }
                }
                const uint64_t out = reg(Reg::OutAddr) + uint64_t((oy * w.out_w + ox) * w.out_stride * out_eb);
                finish_pixel(reinterpret_cast<const int32_t*>(acc.data()), acc.size(), out, requantize, -128);
            }
        }
    }

    void mat_mul() {
        const size_t depth = reg(Reg::InC);
        const size_t outputs = reg(Reg::OutC);
        const int8_t* in = s8(reg(Reg::InAddr));
        const int8_t* weights = s8(reg(Reg::WeightAddr));
        std::vector<int32_t> acc = load_i32(reg(Reg::BiasAddr), outputs);
        for (size_t o = 0; o < outputs; ++o) {
            acc[o] = static_cast<int32_t>(static_cast<uint32_t>(acc[o]) +
                                          static_cast<uint32_t>(k_.dot_s8(in, weights + o * depth, depth)));
        }
        store_i32(reg(Reg::OutAddr), acc.data(), outputs);
    }

    void pool() {
        const Window w = window();
        const bool average = reg(Reg::PoolMode) == static_cast<uint32_t>(PoolModeValue::Avg);
        const int8_t* in = s8(reg(Reg::InAddr));
        std::vector<int32_t> acc(static_cast<size_t>(w.channels));
        for (int64_t oy = 0; oy < w.out_h; ++oy) {
            for (int64_t ox = 0; ox < w.out_w; ++ox) {
                std::fill(acc.begin(), acc.end(), average ? 0 : -128);
                for (int64_t ky = 0; ky < w.kh; ++ky) {
                    for (int64_t kx = 0; kx < w.kw; ++kx) {
                        const int8_t* pixel = in + ((oy * w.stride + ky) * w.in_w + ox * w.stride + kx) * w.in_stride;
                        for (int64_t c = 0; c < w.channels; ++c) {
                            acc[size_t(c)] = average ? acc[size_t(c)] + pixel[c] : std::max<int32_t>(acc[size_t(c)], pixel[c]);
                        }
                    }
                }
                int8_t* out = s8(reg(Reg::OutAddr) + uint64_t((oy * w.out_w + ox) * w.out_stride));
                if (average) {
                    k_.requantize_s32(acc.data(), out, acc.size(), sreg(Reg::ReqMult), sreg(Reg::ReqShift), -128, 127);
                } else {
                    for (size_t c = 0; c < acc.size(); ++c) out[c] = static_cast<int8_t>(acc[c]);
                }
            }
        }
    }

    void leaky_relu() {
        const size_t n = reg(Reg::Count);
        const int8_t* src = s8(reg(Reg::Src0Addr));
        std::vector<int32_t> wide(src, src + n);
        std::vector<int8_t> scaled(n);
        k_.requantize_s32(wide.data(), scaled.data(), n, sreg(Reg::ReqMult), sreg(Reg::ReqShift), -128, 127);
        int8_t* dst = s8(reg(Reg::DstAddr));
        for (size_t i = 0; i < n; ++i) dst[i] = src[i] >= 0 ? src[i] : scaled[i];
    }

    void binary(kernels::BinaryS8Fn fn) {
        fn(s8(reg(Reg::Src0Addr)), s8(reg(Reg::Src1Addr)), s8(reg(Reg::DstAddr)), reg(Reg::Count));
    }

    void add32() {
        const size_t n = reg(Reg::Count);
        const auto a = load_i32(reg(Reg::Src0Addr), n);
        const auto b = load_i32(reg(Reg::Src1Addr), n);
        std::vector<int32_t> sum(n);
        k_.add_wrap_s32(a.data(), b.data(), sum.data(), n);
        store_i32(reg(Reg::DstAddr), sum.data(), n);
    }

    void requant() {
        const size_t n = reg(Reg::Count);
        const auto src = load_i32(reg(Reg::Src0Addr), n);
        k_.requantize_s32(src.data(), s8(reg(Reg::DstAddr)), n, sreg(Reg::ReqMult), sreg(Reg::ReqShift),
                          sreg(Reg::ClampLo), sreg(Reg::ClampHi));
    }

    const CommandStream& stream_;
    DeviceState& state_;
    bool functional_;
    const kernels::KernelTable& k_;
    size_t index_ = 0;
};

}  // namespace

Metrics execute_stream(const CommandStream& stream, DeviceState& state, const ExecOptions& options) {
    if (stream.variant.sram_bytes > state.sram.size()) {
        throw Error(ErrorCode::Device, "stream targets more SRAM than the device has");
    }
    state.variant = stream.variant;
    return Executor(stream, state, options).run();
}

}  // namespace dla
