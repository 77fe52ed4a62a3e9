#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dla/codegen.hpp"
#include "dla/kernels.hpp"

namespace dla {

/// Accelerator SRAM. Storage is zero-filled lazily by the OS, so large
/// configurations cost only the pages actually touched. Each written byte
/// carries the element size (1 = i8, 4 = i32) of the data last stored there.
class Sram {
public:
    explicit Sram(int64_t bytes);

    int64_t size() const { return size_; }
    uint8_t* data() { return bytes_.get(); }
    const uint8_t* data() const { return bytes_.get(); }

    void tag(uint64_t begin, uint64_t end, int32_t elem_bytes);
    /// True when every byte of [begin, end) holds data of `elem_bytes` size.
    bool holds(uint64_t begin, uint64_t end, int32_t elem_bytes) const;
    void clear_tags() { tags_.clear(); }

private:
    struct FreeDeleter {
        void operator()(uint8_t* p) const;
    };
    struct Span {
        uint64_t end;
        int32_t elem_bytes;
    };

    int64_t size_;
    std::unique_ptr<uint8_t, FreeDeleter> bytes_;
    std::map<uint64_t, Span> tags_;  ///< disjoint intervals keyed by start
};

/// Host-side tensor store shared with the CPU runtime.
struct SystemMemory {
    std::span<const uint8_t> weights;
    std::unordered_map<std::string, std::vector<uint8_t>> tensors;
};

struct DeviceState {
    explicit DeviceState(const IsaVariant& v) : variant(v), sram(v.sram_bytes) {}

    IsaVariant variant;
    Sram sram;
    RegisterFile regs;
    SystemMemory memory;
};

struct KindMetrics {
    uint64_t cycles = 0;
    uint64_t macs = 0;
    uint64_t dma_bytes_read = 0;
    uint64_t dma_bytes_written = 0;
    uint64_t dma_cycles = 0;
    uint64_t register_writes = 0;
    uint64_t units = 0;

    KindMetrics& operator+=(const KindMetrics& other);
    bool operator==(const KindMetrics&) const = default;
};

struct Metrics {
    int32_t pe_count = 1;
    std::array<KindMetrics, kSubgraphKindCount> kinds{};
    uint64_t cpu_fallback_node_count = 0;

    KindMetrics& operator[](SubgraphKind kind) { return kinds[static_cast<size_t>(kind)]; }
    const KindMetrics& operator[](SubgraphKind kind) const { return kinds[static_cast<size_t>(kind)]; }
    KindMetrics total() const;
    /// macs / (P * cycles); 0 when no cycles were spent.
    double utilization(SubgraphKind kind) const;
    double total_utilization() const;

    Metrics& operator+=(const Metrics& other);
    bool operator==(const Metrics&) const = default;
};

nlohmann::json metrics_to_json(const Metrics& metrics);

struct ExecOptions {
    bool functional = true;                         ///< false: cost accounting and checks only
    const kernels::KernelTable* kernels = nullptr;  ///< nullptr selects the active table
};

/// Runs one stream. Registers and SRAM tags start fresh for every stream.
/// Throws Device on read-before-write, SRAM range or dtype violations and
/// bad DMA transfers.
Metrics execute_stream(const CommandStream& stream, DeviceState& state, const ExecOptions& options = {});

}  // namespace dla
