#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dla/runtime.hpp"

namespace dla {

/// Process exit codes of the command-line tool.
enum class ExitCode : int { Ok = 0, Failure = 1, InputError = 2, PlanningError = 3 };

ExitCode exit_code_for(ErrorCode code);

/// "mnist" and "mobilenet" name the built-in fixtures; anything else is a
/// model directory or a model.json path.
Graph load_model_or_fixture(const std::string& spec);

/// Compiled model directory: model.json, weights.bin, partition.json and one
/// subgraph_<id>.json per accelerator subgraph.
void save_compiled(const std::filesystem::path& dir, const Graph& graph, const CompiledModel& model);

struct LoadedModel {
    Graph graph;
    CompiledModel model;
};

LoadedModel load_compiled(const std::filesystem::path& dir);
bool is_compiled_dir(const std::filesystem::path& path);

struct SweepSpec {
    std::vector<int32_t> pes{64, 128};
    std::vector<int64_t> sram_bytes{512 * kKiB, 1 * kMiB, 256 * kMiB};
    std::vector<ParallelMode> modes{ParallelMode::InputParallel, ParallelMode::OutputParallel};
    std::vector<DwMode> dw_modes{DwMode::Native};
    std::vector<bool> barriers{true};
    unsigned jobs = 0;  ///< 0 picks the hardware concurrency
};

struct SweepCell {
    IsaVariant variant;
    bool barriers = true;
    std::string status = "ok";  ///< "ok" or "<error>:<node>"
    Metrics metrics;
};

/// Cost-only simulation of every grid cell. Cells run concurrently; the
/// result order follows the grid order (dw mode, barriers, P, M, mode).
std::vector<SweepCell> run_sweep(const Graph& graph, const SweepSpec& spec);

/// Cost-only metrics of one variant.
Metrics simulate_costs(const Graph& graph, const CompiledModel& model, const IsaVariant& variant);

std::string sweep_csv(const std::vector<SweepCell>& cells);
std::vector<SweepCell> parse_sweep_csv(const std::string& text);

/// Fixed-width table: one line per variant with per-kind cycles and totals.
std::string render_report(const std::vector<SweepCell>& cells);

}  // namespace dla
