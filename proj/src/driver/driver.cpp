#include "dla/driver.hpp"

#include <atomic>
#include <cstdio>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "dla/fixtures.hpp"
#include "dla/model_io.hpp"

namespace dla {

namespace fs = std::filesystem;

ExitCode exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InsufficientSram:
        case ErrorCode::UnsupportedOpcode: return ExitCode::PlanningError;
        case ErrorCode::Device: return ExitCode::Failure;
        default: return ExitCode::InputError;
    }
}

Graph load_model_or_fixture(const std::string& spec) {
    if (spec == "mnist") return build_mnist_fixture();
    if (spec == "mobilenet") return build_mobilenet_v1_fixture();
    return load_model_path(spec);
}

void save_compiled(const fs::path& dir, const Graph& graph, const CompiledModel& model) {
    save_model_dir(graph, dir);
    nlohmann::json report = partition_report(model.partition, graph);
    report["dw_mode"] = to_string(model.dw_mode);
    write_file(dir / "partition.json", report.dump(2) + "\n");
    for (const auto& artifact : model.artifacts) {
        write_file(dir / artifact_file_name(artifact.id), artifact_to_json(artifact).dump(2) + "\n");
    }
}

bool is_compiled_dir(const fs::path& path) { return fs::is_directory(path) && fs::exists(path / "partition.json"); }

LoadedModel load_compiled(const fs::path& dir) {
    LoadedModel loaded{load_model_path(dir), {}};
    nlohmann::json report;
    try {
        report = nlohmann::json::parse(read_file_text(dir / "partition.json"));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Schema, (dir / "partition.json").string() + ": " + e.what());
    }
    loaded.model.partition = partition_from_json(report, loaded.graph);
    loaded.model.dw_mode = parse_dw_mode(report.value("dw_mode", std::string("native")));
    for (const auto& sg : loaded.model.partition.subgraphs) {
        const fs::path file = dir / artifact_file_name(sg.id);
        try {
            loaded.model.artifacts.push_back(artifact_from_json(nlohmann::json::parse(read_file_text(file))));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::Schema, file.string() + ": " + e.what());
        }
    }
    for (const auto& diag : verify_partition(loaded.model.partition, loaded.graph)) {
        throw Error(ErrorCode::Validation, "partition.json: " + diag.message);
    }
    return loaded;
}

Metrics simulate_costs(const Graph& graph, const CompiledModel& model, const IsaVariant& variant) {
    RunOptions options;
    options.functional = false;
    return run_end_to_end(graph, model.partition, model.artifacts, variant, {}, options).metrics;
}

std::vector<SweepCell> run_sweep(const Graph& graph, const SweepSpec& spec) {
    if (spec.pes.empty() || spec.sram_bytes.empty() || spec.modes.empty() || spec.dw_modes.empty() ||
        spec.barriers.empty()) {
        throw Error(ErrorCode::Validation, "sweep grid is empty");
    }
    struct Config {
        size_t model;
        IsaVariant variant;
        bool barriers;
    };
    std::vector<CompiledModel> models;
    std::vector<Config> configs;
    for (DwMode dw : spec.dw_modes) {
        for (bool barriers : spec.barriers) {
            models.push_back(compile_model(graph, dw, barriers));
            for (int32_t pes : spec.pes) {
                for (int64_t sram : spec.sram_bytes) {
                    for (ParallelMode mode : spec.modes) {
                        IsaVariant v;
                        v.pe_count = pes;
                        v.sram_bytes = sram;
                        v.parallel_mode = mode;
                        v.dw_mode = dw;
                        v.validate();
                        configs.push_back({models.size() - 1, v, barriers});
                    }
                }
            }
        }
    }

    std::vector<SweepCell> cells(configs.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next++; i < configs.size(); i = next++) {
            const Config& config = configs[i];
            SweepCell& cell = cells[i];
            cell.variant = config.variant;
            cell.barriers = config.barriers;
            cell.metrics.pe_count = config.variant.pe_count;
            try {
                cell.metrics = simulate_costs(graph, models[config.model], config.variant);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::InsufficientSram && e.code() != ErrorCode::UnsupportedOpcode) throw;
                cell.status = std::string(e.code() == ErrorCode::InsufficientSram ? "insufficient_sram"
                                                                                  : "unsupported_opcode") +
                              ":" + e.node();
            }
        }
    };
    unsigned jobs = spec.jobs != 0 ? spec.jobs : std::max(1u, std::thread::hardware_concurrency());
    jobs = static_cast<unsigned>(std::min<size_t>(jobs, configs.size()));
    std::vector<std::thread> threads;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned t = 0; t < jobs; ++t) {
        threads.emplace_back([&] {
            try {
                worker();
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = configs.size();
            }
        });
    }
    for (auto& thread : threads) thread.join();
    if (failure) std::rethrow_exception(failure);
    return cells;
}

namespace {

constexpr const char* kCsvHeader =
    "pes,sram_bytes,mode,dw_mode,barriers,kind,status,cycles,macs,utilization,dma_bytes,dma_cycles,register_writes";

std::string format_utilization(double value) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.6f", value);
    return buffer;
}

std::vector<std::string> split(const std::string& line, char separator) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, separator)) fields.push_back(field);
    if (!line.empty() && line.back() == separator) fields.emplace_back();
    return fields;
}

}  // namespace

std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out << kCsvHeader << '\n';
    for (const auto& cell : cells) {
        const IsaVariant& v = cell.variant;
        const std::string prefix = std::to_string(v.pe_count) + "," + std::to_string(v.sram_bytes) + "," +
                                   to_string(v.parallel_mode) + "," + to_string(v.dw_mode) + "," +
                                   (cell.barriers ? "on" : "off") + ",";
        if (cell.status != "ok") {
            out << prefix << "-," << cell.status << ",0,0,0.000000,0,0,0\n";
            continue;
        }
        for (size_t i = 0; i < kSubgraphKindCount; ++i) {
            const auto kind = static_cast<SubgraphKind>(i);
            const KindMetrics& k = cell.metrics[kind];
            out << prefix << to_string(kind) << ",ok," << k.cycles << ',' << k.macs << ','
                << format_utilization(cell.metrics.utilization(kind)) << ','
                << (k.dma_bytes_read + k.dma_bytes_written) << ',' << k.dma_cycles << ',' << k.register_writes
                << '\n';
        }
    }
    return out.str();
}

std::vector<SweepCell> parse_sweep_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) throw Error(ErrorCode::Schema, "not a sweep CSV (bad header)");
    std::vector<SweepCell> cells;
    size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 13) throw Error(ErrorCode::Schema, "sweep CSV row " + std::to_string(row) + " has bad arity");
        try {
            IsaVariant v;
            v.pe_count = std::stoi(f[0]);
            v.sram_bytes = std::stoll(f[1]);
            v.parallel_mode = parse_parallel_mode(f[2]);
            v.dw_mode = parse_dw_mode(f[3]);
            const bool barriers = f[4] == "on";
            const bool same = !cells.empty() && cells.back().variant == v && cells.back().barriers == barriers &&
                              cells.back().status == "ok" && f[6] == "ok";
            if (!same) {
                cells.push_back(SweepCell{v, barriers, f[6], {}});
                cells.back().metrics.pe_count = v.pe_count;
            }
            if (f[6] != "ok") continue;
            KindMetrics& k = cells.back().metrics[parse_subgraph_kind(f[5])];
            k.cycles = std::stoull(f[7]);
            k.macs = std::stoull(f[8]);
            k.dma_bytes_read = std::stoull(f[10]);
            k.dma_cycles = std::stoull(f[11]);
            k.register_writes = std::stoull(f[12]);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::Schema, "sweep CSV row " + std::to_string(row) + " has a bad number");
        }
    }
    return cells;
}

std::string render_report(const std::vector<SweepCell>& cells) {
    std::ostringstream out;
    out << std::left << std::setw(9) << "dw_mode" << std::setw(9) << "barriers" << std::setw(20) << "variant"
        << std::right;
    for (size_t i = 0; i < kSubgraphKindCount; ++i) out << std::setw(14) << to_string(static_cast<SubgraphKind>(i));
    out << std::setw(14) << "total" << std::setw(8) << "util" << '\n';
    for (const auto& cell : cells) {
        out << std::left << std::setw(9) << to_string(cell.variant.dw_mode) << std::setw(9)
            << (cell.barriers ? "on" : "off") << std::setw(20) << cell.variant.label() << std::right;
        if (cell.status != "ok") {
            out << "  " << cell.status << '\n';
            continue;
        }
        for (size_t i = 0; i < kSubgraphKindCount; ++i) {
            out << std::setw(14) << cell.metrics[static_cast<SubgraphKind>(i)].cycles;
        }
        out << std::setw(14) << cell.metrics.total().cycles << std::setw(8) << std::fixed << std::setprecision(3)
            << cell.metrics.total_utilization() << '\n';
    }
    return out.str();
}

}  // namespace dla
