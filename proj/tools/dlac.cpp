// dlac: compile, run and sweep quantized networks on the accelerator model.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "dla/driver.hpp"
#include "dla/model_io.hpp"

namespace {

using namespace dla;

struct VariantFlags {
    int32_t pes = 128;
    std::string sram = "256MiB";
    std::string mode = "output";
    std::string dw_mode;
    std::string barriers = "on";
};

void add_variant_flags(CLI::App& cmd, VariantFlags& flags) {
    cmd.add_option("--pes", flags.pes, "processing elements (P)")->capture_default_str();
    cmd.add_option("--sram", flags.sram, "SRAM size: bytes or KiB/MiB/GiB suffix")->capture_default_str();
    cmd.add_option("--mode", flags.mode, "parallel mode")->check(CLI::IsMember({"input", "output"}))->capture_default_str();
    cmd.add_option("--dw-mode", flags.dw_mode, "depthwise mapping (default native)")
        ->check(CLI::IsMember({"fallback", "emulated", "native"}));
    cmd.add_option("--barriers", flags.barriers, "split subgraphs at barrier requantize nodes")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
}

bool parse_on_off(const std::string& text) { return text == "on"; }

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    size_t start = 0;
    while (start <= text.size()) {
        const size_t comma = text.find(',', start);
        const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!item.empty()) items.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return items;
}

void print_metrics(std::ostream& out, const Metrics& m) {
    out << "kind        cycles          macs   util     dma_bytes  dma_cycles  reg_writes\n";
    auto line = [&](const std::string& name, const KindMetrics& k, double util) {
        char buffer[160];
        std::snprintf(buffer, sizeof buffer, "%-8s %12llu %13llu %6.3f %13llu %11llu %11llu\n", name.c_str(),
                      static_cast<unsigned long long>(k.cycles), static_cast<unsigned long long>(k.macs), util,
                      static_cast<unsigned long long>(k.dma_bytes_read + k.dma_bytes_written),
                      static_cast<unsigned long long>(k.dma_cycles),
                      static_cast<unsigned long long>(k.register_writes));
        out << buffer;
    };
    for (size_t i = 0; i < kSubgraphKindCount; ++i) {
        const auto kind = static_cast<SubgraphKind>(i);
        line(to_string(kind), m[kind], m.utilization(kind));
    }
    line("total", m.total(), m.total_utilization());
    out << "cpu fallback nodes: " << m.cpu_fallback_node_count << '\n';
}

int cmd_compile(const std::string& model_spec, const std::string& out_dir, const VariantFlags& flags) {
    const Graph graph = load_model_or_fixture(model_spec);
    const DwMode dw = parse_dw_mode(flags.dw_mode.empty() ? "native" : flags.dw_mode);
    const CompiledModel model = compile_model(graph, dw, parse_on_off(flags.barriers));
    for (const auto& diag : verify_partition(model.partition, graph)) {
        throw Error(ErrorCode::Validation, "partition check failed: " + diag.message);
    }
    save_compiled(out_dir, graph, model);
    const auto& pg = model.partition;
    std::cout << "subgraphs: " << pg.subgraphs.size() << " (CONV " << pg.count(SubgraphKind::Conv) << ", DEPTH "
              << pg.count(SubgraphKind::Depth) << ", REQUANT " << pg.count(SubgraphKind::Requant) << ", OTHER "
              << pg.count(SubgraphKind::Other) << ")\n"
              << "compute subgraphs: " << pg.compute_subgraph_count() << '\n'
              << "cpu nodes: " << pg.cpu_nodes.size() << '\n'
              << "written: " << out_dir << '\n';
    return 0;
}

struct RunFlags {
    bool verify = false;
    bool no_dedup = false;
    std::string dump_metrics;
    std::string dump_tensors;
    std::string input;
    std::string emit_streams;
    uint64_t seed = 1;
};

int cmd_run(const std::string& target, const VariantFlags& flags, const RunFlags& run) {
    Graph graph;
    CompiledModel model;
    if (is_compiled_dir(target)) {
        LoadedModel loaded = load_compiled(target);
        graph = std::move(loaded.graph);
        model = std::move(loaded.model);
        if (!flags.dw_mode.empty() && parse_dw_mode(flags.dw_mode) != model.dw_mode) {
            model = compile_model(graph, parse_dw_mode(flags.dw_mode), model.partition.barrier_mode);
        }
    } else {
        graph = load_model_or_fixture(target);
        model = compile_model(graph, parse_dw_mode(flags.dw_mode.empty() ? "native" : flags.dw_mode),
                              parse_on_off(flags.barriers));
    }

    IsaVariant variant;
    variant.pe_count = flags.pes;
    variant.sram_bytes = parse_byte_size(flags.sram);
    variant.parallel_mode = parse_parallel_mode(flags.mode);
    variant.dw_mode = model.dw_mode;
    variant.validate();

    std::vector<TensorValue> inputs;
    if (!run.input.empty()) {
        std::ifstream in(run.input);
        if (!in) throw Error(ErrorCode::Io, "cannot open '" + run.input + "'");
        inputs = read_tensor_dump(in);
    } else {
        inputs = random_inputs(graph, run.seed);
    }

    RunOptions options;
    options.codegen.dedup_registers = !run.no_dedup;
    const auto streams = generate_streams(model.artifacts, variant, options.codegen);
    if (!run.emit_streams.empty()) {
        std::filesystem::create_directories(run.emit_streams);
        for (const auto& stream : streams) {
            write_file(std::filesystem::path(run.emit_streams) / stream_file_name(stream.subgraph_id),
                       stream_to_json(stream).dump(1) + "\n");
        }
    }
    RunResult result = run_end_to_end(graph, model.partition, streams, inputs, options);
    result.metrics.pe_count = variant.pe_count;

    std::cout << "variant: " << variant.label() << " dw_mode=" << to_string(variant.dw_mode)
              << " barriers=" << (model.partition.barrier_mode ? "on" : "off") << '\n';
    print_metrics(std::cout, result.metrics);

    if (!run.dump_metrics.empty()) {
        nlohmann::json j = metrics_to_json(result.metrics);
        j["variant"] = variant_to_json(variant);
        write_file(run.dump_metrics, j.dump(2) + "\n");
    }
    if (!run.dump_tensors.empty()) {
        std::ofstream out(run.dump_tensors);
        if (!out) throw Error(ErrorCode::Io, "cannot write '" + run.dump_tensors + "'");
        for (const auto& value : result.outputs) write_tensor_dump(out, value);
    }
    if (run.verify) {
        const auto expected = interpret(graph, inputs);
        if (expected != result.outputs) {
            std::cout << "verified: MISMATCH\n";
            return static_cast<int>(ExitCode::Failure);
        }
        std::cout << "verified: bit-exact\n";
    }
    return 0;
}

struct SweepFlags {
    std::string pes = "64,128";
    std::string sram = "512KiB,1MiB,256MiB";
    std::string modes = "input,output";
    std::string dw_modes = "native";
    std::string barriers = "on";
    std::string output;
    unsigned jobs = 0;
};

SweepSpec sweep_spec(const SweepFlags& flags) {
    SweepSpec spec;
    spec.pes.clear();
    for (const auto& p : split_list(flags.pes)) spec.pes.push_back(std::stoi(p));
    spec.sram_bytes.clear();
    for (const auto& m : split_list(flags.sram)) spec.sram_bytes.push_back(parse_byte_size(m));
    spec.modes.clear();
    for (const auto& m : split_list(flags.modes)) spec.modes.push_back(parse_parallel_mode(m));
    spec.dw_modes.clear();
    for (const auto& d : split_list(flags.dw_modes)) spec.dw_modes.push_back(parse_dw_mode(d));
    spec.barriers.clear();
    for (const auto& b : split_list(flags.barriers)) {
        if (b != "on" && b != "off") throw Error(ErrorCode::Schema, "--barriers takes on/off values");
        spec.barriers.push_back(b == "on");
    }
    spec.jobs = flags.jobs;
    return spec;
}

int cmd_sweep(const std::string& model_spec, const SweepFlags& flags) {
    const Graph graph = load_model_or_fixture(model_spec);
    const std::string csv = sweep_csv(run_sweep(graph, sweep_spec(flags)));
    if (flags.output.empty()) {
        std::cout << csv;
    } else {
        write_file(flags.output, csv);
    }
    return 0;
}

int cmd_report(const std::string& source, const SweepFlags& flags) {
    std::vector<SweepCell> cells;
    if (source.size() > 4 && source.substr(source.size() - 4) == ".csv") {
        cells = parse_sweep_csv(read_file_text(source));
    } else {
        cells = run_sweep(load_model_or_fixture(source), sweep_spec(flags));
    }
    std::cout << render_report(cells);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dlac: compiler and simulator for a parameterized int8 DL accelerator"};
    app.require_subcommand(1);

    std::string model_spec;
    std::string out_dir = "compiled";
    VariantFlags variant_flags;
    RunFlags run_flags;
    SweepFlags sweep_flags;

    auto* compile = app.add_subcommand("compile", "partition a model and write subgraph artifacts");
    compile->add_option("model", model_spec, "model dir, model.json, or fixture name (mnist, mobilenet)")->required();
    compile->add_option("-o,--out", out_dir, "output directory")->capture_default_str();
    compile->add_option("--dw-mode", variant_flags.dw_mode, "depthwise mapping (default native)")
        ->check(CLI::IsMember({"fallback", "emulated", "native"}));
    compile->add_option("--barriers", variant_flags.barriers, "split at barrier requantize nodes")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();

    auto* run = app.add_subcommand("run", "generate command streams and simulate one variant");
    run->add_option("target", model_spec, "compiled dir, model, or fixture name")->required();
    add_variant_flags(*run, variant_flags);
    run->add_flag("--verify", run_flags.verify, "compare outputs with the reference interpreter");
    run->add_flag("--no-dedup", run_flags.no_dedup, "write every register an opcode reads");
    run->add_option("--dump-metrics", run_flags.dump_metrics, "write metrics JSON");
    run->add_option("--dump-tensors", run_flags.dump_tensors, "write output tensors in dump format");
    run->add_option("--input", run_flags.input, "input tensors in dump format (default: random)");
    run->add_option("--seed", run_flags.seed, "seed for random inputs")->capture_default_str();
    run->add_option("--emit-streams", run_flags.emit_streams, "write stream_<id>.json files to this directory");

    auto* sweep = app.add_subcommand("sweep", "cost-only simulation over a variant grid, CSV output");
    auto* report = app.add_subcommand("report", "per-kind cycle table from a sweep CSV or a fresh sweep");
    sweep->add_option("model", model_spec, "model dir, model.json, or fixture name")->required();
    report->add_option("source", model_spec, "sweep CSV file, model, or fixture name")->required();
    for (auto* cmd : {sweep, report}) {
        cmd->add_option("--pes", sweep_flags.pes, "comma-separated P values")->capture_default_str();
        cmd->add_option("--sram", sweep_flags.sram, "comma-separated SRAM sizes")->capture_default_str();
        cmd->add_option("--mode", sweep_flags.modes, "comma-separated parallel modes")->capture_default_str();
        cmd->add_option("--dw-mode", sweep_flags.dw_modes, "comma-separated depthwise mappings")->capture_default_str();
        cmd->add_option("--barriers", sweep_flags.barriers, "comma-separated on/off")->capture_default_str();
        cmd->add_option("--jobs", sweep_flags.jobs, "worker threads (0 = all cores)")->capture_default_str();
    }
    sweep->add_option("-o,--out", sweep_flags.output, "CSV path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::InputError);
    }

    try {
        if (*compile) return cmd_compile(model_spec, out_dir, variant_flags);
        if (*run) return cmd_run(model_spec, variant_flags, run_flags);
        if (*sweep) return cmd_sweep(model_spec, sweep_flags);
        if (*report) return cmd_report(model_spec, sweep_flags);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(exit_code_for(e.code()));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::Failure);
    }
    return 0;
}
