#include "dla/partition.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace dla {

const char* to_string(DwMode mode) {
    switch (mode) {
        case DwMode::Fallback: return "fallback";
        case DwMode::Emulated: return "emulated";
        case DwMode::Native: return "native";
    }
    return "?";
}

DwMode parse_dw_mode(std::string_view text) {
    if (text == "fallback") return DwMode::Fallback;
    if (text == "emulated") return DwMode::Emulated;
    if (text == "native") return DwMode::Native;
    throw Error(ErrorCode::Schema, "unknown dw mode '" + std::string(text) + "'");
}

const char* to_string(SubgraphKind kind) {
    switch (kind) {
        case SubgraphKind::Conv: return "CONV";
        case SubgraphKind::Depth: return "DEPTH";
        case SubgraphKind::Requant: return "REQUANT";
        case SubgraphKind::Other: return "OTHER";
    }
    return "?";
}

SubgraphKind parse_subgraph_kind(std::string_view text) {
    if (text == "CONV") return SubgraphKind::Conv;
    if (text == "DEPTH") return SubgraphKind::Depth;
    if (text == "REQUANT") return SubgraphKind::Requant;
    if (text == "OTHER") return SubgraphKind::Other;
    throw Error(ErrorCode::Schema, "unknown subgraph kind '" + std::string(text) + "'");
}

size_t PartitionedGraph::count(SubgraphKind kind) const {
    return static_cast<size_t>(
        std::count_if(subgraphs.begin(), subgraphs.end(), [&](const Subgraph& sg) { return sg.kind == kind; }));
}

size_t PartitionedGraph::compute_subgraph_count() const {
    return count(SubgraphKind::Conv) + count(SubgraphKind::Depth);
}

std::vector<bool> annotate(const Graph& graph, DwMode dw_mode) {
    std::vector<bool> supported;
    supported.reserve(graph.nodes().size());
    for (const auto& node : graph.nodes()) {
        const bool depthwise = std::holds_alternative<DepthwiseConv2D>(node.kind);
        supported.push_back(!depthwise || dw_mode != DwMode::Fallback);
    }
    return supported;
}

SubgraphKind classify(const Graph& graph, const std::vector<size_t>& nodes) {
    bool conv = false;
    bool depth = false;
    bool only_requant = !nodes.empty();
    for (size_t index : nodes) {
        const NodeKind& kind = graph.nodes()[index].kind;
        conv |= std::holds_alternative<Conv2D>(kind) || std::holds_alternative<Dense>(kind);
        depth |= std::holds_alternative<DepthwiseConv2D>(kind);
        only_requant &= std::holds_alternative<Requantize>(kind);
    }
    if (conv) return SubgraphKind::Conv;
    if (depth) return SubgraphKind::Depth;
    if (only_requant) return SubgraphKind::Requant;
    return SubgraphKind::Other;
}

void compute_boundary(const Graph& graph, Subgraph& subgraph) {
    std::set<size_t> members(subgraph.nodes.begin(), subgraph.nodes.end());
    std::set<TensorId> produced;
    for (size_t index : subgraph.nodes) produced.insert(graph.nodes()[index].output);

    subgraph.inputs.clear();
    subgraph.outputs.clear();
    for (size_t index : subgraph.nodes) {
        for (TensorId input : graph.nodes()[index].inputs) {
            if (!produced.count(input) &&
                std::find(subgraph.inputs.begin(), subgraph.inputs.end(), input) == subgraph.inputs.end()) {
                subgraph.inputs.push_back(input);
            }
        }
    }
    const auto consumers = graph.consumers();
    const auto& outputs = graph.outputs();
    for (size_t index : subgraph.nodes) {
        const TensorId out = graph.nodes()[index].output;
        bool escapes = std::find(outputs.begin(), outputs.end(), out) != outputs.end();
        for (size_t consumer : consumers[out]) escapes |= !members.count(consumer);
        if (escapes) subgraph.outputs.push_back(out);
    }
}

PartitionedGraph partition(const Graph& graph, const std::vector<bool>& supported, bool barrier_mode) {
    if (supported.size() != graph.nodes().size()) {
        throw Error(ErrorCode::Validation, "support flags do not match node count");
    }
    PartitionedGraph pg;
    pg.barrier_mode = barrier_mode;
    std::vector<size_t> region;

    auto close_region = [&] {
        if (region.empty()) return;
        Subgraph sg;
        sg.id = static_cast<int>(pg.subgraphs.size());
        sg.nodes = std::move(region);
        sg.kind = classify(graph, sg.nodes);
        compute_boundary(graph, sg);
        pg.schedule.push_back({ScheduleEntry::Type::Subgraph, pg.subgraphs.size()});
        pg.subgraphs.push_back(std::move(sg));
        region.clear();
    };

    for (size_t index : graph.topological_order()) {
        const Node& node = graph.nodes()[index];
        if (!supported[index]) {
            close_region();
            pg.cpu_nodes.push_back(index);
            pg.schedule.push_back({ScheduleEntry::Type::CpuNode, index});
            continue;
        }
        if (barrier_mode && is_barrier(node.kind)) {
            close_region();
            region.push_back(index);
            close_region();
            continue;
        }
        region.push_back(index);
    }
    close_region();
    return pg;
}

std::vector<PartitionDiagnostic> verify_partition(const PartitionedGraph& pg, const Graph& graph) {
    using Code = PartitionDiagnostic::Code;
    std::vector<PartitionDiagnostic> diags;
    const size_t node_count = graph.nodes().size();
    auto node_name = [&](size_t index) {
        return index < node_count ? graph.nodes()[index].id : "#" + std::to_string(index);
    };

    // owner: -1 = cpu, >= 0 = subgraph position
    std::vector<std::vector<int>> owners(node_count);
    auto claim = [&](size_t index, int owner) {
        if (index >= node_count) {
            diags.push_back({Code::Coverage, "unknown node index " + std::to_string(index)});
            return;
        }
        owners[index].push_back(owner);
    };
    for (size_t s = 0; s < pg.subgraphs.size(); ++s) {
        for (size_t index : pg.subgraphs[s].nodes) claim(index, static_cast<int>(s));
    }
    for (size_t index : pg.cpu_nodes) claim(index, -1);
    for (size_t i = 0; i < node_count; ++i) {
        if (owners[i].empty()) {
            diags.push_back({Code::Coverage, "node " + node_name(i) + " is not covered"});
        } else if (owners[i].size() > 1) {
            diags.push_back({Code::Disjointness, "node " + node_name(i) + " is assigned " +
                                                     std::to_string(owners[i].size()) + " times"});
        }
    }

    // Every subgraph and cpu node appears exactly once in the schedule.
    std::map<std::pair<int, size_t>, int> seen;
    for (const auto& entry : pg.schedule) ++seen[{static_cast<int>(entry.type), entry.index}];
    for (size_t s = 0; s < pg.subgraphs.size(); ++s) {
        const int n = seen[{static_cast<int>(ScheduleEntry::Type::Subgraph), s}];
        if (n != 1) {
            diags.push_back({Code::Schedule, "subgraph " + std::to_string(pg.subgraphs[s].id) + " scheduled " +
                                                 std::to_string(n) + " times"});
        }
    }
    for (size_t index : pg.cpu_nodes) {
        const int n = seen[{static_cast<int>(ScheduleEntry::Type::CpuNode), index}];
        if (n != 1) {
            diags.push_back({Code::Schedule, "cpu node " + node_name(index) + " scheduled " + std::to_string(n) + " times"});
        }
    }

    // Data dependencies: every consumed tensor is available before its unit runs.
    std::vector<bool> available(graph.tensors().size(), false);
    for (TensorId input : graph.inputs()) available[input] = true;
    auto run_node = [&](size_t index, const std::string& unit) {
        if (index >= node_count) return;
        const Node& node = graph.nodes()[index];
        for (TensorId input : node.inputs) {
            if (!available[input]) {
                diags.push_back({Code::Schedule, unit + " runs node " + node.id + " before tensor '" +
                                                     graph.tensor(input).name + "' is produced"});
            }
        }
        available[node.output] = true;
    };
    for (const auto& entry : pg.schedule) {
        if (entry.type == ScheduleEntry::Type::CpuNode) {
            run_node(entry.index, "cpu");
            continue;
        }
        if (entry.index >= pg.subgraphs.size()) {
            diags.push_back({Code::Schedule, "schedule references missing subgraph " + std::to_string(entry.index)});
            continue;
        }
        const Subgraph& sg = pg.subgraphs[entry.index];
        for (size_t index : sg.nodes) run_node(index, "subgraph " + std::to_string(sg.id));
    }

    for (const auto& sg : pg.subgraphs) {
        bool all_valid = std::all_of(sg.nodes.begin(), sg.nodes.end(), [&](size_t i) { return i < node_count; });
        if (!all_valid || sg.nodes.empty()) continue;
        if (pg.barrier_mode) {
            bool barrier = false;
            bool other = false;
            for (size_t index : sg.nodes) {
                const NodeKind& kind = graph.nodes()[index].kind;
                barrier |= is_barrier(kind);
                other |= !is_barrier(kind);
            }
            if (barrier && other) {
                diags.push_back({Code::Barrier, "subgraph " + std::to_string(sg.id) +
                                                    " merges a barrier requantize with other nodes"});
            }
        }
        if (classify(graph, sg.nodes) != sg.kind) {
            diags.push_back({Code::Kind, "subgraph " + std::to_string(sg.id) + " is labelled " + to_string(sg.kind) +
                                             " but contains " + to_string(classify(graph, sg.nodes)) + " nodes"});
        }
        Subgraph expected = sg;
        compute_boundary(graph, expected);
        if (expected.inputs != sg.inputs || expected.outputs != sg.outputs) {
            diags.push_back({Code::Boundary, "subgraph " + std::to_string(sg.id) + " boundary tensors are stale"});
        }
    }
    return diags;
}

nlohmann::json partition_report(const PartitionedGraph& pg, const Graph& graph) {
    using nlohmann::json;
    json subgraphs = json::array();
    for (const auto& sg : pg.subgraphs) {
        json nodes = json::array();
        for (size_t index : sg.nodes) nodes.push_back(graph.nodes()[index].id);
        json inputs = json::array();
        for (TensorId t : sg.inputs) inputs.push_back(graph.tensor(t).name);
        json outputs = json::array();
        for (TensorId t : sg.outputs) outputs.push_back(graph.tensor(t).name);
        subgraphs.push_back(json{{"id", sg.id},
                                 {"kind", to_string(sg.kind)},
                                 {"node_count", sg.nodes.size()},
                                 {"nodes", nodes},
                                 {"inputs", inputs},
                                 {"outputs", outputs}});
    }
    json cpu = json::array();
    for (size_t index : pg.cpu_nodes) cpu.push_back(graph.nodes()[index].id);
    json schedule = json::array();
    for (const auto& entry : pg.schedule) {
        if (entry.type == ScheduleEntry::Type::Subgraph) {
            schedule.push_back("subgraph_" + std::to_string(pg.subgraphs[entry.index].id));
        } else {
            schedule.push_back("cpu:" + graph.nodes()[entry.index].id);
        }
    }
    json counts = json::object();
    for (SubgraphKind kind : {SubgraphKind::Conv, SubgraphKind::Depth, SubgraphKind::Requant, SubgraphKind::Other}) {
        counts[to_string(kind)] = pg.count(kind);
    }
    return json{{"barrier_mode", pg.barrier_mode},
                {"subgraphs", subgraphs},
                {"kind_counts", counts},
                {"cpu_nodes", cpu},
                {"cpu_node_count", pg.cpu_nodes.size()},
                {"schedule", schedule}};
}

PartitionedGraph partition_from_json(const nlohmann::json& report, const Graph& graph) {
    auto node_index = [&](const std::string& id) {
        const Node* node = graph.find_node(id);
        if (node == nullptr) throw Error(ErrorCode::Schema, "partition names unknown node '" + id + "'");
        return static_cast<size_t>(node - graph.nodes().data());
    };
    auto tensor_id = [&](const std::string& name) {
        const auto id = graph.find_tensor(name);
        if (!id) throw Error(ErrorCode::Schema, "partition names unknown tensor '" + name + "'");
        return *id;
    };
    try {
        PartitionedGraph pg;
        pg.barrier_mode = report.at("barrier_mode").get<bool>();
        for (const auto& j : report.at("subgraphs")) {
            Subgraph sg;
            sg.id = j.at("id").get<int>();
            sg.kind = parse_subgraph_kind(j.at("kind").get<std::string>());
            for (const auto& id : j.at("nodes")) sg.nodes.push_back(node_index(id.get<std::string>()));
            for (const auto& t : j.at("inputs")) sg.inputs.push_back(tensor_id(t.get<std::string>()));
            for (const auto& t : j.at("outputs")) sg.outputs.push_back(tensor_id(t.get<std::string>()));
            pg.subgraphs.push_back(std::move(sg));
        }
        for (const auto& id : report.at("cpu_nodes")) pg.cpu_nodes.push_back(node_index(id.get<std::string>()));
        for (const auto& entry : report.at("schedule")) {
            const auto text = entry.get<std::string>();
            if (text.rfind("cpu:", 0) == 0) {
                pg.schedule.push_back({ScheduleEntry::Type::CpuNode, node_index(text.substr(4))});
                continue;
            }
            if (text.rfind("subgraph_", 0) != 0) throw Error(ErrorCode::Schema, "bad schedule entry '" + text + "'");
            const int id = std::stoi(text.substr(9));
            size_t position = 0;
            while (position < pg.subgraphs.size() && pg.subgraphs[position].id != id) ++position;
            if (position == pg.subgraphs.size()) throw Error(ErrorCode::Schema, "schedule names unknown " + text);
            pg.schedule.push_back({ScheduleEntry::Type::Subgraph, position});
        }
        return pg;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("bad partition report: ") + e.what());
    }
}

}  // namespace dla
