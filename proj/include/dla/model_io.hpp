#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dla/graph.hpp"

namespace dla {

/// Serialized model: `model.json` text plus the raw `weights.bin` blob.
struct ModelFiles {
    std::string json;
    std::vector<uint8_t> weights;
};

nlohmann::json node_kind_to_json(const NodeKind& kind);
NodeKind node_kind_from_json(std::string_view kind, const nlohmann::json& attrs,
                             const std::string& node_id = {});

nlohmann::json tensor_to_json(const TensorDesc& desc);
TensorDesc tensor_from_json(const nlohmann::json& j);

/// Parses and validates a model; shapes of non-input tensors may be omitted and
/// are filled by shape inference, but when present must agree with it.
Graph load_model(std::string_view json_text, std::vector<uint8_t> weights);

/// Canonical form: sorted keys, two-space indent, trailing newline.
ModelFiles save_model(const Graph& graph);

/// Reads `<dir>/model.json` + `<dir>/weights.bin`, or a `.json` path with
/// `weights.bin` beside it.
Graph load_model_path(const std::filesystem::path& path);
void save_model_dir(const Graph& graph, const std::filesystem::path& dir);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& contents);

}  // namespace dla
