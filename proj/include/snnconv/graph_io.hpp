#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "snnconv/blob.hpp"
#include "snnconv/netgraph.hpp"

namespace snnconv {

/// Weight tensors "<layer>.weight" / "<layer>.bias" in layer order.
std::vector<BlobTensor> graph_tensors(const NetworkGraph &graph);

/// Structured-text description: layer list, shapes, edges and, per tensor,
/// its offset into the weight blob named `blob_name`.
std::string graph_to_json(const NetworkGraph &graph, const std::string &blob_name);

/// Writes `<stem>.json` and `<stem>.spkf` next to each other.
void save_graph(const NetworkGraph &graph, const std::filesystem::path &json_path);
/// Reads the JSON and the blob it references (relative to the JSON file).
/// Throws std::runtime_error if the result fails validate().
NetworkGraph load_graph(const std::filesystem::path &json_path);

/// The blob path save_graph() uses for a given JSON path.
std::filesystem::path blob_path_for(const std::filesystem::path &json_path);

} // namespace snnconv
