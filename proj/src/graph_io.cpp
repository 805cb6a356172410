#include "snnconv/graph_io.hpp"

#include <json.hpp>
#include <stdexcept>

namespace snnconv {

using nlohmann::json;

namespace {

json shape_json(const TensorShape &s) { return json::array({s.height, s.width, s.channels}); }

TensorShape shape_from(const json &j)
{
    if (!j.is_array() || j.size() != 3) {
        throw std::runtime_error("shape must be [height, width, channels]");
    }
    return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

std::vector<std::uint32_t> weight_dims(const LayerSpec &l)
{
    const auto k = static_cast<std::uint32_t>(kernel_size(l.kind));
    return {static_cast<std::uint32_t>(l.out_shape.channels),
            static_cast<std::uint32_t>(l.in_shape.channels), k, k};
}

} // namespace

std::vector<BlobTensor> graph_tensors(const NetworkGraph &graph)
{
    std::vector<BlobTensor> tensors;
    for (const LayerSpec &l : graph.layers) {
        if (!l.has_params()) {
            continue;
        }
        tensors.push_back(make_f32(l.name + ".weight", weight_dims(l), l.weights));
        tensors.push_back(make_f32(l.name + ".bias",
                                   {static_cast<std::uint32_t>(l.bias.size())}, l.bias));
    }
    return tensors;
}

std::string graph_to_json(const NetworkGraph &graph, const std::string &blob_name)
{
    const auto tensors = graph_tensors(graph);
    const auto offsets = blob_offsets(tensors);
    json doc;
    doc["format"] = "snnconv-graph";
    doc["version"] = 1;
    doc["blob"] = blob_name;
    doc["input_shape"] = shape_json(graph.input_shape);
    doc["dt"] = graph.dt;
    doc["tau_s"] = graph.tau_s;
    doc["amplitude"] = graph.amplitude;
    json layers = json::array();
    std::size_t t = 0;
    for (const LayerSpec &l : graph.layers) {
        json jl;
        jl["name"] = l.name;
        jl["kind"] = to_string(l.kind);
        jl["in_shape"] = shape_json(l.in_shape);
        jl["out_shape"] = shape_json(l.out_shape);
        jl["activation"] = l.is_spiking() ? "spiking-relu" : "none";
        if (l.has_params()) {
            jl["weights"] = {{"tensor", tensors[t].name}, {"offset", offsets[t]},
                             {"dims", tensors[t].dims}};
            jl["bias"] = {{"tensor", tensors[t + 1].name}, {"offset", offsets[t + 1]},
                          {"dims", tensors[t + 1].dims}};
            t += 2;
        }
        layers.push_back(jl);
    }
    doc["layers"] = layers;
    json edges = json::array();
    for (const Edge &e : graph.edges) {
        edges.push_back(json::array({e.from, e.to}));
    }
    doc["edges"] = edges;
    return doc.dump(2) + "\n";
}

std::filesystem::path blob_path_for(const std::filesystem::path &json_path)
{
    std::filesystem::path p = json_path;
    p.replace_extension(".spkf");
    return p;
}

void save_graph(const NetworkGraph &graph, const std::filesystem::path &json_path)
{
    const auto blob = blob_path_for(json_path);
    write_blob(blob, graph_tensors(graph));
    write_file(json_path, graph_to_json(graph, blob.filename().string()));
}

NetworkGraph load_graph(const std::filesystem::path &json_path)
{
    json doc;
    try {
        doc = json::parse(read_file(json_path));
    } catch (const json::exception &e) {
        throw std::runtime_error(json_path.string() + ": " + e.what());
    }
    if (doc.value("format", "") != "snnconv-graph") {
        throw std::runtime_error(json_path.string() + ": not a graph document");
    }
    const auto tensors = read_blob(json_path.parent_path() / doc.at("blob").get<std::string>());
    NetworkGraph g;
    g.input_shape = shape_from(doc.at("input_shape"));
    g.dt = doc.at("dt").get<double>();
    g.tau_s = doc.at("tau_s").get<double>();
    g.amplitude = doc.at("amplitude").get<double>();
    for (const json &jl : doc.at("layers")) {
        LayerSpec l;
        l.name = jl.at("name").get<std::string>();
        l.kind = layer_kind_from_string(jl.at("kind").get<std::string>());
        l.in_shape = shape_from(jl.at("in_shape"));
        l.out_shape = shape_from(jl.at("out_shape"));
        l.activation = jl.at("activation").get<std::string>() == "spiking-relu"
                               ? Activation::SpikingRelu
                               : Activation::None;
        if (jl.contains("weights")) {
            const BlobTensor &w = find_tensor(tensors, jl["weights"].at("tensor").get<std::string>());
            const BlobTensor &b = find_tensor(tensors, jl["bias"].at("tensor").get<std::string>());
            if (w.dtype != BlobDType::F32 || b.dtype != BlobDType::F32) {
                throw std::runtime_error("layer '" + l.name + "' parameters are not f32");
            }
            l.weights.assign(w.f32.begin(), w.f32.end());
            l.bias.assign(b.f32.begin(), b.f32.end());
        }
        g.layers.push_back(std::move(l));
    }
    for (const json &je : doc.at("edges")) {
        g.edges.push_back({je.at(0).get<int>(), je.at(1).get<int>()});
    }
    const auto violations = validate(g);
    if (!violations.empty()) {
        throw std::runtime_error(json_path.string() + ": invalid graph: " + violations.front());
    }
    return g;
}

} // namespace snnconv
