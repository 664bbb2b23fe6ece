#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "redtest/errors.hpp"
#include "redtest/matrix.hpp"
#include "redtest/npy.hpp"
#include "redtest/parallel.hpp"

namespace redtest {

// One layer's intermediate representation: an n×p matrix holding the layer's
// activations for a fixed batch of n inputs.
struct ActivationMatrix {
    std::string layer_name;
    Matrix data;

    ActivationMatrix() = default;
    ActivationMatrix(std::string name, Matrix values)
        : layer_name(std::move(name)), data(std::move(values)) {
        if (data.rows() == 0 || data.cols() == 0)
            throw Error(ErrorCode::EmptyTensor, "layer '" + layer_name + "' has an empty matrix");
        if (!data.all_finite())
            throw Error(ErrorCode::NonFinite,
                        "layer '" + layer_name + "' contains NaN or Inf activations");
    }

    std::size_t n() const { return data.rows(); }
    std::size_t p() const { return data.cols(); }
};

enum class StructureFamily { plain, block };

inline const char *family_name(StructureFamily f) {
    return f == StructureFamily::block ? "block" : "plain";
}

inline StructureFamily family_from_name(const std::string &name) {
    if (name == "plain") return StructureFamily::plain;
    if (name == "block") return StructureFamily::block;
    throw Error(ErrorCode::ManifestMismatch, "unknown structure_family '" + name + "'");
}

// Ordered layer activations for one model on one input batch. Immutable
// after construction; safe to share across threads.
struct ModelTrace {
    std::string model_name;
    std::size_t batch_size = 0;
    StructureFamily structure_family = StructureFamily::plain;
    std::vector<ActivationMatrix> layers;

    ModelTrace() = default;
    ModelTrace(std::string name, StructureFamily family, std::vector<ActivationMatrix> ls)
        : model_name(std::move(name)), structure_family(family), layers(std::move(ls)) {
        if (layers.empty())
            throw Error(ErrorCode::ManifestMismatch, "trace '" + model_name + "' has no layers");
        batch_size = layers.front().n();
        if (batch_size < 4)
            throw Error(ErrorCode::TooFewSamples,
                        "trace '" + model_name + "' has batch size " +
                            std::to_string(batch_size) + "; need at least 4 samples");
        for (const auto &layer : layers)
            if (layer.n() != batch_size)
                throw Error(ErrorCode::ManifestMismatch,
                            "layer '" + layer.layer_name + "' has " + std::to_string(layer.n()) +
                                " samples, trace batch size is " + std::to_string(batch_size));
    }

    std::size_t layer_count() const { return layers.size(); }
};

// Collapses (n, d1, ..., dk) into (n, d1*...*dk). Row i of the result is the
// row-major linearization of sample i's activation volume; the payload is
// already C-order, so this is a reshape, not a shuffle.
inline Matrix flatten(const RawTensor &t) {
    if (t.shape.size() < 2)
        throw std::invalid_argument("flatten: need a batch axis plus at least one feature axis");
    std::size_t p = 1;
    for (std::size_t i = 1; i < t.shape.size(); ++i) p *= t.shape[i];
    const std::size_t n = t.shape[0];
    if (n == 0 || p == 0) throw Error(ErrorCode::EmptyTensor, "flatten: tensor has a zero axis");
    Matrix m(n, p);
    m.data() = t.data;
    return m;
}

// Manifest schema:
//   {"model": str, "batch_size": int, "structure_family": "plain"|"block",
//    "layers": [{"name": str, "file": str, "shape": [int, ...]}, ...]}
// Tensor paths are resolved relative to the manifest's directory.
inline ModelTrace load_trace(const std::filesystem::path &manifest_path, unsigned threads = 0) {
    std::ifstream in(manifest_path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + manifest_path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::ManifestMismatch,
                    manifest_path.string() + ": invalid JSON (" + e.what() + ")");
    }

    std::string model;
    std::size_t batch_size = 0;
    StructureFamily family;
    std::vector<std::tuple<std::string, std::filesystem::path, std::vector<std::size_t>>> entries;
    try {
        model = doc.at("model").get<std::string>();
        batch_size = doc.at("batch_size").get<std::size_t>();
        family = family_from_name(doc.at("structure_family").get<std::string>());
        for (const auto &layer : doc.at("layers")) {
            entries.emplace_back(layer.at("name").get<std::string>(),
                                 manifest_path.parent_path() /
                                     layer.at("file").get<std::string>(),
                                 layer.at("shape").get<std::vector<std::size_t>>());
        }
    } catch (const nlohmann::json::exception &e) {
        throw Error(ErrorCode::ManifestMismatch,
                    manifest_path.string() + ": bad manifest field (" + e.what() + ")");
    }
    if (entries.empty())
        throw Error(ErrorCode::ManifestMismatch, manifest_path.string() + ": no layers listed");

    std::vector<ActivationMatrix> layers(entries.size());
    parallel_for(entries.size(), threads, [&](std::size_t i) {
        const auto &[name, file, shape] = entries[i];
        RawTensor t;
        try {
            t = read_tensor(file);
        } catch (const Error &e) {
            throw Error(e.code(), "layer '" + name + "': " + e.what());
        }
        if (t.shape != shape)
            throw Error(ErrorCode::ManifestMismatch,
                        "layer '" + name + "': file shape does not match manifest entry");
        if (shape.empty() || shape[0] != batch_size)
            throw Error(ErrorCode::ManifestMismatch,
                        "layer '" + name + "': first axis must equal batch_size " +
                            std::to_string(batch_size));
        layers[i] = ActivationMatrix(name, flatten(t));
    });
    return ModelTrace(std::move(model), family, std::move(layers));
}

// Writes one NPY file per layer plus manifest.json; the inverse of load_trace.
inline std::filesystem::path save_trace(const std::filesystem::path &dir, const ModelTrace &trace) {
    std::filesystem::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["model"] = trace.model_name;
    manifest["batch_size"] = trace.batch_size;
    manifest["structure_family"] = family_name(trace.structure_family);
    manifest["layers"] = nlohmann::ordered_json::array();
    for (const auto &layer : trace.layers) {
        const std::string file = layer.layer_name + ".npy";
        RawTensor t;
        t.shape = {layer.n(), layer.p()};
        t.data = layer.data.data();
        write_tensor(dir / file, t);
        manifest["layers"].push_back({{"name", layer.layer_name},
                                      {"file", file},
                                      {"shape", t.shape}});
    }
    const std::filesystem::path manifest_path = dir / "manifest.json";
    const std::filesystem::path tmp = manifest_path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot create " + tmp.string());
        out << manifest.dump(2) << '\n';
        if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, manifest_path);
    return manifest_path;
}

}  // namespace redtest
