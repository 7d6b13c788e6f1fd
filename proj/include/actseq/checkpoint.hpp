#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "actseq/errors.hpp"
#include "actseq/nn.hpp"
#include "actseq/tensor.hpp"

namespace actseq::io {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

inline void check_format_version(const json& doc, const std::string& what) {
    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer())
        throw FormatError(what + ": missing format_version");
    if (doc["format_version"].get<int>() != kFormatVersion)
        throw FormatError(what + ": unsupported format_version " +
                          std::to_string(doc["format_version"].get<int>()));
}

// Checkpoint document: format version, a config echo, and named parameter
// entries carrying shape plus row-major values. nlohmann serializes doubles
// with shortest round-trip precision, so save/load is bit-exact.
inline json checkpoint_to_json(const std::string& model_kind, const json& config,
                               const nn::NamedParams& params) {
    json doc;
    doc["format_version"] = kFormatVersion;
    doc["model"] = model_kind;
    doc["config"] = config;
    json entries = json::array();
    for (const auto& [name, tensor] : params) {
        json e;
        e["name"] = name;
        e["shape"] = tensor.shape();
        e["values"] = tensor.value();
        entries.push_back(std::move(e));
    }
    doc["params"] = std::move(entries);
    return doc;
}

// Fills an already-constructed parameter list from a checkpoint document.
// Every expected parameter must be present with a matching shape.
inline void load_params_from_json(const json& doc, nn::NamedParams& params) {
    check_format_version(doc, "checkpoint");
    if (!doc.contains("params") || !doc["params"].is_array())
        throw FormatError("checkpoint: missing params array");
    for (auto& [name, tensor] : params) {
        const json* found = nullptr;
        for (const auto& e : doc["params"])
            if (e.value("name", "") == name) {
                found = &e;
                break;
            }
        if (!found) throw FormatError("checkpoint: missing parameter '" + name + "'");
        const auto shape = (*found)["shape"].get<std::vector<int>>();
        if (shape != tensor.shape()) throw ShapeError("checkpoint: shape mismatch for '" + name + "'");
        auto values = (*found)["values"].get<std::vector<double>>();
        if (values.size() != tensor.size())
            throw ShapeError("checkpoint: value count mismatch for '" + name + "'");
        tensor.mutable_value() = std::move(values);
    }
}

inline void write_json_file(const std::string& path, const json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw FormatError("write failed: " + path);
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw FormatError("invalid JSON in " + path + ": " + e.what());
    }
    return doc;
}

}  // namespace actseq::io
