#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "actseq/checkpoint.hpp"
#include "actseq/core.hpp"
#include "actseq/errors.hpp"
#include "actseq/metrics.hpp"

namespace actseq::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Number and CSV helpers. Doubles print with std::to_chars shortest
// round-trip form so every file re-reads to identical values.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw NumericError("cannot format number");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view text, const std::string& where) {
    double v = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw FormatError(where + ": invalid number '" + std::string(text) + "'");
    return v;
}

inline long parse_long(std::string_view text, const std::string& where) {
    long v = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw FormatError(where + ": invalid integer '" + std::string(text) + "'");
    return v;
}

inline std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char ch : field) {
        if (ch == '"') quoted += '"';
        quoted += ch;
    }
    quoted += '"';
    return quoted;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (in_quotes) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                in_quotes = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

// ---------------------------------------------------------------------------
// Frame matrices: features (T x D), probabilities (T x C[+1]), labels (T x 1)
// ---------------------------------------------------------------------------

inline void write_matrix_csv(const fs::path& path, const std::vector<double>& data,
                             std::size_t rows, std::size_t cols) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    std::string line;
    for (std::size_t r = 0; r < rows; ++r) {
        line.clear();
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) line += ',';
            line += format_double(data[r * cols + c]);
        }
        line += '\n';
        out << line;
    }
    if (!out) throw FormatError("write failed: " + path.string());
}

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
};

inline Matrix read_matrix_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path.string());
    Matrix m;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (m.rows == 0) m.cols = fields.size();
        if (fields.size() != m.cols)
            throw FormatError(path.string() + ": ragged row " + std::to_string(m.rows));
        for (const auto& f : fields) m.data.push_back(parse_double(f, path.string()));
        ++m.rows;
    }
    return m;
}

inline void write_labels_csv(const fs::path& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    for (int v : labels) out << v << '\n';
    if (!out) throw FormatError("write failed: " + path.string());
}

inline std::vector<int> read_labels_csv(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path.string());
    std::vector<int> labels;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        labels.push_back(static_cast<int>(parse_long(line, path.string())));
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Dataset directory:
//   meta.json                  format_version, classes, feature_dim,
//                              frame_rate, groups, splits {train,val,test}
//   <id>.features.csv          T x D decimal floats
//   <id>.labels.csv            T rows of one class index
// ---------------------------------------------------------------------------

struct DatasetSplits {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;

    std::vector<std::string> all() const {
        std::vector<std::string> ids = train;
        ids.insert(ids.end(), val.begin(), val.end());
        ids.insert(ids.end(), test.begin(), test.end());
        return ids;
    }

    const std::vector<std::string>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw ConfigError("unknown split '" + name + "'");
    }
};

struct Dataset {
    LabelVocab vocab{{"none"}};
    std::size_t feature_dim = 0;
    double frame_rate = 1.0;
    DatasetSplits splits;
    std::vector<LabeledSample> samples;  // every sample listed in the splits
    json meta_extra;                     // echoed configuration (e.g. generator)

    const LabeledSample& by_id(const std::string& id) const {
        for (const auto& s : samples)
            if (s.id() == id) return s;
        throw FormatError("dataset: unknown sample id '" + id + "'");
    }

    std::vector<const LabeledSample*> split_samples(const std::string& name) const {
        std::vector<const LabeledSample*> out;
        for (const auto& id : splits.split(name)) out.push_back(&by_id(id));
        return out;
    }
};

inline void write_dataset(const fs::path& dir, const Dataset& dataset) {
    fs::create_directories(dir);
    json meta;
    meta["format_version"] = kFormatVersion;
    meta["classes"] = dataset.vocab.classes();
    meta["feature_dim"] = dataset.feature_dim;
    meta["frame_rate"] = dataset.frame_rate;
    json splits;
    splits["train"] = dataset.splits.train;
    splits["val"] = dataset.splits.val;
    splits["test"] = dataset.splits.test;
    meta["splits"] = std::move(splits);
    json groups = json::object();
    for (const auto& s : dataset.samples) groups[s.id()] = s.group();
    meta["groups"] = std::move(groups);
    if (!dataset.meta_extra.is_null()) meta["generator"] = dataset.meta_extra;
    write_json_file((dir / "meta.json").string(), meta);
    for (const auto& s : dataset.samples) {
        write_matrix_csv(dir / (s.id() + ".features.csv"), s.features.data(), s.features.rows(),
                         s.features.dim());
        write_labels_csv(dir / (s.id() + ".labels.csv"), s.frame_labels.labels);
    }
}

inline Dataset read_dataset(const fs::path& dir) {
    const json meta = read_json_file((dir / "meta.json").string());
    check_format_version(meta, "dataset meta");
    Dataset dataset;
    dataset.vocab = LabelVocab(meta.at("classes").get<std::vector<std::string>>());
    dataset.feature_dim = meta.at("feature_dim").get<std::size_t>();
    dataset.frame_rate = meta.at("frame_rate").get<double>();
    dataset.splits.train = meta.at("splits").at("train").get<std::vector<std::string>>();
    dataset.splits.val = meta.at("splits").at("val").get<std::vector<std::string>>();
    dataset.splits.test = meta.at("splits").at("test").get<std::vector<std::string>>();
    if (meta.contains("generator")) dataset.meta_extra = meta["generator"];

    std::map<std::string, std::string> groups;
    if (meta.contains("groups"))
        groups = meta["groups"].get<std::map<std::string, std::string>>();

    std::map<std::string, bool> seen;
    for (const auto& id : dataset.splits.all()) {
        if (seen.count(id)) throw FormatError("dataset meta: id '" + id + "' listed twice");
        seen[id] = true;
        const Matrix features = read_matrix_csv(dir / (id + ".features.csv"));
        const std::vector<int> labels = read_labels_csv(dir / (id + ".labels.csv"));
        if (features.cols != dataset.feature_dim)
            throw ShapeError("dataset: feature dim mismatch for '" + id + "'");
        if (features.rows != labels.size())
            throw ShapeError("dataset: features/labels length mismatch for '" + id + "'");
        for (int l : labels)
            if (l < 0 || l >= dataset.vocab.num_classes())
                throw FormatError("dataset: label out of range in '" + id + "'");
        std::map<std::string, std::string> metadata{{"id", id}};
        auto g = groups.find(id);
        metadata["group"] = g == groups.end() ? id : g->second;
        FeatureSequence fs_obj(features.rows, features.cols, features.data, dataset.frame_rate,
                               std::move(metadata));
        dataset.samples.push_back(
            make_labeled_sample(std::move(fs_obj), FrameLabeling(labels, dataset.frame_rate)));
    }
    return dataset;
}

// ---------------------------------------------------------------------------
// Predicted sequences: JSON lines, one {"id", "sequence"} object per sample,
// sequence entries as class names.
// ---------------------------------------------------------------------------

inline void write_predictions_jsonl(const fs::path& path, const LabelVocab& vocab,
                                    const std::vector<std::pair<std::string, ActionSequence>>& preds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    for (const auto& [id, seq] : preds) {
        json line;
        line["id"] = id;
        json names = json::array();
        for (int cls : seq) names.push_back(vocab.name(cls));
        line["sequence"] = std::move(names);
        out << line.dump() << '\n';
    }
    if (!out) throw FormatError("write failed: " + path.string());
}

inline std::vector<std::pair<std::string, ActionSequence>> read_predictions_jsonl(
    const fs::path& path, const LabelVocab& vocab) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open: " + path.string());
    std::vector<std::pair<std::string, ActionSequence>> preds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::parse_error& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        std::vector<int> items;
        for (const auto& name : doc.at("sequence"))
            items.push_back(vocab.index(name.get<std::string>()));
        preds.emplace_back(doc.at("id").get<std::string>(),
                           ActionSequence(std::move(items), /*canonical=*/false));
    }
    return preds;
}

// ---------------------------------------------------------------------------
// Metric reports. Key order is fixed: edit_score, aer, tpr, fdr, f1,
// framewise_accuracy, then any remaining entries in insertion order.
// ---------------------------------------------------------------------------

inline json metric_report_to_json(const metrics::MetricReport& report) {
    json doc = json::object();
    for (const auto& e : report.entries) {
        if (e.ci) {
            json v;
            v["mean"] = e.value;
            v["lower"] = e.ci->first;
            v["upper"] = e.ci->second;
            doc[e.name] = std::move(v);
        } else {
            doc[e.name] = e.value;
        }
    }
    return doc;
}

inline void append_metric_csv_header(std::string& out, const metrics::MetricReport& report) {
    out += "system";
    for (const auto& e : report.entries) {
        out += ',' + e.name;
        if (e.ci) out += ',' + e.name + "_lower," + e.name + "_upper";
    }
    out += '\n';
}

inline void append_metric_csv_row(std::string& out, const std::string& system,
                                  const metrics::MetricReport& report) {
    out += csv_quote(system);
    for (const auto& e : report.entries) {
        out += ',' + format_double(e.value);
        if (e.ci) out += ',' + format_double(e.ci->first) + ',' + format_double(e.ci->second);
    }
    out += '\n';
}

inline void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace actseq::io
