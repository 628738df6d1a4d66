#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "xrx/errors.hpp"

namespace xrx {

enum class SplitTag { Unassigned, Train, Test };

struct ManifestRow {
    std::string path;
    std::string label;
    std::size_t label_id = 0;
    SplitTag split = SplitTag::Unassigned;
};

// Dataset listing: (relative image path, class label) rows plus the label
// dictionary in first-appearance order.
struct Manifest {
    std::vector<ManifestRow> rows;
    std::vector<std::string> labels;  // id -> name, insertion ordered

    std::size_t label_id(const std::string& name) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == name) return i;
        throw IdOutOfRange("manifest: unknown label " + name);
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace detail

// CSV with header `path,label` and an optional third `split` column
// (train|test). Fields are comma-separated without quoting.
inline Manifest parse_manifest(std::istream& in) {
    Manifest m;
    std::unordered_map<std::string, std::size_t> label_ids;
    std::unordered_set<std::string> seen_paths;
    std::string line;
    std::size_t lineno = 0;
    bool has_split = false;
    if (!std::getline(in, line)) throw EmptyManifest("manifest: empty file");
    ++lineno;
    {
        const auto cols = detail::split_csv_line(line);
        if (cols.size() < 2 || cols[0] != "path" || cols[1] != "label" ||
            (cols.size() == 3 && cols[2] != "split") || cols.size() > 3)
            throw ParseError("manifest line 1: header must be `path,label[,split]`");
        has_split = cols.size() == 3;
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cols = detail::split_csv_line(line);
        if (cols.size() != (has_split ? 3u : 2u))
            throw ParseError("manifest line " + std::to_string(lineno) + ": expected " +
                             std::to_string(has_split ? 3 : 2) + " columns");
        ManifestRow row;
        row.path = cols[0];
        row.label = cols[1];
        if (row.path.empty() || row.label.empty())
            throw ParseError("manifest line " + std::to_string(lineno) + ": empty field");
        if (!seen_paths.insert(row.path).second)
            throw DuplicatePath("manifest line " + std::to_string(lineno) + ": duplicate path " +
                                row.path);
        if (has_split) {
            if (cols[2] == "train")
                row.split = SplitTag::Train;
            else if (cols[2] == "test")
                row.split = SplitTag::Test;
            else
                throw ParseError("manifest line " + std::to_string(lineno) +
                                 ": split must be train or test");
        }
        auto it = label_ids.find(row.label);
        if (it == label_ids.end()) {
            it = label_ids.emplace(row.label, m.labels.size()).first;
            m.labels.push_back(row.label);
        }
        row.label_id = it->second;
        m.rows.push_back(std::move(row));
    }
    if (m.rows.empty()) throw EmptyManifest("manifest: no data rows");
    return m;
}

inline Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open " + path);
    return parse_manifest(in);
}

inline void write_manifest(std::ostream& out, const Manifest& m) {
    bool any_split = false;
    for (const auto& r : m.rows)
        if (r.split != SplitTag::Unassigned) any_split = true;
    out << (any_split ? "path,label,split\n" : "path,label\n");
    for (const auto& r : m.rows) {
        out << r.path << ',' << r.label;
        if (any_split) out << ',' << (r.split == SplitTag::Test ? "test" : "train");
        out << '\n';
    }
}

inline void save_manifest(const std::string& path, const Manifest& m) {
    std::ofstream out(path);
    if (!out) throw IoError("manifest: cannot write " + path);
    write_manifest(out, m);
}

}  // namespace xrx
