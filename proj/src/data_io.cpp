#include "warpfit/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace warpfit {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double(const std::string& s, const std::string& file, int line_no,
                    const char* what) {
    double value = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        std::ostringstream msg;
        msg << file << ":" << line_no << ": bad " << what << " value '" << s << "'";
        throw IoError(msg.str());
    }
    return value;
}

struct RawRows {
    // id -> (t, y) pairs in file order
    std::map<std::string, std::vector<std::pair<double, double>>> by_id;
};

Dataset assemble(RawRows&& raw, const std::string& source) {
    Dataset data;
    data.meta.sources.push_back(source);
    for (auto& [id, rows] : raw.by_id) {
        std::stable_sort(rows.begin(), rows.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (size_t j = 1; j < rows.size(); ++j) {
            if (rows[j].first == rows[j - 1].first) {
                std::ostringstream msg;
                msg << source << ": duplicate observation (id=" << id << ", t=" << rows[j].first
                    << ")";
                throw IoError(msg.str());
            }
        }
        Curve c;
        c.id = id;
        c.t.resize(rows.size());
        c.y.resize(rows.size());
        for (size_t j = 0; j < rows.size(); ++j) {
            c.t(j) = rows[j].first;
            c.y(j) = rows[j].second;
        }
        c.validate();
        data.curves.push_back(std::move(c));
    }
    return data;  // std::map iteration already sorts curves by id
}

}  // namespace

Dataset load_long_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) throw IoError(path + ": empty file");
    ++line_no;
    if (split_csv_line(line) != std::vector<std::string>{"id", "t", "value"})
        throw IoError(path + ":1: expected header 'id,t,value'");

    RawRows raw;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 3) {
            std::ostringstream msg;
            msg << path << ":" << line_no << ": expected 3 fields, found " << fields.size();
            throw IoError(msg.str());
        }
        if (fields[0].empty()) throw IoError(path + ":" + std::to_string(line_no) + ": empty id");
        raw.by_id[fields[0]].emplace_back(parse_double(fields[1], path, line_no, "t"),
                                          parse_double(fields[2], path, line_no, "value"));
    }
    return assemble(std::move(raw), path);
}

Dataset load_curve_dir(const std::string& path) {
    namespace fs = std::filesystem;
    RawRows raw;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError(path + ": no .csv files found");
    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) throw IoError("cannot open " + file.string());
        std::string line;
        int line_no = 1;
        if (!std::getline(in, line) ||
            split_csv_line(line) != std::vector<std::string>{"t", "value"})
            throw IoError(file.string() + ":1: expected header 't,value'");
        const std::string id = file.stem().string();
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto fields = split_csv_line(line);
            if (fields.size() != 2)
                throw IoError(file.string() + ":" + std::to_string(line_no) + ": expected 2 fields");
            raw.by_id[id].emplace_back(parse_double(fields[0], file.string(), line_no, "t"),
                                       parse_double(fields[1], file.string(), line_no, "value"));
        }
    }
    return assemble(std::move(raw), path);
}

Dataset load_curves(const std::string& path) {
    if (std::filesystem::is_directory(path)) return load_curve_dir(path);
    return load_long_csv(path);
}

void load_labels_csv(Dataset& data, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    int line_no = 1;
    if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"id", "group"})
        throw IoError(path + ":1: expected header 'id,group'");
    std::set<std::string> known;
    for (const auto& c : data.curves) known.insert(c.id);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 2)
            throw IoError(path + ":" + std::to_string(line_no) + ": expected 2 fields");
        if (known.find(fields[0]) == known.end())
            throw IoError(path + ":" + std::to_string(line_no) + ": unknown id '" + fields[0] +
                          "'");
        int label;
        if (fields[1] == "upper")
            label = 1;
        else if (fields[1] == "lower")
            label = 0;
        else
            throw IoError(path + ":" + std::to_string(line_no) + ": group must be upper or lower");
        data.labels[fields[0]] = label;
    }
    data.meta.sources.push_back(path);
    data.validate();
}

void save_long_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "id,t,value\n";
    char buf[64];
    for (const auto& c : data.curves) {
        for (int j = 0; j < c.m(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g", c.t(j), c.y(j));
            out << c.id << ',' << buf << '\n';
        }
    }
}

namespace {

json meta_to_json(const DatasetMeta& meta) {
    json j;
    j["sources"] = meta.sources;
    if (meta.truncated_at) j["truncated_at"] = *meta.truncated_at;
    if (meta.downsampled_to) j["downsampled_to"] = *meta.downsampled_to;
    if (meta.seed) j["seed"] = *meta.seed;
    if (!meta.removed_empty_ids.empty()) j["removed_empty_ids"] = meta.removed_empty_ids;
    return j;
}

DatasetMeta meta_from_json(const json& j) {
    DatasetMeta meta;
    if (j.contains("sources")) meta.sources = j["sources"].get<std::vector<std::string>>();
    if (j.contains("truncated_at")) meta.truncated_at = j["truncated_at"].get<double>();
    if (j.contains("downsampled_to")) meta.downsampled_to = j["downsampled_to"].get<int>();
    if (j.contains("seed")) meta.seed = j["seed"].get<unsigned long long>();
    if (j.contains("removed_empty_ids"))
        meta.removed_empty_ids = j["removed_empty_ids"].get<std::vector<std::string>>();
    return meta;
}

}  // namespace

void save_dataset_json(const Dataset& data, const std::string& path) {
    json j;
    j["schema"] = "warpfit-dataset-v1";
    j["curves"] = json::array();
    for (const auto& c : data.curves) {
        json jc;
        jc["id"] = c.id;
        jc["t"] = std::vector<double>(c.t.data(), c.t.data() + c.m());
        jc["y"] = std::vector<double>(c.y.data(), c.y.data() + c.m());
        j["curves"].push_back(std::move(jc));
    }
    if (!data.labels.empty()) {
        json jl = json::object();
        for (const auto& [id, lab] : data.labels) jl[id] = lab;
        j["labels"] = std::move(jl);
    }
    j["meta"] = meta_to_json(data.meta);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << '\n';
}

Dataset load_dataset_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
    if (j.value("schema", "") != "warpfit-dataset-v1")
        throw IoError(path + ": expected schema warpfit-dataset-v1");
    Dataset data;
    for (const auto& jc : j.at("curves")) {
        Curve c;
        c.id = jc.at("id").get<std::string>();
        const auto t = jc.at("t").get<std::vector<double>>();
        const auto y = jc.at("y").get<std::vector<double>>();
        c.t = Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
        c.y = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
        data.curves.push_back(std::move(c));
    }
    if (j.contains("labels")) {
        for (const auto& [id, lab] : j["labels"].items()) data.labels[id] = lab.get<int>();
    }
    if (j.contains("meta")) data.meta = meta_from_json(j["meta"]);
    data.validate();
    return data;
}

}  // namespace warpfit
