#pragma once

// Parameter checkpoint container.
//
// Layout (all integers little-endian):
//   offset 0   8 bytes   magic "HNNPARAM"
//   offset 8   8 bytes   uint64 N, byte length of the JSON index
//   offset 16  N bytes   UTF-8 JSON index:
//                          {"format": "hnn-params", "version": 1,
//                           "entries": [{"name": str, "shape": [int...],
//                                        "offset": int, "count": int}, ...]}
//                        offset/count are measured in doubles from the start
//                        of the payload
//   offset 16+N          payload: IEEE-754 binary64 values, row-major, entries
//                        stored back to back in index order

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnn/errors.hpp"
#include "hnn/tensor.hpp"

namespace hnn {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct CheckpointEntry {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

inline constexpr char kCheckpointMagic[8] = {'H', 'N', 'N', 'P', 'A', 'R', 'A', 'M'};

inline std::string serialize_checkpoint(const NamedTensors& params) {
    nlohmann::json index;
    index["format"] = "hnn-params";
    index["version"] = 1;
    index["entries"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : params) {
        index["entries"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"count", t.size()}});
        offset += t.size();
    }
    const std::string header = index.dump();
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t len = header.size();
    out.append(reinterpret_cast<const char*>(&len), sizeof(len));
    out += header;
    for (const auto& [name, t] : params) {
        out.append(reinterpret_cast<const char*>(t.data().data()), t.size() * sizeof(double));
    }
    return out;
}

inline std::vector<CheckpointEntry> deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        throw ParseError("checkpoint: bad magic");
    }
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof(len));
    if (16 + len > bytes.size()) {
        throw ParseError("checkpoint: truncated index");
    }
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: index is not valid JSON: ") + e.what());
    }
    if (index.value("format", "") != "hnn-params" || index.value("version", 0) != 1) {
        throw ParseError("checkpoint: unsupported format/version");
    }
    const std::size_t payload = 16 + len;
    const std::size_t n_doubles = (bytes.size() - payload) / sizeof(double);
    std::vector<CheckpointEntry> out;
    for (const auto& e : index.at("entries")) {
        CheckpointEntry entry;
        entry.name = e.at("name").get<std::string>();
        entry.shape = e.at("shape").get<Shape>();
        const auto offset = e.at("offset").get<std::size_t>();
        const auto count = e.at("count").get<std::size_t>();
        if (count != shape_numel(entry.shape) || offset + count > n_doubles) {
            throw ParseError("checkpoint: entry '" + entry.name + "' has inconsistent extent");
        }
        entry.values.resize(count);
        std::memcpy(entry.values.data(), bytes.data() + payload + offset * sizeof(double), count * sizeof(double));
        out.push_back(std::move(entry));
    }
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const NamedTensors& params) {
    write_file(path, serialize_checkpoint(params));
}

/// Copies stored values into `params` in place. Every parameter must be present
/// with a matching shape.
inline void load_checkpoint_into(const std::filesystem::path& path, NamedTensors& params) {
    auto entries = deserialize_checkpoint(read_file(path));
    for (auto& [name, t] : params) {
        auto it = std::find_if(entries.begin(), entries.end(), [&](const auto& e) { return e.name == name; });
        if (it == entries.end()) {
            throw ParseError("checkpoint " + path.string() + " lacks parameter '" + name + "'");
        }
        if (it->shape != t.shape()) {
            throw DimensionError("checkpoint parameter '" + name + "' has shape " + shape_str(it->shape) +
                                 ", model expects " + shape_str(t.shape()));
        }
        std::copy(it->values.begin(), it->values.end(), t.mutable_data().begin());
    }
}

}  // namespace hnn
