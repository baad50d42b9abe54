#include "dal/bundle.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace dal::io {

namespace fs = std::filesystem;
using nlohmann::json;

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write: " + tmp);
    }
    fs::rename(tmp, path);
}

void write_float_bundle(const std::string& dir, json header,
                        const std::vector<BundleEntry>& entries) {
    fs::create_directories(dir);

    std::string blob;
    json table = json::array();
    int64_t offset = 0;
    for (const auto& e : entries) {
        int64_t n = 1;
        for (int d : e.shape) n *= d;
        if (e.data == nullptr)
            throw std::invalid_argument("bundle: entry '" + e.name + "' has no data");
        json row;
        row["name"] = e.name;
        row["shape"] = e.shape;
        row["offset"] = offset;
        table.push_back(row);
        blob.append(reinterpret_cast<const char*>(e.data), static_cast<size_t>(n) * sizeof(float));
        offset += n;
    }
    header["params"] = table;
    header["total_floats"] = offset;
    header["blob"] = "params.f32";

    atomic_write((fs::path(dir) / "manifest.json").string(), header.dump(2) + "\n");
    atomic_write((fs::path(dir) / "params.f32").string(), blob);
}

LoadedBundle read_float_bundle(const std::string& dir) {
    const fs::path root(dir);
    LoadedBundle out;
    {
        std::ifstream in(root / "manifest.json");
        if (!in) throw std::runtime_error("cannot open: " + (root / "manifest.json").string());
        try {
            in >> out.manifest;
        } catch (const json::parse_error& e) {
            throw std::runtime_error("bundle manifest: " + std::string(e.what()));
        }
    }
    if (!out.manifest.contains("params"))
        throw std::runtime_error("bundle manifest: missing params table");

    int64_t total = 0;
    for (const auto& row : out.manifest["params"]) {
        BundleEntry e;
        e.name = row.at("name").get<std::string>();
        e.shape = row.at("shape").get<std::vector<int>>();
        e.offset = row.at("offset").get<int64_t>();
        e.numel = 1;
        for (int d : e.shape) e.numel *= d;
        if (e.offset != total)
            throw std::runtime_error("bundle manifest: '" + e.name + "' offset " +
                                     std::to_string(e.offset) + " does not match layout offset " +
                                     std::to_string(total));
        total += e.numel;
        out.entries.push_back(std::move(e));
    }

    const fs::path blob_path = root / out.manifest.value("blob", "params.f32");
    std::ifstream blob(blob_path, std::ios::binary | std::ios::ate);
    if (!blob) throw std::runtime_error("cannot open: " + blob_path.string());
    const auto actual = static_cast<int64_t>(blob.tellg());
    const auto expected = total * static_cast<int64_t>(sizeof(float));
    if (actual != expected)
        throw std::runtime_error("bundle blob: expected " + std::to_string(expected) +
                                 " bytes, found " + std::to_string(actual));
    blob.seekg(0);
    out.blob.resize(static_cast<size_t>(total));
    blob.read(reinterpret_cast<char*>(out.blob.data()), actual);
    if (!blob) throw std::runtime_error("short read: " + blob_path.string());

    for (auto& e : out.entries) e.data = out.blob.data() + e.offset;
    return out;
}

const BundleEntry& LoadedBundle::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw std::runtime_error("bundle: no entry named '" + name + "'");
}

const BundleEntry& LoadedBundle::find(const std::string& name,
                                      const std::vector<int>& shape) const {
    const BundleEntry& e = find(name);
    if (e.shape != shape) {
        std::string got = "[", want = "[";
        for (int d : e.shape) got += std::to_string(d) + ",";
        for (int d : shape) want += std::to_string(d) + ",";
        throw std::runtime_error("bundle: '" + name + "' has shape " + got + "], expected " +
                                 want + "]");
    }
    return e;
}

} // namespace dal::io
