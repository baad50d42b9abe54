#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace dal::io {

// Writes `bytes` to `path` through a sibling .tmp file plus rename, so a
// crash never leaves a half-written file under the final name.
void atomic_write(const std::string& path, const std::string& bytes);

// The on-disk checkpoint layout shared by every model in the toolkit:
// manifest.json carries a caller-supplied header plus a "params" table of
// {name, shape, offset} entries, and params.f32 holds the concatenated
// float32 payloads in table order.
struct BundleEntry {
    std::string name;
    std::vector<int> shape;
    const float* data = nullptr; // write side
    int64_t offset = 0;          // read side, in floats
    int64_t numel = 0;
};

// `header` may carry any model-specific keys (kind, config, hyperparameters);
// the params/total_floats/blob keys are appended here.
void write_float_bundle(const std::string& dir, nlohmann::json header,
                        const std::vector<BundleEntry>& entries);

struct LoadedBundle {
    nlohmann::json manifest;
    std::vector<BundleEntry> entries; // data pointers into `blob`
    std::vector<float> blob;

    // Throws std::runtime_error naming the entry when absent or misshaped.
    const BundleEntry& find(const std::string& name) const;
    const BundleEntry& find(const std::string& name, const std::vector<int>& shape) const;
};

LoadedBundle read_float_bundle(const std::string& dir);

} // namespace dal::io
