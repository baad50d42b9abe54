#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dal/dataset.hpp"
#include "dal/rng.hpp"

#include "json.hpp"

namespace dal::data {

static_assert(std::endian::native == std::endian::little,
              "raw .f32 blobs are little-endian; big-endian hosts need byte swapping");

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kGeneratorVersion = "1";

void write_f32_blob(const fs::path& path, const std::vector<EEGTrial>& trials) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    for (const auto& t : trials)
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    if (!out) throw std::runtime_error("short write: " + path.string());
}

std::vector<EEGTrial> read_f32_blob(const fs::path& path, int n_trials, int channels,
                                    int samples, Condition cond, int subject_id) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    const auto actual = static_cast<uint64_t>(in.tellg());
    const uint64_t expected = static_cast<uint64_t>(n_trials) * channels * samples * sizeof(float);
    if (actual != expected) {
        std::ostringstream msg;
        msg << path.filename().string() << ": expected " << expected << " bytes ("
            << n_trials << " trials x " << channels << " ch x " << samples
            << " samples x 4), found " << actual;
        throw std::runtime_error(msg.str());
    }
    in.seekg(0);
    std::vector<EEGTrial> trials(static_cast<size_t>(n_trials));
    for (int i = 0; i < n_trials; ++i) {
        auto& t = trials[static_cast<size_t>(i)];
        t.channels = channels;
        t.samples = samples;
        t.condition = cond;
        t.subject_id = subject_id;
        t.values.resize(static_cast<size_t>(channels) * samples);
        in.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(float)));
        if (!in) throw std::runtime_error("short read: " + path.string());
    }
    return trials;
}

} // namespace

std::vector<int> pair_trials(const PairedDataset& ds, PairPolicy policy, uint64_t seed) {
    if (ds.imagined.size() != ds.overt.size())
        throw std::invalid_argument("pair_trials: imagined and overt trial counts differ (" +
                                    std::to_string(ds.imagined.size()) + " vs " +
                                    std::to_string(ds.overt.size()) + ")");
    const int n = static_cast<int>(ds.imagined.size());
    std::vector<int> pairing(static_cast<size_t>(n));

    // bucket overt trial indices by label, preserving order
    std::vector<std::vector<int>> by_label(kNumWords);
    for (int j = 0; j < n; ++j) {
        const int lbl = ds.overt[static_cast<size_t>(j)].label;
        if (lbl < 0 || lbl >= kNumWords)
            throw std::invalid_argument("pair_trials: overt label out of range");
        by_label[static_cast<size_t>(lbl)].push_back(j);
    }

    if (policy == PairPolicy::random_within_class) {
        Rng rng(seed, 3);
        for (auto& bucket : by_label) rng.shuffle(bucket);
    }

    std::vector<size_t> cursor(kNumWords, 0);
    for (int i = 0; i < n; ++i) {
        const int lbl = ds.imagined[static_cast<size_t>(i)].label;
        if (lbl < 0 || lbl >= kNumWords)
            throw std::invalid_argument("pair_trials: imagined label out of range");
        auto& bucket = by_label[static_cast<size_t>(lbl)];
        auto& cur = cursor[static_cast<size_t>(lbl)];
        if (cur >= bucket.size())
            throw std::invalid_argument("pair_trials: class " + std::to_string(lbl) +
                                        " has more imagined than overt trials");
        pairing[static_cast<size_t>(i)] = bucket[cur++];
    }
    return pairing;
}

void write_dataset(const PairedDataset& ds, const std::string& dir) {
    const fs::path root(dir);
    fs::create_directories(root);

    json manifest;
    manifest["generator_version"] = kGeneratorVersion;
    manifest["subject_id"] = ds.subject_id;
    manifest["fs"] = ds.fs;
    manifest["channels"] = ds.imagined.empty() ? 0 : ds.imagined.front().channels;
    manifest["samples"] = ds.imagined.empty() ? 0 : ds.imagined.front().samples;
    manifest["n_trials"] = ds.imagined.size();
    manifest["trials_per_word"] =
        ds.imagined.size() / static_cast<size_t>(kNumWords);
    manifest["words"] = ds.words;
    manifest["pair_policy"] =
        ds.policy == PairPolicy::by_index ? "by_index" : "random_within_class";
    manifest["seed"] = ds.seed;
    manifest["subject_seed"] = ds.subject_seed;
    {
        std::ofstream out(root / "manifest.json");
        if (!out) throw std::runtime_error("cannot open for writing: manifest.json");
        out << manifest.dump(2) << "\n";
    }

    write_f32_blob(root / "imagined.f32", ds.imagined);
    write_f32_blob(root / "overt.f32", ds.overt);

    std::ofstream csv(root / "labels.csv");
    if (!csv) throw std::runtime_error("cannot open for writing: labels.csv");
    csv << "trial,condition,label,pair_index\n";
    for (size_t i = 0; i < ds.imagined.size(); ++i)
        csv << i << ",imagined," << ds.imagined[i].label << ","
            << (i < ds.pairing.size() ? ds.pairing[i] : -1) << "\n";
    for (size_t i = 0; i < ds.overt.size(); ++i)
        csv << i << ",overt," << ds.overt[i].label << ",-1\n";
    if (!csv) throw std::runtime_error("short write: labels.csv");
}

PairedDataset read_dataset(const std::string& dir) {
    const fs::path root(dir);

    json manifest;
    {
        std::ifstream in(root / "manifest.json");
        if (!in) throw std::runtime_error("cannot open: " + (root / "manifest.json").string());
        try {
            in >> manifest;
        } catch (const json::parse_error& e) {
            throw std::runtime_error("manifest.json: " + std::string(e.what()));
        }
    }
    for (const char* key : {"subject_id", "fs", "channels", "samples", "n_trials", "words",
                            "pair_policy", "seed", "subject_seed"})
        if (!manifest.contains(key))
            throw std::runtime_error("manifest.json: missing required key '" +
                                     std::string(key) + "'");

    PairedDataset ds;
    ds.subject_id = manifest["subject_id"].get<int>();
    ds.fs = manifest["fs"].get<int>();
    ds.words = manifest["words"].get<std::vector<std::string>>();
    ds.seed = manifest["seed"].get<uint64_t>();
    ds.subject_seed = manifest["subject_seed"].get<uint64_t>();
    const std::string policy = manifest["pair_policy"].get<std::string>();
    if (policy == "by_index")
        ds.policy = PairPolicy::by_index;
    else if (policy == "random_within_class")
        ds.policy = PairPolicy::random_within_class;
    else
        throw std::runtime_error("manifest.json: unknown pair_policy '" + policy + "'");

    const int n_trials = manifest["n_trials"].get<int>();
    const int channels = manifest["channels"].get<int>();
    const int samples = manifest["samples"].get<int>();

    ds.imagined = read_f32_blob(root / "imagined.f32", n_trials, channels, samples,
                                Condition::imagined, ds.subject_id);
    ds.overt = read_f32_blob(root / "overt.f32", n_trials, channels, samples,
                             Condition::overt, ds.subject_id);

    // labels.csv carries per-trial labels and the pairing map
    std::ifstream csv(root / "labels.csv");
    if (!csv) throw std::runtime_error("cannot open: " + (root / "labels.csv").string());
    std::string line;
    if (!std::getline(csv, line) || line != "trial,condition,label,pair_index")
        throw std::runtime_error("labels.csv: bad or missing header");
    ds.pairing.assign(static_cast<size_t>(n_trials), -1);
    int rows = 0;
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string f0, f1, f2, f3;
        if (!std::getline(ss, f0, ',') || !std::getline(ss, f1, ',') ||
            !std::getline(ss, f2, ',') || !std::getline(ss, f3, ','))
            throw std::runtime_error("labels.csv: malformed row: " + line);
        int idx, label, pair;
        try {
            idx = std::stoi(f0);
            label = std::stoi(f2);
            pair = std::stoi(f3);
        } catch (const std::exception&) {
            throw std::runtime_error("labels.csv: non-numeric field in row: " + line);
        }
        if (idx < 0 || idx >= n_trials)
            throw std::runtime_error("labels.csv: trial index out of range: " + line);
        if (f1 == "imagined") {
            ds.imagined[static_cast<size_t>(idx)].label = label;
            ds.imagined[static_cast<size_t>(idx)].trial_index = idx;
            ds.pairing[static_cast<size_t>(idx)] = pair;
        } else if (f1 == "overt") {
            ds.overt[static_cast<size_t>(idx)].label = label;
            ds.overt[static_cast<size_t>(idx)].trial_index = idx;
        } else {
            throw std::runtime_error("labels.csv: unknown condition '" + f1 + "'");
        }
        ++rows;
    }
    if (rows != 2 * n_trials)
        throw std::runtime_error("labels.csv: expected " + std::to_string(2 * n_trials) +
                                 " rows, found " + std::to_string(rows));
    for (int p : ds.pairing)
        if (p < 0 || p >= n_trials)
            throw std::runtime_error("labels.csv: pair_index out of range");
    return ds;
}

} // namespace dal::data
