#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dal/dataset.hpp"
#include "dal/eval.hpp"
#include "dal/model.hpp"
#include "dal/signal.hpp"
#include "json.hpp"

namespace dal::cli {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct TrainSection {
    double lr = 1e-3;
    int batch = 16;
    // The paper-era value is 100; the default is sized so the full default
    // protocol (8 subjects x 3 methods x 2 conditions x 20 folds) fits the
    // toolkit's desk-scale runtime budget. One config edit restores 100.
    int epochs = 12;
    uint64_t seed = 1;
};

struct CvSection {
    int k = 5;
    int repeats = 4;
    uint64_t seed = 1;
};

// The whole run, one JSON file: sections default to the published protocol
// and unknown keys are rejected by name.
struct RunConfig {
    data::GenConfig gen;
    prep::PrepConfig prep;
    model::DALConfig model;
    TrainSection train;
    CvSection cv;
    std::vector<eval::Method> methods = {eval::Method::csp_lda, eval::Method::eegnet,
                                         eval::Method::dal};
    std::vector<eval::Cond> conditions = {eval::Cond::wo, eval::Cond::w};
    std::string out_dir = "out";

    // Cross-section coherence: the model geometry must equal the preprocessed
    // trial geometry, and every section must satisfy its own invariants.
    void validate() const;
};

// Strict parse: every key optional, unknown keys rejected with their path.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

// Canonical echo with every resolved field present (keys sorted by nlohmann).
nlohmann::json run_config_to_json(const RunConfig& c);

// FNV-1a over the canonical dump; stable across runs and platforms.
uint64_t run_config_hash(const RunConfig& c);

// Provenance block embedded in run and report outputs.
nlohmann::json provenance_json(const RunConfig& c);

} // namespace dal::cli
