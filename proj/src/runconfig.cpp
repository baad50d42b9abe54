#include "dal/runconfig.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>

namespace dal::cli {

using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

void check_object(const json& j, const std::string& path) {
    require(j.is_object(), "config: '" + path + "' must be a JSON object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& prefix) {
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed)
            if (key == a) {
                known = true;
                break;
            }
        if (!known) throw std::invalid_argument("config: unknown key '" + prefix + key + "'");
    }
}

// assigns j[key] into out when present, wrapping type errors with the path
template <class T>
void fetch(const json& j, const char* key, const std::string& prefix, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: bad value for '" + prefix + key +
                                    "': " + e.what());
    }
}

void parse_gen(const json& j, data::GenConfig& g) {
    check_object(j, "gen");
    check_keys(j,
               {"n_subjects", "trials_per_word", "channels", "fs", "window_s",
                "imagined_snr_db", "overt_snr_db", "template_bandwidth", "artifact_amplitude",
                "seed"},
               "gen.");
    fetch(j, "n_subjects", "gen.", g.n_subjects);
    fetch(j, "trials_per_word", "gen.", g.trials_per_word);
    fetch(j, "channels", "gen.", g.channels);
    fetch(j, "fs", "gen.", g.fs);
    fetch(j, "window_s", "gen.", g.window_s);
    fetch(j, "imagined_snr_db", "gen.", g.imagined_snr_db);
    fetch(j, "overt_snr_db", "gen.", g.overt_snr_db);
    fetch(j, "template_bandwidth", "gen.", g.template_bandwidth);
    fetch(j, "artifact_amplitude", "gen.", g.artifact_amplitude);
    fetch(j, "seed", "gen.", g.seed);
}

void parse_prep(const json& j, prep::PrepConfig& p) {
    check_object(j, "prep");
    check_keys(j, {"notch_hz", "notch_q", "target_fs", "window_s", "zscore"}, "prep.");
    fetch(j, "notch_hz", "prep.", p.notch_hz);
    fetch(j, "notch_q", "prep.", p.notch_q);
    fetch(j, "target_fs", "prep.", p.target_fs);
    fetch(j, "window_s", "prep.", p.window_s);
    fetch(j, "zscore", "prep.", p.zscore);
}

void parse_model(const json& j, model::DALConfig& m) {
    check_object(j, "model");
    json merged = model::config_to_json(model::DALConfig{});
    for (const auto& [key, value] : j.items()) {
        if (!merged.contains(key))
            throw std::invalid_argument("config: unknown key 'model." + key + "'");
    }
    merged.update(j);
    try {
        m = model::config_from_json(merged);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config: bad model section: ") + e.what());
    }
}

void parse_train(const json& j, TrainSection& t) {
    check_object(j, "train");
    check_keys(j, {"lr", "batch", "epochs", "seed"}, "train.");
    fetch(j, "lr", "train.", t.lr);
    fetch(j, "batch", "train.", t.batch);
    fetch(j, "epochs", "train.", t.epochs);
    fetch(j, "seed", "train.", t.seed);
}

void parse_cv(const json& j, CvSection& c) {
    check_object(j, "cv");
    check_keys(j, {"k", "repeats", "seed"}, "cv.");
    fetch(j, "k", "cv.", c.k);
    fetch(j, "repeats", "cv.", c.repeats);
    fetch(j, "seed", "cv.", c.seed);
}

} // namespace

void RunConfig::validate() const {
    gen.validate();
    prep.validate(gen.fs);
    require(prep.window_s <= gen.window_s,
            "config: prep.window_s exceeds the generated trial length gen.window_s");
    require(model.channels == gen.channels,
            "config: model.channels (" + std::to_string(model.channels) +
                ") must equal gen.channels (" + std::to_string(gen.channels) + ")");
    require(model.samples == prep.window_samples(),
            "config: model.samples (" + std::to_string(model.samples) +
                ") must equal the preprocessed trial length (" +
                std::to_string(prep.window_samples()) + ")");
    require(model.n_classes == 4, "config: the protocol is fixed at 4 word classes");
    require(train.lr > 0, "config: train.lr must be positive");
    require(train.batch >= 1, "config: train.batch must be at least 1");
    require(train.epochs >= 0, "config: train.epochs must be non-negative");
    require(cv.k >= 2, "config: cv.k must be at least 2");
    require(cv.repeats >= 1, "config: cv.repeats must be at least 1");
    require(gen.trials_per_word >= cv.k,
            "config: gen.trials_per_word must be at least cv.k for stratified folds");
    require(!methods.empty(), "config: methods must not be empty");
    require(!conditions.empty(), "config: conditions must not be empty");
    std::set<eval::Method> m(methods.begin(), methods.end());
    require(m.size() == methods.size(), "config: duplicate entries in methods");
    std::set<eval::Cond> c(conditions.begin(), conditions.end());
    require(c.size() == conditions.size(), "config: duplicate entries in conditions");
    require(!out_dir.empty(), "config: out_dir must not be empty");
}

RunConfig run_config_from_json(const json& j) {
    RunConfig cfg;
    check_object(j, "<root>");
    check_keys(j, {"gen", "prep", "model", "train", "cv", "methods", "conditions", "out_dir"},
               "");
    if (j.contains("gen")) parse_gen(j.at("gen"), cfg.gen);
    if (j.contains("prep")) parse_prep(j.at("prep"), cfg.prep);
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("cv")) parse_cv(j.at("cv"), cfg.cv);
    if (j.contains("methods")) {
        std::vector<std::string> names;
        fetch(j, "methods", "", names);
        cfg.methods.clear();
        for (const auto& n : names) {
            try {
                cfg.methods.push_back(eval::method_from_name(n));
            } catch (const std::exception&) {
                throw std::invalid_argument("config: unknown method '" + n +
                                            "' (expected csp_lda, eegnet, dal)");
            }
        }
    }
    if (j.contains("conditions")) {
        std::vector<std::string> names;
        fetch(j, "conditions", "", names);
        cfg.conditions.clear();
        for (const auto& n : names) {
            try {
                cfg.conditions.push_back(eval::cond_from_name(n));
            } catch (const std::exception&) {
                throw std::invalid_argument("config: unknown condition '" + n +
                                            "' (expected wo, w)");
            }
        }
    }
    fetch(j, "out_dir", "", cfg.out_dir);
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

json run_config_to_json(const RunConfig& c) {
    json j;
    j["gen"] = {{"n_subjects", c.gen.n_subjects},
                {"trials_per_word", c.gen.trials_per_word},
                {"channels", c.gen.channels},
                {"fs", c.gen.fs},
                {"window_s", c.gen.window_s},
                {"imagined_snr_db", c.gen.imagined_snr_db},
                {"overt_snr_db", c.gen.overt_snr_db},
                {"template_bandwidth", c.gen.template_bandwidth},
                {"artifact_amplitude", c.gen.artifact_amplitude},
                {"seed", c.gen.seed}};
    j["prep"] = {{"notch_hz", c.prep.notch_hz},
                 {"notch_q", c.prep.notch_q},
                 {"target_fs", c.prep.target_fs},
                 {"window_s", c.prep.window_s},
                 {"zscore", c.prep.zscore}};
    j["model"] = model::config_to_json(c.model);
    j["train"] = {{"lr", c.train.lr},
                  {"batch", c.train.batch},
                  {"epochs", c.train.epochs},
                  {"seed", c.train.seed}};
    j["cv"] = {{"k", c.cv.k}, {"repeats", c.cv.repeats}, {"seed", c.cv.seed}};
    std::vector<std::string> methods, conditions;
    for (auto m : c.methods) methods.emplace_back(eval::method_name(m));
    for (auto cc : c.conditions) conditions.emplace_back(eval::cond_name(cc));
    j["methods"] = methods;
    j["conditions"] = conditions;
    j["out_dir"] = c.out_dir;
    return j;
}

uint64_t run_config_hash(const RunConfig& c) {
    const std::string dump = run_config_to_json(c).dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

json provenance_json(const RunConfig& c) {
    char hex[19];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(run_config_hash(c)));
    json j;
    j["toolkit_version"] = kToolkitVersion;
    j["config_hash"] = std::string(hex);
    j["seeds"] = {{"gen", c.gen.seed}, {"train", c.train.seed}, {"cv", c.cv.seed}};
    return j;
}

} // namespace dal::cli
