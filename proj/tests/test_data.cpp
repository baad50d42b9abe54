#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dal/dataset.hpp"
#include "dal/words.hpp"

using namespace dal::data;
namespace fs = std::filesystem;

namespace {

GenConfig small_config() {
    GenConfig cfg;
    cfg.channels = 6;
    cfg.fs = 200;
    cfg.window_s = 1.0;
    cfg.trials_per_word = 3;
    return cfg;
}

double template_accuracy(const GenConfig& cfg, uint64_t subject_seed) {
    const auto tpl = class_templates(cfg, subject_seed);
    const auto ds = generate_subject_dataset(cfg, subject_seed);
    int hits = 0;
    for (const auto& t : ds.imagined) hits += nearest_template_label(t, tpl) == t.label;
    return 100.0 * hits / static_cast<double>(ds.imagined.size());
}

bool equal_trials(const std::vector<EEGTrial>& a, const std::vector<EEGTrial>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].values != b[i].values || a[i].label != b[i].label ||
            a[i].channels != b[i].channels || a[i].samples != b[i].samples)
            return false;
    return true;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dal_data_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

} // namespace

TEST_CASE("defaults produce the full paired dataset") {
    GenConfig cfg;
    const auto ds = generate_subject_dataset(cfg, 1);

    CHECK(ds.imagined.size() == 200);
    CHECK(ds.overt.size() == 200);
    CHECK(ds.imagined.front().channels == 58);
    CHECK(ds.imagined.front().samples == 2000);
    CHECK(ds.words.size() == 4);

    // label-major layout with trials_per_word trials per class, both conditions
    std::map<int, int> imag_count, overt_count;
    for (size_t i = 0; i < ds.imagined.size(); ++i) {
        const auto& t = ds.imagined[i];
        CHECK(t.label == static_cast<int>(i) / 50);
        CHECK(t.trial_index == static_cast<int>(i) % 50);
        CHECK(t.condition == Condition::imagined);
        ++imag_count[t.label];
    }
    for (const auto& t : ds.overt) {
        CHECK(t.condition == Condition::overt);
        ++overt_count[t.label];
    }
    for (int c = 0; c < kNumWords; ++c) {
        CHECK(imag_count[c] == 50);
        CHECK(overt_count[c] == 50);
    }

    // default pairing is by_index and label-matched everywhere
    REQUIRE(ds.pairing.size() == 200);
    int cross = 0;
    for (size_t i = 0; i < ds.pairing.size(); ++i) {
        CHECK(ds.pairing[i] == static_cast<int>(i));
        cross += ds.imagined[i].label !=
                 ds.overt[static_cast<size_t>(ds.pairing[i])].label;
    }
    CHECK(cross == 0);

    // trials are finite and non-degenerate
    for (const auto& t : {ds.imagined.front(), ds.overt.back()}) {
        double p = 0;
        for (float v : t.values) {
            CHECK(std::isfinite(v));
            p += static_cast<double>(v) * v;
        }
        CHECK(p > 0);
    }
}

TEST_CASE("generation is bitwise deterministic in (seed, subject_seed)") {
    const GenConfig cfg = small_config();
    const auto a = generate_subject_dataset(cfg, 7);
    const auto b = generate_subject_dataset(cfg, 7);
    CHECK(equal_trials(a.imagined, b.imagined));
    CHECK(equal_trials(a.overt, b.overt));
    CHECK(a.pairing == b.pairing);

    const auto c = generate_subject_dataset(cfg, 8);
    CHECK_FALSE(equal_trials(a.imagined, c.imagined));

    GenConfig other = cfg;
    other.seed = cfg.seed + 1;
    const auto d = generate_subject_dataset(other, 7);
    CHECK_FALSE(equal_trials(a.imagined, d.imagined));

    const auto t1 = class_templates(cfg, 7);
    const auto t2 = class_templates(cfg, 7);
    CHECK(t1 == t2);
}

TEST_CASE("near-noiseless trials recover their class templates") {
    GenConfig cfg;
    cfg.imagined_snr_db = 40;
    cfg.overt_snr_db = 40;
    cfg.trials_per_word = 10;
    CHECK(template_accuracy(cfg, 1) > 95.0);
}

TEST_CASE("class-average correlation peaks at the matching template") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        GenConfig cfg; // default SNRs are the point of this check
        cfg.trials_per_word = 25;
        const auto tpl = class_templates(cfg, seed);
        const auto ds = generate_subject_dataset(cfg, seed);
        const size_t m = ds.imagined.front().values.size();

        for (int c = 0; c < kNumWords; ++c) {
            std::vector<double> avg(m, 0.0);
            int n = 0;
            for (const auto& t : ds.imagined)
                if (t.label == c) {
                    for (size_t i = 0; i < m; ++i) avg[i] += t.values[i];
                    ++n;
                }
            for (auto& v : avg) v /= n;

            double own = 0, best_other = -1;
            for (int c2 = 0; c2 < kNumWords; ++c2) {
                double num = 0, na = 0, nb = 0;
                for (size_t i = 0; i < m; ++i) {
                    num += avg[i] * tpl[static_cast<size_t>(c2)][i];
                    na += avg[i] * avg[i];
                    nb += static_cast<double>(tpl[static_cast<size_t>(c2)][i]) *
                          tpl[static_cast<size_t>(c2)][i];
                }
                const double corr = std::abs(num) / std::sqrt(na * nb);
                if (c2 == c)
                    own = corr;
                else
                    best_other = std::max(best_other, corr);
            }
            INFO("seed ", seed, " class ", c, " own ", own, " other ", best_other);
            CHECK(own > best_other);
        }
    }
}

TEST_CASE("template accuracy is non-decreasing in imagined snr") {
    const double sweep[3] = {-60.0, -40.0, -25.0};
    double acc[3] = {0, 0, 0};
    for (int k = 0; k < 3; ++k) {
        for (uint64_t subj = 1; subj <= 3; ++subj) {
            GenConfig cfg;
            cfg.trials_per_word = 15;
            cfg.imagined_snr_db = sweep[k];
            cfg.overt_snr_db = sweep[k];
            acc[k] += template_accuracy(cfg, subj) / 3.0;
        }
    }
    INFO("sweep ", acc[0], " -> ", acc[1], " -> ", acc[2]);
    CHECK(acc[0] <= acc[1]);
    CHECK(acc[1] <= acc[2]);
    CHECK(acc[0] < acc[2]); // the sweep spans the transition, not a plateau
}

TEST_CASE("pairing policies") {
    const GenConfig cfg = small_config();
    const auto ds = generate_subject_dataset(cfg, 3);
    const int n = static_cast<int>(ds.imagined.size());

    SUBCASE("by_index is the identity on label-major data") {
        const auto p = pair_trials(ds, PairPolicy::by_index, 0);
        for (int i = 0; i < n; ++i) CHECK(p[static_cast<size_t>(i)] == i);
    }

    SUBCASE("random_within_class is a seeded label-preserving permutation") {
        const auto p1 = pair_trials(ds, PairPolicy::random_within_class, 42);
        const auto p2 = pair_trials(ds, PairPolicy::random_within_class, 42);
        CHECK(p1 == p2);

        // labels always match across the pair
        for (int i = 0; i < n; ++i)
            CHECK(ds.imagined[static_cast<size_t>(i)].label ==
                  ds.overt[static_cast<size_t>(p1[static_cast<size_t>(i)])].label);

        // total over imagined trials: each overt trial used exactly once
        auto sorted = p1;
        std::sort(sorted.begin(), sorted.end());
        for (int i = 0; i < n; ++i) CHECK(sorted[static_cast<size_t>(i)] == i);

        const auto p3 = pair_trials(ds, PairPolicy::random_within_class, 43);
        CHECK(p1 != p3);
    }

    SUBCASE("unequal per-class counts are rejected") {
        PairedDataset bad = ds;
        bad.overt.back().label = 0; // class 3 loses one, class 0 gains one
        CHECK_THROWS_AS(pair_trials(bad, PairPolicy::by_index, 0), std::invalid_argument);
        CHECK_THROWS_AS(pair_trials(bad, PairPolicy::random_within_class, 0),
                        std::invalid_argument);

        PairedDataset fewer = ds;
        fewer.overt.pop_back();
        CHECK_THROWS_AS(pair_trials(fewer, PairPolicy::by_index, 0), std::invalid_argument);
    }
}

TEST_CASE("config validation") {
    GenConfig cfg;
    CHECK(cfg.samples() == 2000);
    CHECK_NOTHROW(cfg.validate());

    GenConfig bad = cfg;
    bad.overt_snr_db = bad.imagined_snr_db - 1; // violates the generative premise
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS_AS(generate_subject_dataset(bad, 1), std::invalid_argument);

    GenConfig zero = cfg;
    zero.channels = 0;
    CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
    zero = cfg;
    zero.trials_per_word = 0;
    CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
    zero = cfg;
    zero.window_s = 0;
    CHECK_THROWS_AS(zero.validate(), std::invalid_argument);
}

TEST_CASE("dataset round-trips through the directory format bitwise") {
    const GenConfig cfg = small_config();
    auto ds = generate_subject_dataset(cfg, 5);
    ds.policy = PairPolicy::random_within_class;
    ds.pairing = pair_trials(ds, PairPolicy::random_within_class, 11);

    TempDir dir;
    write_dataset(ds, dir.path.string());
    CHECK(fs::exists(dir.path / "manifest.json"));
    CHECK(fs::exists(dir.path / "imagined.f32"));
    CHECK(fs::exists(dir.path / "overt.f32"));
    CHECK(fs::exists(dir.path / "labels.csv"));

    const auto rt = read_dataset(dir.path.string());
    CHECK(equal_trials(ds.imagined, rt.imagined));
    CHECK(equal_trials(ds.overt, rt.overt));
    CHECK(rt.pairing == ds.pairing);
    CHECK(rt.subject_id == ds.subject_id);
    CHECK(rt.fs == ds.fs);
    CHECK(rt.words == ds.words);
    CHECK(rt.policy == ds.policy);
    CHECK(rt.seed == ds.seed);
    CHECK(rt.subject_seed == ds.subject_seed);

    // second write of the reread dataset produces identical bytes
    TempDir dir2;
    write_dataset(rt, dir2.path.string());
    for (const char* name : {"manifest.json", "imagined.f32", "overt.f32", "labels.csv"}) {
        std::ifstream a(dir.path / name, std::ios::binary);
        std::ifstream b(dir2.path / name, std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(a)),
                             std::istreambuf_iterator<char>());
        const std::string sb((std::istreambuf_iterator<char>(b)),
                             std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
}

TEST_CASE("reader reports format violations with the offending numbers") {
    const GenConfig cfg = small_config();
    const auto ds = generate_subject_dataset(cfg, 5);
    const uint64_t bytes = static_cast<uint64_t>(ds.imagined.size()) * cfg.channels *
                           cfg.samples() * sizeof(float);

    SUBCASE("truncated binary blob") {
        TempDir dir;
        write_dataset(ds, dir.path.string());
        fs::resize_file(dir.path / "imagined.f32", bytes - 4);
        try {
            read_dataset(dir.path.string());
            FAIL("expected a format error");
        } catch (const std::runtime_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("expected " + std::to_string(bytes)) != std::string::npos);
            CHECK(msg.find("found " + std::to_string(bytes - 4)) != std::string::npos);
        }
    }

    SUBCASE("manifest channel count contradicts the blob") {
        TempDir dir;
        write_dataset(ds, dir.path.string());
        std::string manifest;
        {
            std::ifstream in(dir.path / "manifest.json");
            manifest.assign((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        }
        const std::string from = "\"channels\": " + std::to_string(cfg.channels);
        const auto at = manifest.find(from);
        REQUIRE(at != std::string::npos);
        manifest.replace(at, from.size(),
                         "\"channels\": " + std::to_string(cfg.channels - 1));
        {
            std::ofstream out(dir.path / "manifest.json");
            out << manifest;
        }
        CHECK_THROWS_AS(read_dataset(dir.path.string()), std::runtime_error);
    }

    SUBCASE("missing manifest key") {
        TempDir dir;
        write_dataset(ds, dir.path.string());
        std::string manifest;
        {
            std::ifstream in(dir.path / "manifest.json");
            manifest.assign((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        }
        const auto at = manifest.find("\"fs\"");
        REQUIRE(at != std::string::npos);
        manifest.replace(at, 4, "\"hz\"");
        {
            std::ofstream out(dir.path / "manifest.json");
            out << manifest;
        }
        try {
            read_dataset(dir.path.string());
            FAIL("expected a format error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("fs") != std::string::npos);
        }
    }

    SUBCASE("corrupted labels header") {
        TempDir dir;
        write_dataset(ds, dir.path.string());
        {
            std::ofstream out(dir.path / "labels.csv");
            out << "trial,label\n0,0\n";
        }
        CHECK_THROWS_AS(read_dataset(dir.path.string()), std::runtime_error);
    }
}

TEST_CASE("levenshtein distance") {
    CHECK(levenshtein("Ba", "Ba") == 0);
    CHECK(levenshtein("Ba", "Ku") == 2);
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("", "abc") == 3);
    CHECK(levenshtein("abc", "") == 3);
    CHECK(levenshtein("abc", "abc") == 0);
    CHECK(levenshtein("flaw", "lawn") == 2);
}

TEST_CASE("soundex codes") {
    CHECK(soundex("Robert") == "R163");
    CHECK(soundex("B") == "B000");
    CHECK(soundex("Pfister") == "P236");
    CHECK(soundex("Ashcraft") == "A261"); // h is transparent: s,c merge across it
    CHECK(soundex("Tymczak") == "T522");  // adjacent c,z merge; vowel separates k
    CHECK(soundex("Jackson") == "J250");
    CHECK(soundex("robert") == "R163"); // case-insensitive
    CHECK_THROWS_AS(soundex(""), std::invalid_argument);
    CHECK_THROWS_AS(soundex("a1"), std::invalid_argument);
    CHECK_THROWS_AS(soundex("no space"), std::invalid_argument);
}

TEST_CASE("word selection maximizes the minimum pairwise separation") {
    CHECK(word_distance("Ba", "Ku") == 3); // 2 edits + 1 soundex edit

    SUBCASE("k equal to pool size returns everything") {
        const auto sel = select_words({"Ba", "Ku", "He", "Li"}, 4);
        CHECK(sel == std::vector<std::string>{"Ba", "He", "Ku", "Li"});
    }

    SUBCASE("near-duplicates are never co-selected") {
        const auto sel = select_words({"Ba", "Bb", "Ku"}, 2);
        CHECK(sel == std::vector<std::string>{"Ba", "Ku"}); // tie vs {Bb,Ku}, lex rule
        CHECK(sel != std::vector<std::string>{"Ba", "Bb"});
    }

    SUBCASE("exact duplicates are never co-selected when alternatives exist") {
        const auto sel = select_words({"Ba", "Ba", "Ku", "Li"}, 3);
        CHECK(sel == std::vector<std::string>{"Ba", "Ku", "Li"});
    }

    SUBCASE("argument validation") {
        CHECK_THROWS_AS(select_words({"a", "b"}, 1), std::invalid_argument);
        CHECK_THROWS_AS(select_words({"a", "b"}, 3), std::invalid_argument);
    }
}

TEST_CASE("demo pool selection is stable") {
    CHECK(demo_word_pool().size() == 20);
    const auto sel = select_words(demo_word_pool(), 4);
    CHECK(sel == std::vector<std::string>{"apple", "cat", "gold", "jump"});

    // generated datasets carry exactly these words
    const auto ds = generate_subject_dataset(small_config(), 1);
    CHECK(ds.words == sel);
}
