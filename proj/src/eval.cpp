#include "dal/eval.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dal/baselines.hpp"
#include "dal/bundle.hpp"
#include "dal/rng.hpp"

namespace dal::eval {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

} // namespace

// ---------------------------------------------------------------------------
// protocol types

const char* method_name(Method m) {
    switch (m) {
    case Method::csp_lda: return "csp_lda";
    case Method::eegnet: return "eegnet";
    case Method::dal: return "dal";
    }
    throw std::invalid_argument("method_name: unknown method");
}

const char* cond_name(Cond c) {
    switch (c) {
    case Cond::wo: return "wo";
    case Cond::w: return "w";
    }
    throw std::invalid_argument("cond_name: unknown condition");
}

Method method_from_name(const std::string& s) {
    if (s == "csp_lda") return Method::csp_lda;
    if (s == "eegnet") return Method::eegnet;
    if (s == "dal") return Method::dal;
    throw std::invalid_argument("unknown method name: " + s);
}

Cond cond_from_name(const std::string& s) {
    if (s == "wo") return Cond::wo;
    if (s == "w") return Cond::w;
    throw std::invalid_argument("unknown condition name: " + s);
}

CVPlan make_cv_splits(const std::vector<int>& labels, int k, int repeats, uint64_t base_seed) {
    require(!labels.empty(), "make_cv_splits: no trials");
    require(k >= 2, "make_cv_splits: k must be at least 2");
    require(repeats >= 1, "make_cv_splits: repeats must be at least 1");

    int n_classes = 0;
    for (int l : labels) {
        require(l >= 0, "make_cv_splits: negative label");
        n_classes = std::max(n_classes, l + 1);
    }
    std::vector<std::vector<int>> by_class(n_classes);
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
    for (int c = 0; c < n_classes; ++c) {
        require(static_cast<int>(by_class[c].size()) >= k,
                "make_cv_splits: class " + std::to_string(c) + " has " +
                    std::to_string(by_class[c].size()) + " trials; " + std::to_string(k) +
                    "-fold needs at least " + std::to_string(k) + " per class");
    }

    CVPlan plan;
    plan.k = k;
    plan.repeats = repeats;
    plan.base_seed = base_seed;
    plan.fold_of.assign(repeats, std::vector<int>(labels.size(), -1));
    for (int r = 0; r < repeats; ++r) {
        Rng rng(base_seed + static_cast<uint64_t>(r));
        for (int c = 0; c < n_classes; ++c) {
            std::vector<int> order = by_class[c];
            rng.shuffle(order);
            // round-robin deal: every fold gets floor or ceil of the class count
            for (size_t pos = 0; pos < order.size(); ++pos)
                plan.fold_of[r][order[pos]] = static_cast<int>(pos % k);
        }
    }
    return plan;
}

std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& preds,
                                               const std::vector<int>& targets, int n_classes) {
    require(n_classes >= 1, "confusion_matrix: n_classes must be positive");
    require(preds.size() == targets.size(),
            "confusion_matrix: prediction/target length mismatch");
    std::vector<std::vector<int>> counts(n_classes, std::vector<int>(n_classes, 0));
    for (size_t i = 0; i < preds.size(); ++i) {
        require(targets[i] >= 0 && targets[i] < n_classes, "confusion_matrix: target out of range");
        require(preds[i] >= 0 && preds[i] < n_classes, "confusion_matrix: prediction out of range");
        counts[targets[i]][preds[i]] += 1;
    }
    return counts;
}

std::vector<std::vector<double>> row_normalize(const std::vector<std::vector<int>>& counts) {
    std::vector<std::vector<double>> rates(counts.size());
    for (size_t t = 0; t < counts.size(); ++t) {
        require(counts[t].size() == counts.size(), "row_normalize: matrix must be square");
        long long total = 0;
        for (int v : counts[t]) {
            require(v >= 0, "row_normalize: negative count");
            total += v;
        }
        rates[t].resize(counts[t].size(), 0.0);
        if (total == 0) continue; // an unseen class keeps an all-zero row
        for (size_t p = 0; p < counts[t].size(); ++p)
            rates[t][p] = static_cast<double>(counts[t][p]) / static_cast<double>(total);
    }
    return rates;
}

// ---------------------------------------------------------------------------
// experiment execution

namespace {

uint64_t fold_seed_of(uint64_t train_seed, int k, int repeat, int fold) {
    // one hashed draw per cell so fold seeds never collide across the grid
    return Rng(train_seed, static_cast<uint64_t>(repeat) * static_cast<uint64_t>(k) +
                               static_cast<uint64_t>(fold))
        .next_u64();
}

ad::Tensor<float> stack_trials(const std::vector<const data::EEGTrial*>& trials) {
    require(!trials.empty(), "stack_trials: empty batch");
    const int channels = trials[0]->channels;
    const int samples = trials[0]->samples;
    std::vector<float> buf;
    buf.reserve(trials.size() * static_cast<size_t>(channels) * samples);
    for (const data::EEGTrial* t : trials) {
        require(t->channels == channels && t->samples == samples,
                "stack_trials: trial geometry mismatch");
        buf.insert(buf.end(), t->values.begin(), t->values.end());
    }
    return ad::Tensor<float>::from(
        ad::Shape({static_cast<int>(trials.size()), 1, channels, samples}), std::move(buf));
}

ad::Tensor<float> onehot_of(const std::vector<const data::EEGTrial*>& trials, int n_classes) {
    std::vector<float> buf(trials.size() * static_cast<size_t>(n_classes), 0.0f);
    for (size_t i = 0; i < trials.size(); ++i) {
        require(trials[i]->label >= 0 && trials[i]->label < n_classes,
                "onehot_of: label out of range");
        buf[i * n_classes + trials[i]->label] = 1.0f;
    }
    return ad::Tensor<float>::from(ad::Shape({static_cast<int>(trials.size()), n_classes}),
                                   std::move(buf));
}

bl::TrialView view_of(const data::EEGTrial& t) {
    return bl::TrialView{t.values.data(), t.channels, t.samples};
}

std::vector<int> drive_csp_lda(const data::PairedDataset& ds, const std::vector<int>& train_idx,
                               const std::vector<int>& val_idx, Cond cond,
                               const TrainConfig& tc) {
    const int n_classes = static_cast<int>(ds.words.size());
    auto train_trials = bl::baseline_with_overt(ds, train_idx, cond == Cond::w);

    std::vector<std::vector<bl::TrialView>> by_class(n_classes);
    for (const data::EEGTrial* t : train_trials) by_class[t->label].push_back(view_of(*t));
    bl::CSPModel csp = bl::csp_fit(by_class, tc.csp_m);

    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    feats.reserve(train_trials.size());
    labels.reserve(train_trials.size());
    for (const data::EEGTrial* t : train_trials) {
        feats.push_back(bl::csp_features(view_of(*t), csp));
        labels.push_back(t->label);
    }
    bl::LDAModel lda = bl::lda_fit(feats, labels, tc.lda_gamma);

    std::vector<int> preds;
    preds.reserve(val_idx.size());
    for (int i : val_idx)
        preds.push_back(bl::lda_predict(lda, bl::csp_features(view_of(ds.imagined[i]), csp)).label);
    return preds;
}

std::vector<int> drive_eegnet(const data::PairedDataset& ds, const std::vector<int>& train_idx,
                              const std::vector<int>& val_idx, Cond cond, uint64_t fold_seed,
                              const TrainConfig& tc) {
    const int n_classes = tc.model.n_classes;
    auto train_trials = bl::baseline_with_overt(ds, train_idx, cond == Cond::w);

    auto params = bl::init_eegnet_params<float>(tc.model, fold_seed);
    ad::Adam<float> opt(params.trainables(), static_cast<float>(tc.lr));
    Rng order_rng(fold_seed, 1);
    Rng drop_rng(fold_seed, 2);

    std::vector<int> order(train_trials.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += tc.batch) {
            const size_t stop = std::min(order.size(), start + tc.batch);
            std::vector<const data::EEGTrial*> batch;
            batch.reserve(stop - start);
            for (size_t j = start; j < stop; ++j) batch.push_back(train_trials[order[j]]);
            bl::eegnet_train_step(stack_trials(batch), onehot_of(batch, n_classes), params,
                                  tc.model, opt, drop_rng);
        }
    }

    std::vector<const data::EEGTrial*> val_trials;
    val_trials.reserve(val_idx.size());
    for (int i : val_idx) val_trials.push_back(&ds.imagined[i]);
    return bl::eegnet_predict(stack_trials(val_trials), params, tc.model);
}

std::vector<int> drive_dal(const data::PairedDataset& ds, const std::vector<int>& train_idx,
                           const std::vector<int>& val_idx, Cond cond, uint64_t fold_seed,
                           const TrainConfig& tc) {
    const int n_classes = tc.model.n_classes;
    const model::DALVariant variant = model::dal_variant(tc.model, cond == Cond::w);

    auto params = model::init_dal_params<float>(tc.model, fold_seed);
    ad::Adam<float> opt(params.trainables(), static_cast<float>(tc.lr));
    Rng order_rng(fold_seed, 1);
    Rng drop_rng(fold_seed, 2);

    std::vector<int> order = train_idx;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += tc.batch) {
            const size_t stop = std::min(order.size(), start + tc.batch);
            std::vector<const data::EEGTrial*> imag, overt;
            imag.reserve(stop - start);
            overt.reserve(stop - start);
            for (size_t j = start; j < stop; ++j) {
                const int i = order[j];
                imag.push_back(&ds.imagined[i]);
                if (variant.use_overt) overt.push_back(&ds.overt[ds.pairing[i]]);
            }
            ad::Tensor<float> overt_batch; // stays undefined for the w/o variant
            if (variant.use_overt) overt_batch = stack_trials(overt);
            model::dal_train_step(stack_trials(imag), onehot_of(imag, n_classes), overt_batch,
                                  params, variant, opt, drop_rng);
        }
    }

    std::vector<const data::EEGTrial*> val_trials;
    val_trials.reserve(val_idx.size());
    for (int i : val_idx) val_trials.push_back(&ds.imagined[i]);
    return model::dal_predict(stack_trials(val_trials), params, tc.model);
}

} // namespace

MethodDriver make_method_driver(Method m, const TrainConfig& tc) {
    require(tc.batch >= 1, "make_method_driver: batch size must be at least 1");
    require(tc.epochs >= 0, "make_method_driver: negative epoch count");
    require(tc.lr > 0, "make_method_driver: learning rate must be positive");
    switch (m) {
    case Method::csp_lda:
        return [tc](const data::PairedDataset& ds, const std::vector<int>& train,
                    const std::vector<int>& val, Cond cond, uint64_t) {
            return drive_csp_lda(ds, train, val, cond, tc);
        };
    case Method::eegnet:
        return [tc](const data::PairedDataset& ds, const std::vector<int>& train,
                    const std::vector<int>& val, Cond cond, uint64_t fold_seed) {
            return drive_eegnet(ds, train, val, cond, fold_seed, tc);
        };
    case Method::dal:
        return [tc](const data::PairedDataset& ds, const std::vector<int>& train,
                    const std::vector<int>& val, Cond cond, uint64_t fold_seed) {
            return drive_dal(ds, train, val, cond, fold_seed, tc);
        };
    }
    throw std::invalid_argument("make_method_driver: unknown method");
}

std::vector<FoldResult> run_experiment(const data::PairedDataset& ds, const MethodDriver& driver,
                                       const std::string& method_label, Cond cond,
                                       const CVPlan& plan, uint64_t train_seed, int n_classes,
                                       int jobs) {
    const size_t n = ds.imagined.size();
    require(n > 0, "run_experiment: dataset has no imagined trials");
    require(plan.repeats >= 1 && static_cast<size_t>(plan.repeats) == plan.fold_of.size(),
            "run_experiment: plan repeat count does not match its fold table");
    require(n_classes >= 2, "run_experiment: need at least two classes");
    for (const auto& row : plan.fold_of)
        require(row.size() == n, "run_experiment: plan covers a different trial count");
    for (const data::EEGTrial& t : ds.imagined)
        require(t.label >= 0 && t.label < n_classes, "run_experiment: trial label out of range");

    struct Cell {
        int repeat, fold;
        std::vector<int> train, val;
    };
    std::vector<Cell> cells;
    cells.reserve(static_cast<size_t>(plan.repeats) * plan.k);
    for (int r = 0; r < plan.repeats; ++r) {
        for (int f = 0; f < plan.k; ++f) {
            Cell cell{r, f, {}, {}};
            for (size_t i = 0; i < n; ++i) {
                const int assigned = plan.fold_of[r][i];
                require(assigned >= 0 && assigned < plan.k,
                        "run_experiment: fold assignment out of range");
                (assigned == f ? cell.val : cell.train).push_back(static_cast<int>(i));
            }
            require(!cell.val.empty(), "run_experiment: empty validation fold");
            require(!cell.train.empty(), "run_experiment: empty training fold");
            // leakage guard: no index may sit on both sides of the split
            std::vector<char> in_val(n, 0);
            for (int i : cell.val) in_val[i] = 1;
            for (int i : cell.train)
                if (in_val[i])
                    throw std::logic_error("run_experiment: trial " + std::to_string(i) +
                                           " leaked into both training and validation");
            require(cell.train.size() + cell.val.size() == n,
                    "run_experiment: split does not cover every trial");
            cells.push_back(std::move(cell));
        }
    }

    std::vector<FoldResult> results(cells.size());
    auto run_cell = [&](size_t idx) {
        const Cell& cell = cells[idx];
        FoldResult res;
        res.subject = ds.subject_id;
        res.method = method_label;
        res.condition = cond_name(cond);
        res.repeat = cell.repeat;
        res.fold = cell.fold;
        try {
            const uint64_t seed = fold_seed_of(train_seed, plan.k, cell.repeat, cell.fold);
            std::vector<int> preds = driver(ds, cell.train, cell.val, cond, seed);
            if (preds.size() != cell.val.size())
                throw std::runtime_error("driver returned " + std::to_string(preds.size()) +
                                         " predictions for " + std::to_string(cell.val.size()) +
                                         " validation trials");
            std::vector<int> targets;
            targets.reserve(cell.val.size());
            for (int i : cell.val) targets.push_back(ds.imagined[i].label);
            res.confusion = confusion_matrix(preds, targets, n_classes);
            int correct = 0;
            for (int c = 0; c < n_classes; ++c) correct += res.confusion[c][c];
            res.accuracy = static_cast<double>(correct) / static_cast<double>(cell.val.size());
        } catch (const std::exception& e) {
            res.failed = true;
            res.error = e.what();
            res.accuracy = 0.0;
            res.confusion.clear();
        }
        results[idx] = std::move(res);
    };

    const int workers = std::clamp<int>(jobs, 1, static_cast<int>(cells.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < cells.size(); ++i) run_cell(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1))
                    run_cell(i);
            });
        for (std::thread& t : pool) t.join();
    }
    return results;
}

std::vector<FoldResult> run_experiment(const data::PairedDataset& ds, Method m, Cond cond,
                                       const CVPlan& plan, const TrainConfig& tc, int jobs) {
    return run_experiment(ds, make_method_driver(m, tc), method_name(m), cond, plan, tc.seed,
                          tc.model.n_classes, jobs);
}

// ---------------------------------------------------------------------------
// aggregation

MethodSummary aggregate_results(const std::vector<FoldResult>& folds) {
    require(!folds.empty(), "aggregate_results: no fold results");
    MethodSummary s;
    s.method = folds[0].method;
    s.condition = folds[0].condition;

    std::map<int, std::pair<double, int>> by_subject; // subject -> (sum, count)
    for (const FoldResult& f : folds) {
        require(f.method == s.method && f.condition == s.condition,
                "aggregate_results: mixed methods or conditions; aggregate one cell at a time");
        if (f.failed) {
            ++s.failed_folds;
            continue;
        }
        auto& acc = by_subject[f.subject];
        acc.first += f.accuracy;
        acc.second += 1;
    }
    require(!by_subject.empty(), "aggregate_results: every fold failed");

    for (const auto& [subject, acc] : by_subject) {
        s.subjects.push_back(subject);
        s.per_subject_mean.push_back(acc.first / acc.second);
    }
    const double n = static_cast<double>(s.per_subject_mean.size());
    s.group_mean =
        std::accumulate(s.per_subject_mean.begin(), s.per_subject_mean.end(), 0.0) / n;
    if (s.per_subject_mean.size() >= 2) {
        double ss = 0.0;
        for (double v : s.per_subject_mean) ss += (v - s.group_mean) * (v - s.group_mean);
        s.group_std = std::sqrt(ss / (n - 1.0));
        s.std_defined = true;
    }
    return s;
}

double improvement(const MethodSummary& with_overt, const MethodSummary& without_overt) {
    require(with_overt.method == without_overt.method,
            "improvement: summaries compare different methods");
    require(with_overt.condition == "w" && without_overt.condition == "wo",
            "improvement: expected a w/ summary and a w/o summary");
    return with_overt.group_mean - without_overt.group_mean;
}

nlohmann::json summary_to_json(const MethodSummary& s) {
    nlohmann::json j;
    j["method"] = s.method;
    j["condition"] = s.condition;
    j["subjects"] = s.subjects;
    j["per_subject_mean"] = s.per_subject_mean;
    j["avg"] = s.group_mean;
    j["std"] = s.std_defined ? nlohmann::json(s.group_std) : nlohmann::json();
    j["std_defined"] = s.std_defined;
    j["failed_folds"] = s.failed_folds;
    return j;
}

// ---------------------------------------------------------------------------
// results file

namespace {

constexpr int kCsvClasses = 4;

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("results csv: accuracy formatting failed");
    return std::string(buf, ptr);
}

std::string csv_header() {
    std::string h = "subject,method,condition,repeat,fold,accuracy";
    for (int t = 0; t < kCsvClasses; ++t)
        for (int p = 0; p < kCsvClasses; ++p)
            h += ",c" + std::to_string(t) + std::to_string(p);
    return h;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

long long parse_int(const std::string& s, const std::string& what) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error("results csv: bad " + what + ": '" + s + "'");
    return v;
}

double parse_double(const std::string& s, const std::string& what) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error("results csv: bad " + what + ": '" + s + "'");
    return v;
}

} // namespace

void write_results_csv(const std::string& path, const std::vector<FoldResult>& rows) {
    std::string out = csv_header() + "\n";
    for (const FoldResult& r : rows) {
        if (r.failed) continue; // failures are reported upstream, never serialized as data
        require(r.confusion.size() == static_cast<size_t>(kCsvClasses),
                "results csv: the row format is fixed at " + std::to_string(kCsvClasses) +
                    " classes");
        require(r.method.find_first_of(",\n") == std::string::npos &&
                    r.condition.find_first_of(",\n") == std::string::npos,
                "results csv: method/condition may not contain separators");
        out += std::to_string(r.subject) + "," + r.method + "," + r.condition + "," +
               std::to_string(r.repeat) + "," + std::to_string(r.fold) + "," +
               format_double(r.accuracy);
        for (const auto& row : r.confusion) {
            require(row.size() == static_cast<size_t>(kCsvClasses),
                    "results csv: confusion matrix must be square");
            for (int v : row) out += "," + std::to_string(v);
        }
        out += "\n";
    }
    io::atomic_write(path, out);
}

std::vector<FoldResult> read_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("results csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("results csv: empty file " + path);
    if (line == csv_header() + "\r") line.pop_back();
    if (line != csv_header())
        throw std::runtime_error("results csv: unexpected header in " + path);

    const size_t n_fields = 6 + static_cast<size_t>(kCsvClasses) * kCsvClasses;
    std::vector<FoldResult> rows;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f = split_csv_line(line);
        if (f.size() != n_fields)
            throw std::runtime_error("results csv: line " + std::to_string(line_no) + " has " +
                                     std::to_string(f.size()) + " fields, expected " +
                                     std::to_string(n_fields));
        FoldResult r;
        r.subject = static_cast<int>(parse_int(f[0], "subject"));
        r.method = f[1];
        r.condition = f[2];
        r.repeat = static_cast<int>(parse_int(f[3], "repeat"));
        r.fold = static_cast<int>(parse_int(f[4], "fold"));
        r.accuracy = parse_double(f[5], "accuracy");
        r.confusion.assign(kCsvClasses, std::vector<int>(kCsvClasses, 0));
        for (int t = 0; t < kCsvClasses; ++t)
            for (int p = 0; p < kCsvClasses; ++p)
                r.confusion[t][p] =
                    static_cast<int>(parse_int(f[6 + t * kCsvClasses + p], "confusion count"));
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace dal::eval
