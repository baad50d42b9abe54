#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dal/dataset.hpp"
#include "dal/model.hpp"
#include "json.hpp"

namespace dal::eval {

// ---------------------------------------------------------------------------
// protocol types

enum class Method { csp_lda, eegnet, dal };
enum class Cond { wo, w };

const char* method_name(Method m);
const char* cond_name(Cond c);
Method method_from_name(const std::string& s);
Cond cond_from_name(const std::string& s);

// Stratified k-fold assignments, one per repeat; fold_of[r][i] is trial i's
// validation fold in repeat r.
struct CVPlan {
    int k = 5;
    int repeats = 4;
    uint64_t base_seed = 0;
    std::vector<std::vector<int>> fold_of;
};

// Per repeat r: shuffle each class's indices with seed base_seed + r, then
// deal them round-robin over the k folds. Every class count must be >= k.
CVPlan make_cv_splits(const std::vector<int>& labels, int k = 5, int repeats = 4,
                      uint64_t base_seed = 0);

struct FoldResult {
    int subject = 0;
    std::string method;
    std::string condition; // "wo" | "w"
    int repeat = 0;
    int fold = 0;
    double accuracy = 0.0;                  // in [0,1]
    std::vector<std::vector<int>> confusion; // [target][prediction] counts
    bool failed = false;
    std::string error; // diagnostics when failed
};

// counts[t][p] over equal-length prediction/target vectors
std::vector<std::vector<int>> confusion_matrix(const std::vector<int>& preds,
                                               const std::vector<int>& targets, int n_classes);

// Divides each row by its sum; all-zero rows stay zero.
std::vector<std::vector<double>> row_normalize(const std::vector<std::vector<int>>& counts);

// ---------------------------------------------------------------------------
// experiment execution

// A driver trains on the imagined-trial indices in `train_idx` (pulling
// paired overt trials through `ds` itself when the condition asks for them)
// and returns predicted labels for `val_idx`, in order.
using MethodDriver = std::function<std::vector<int>(
    const data::PairedDataset& ds, const std::vector<int>& train_idx,
    const std::vector<int>& val_idx, Cond cond, uint64_t fold_seed)>;

// Knobs shared by the trainable methods; defaults follow the build contract.
struct TrainConfig {
    double lr = 1e-3;
    int batch = 16;
    int epochs = 100;
    uint64_t seed = 0;
    model::DALConfig model;
    int csp_m = 4;
    double lda_gamma = 0.1;
};

MethodDriver make_method_driver(Method m, const TrainConfig& tc);

// Runs every (repeat, fold) cell of the plan: train on the other folds,
// evaluate accuracy and confusion on the imagined-only validation fold.
// A driver exception marks that fold failed and the run continues. Results
// come back in (repeat, fold) order regardless of `jobs`.
std::vector<FoldResult> run_experiment(const data::PairedDataset& ds, const MethodDriver& driver,
                                       const std::string& method_label, Cond cond,
                                       const CVPlan& plan, uint64_t train_seed,
                                       int n_classes = 4, int jobs = 1);

// Convenience overload wiring the real driver for the method.
std::vector<FoldResult> run_experiment(const data::PairedDataset& ds, Method m, Cond cond,
                                       const CVPlan& plan, const TrainConfig& tc, int jobs = 1);

// ---------------------------------------------------------------------------
// aggregation

struct MethodSummary {
    std::string method;
    std::string condition;
    std::vector<int> subjects;            // ascending
    std::vector<double> per_subject_mean; // mean fold accuracy per subject
    double group_mean = 0.0;
    double group_std = 0.0; // sample std, n-1 denominator
    bool std_defined = false;
    int failed_folds = 0;
};

// Mean over each subject's successful folds, then mean/std across subjects.
// Mixing methods or conditions in one call is an error.
MethodSummary aggregate_results(const std::vector<FoldResult>& folds);

// mean(w/) - mean(w/o); both summaries must be the same method.
double improvement(const MethodSummary& with_overt, const MethodSummary& without_overt);

nlohmann::json summary_to_json(const MethodSummary& s);

// ---------------------------------------------------------------------------
// results file

// One CSV row per successful FoldResult:
// subject,method,condition,repeat,fold,accuracy,c00..c33 (4x4 counts).
// Failed folds carry no accuracy or confusion and are never written.
void write_results_csv(const std::string& path, const std::vector<FoldResult>& rows);
std::vector<FoldResult> read_results_csv(const std::string& path);

} // namespace dal::eval
