#include "dal/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dal/bundle.hpp"
#include "dal/stats.hpp"

namespace dal::report {

using eval::FoldResult;
using eval::MethodSummary;
using nlohmann::json;

namespace {

constexpr double kChance = 0.25; // 4-class protocol

int method_rank(const std::string& m) {
    if (m == "csp_lda") return 0;
    if (m == "eegnet") return 1;
    if (m == "dal") return 2;
    return 3; // injected/diagnostic labels sort after the protocol methods
}

int cond_rank(const std::string& c) {
    if (c == "wo") return 0;
    if (c == "w") return 1;
    return 2;
}

struct CellKey {
    std::string method, condition;
    bool operator<(const CellKey& o) const {
        if (int d = method_rank(method) - method_rank(o.method); d != 0) return d < 0;
        if (method != o.method) return method < o.method;
        if (int d = cond_rank(condition) - cond_rank(o.condition); d != 0) return d < 0;
        return condition < o.condition;
    }
};

std::map<CellKey, std::vector<FoldResult>> split_cells(const std::vector<FoldResult>& rows) {
    std::map<CellKey, std::vector<FoldResult>> cells;
    for (const FoldResult& r : rows) cells[{r.method, r.condition}].push_back(r);
    return cells;
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

// aggregate or report the cell as fully failed
struct CellStats {
    bool defined = false;
    MethodSummary summary;
    int failed_folds = 0;
};

CellStats cell_stats(const std::vector<FoldResult>& rows) {
    CellStats c;
    try {
        c.summary = eval::aggregate_results(rows);
        c.failed_folds = c.summary.failed_folds;
        c.defined = true;
    } catch (const std::exception&) {
        c.defined = false;
        for (const auto& r : rows) c.failed_folds += r.failed;
    }
    return c;
}

std::string svg_chart(const std::vector<std::pair<CellKey, double>>& cell_means) {
    // bar heights are cell means divided by the grand mean across cells
    double grand = 0;
    for (const auto& [key, mean] : cell_means) grand += mean;
    grand /= static_cast<double>(cell_means.size());

    std::vector<double> norms;
    for (const auto& [key, mean] : cell_means) norms.push_back(mean / grand);
    const double chance_norm = kChance / grand;

    double peak = chance_norm;
    for (double v : norms) peak = std::max(peak, v);
    const double y_max = peak * 1.15;

    const int width = 640, height = 360;
    const int ml = 56, mr = 16, mt = 40, mb = 56;
    const double plot_w = width - ml - mr, plot_h = height - mt - mb;
    auto y_of = [&](double v) { return mt + plot_h * (1.0 - v / y_max); };

    const int n = static_cast<int>(cell_means.size());
    const double slot = plot_w / n;
    const double bar_w = slot * 0.6;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    s << "  <rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    s << "  <text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">Accuracy normalized to the grand mean "
         "of all method-condition cells</text>\n";

    // y axis with ticks every 0.25 normalized units
    s << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << (mt + static_cast<int>(plot_h)) << "\" stroke=\"black\"/>\n";
    for (double tick = 0.0; tick <= y_max + 1e-9; tick += 0.25) {
        const double y = y_of(tick);
        s << "  <line x1=\"" << (ml - 4) << "\" y1=\"" << fixed2(y) << "\" x2=\"" << ml
          << "\" y2=\"" << fixed2(y) << "\" stroke=\"black\"/>\n";
        s << "  <text x=\"" << (ml - 8) << "\" y=\"" << fixed2(y + 4)
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
          << fixed2(tick) << "</text>\n";
    }
    s << "  <line x1=\"" << ml << "\" y1=\"" << (mt + static_cast<int>(plot_h)) << "\" x2=\""
      << (width - mr) << "\" y2=\"" << (mt + static_cast<int>(plot_h))
      << "\" stroke=\"black\"/>\n";

    for (int i = 0; i < n; ++i) {
        const auto& [key, mean] = cell_means[i];
        const double x0 = ml + slot * i + (slot - bar_w) / 2;
        const double y0 = y_of(norms[i]);
        const double h = mt + plot_h - y0;
        const char* fill = key.condition == "w" ? "#4472a8" : "#9ec3e6";
        s << "  <rect x=\"" << fixed2(x0) << "\" y=\"" << fixed2(y0) << "\" width=\""
          << fixed2(bar_w) << "\" height=\"" << fixed2(h) << "\" fill=\"" << fill << "\"/>\n";
        s << "  <text x=\"" << fixed2(x0 + bar_w / 2) << "\" y=\"" << fixed2(y0 - 5)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
          << fixed2(norms[i]) << "</text>\n";
        s << "  <text x=\"" << fixed2(ml + slot * i + slot / 2) << "\" y=\""
          << (mt + static_cast<int>(plot_h) + 16)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
          << key.method << "</text>\n";
        s << "  <text x=\"" << fixed2(ml + slot * i + slot / 2) << "\" y=\""
          << (mt + static_cast<int>(plot_h) + 30)
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
          << (key.condition == "w" ? "w/ overt" : "w/o overt") << "</text>\n";
    }

    // chance line: 0.25 accuracy on the same normalized axis
    const double cy = y_of(chance_norm);
    s << "  <line x1=\"" << ml << "\" y1=\"" << fixed2(cy) << "\" x2=\"" << (width - mr)
      << "\" y2=\"" << fixed2(cy)
      << "\" stroke=\"#c0392b\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
    s << "  <text x=\"" << (width - mr - 4) << "\" y=\"" << fixed2(cy - 6)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
         "fill=\"#c0392b\">chance ("
      << fixed2(kChance) << ")</text>\n";
    s << "</svg>\n";
    return s.str();
}

} // namespace

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    std::string out(buf);
    if (out == "-0.00") out = "0.00";
    return out;
}

nlohmann::json stats_from_rows(const std::vector<FoldResult>& rows) {
    auto cells = split_cells(rows);
    if (cells.size() < 2) return json{{"skipped", "fewer than two method-condition cells"}};

    std::vector<std::string> names;
    std::vector<std::vector<double>> groups; // per-subject means, percent scale
    std::vector<int> ref_subjects;
    std::vector<std::string> cell_methods, cell_conds;
    for (const auto& [key, cell_rows] : cells) {
        CellStats c = cell_stats(cell_rows);
        if (!c.defined) return json{{"skipped", "a cell has no successful folds"}};
        if (ref_subjects.empty()) ref_subjects = c.summary.subjects;
        if (c.summary.subjects != ref_subjects)
            return json{{"skipped", "cells cover different subject sets"}};
        std::vector<double> pct;
        for (double v : c.summary.per_subject_mean) pct.push_back(100.0 * v);
        names.push_back(key.method + "_" + key.condition);
        groups.push_back(std::move(pct));
        cell_methods.push_back(key.method);
        cell_conds.push_back(key.condition);
    }
    if (ref_subjects.size() < 3) return json{{"skipped", "fewer than three subjects"}};

    // paired contrasts: (wo, w) per method present in both conditions
    std::vector<std::pair<int, int>> contrasts;
    for (size_t i = 0; i < names.size(); ++i) {
        if (cell_conds[i] != "wo") continue;
        for (size_t k = 0; k < names.size(); ++k)
            if (cell_methods[k] == cell_methods[i] && cell_conds[k] == "w")
                contrasts.emplace_back(static_cast<int>(i), static_cast<int>(k));
    }

    try {
        return stats::run_battery(names, groups, contrasts).to_json();
    } catch (const std::exception& e) {
        return json{{"skipped", std::string("battery failed: ") + e.what()}};
    }
}

ReportFiles generate_report(const std::vector<FoldResult>& rows, const json& provenance) {
    if (rows.empty()) throw std::invalid_argument("report: no fold results");
    auto cells = split_cells(rows);

    json table = json::array();
    json improvement = json::array();
    std::vector<std::pair<CellKey, double>> cell_means;
    std::map<std::string, std::pair<double, double>> method_avgs; // method -> (wo, w) rounded
    std::map<std::string, int> method_have;                       // bit 1 = wo, bit 2 = w

    for (const auto& [key, cell_rows] : cells) {
        CellStats c = cell_stats(cell_rows);
        json entry;
        entry["method"] = key.method;
        entry["condition"] = key.condition;
        entry["failed_folds"] = c.failed_folds;
        if (c.defined) {
            json per_subject = json::object();
            for (size_t i = 0; i < c.summary.subjects.size(); ++i)
                per_subject[std::to_string(c.summary.subjects[i])] =
                    fixed2(100.0 * c.summary.per_subject_mean[i]);
            entry["per_subject"] = per_subject;
            entry["n_subjects"] = c.summary.subjects.size();
            entry["avg"] = fixed2(100.0 * c.summary.group_mean);
            entry["std"] =
                c.summary.std_defined ? json(fixed2(100.0 * c.summary.group_std)) : json();
            cell_means.emplace_back(key, c.summary.group_mean);

            auto& avgs = method_avgs[key.method];
            if (key.condition == "wo") {
                avgs.first = round2(100.0 * c.summary.group_mean);
                method_have[key.method] |= 1;
            } else if (key.condition == "w") {
                avgs.second = round2(100.0 * c.summary.group_mean);
                method_have[key.method] |= 2;
            }
        } else {
            entry["per_subject"] = json::object();
            entry["n_subjects"] = 0;
            entry["avg"] = json();
            entry["std"] = json();
        }
        table.push_back(entry);
    }

    // improvements in the table's method order, from the 2-decimal averages
    {
        std::set<std::string> done;
        for (const auto& [key, cell_rows] : cells) {
            if (done.count(key.method)) continue;
            done.insert(key.method);
            if (method_have[key.method] != 3) continue;
            const auto& [wo_avg, w_avg] = method_avgs[key.method];
            improvement.push_back({{"method", key.method},
                                   {"wo_avg", fixed2(wo_avg)},
                                   {"w_avg", fixed2(w_avg)},
                                   {"delta", fixed2(w_avg - wo_avg)}});
        }
    }

    json report;
    report["provenance"] = provenance;
    report["chance"] = kChance;
    report["table"] = table;
    report["improvement"] = improvement;
    report["stats"] = stats_from_rows(rows);

    ReportFiles out;
    out.files.emplace_back("report.json", report.dump(2) + "\n");

    // per-cell row-normalized confusion matrices, percent at 2 decimals
    for (const auto& [key, cell_rows] : cells) {
        std::vector<std::vector<long long>> counts;
        for (const FoldResult& r : cell_rows) {
            if (r.failed) continue;
            if (counts.empty())
                counts.assign(r.confusion.size(),
                              std::vector<long long>(r.confusion.size(), 0));
            for (size_t t = 0; t < r.confusion.size(); ++t)
                for (size_t p = 0; p < r.confusion[t].size(); ++p)
                    counts[t][p] += r.confusion[t][p];
        }
        if (counts.empty()) continue; // fully failed cell has no matrix
        std::ostringstream csv;
        csv << "target\\pred";
        for (size_t p = 0; p < counts.size(); ++p) csv << ",w" << p;
        csv << "\n";
        for (size_t t = 0; t < counts.size(); ++t) {
            long long total = 0;
            for (long long v : counts[t]) total += v;
            csv << "w" << t;
            for (size_t p = 0; p < counts.size(); ++p) {
                const double rate =
                    total == 0 ? 0.0
                               : static_cast<double>(counts[t][p]) / static_cast<double>(total);
                csv << "," << fixed2(100.0 * rate);
            }
            csv << "\n";
        }
        out.files.emplace_back("confusion_" + key.method + "_" + key.condition + ".csv",
                               csv.str());
    }

    if (!cell_means.empty()) out.files.emplace_back("chart.svg", svg_chart(cell_means));
    return out;
}

void write_report(const std::string& out_dir, const ReportFiles& files) {
    std::filesystem::create_directories(out_dir);
    for (const auto& [name, content] : files.files)
        io::atomic_write((std::filesystem::path(out_dir) / name).string(), content);
}

} // namespace dal::report
