#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dal/eval.hpp"
#include "json.hpp"

namespace dal::report {

// A rendered report: file name -> content, in a fixed emission order.
// Everything is a pure function of the fold rows and the provenance block,
// so regenerating from the same inputs is byte-identical.
struct ReportFiles {
    std::vector<std::pair<std::string, std::string>> files;
};

// Table-1-analogue (2-decimal percent strings), per-cell row-normalized
// confusion CSVs, the normalized bar chart SVG with the 0.25 chance line,
// and the statistical battery.
ReportFiles generate_report(const std::vector<eval::FoldResult>& rows,
                            const nlohmann::json& provenance);

// The battery alone (per-subject means per method-condition cell), or a
// {"skipped": reason} object when the protocol shape does not support it.
nlohmann::json stats_from_rows(const std::vector<eval::FoldResult>& rows);

void write_report(const std::string& out_dir, const ReportFiles& files);

// Fixed 2-decimal formatting, exactly as the published table prints numbers.
std::string fixed2(double v);

} // namespace dal::report
