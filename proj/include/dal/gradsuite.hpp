#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dal::gradsuite {

// One named verification with its measured error and pass bound.
struct CheckResult {
    std::string name;
    double value = 0.0;     // measured maximum error
    double threshold = 0.0; // pass when value < threshold
    bool pass = false;
    double seconds = 0.0;
};

// Finite-difference gradient checks for every layer op (float64, < 1e-6).
std::vector<CheckResult> run_op_checks();

// Full-network gradient checks: DAL with the combined objective and EEGNet
// (float64, dropout off, sample length 64, < 1e-4).
std::vector<CheckResult> run_model_checks();

// <conv(x), y> == <x, transpose_conv(y)> on 20 random geometries (< 1e-10).
std::vector<CheckResult> run_adjoint_checks();

// All of the above, in order.
std::vector<CheckResult> run_all();

bool all_pass(const std::vector<CheckResult>& results);

// Aligned "name  value  threshold  verdict" table.
void print(const std::vector<CheckResult>& results, std::ostream& os);

} // namespace dal::gradsuite
