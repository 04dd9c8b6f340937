#pragma once

#include "nglge/error.hpp"
#include "nglge/solver.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace nglge::cli {

/// Process exit status for each error kind; 0 is success.
int exit_code(ErrorKind kind);

/// `error kind=<kind> message="<text>"` with quotes and backslashes escaped.
std::string error_line(ErrorKind kind, const std::string &message);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

inline constexpr const char *history_header =
    "iteration,objective,residual,mu,s_support_min,s_support_med,s_support_max";

void write_history(const std::filesystem::path &path,
                   const std::vector<IterationLog<double>> &history);

struct HistoryRow {
    int iteration = 0;
    double objective = 0;
    double residual = 0;
    double mu = 0;
    double support_min = 0;
    double support_med = 0;
    double support_max = 0;
};

std::vector<HistoryRow> read_history(const std::filesystem::path &path);

struct Diagnosis {
    bool converged = false;
    int converged_at = 0; ///< first iteration with residual <= epsilon
    int iterations = 0;
    double final_objective = 0;
    /// |f_T - f_{T-5}| / |f_{T-5}|, falling back to the first row for short runs.
    double relative_change = 0;
};

Diagnosis diagnose(const std::vector<HistoryRow> &rows, double epsilon);

} // namespace nglge::cli
