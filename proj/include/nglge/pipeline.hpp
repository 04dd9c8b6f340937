#pragma once

#include "nglge/data_io.hpp"
#include "nglge/solver.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace nglge {

/// How many principal components to keep: an explicit count when `dim > 0`,
/// otherwise the smallest count reaching `energy` of the eigenvalue mass.
struct PcaTarget {
    double energy = 0.98;
    Eigen::Index dim = 0;
};

struct PcaModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;       ///< d x k, orthonormal columns
    Eigen::VectorXd eigenvalues; ///< all covariance eigenvalues, descending

    Eigen::Index dim() const { return basis.cols(); }
    /// basis^T (x - mean)
    Eigen::MatrixXd apply(const Eigen::MatrixXd &x) const;
};

/// Smallest k with sum(eig[0..k)) >= energy * sum(eig). Eigenvalues must be
/// descending and nonnegative.
Eigen::Index energy_dimension(const Eigen::VectorXd &eigenvalues, double energy);

PcaModel pca_fit(const Eigen::MatrixXd &x, const PcaTarget &target);

struct PcaReduction {
    PcaModel model;
    Eigen::MatrixXd reduced;
};

PcaReduction pca_reduce(const Eigen::MatrixXd &x, const PcaTarget &target);

/// Scales every non-zero column to unit Euclidean norm. Zero columns stay
/// zero (with a warning).
Eigen::MatrixXd normalize_columns(Eigen::MatrixXd x);

struct Split {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
};

/// Per class, `trainers_per_class` samples drawn without replacement; the rest
/// is test. Both index lists are ascending.
Split split(const Labels &labels, int trainers_per_class, std::uint64_t seed);

struct KnnResult {
    double accuracy = 0;
    std::vector<double> per_class_accuracy; ///< indexed by test class id
    std::vector<int> predicted;
};

/// 1-NN under Euclidean distance after unit-normalizing both sides; ties go
/// to the smaller training index.
KnnResult knn1_classify(const Eigen::MatrixXd &train, const Labels &train_labels,
                        const Eigen::MatrixXd &test, const Labels &test_labels);

double knn1_accuracy(const Eigen::MatrixXd &train, const Labels &train_labels,
                     const Eigen::MatrixXd &test, const Labels &test_labels);

enum class Method { nglge, pca, raw };

std::string to_string(Method method);
Method parse_method(const std::string &name);

struct ExperimentPlan {
    std::filesystem::path dataset; ///< manifest; unused when data is passed directly
    int trainers_per_class = 0;
    int repeats = 10;
    PcaTarget pca{};
    std::vector<Eigen::Index> dims;
    std::vector<double> lambda1{1e-4};
    std::vector<double> lambda2{1e-4};
    std::vector<double> lambda3{10};
    Eigen::Index alpha = 0;      ///< 0: max(m, floor(alpha_fraction * d))
    double alpha_fraction = 0.9;
    Eigen::Index k = 0;          ///< 0: trainers_per_class
    std::uint64_t seed = 0;
    Method method = Method::nglge;
    int jobs = 1;
    Hyperparams<double> solver{}; ///< ADMM controls; lambdas/m/alpha/k filled per cell

    void validate() const;
};

/// max(m, floor(fraction * d)), capped at d.
Eigen::Index alpha_policy(Eigen::Index m, Eigen::Index d, double fraction = 0.9);

struct GridPoint {
    double lambda1 = 0;
    double lambda2 = 0;
    double lambda3 = 0;
    Eigen::Index m = 0;
};

struct PhaseTimings {
    double split = 0;
    double pca = 0;
    double fit = 0;
    double classify = 0;
};

struct TrialResult {
    GridPoint point;
    int repeat = 0;
    bool ok = false;
    std::string error;
    double accuracy = 0;
    std::vector<double> per_class_accuracy;
    std::vector<IterationLog<double>> fit_history;
    std::vector<Eigen::Index> chosen_features;
    Eigen::Index alpha = 0;
    Eigen::Index reduced_features = 0;
    PhaseTimings timings;
};

struct CellSummary {
    GridPoint point;
    double alpha = 0; ///< mean alpha over completed trials
    double mean = 0;  ///< accuracy fraction
    double stddev = 0; ///< sample standard deviation over completed trials
    int completed = 0;
    int planned = 0;

    bool complete() const { return completed == planned; }
};

struct PlanResult {
    std::vector<TrialResult> trials; ///< ordered by (cell, repeat)
    std::vector<CellSummary> cells;
};

/// Grid cells in enumeration order (m outermost, then lambda1, lambda2,
/// lambda3). Baseline methods ignore the lambda lists.
std::vector<GridPoint> grid_points(const ExperimentPlan &plan);

TrialResult run_trial(const ExperimentPlan &plan, const Dataset &data, const GridPoint &point,
                      int repeat);

PlanResult run_plan(const ExperimentPlan &plan, const Dataset &data);
PlanResult run_plan(const ExperimentPlan &plan);

/// "mean±std" in percent with two decimals, e.g. "85.91±0.93".
std::string format_cell(double mean, double stddev);

/// Human-readable table, one line per cell; incomplete cells are marked '*'.
std::string format_table(const PlanResult &result, const std::string &title);

} // namespace nglge
