#include "nglge/pipeline.hpp"

#include "nglge/error.hpp"
#include "nglge/kernels.hpp"
#include "nglge/log.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace nglge {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd &x, const std::vector<Eigen::Index> &cols) {
    return x(Eigen::all, cols);
}

Labels select_labels(const Labels &labels, const std::vector<Eigen::Index> &idx) {
    Labels out;
    out.reserve(idx.size());
    for (auto i : idx)
        out.push_back(labels[static_cast<std::size_t>(i)]);
    return out;
}

} // namespace

Eigen::MatrixXd PcaModel::apply(const Eigen::MatrixXd &x) const {
    if (x.rows() != mean.size())
        throw InvalidArgument("pca: data has " + std::to_string(x.rows()) +
                              " features, model expects " + std::to_string(mean.size()));
    return basis.transpose() * (x.colwise() - mean);
}

Eigen::Index energy_dimension(const Eigen::VectorXd &eigenvalues, double energy) {
    if (!(energy > 0 && energy <= 1))
        throw InvalidArgument("pca: energy must lie in (0, 1], got " + std::to_string(energy));
    const double total = eigenvalues.sum();
    if (!(total > 0))
        return 0;
    double cumulative = 0;
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) {
        cumulative += eigenvalues(k);
        if (cumulative >= energy * total)
            return k + 1;
    }
    return eigenvalues.size();
}

PcaModel pca_fit(const Eigen::MatrixXd &x, const PcaTarget &target) {
    if (!x.allFinite())
        throw InvalidArgument("pca: data has non-finite entries");
    if (target.dim <= 0 && !(target.energy > 0 && target.energy <= 1))
        throw InvalidArgument("pca: energy must lie in (0, 1], got " +
                              std::to_string(target.energy));
    if (x.cols() < 1)
        throw InvalidArgument("pca: no samples");

    PcaModel model;
    model.mean = x.rowwise().mean();
    const Eigen::MatrixXd centered = x.colwise() - model.mean;
    const auto svd = thin_svd(centered);
    const double smax = svd.singulars.size() ? svd.singulars(0) : 0.0;
    model.eigenvalues.resize(svd.singulars.size());
    for (Eigen::Index i = 0; i < svd.singulars.size(); ++i) {
        const double s = svd.singulars(i);
        model.eigenvalues(i) = s > rank_tolerance * smax ? s * s / double(x.cols()) : 0.0;
    }

    Eigen::Index k = 0;
    if (target.dim > 0) {
        if (target.dim > svd.left.cols())
            throw InvalidArgument("pca: requested " + std::to_string(target.dim) +
                                  " components, at most " + std::to_string(svd.left.cols()) +
                                  " available");
        k = target.dim;
    } else {
        k = energy_dimension(model.eigenvalues, target.energy);
    }
    model.basis = svd.left.leftCols(k);
    return model;
}

PcaReduction pca_reduce(const Eigen::MatrixXd &x, const PcaTarget &target) {
    PcaReduction out;
    out.model = pca_fit(x, target);
    out.reduced = out.model.apply(x);
    return out;
}

Eigen::MatrixXd normalize_columns(Eigen::MatrixXd x) {
    Eigen::Index zeros = 0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double norm = x.col(j).norm();
        if (norm > 0)
            x.col(j) /= norm;
        else
            ++zeros;
    }
    if (zeros > 0)
        warn("normalize_columns: " + std::to_string(zeros) + " zero column(s) left unnormalized");
    return x;
}

Split split(const Labels &labels, int trainers_per_class, std::uint64_t seed) {
    if (trainers_per_class < 1)
        throw InvalidArgument("split: trainers per class must be positive");
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i)
        by_class[labels[i]].push_back(static_cast<Eigen::Index>(i));

    std::mt19937_64 rng(seed);
    Split out;
    for (auto &[cls, members] : by_class) {
        if (static_cast<int>(members.size()) <= trainers_per_class)
            throw InvalidArgument("split: class " + std::to_string(cls) + " has " +
                                  std::to_string(members.size()) + " samples, need more than " +
                                  std::to_string(trainers_per_class));
        std::shuffle(members.begin(), members.end(), rng);
        out.train.insert(out.train.end(), members.begin(), members.begin() + trainers_per_class);
        out.test.insert(out.test.end(), members.begin() + trainers_per_class, members.end());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

KnnResult knn1_classify(const Eigen::MatrixXd &train, const Labels &train_labels,
                        const Eigen::MatrixXd &test, const Labels &test_labels) {
    if (train.cols() == 0)
        throw InvalidArgument("knn1: empty training set");
    if (train.rows() != test.rows())
        throw InvalidArgument("knn1: train and test embeddings differ in dimension");
    if (static_cast<Eigen::Index>(train_labels.size()) != train.cols() ||
        static_cast<Eigen::Index>(test_labels.size()) != test.cols())
        throw InvalidArgument("knn1: label count differs from sample count");

    const Eigen::MatrixXd tr = normalize_columns(train);
    const Eigen::MatrixXd te = normalize_columns(test);

    KnnResult out;
    out.predicted.resize(test_labels.size());
    const int classes =
        test_labels.empty() ? 0 : *std::max_element(test_labels.begin(), test_labels.end()) + 1;
    std::vector<int> hits(static_cast<std::size_t>(std::max(classes, 0)), 0);
    std::vector<int> totals(hits.size(), 0);
    int correct = 0;
    for (Eigen::Index j = 0; j < te.cols(); ++j) {
        Eigen::Index best = 0;
        double best_dist = (tr.col(0) - te.col(j)).squaredNorm();
        for (Eigen::Index i = 1; i < tr.cols(); ++i) {
            const double dist = (tr.col(i) - te.col(j)).squaredNorm();
            if (dist < best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        const int predicted = train_labels[static_cast<std::size_t>(best)];
        const int truth = test_labels[static_cast<std::size_t>(j)];
        out.predicted[static_cast<std::size_t>(j)] = predicted;
        if (truth >= 0) {
            ++totals[static_cast<std::size_t>(truth)];
            if (predicted == truth) {
                ++hits[static_cast<std::size_t>(truth)];
                ++correct;
            }
        }
    }
    out.accuracy = te.cols() ? double(correct) / double(te.cols()) : 0.0;
    out.per_class_accuracy.resize(hits.size());
    for (std::size_t c = 0; c < hits.size(); ++c)
        out.per_class_accuracy[c] = totals[c] ? double(hits[c]) / double(totals[c]) : 0.0;
    return out;
}

double knn1_accuracy(const Eigen::MatrixXd &train, const Labels &train_labels,
                     const Eigen::MatrixXd &test, const Labels &test_labels) {
    return knn1_classify(train, train_labels, test, test_labels).accuracy;
}

std::string to_string(Method method) {
    switch (method) {
    case Method::nglge: return "nglge";
    case Method::pca: return "pca";
    case Method::raw: return "raw";
    }
    return "unknown";
}

Method parse_method(const std::string &name) {
    if (name == "nglge")
        return Method::nglge;
    if (name == "pca")
        return Method::pca;
    if (name == "raw")
        return Method::raw;
    throw InvalidArgument("unknown method '" + name + "' (expected nglge, pca or raw)");
}

void ExperimentPlan::validate() const {
    if (repeats < 1)
        throw InvalidArgument("plan: repeats must be at least 1");
    if (trainers_per_class < 1)
        throw InvalidArgument("plan: trainers per class must be positive");
    if (pca.dim <= 0 && !(pca.energy > 0 && pca.energy <= 1))
        throw InvalidArgument("plan: pca energy must lie in (0, 1]");
    if (method != Method::raw && dims.empty())
        throw InvalidArgument("plan: no reduced dimension given");
    if (method == Method::nglge && (lambda1.empty() || lambda2.empty() || lambda3.empty()))
        throw InvalidArgument("plan: empty hyperparameter grid");
    if (!(alpha_fraction > 0 && alpha_fraction <= 1))
        throw InvalidArgument("plan: alpha fraction must lie in (0, 1]");
    if (jobs < 1)
        throw InvalidArgument("plan: jobs must be at least 1");
}

Eigen::Index alpha_policy(Eigen::Index m, Eigen::Index d, double fraction) {
    const auto scaled = static_cast<Eigen::Index>(std::floor(fraction * double(d)));
    return std::min(std::max(m, scaled), d);
}

std::vector<GridPoint> grid_points(const ExperimentPlan &plan) {
    std::vector<GridPoint> out;
    const std::vector<Eigen::Index> dims =
        plan.method == Method::raw ? std::vector<Eigen::Index>{0} : plan.dims;
    for (auto m : dims) {
        if (plan.method != Method::nglge) {
            out.push_back({0, 0, 0, m});
            continue;
        }
        for (double l1 : plan.lambda1)
            for (double l2 : plan.lambda2)
                for (double l3 : plan.lambda3)
                    out.push_back({l1, l2, l3, m});
    }
    return out;
}

TrialResult run_trial(const ExperimentPlan &plan, const Dataset &data, const GridPoint &point,
                      int repeat) {
    TrialResult r;
    r.point = point;
    r.repeat = repeat;
    try {
        auto t0 = Clock::now();
        const Split sp = split(data.labels, plan.trainers_per_class,
                               plan.seed + static_cast<std::uint64_t>(repeat));
        const Labels train_labels = select_labels(data.labels, sp.train);
        const Labels test_labels = select_labels(data.labels, sp.test);
        Eigen::MatrixXd train = select_columns(data.x, sp.train);
        Eigen::MatrixXd test = select_columns(data.x, sp.test);
        r.timings.split = seconds_since(t0);

        t0 = Clock::now();
        if (plan.method != Method::raw) {
            // Statistics come from the training columns only.
            PcaTarget target = plan.pca;
            if (plan.method == Method::pca)
                target = PcaTarget{1.0, point.m};
            const PcaModel pca = pca_fit(train, target);
            train = pca.apply(train);
            test = pca.apply(test);
        }
        train = normalize_columns(std::move(train));
        test = normalize_columns(std::move(test));
        r.reduced_features = train.rows();
        r.timings.pca = seconds_since(t0);

        t0 = Clock::now();
        if (plan.method == Method::nglge) {
            Hyperparams<double> h = plan.solver;
            h.lambda1 = point.lambda1;
            h.lambda2 = point.lambda2;
            h.lambda3 = point.lambda3;
            h.m = point.m;
            h.alpha = plan.alpha > 0 ? plan.alpha
                                     : alpha_policy(point.m, train.rows(), plan.alpha_fraction);
            h.k = plan.k > 0 ? plan.k : plan.trainers_per_class;
            auto fitted = fit(train, h);
            r.alpha = h.alpha;
            r.fit_history = std::move(fitted.history);
            r.chosen_features = fitted.projection.selected;
            train = transform(fitted.projection, train);
            test = transform(fitted.projection, test);
        } else {
            r.alpha = train.rows();
        }
        r.timings.fit = seconds_since(t0);

        t0 = Clock::now();
        const auto knn = knn1_classify(train, train_labels, test, test_labels);
        r.accuracy = knn.accuracy;
        r.per_class_accuracy = knn.per_class_accuracy;
        r.timings.classify = seconds_since(t0);
        r.ok = true;
    } catch (const std::exception &e) {
        r.ok = false;
        r.error = e.what();
    }
    return r;
}

PlanResult run_plan(const ExperimentPlan &plan, const Dataset &data) {
    plan.validate();
    const auto points = grid_points(plan);
    const std::size_t total = points.size() * static_cast<std::size_t>(plan.repeats);

    PlanResult out;
    out.trials.resize(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t task = next++; task < total; task = next++) {
            const auto cell = task / static_cast<std::size_t>(plan.repeats);
            const int repeat = static_cast<int>(task % static_cast<std::size_t>(plan.repeats));
            out.trials[task] = run_trial(plan, data, points[cell], repeat);
        }
    };
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(plan.jobs), total);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back(worker);
    }

    for (std::size_t c = 0; c < points.size(); ++c) {
        CellSummary s;
        s.point = points[c];
        s.planned = plan.repeats;
        std::vector<double> acc;
        double alpha_sum = 0;
        for (int r = 0; r < plan.repeats; ++r) {
            const auto &t = out.trials[c * static_cast<std::size_t>(plan.repeats) +
                                       static_cast<std::size_t>(r)];
            if (t.ok) {
                acc.push_back(t.accuracy);
                alpha_sum += double(t.alpha);
            }
        }
        s.completed = static_cast<int>(acc.size());
        if (!acc.empty()) {
            s.mean = std::accumulate(acc.begin(), acc.end(), 0.0) / double(acc.size());
            s.alpha = alpha_sum / double(acc.size());
            if (acc.size() > 1) {
                double sq = 0;
                for (double a : acc)
                    sq += (a - s.mean) * (a - s.mean);
                s.stddev = std::sqrt(sq / double(acc.size() - 1));
            }
        }
        out.cells.push_back(s);
    }
    return out;
}

PlanResult run_plan(const ExperimentPlan &plan) {
    return run_plan(plan, load_dataset(plan.dataset));
}

std::string format_cell(double mean, double stddev) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * mean, 100.0 * stddev);
    return buf;
}

std::string format_table(const PlanResult &result, const std::string &title) {
    std::ostringstream os;
    os << title << '\n';
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %-10s %-10s %5s %7s  %s\n", "lambda1", "lambda2",
                  "lambda3", "m", "alpha", "accuracy (%)");
    os << line;
    for (const auto &c : result.cells) {
        std::snprintf(line, sizeof line, "%-10.3g %-10.3g %-10.3g %5lld %7.1f  %s%s\n",
                      c.point.lambda1, c.point.lambda2, c.point.lambda3,
                      static_cast<long long>(c.point.m), c.alpha,
                      format_cell(c.mean, c.stddev).c_str(), c.complete() ? "" : " *");
        os << line;
    }
    bool any_incomplete = false;
    for (const auto &c : result.cells)
        any_incomplete = any_incomplete || !c.complete();
    if (any_incomplete)
        os << "* some repeats failed; statistics cover completed repeats only\n";
    return os.str();
}

} // namespace nglge
