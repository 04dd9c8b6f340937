#include "nglge/cli.hpp"

#include "nglge/data_io.hpp"
#include "nglge/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace nglge::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::ofstream open_out(const fs::path &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

void ensure_directory(const fs::path &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create output directory '" + dir.string() + "'");
}

std::string trim(const std::string &s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

template <typename T>
std::vector<T> parse_list(const std::string &text, const std::string &flag) {
    std::vector<T> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty())
            continue;
        std::size_t used = 0;
        T value{};
        try {
            if constexpr (std::is_floating_point_v<T>)
                value = static_cast<T>(std::stod(item, &used));
            else
                value = static_cast<T>(std::stoll(item, &used));
        } catch (const std::exception &) {
            used = 0;
        }
        if (used != item.size())
            throw InvalidArgument(flag + ": cannot parse '" + item + "'");
        out.push_back(value);
    }
    return out;
}

const std::vector<double> &log_grid() {
    static const std::vector<double> grid{1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1};
    return grid;
}

// ---------------------------------------------------------------------------
// Flag groups

struct SolverFlags {
    double lambda1 = 1e-4;
    double lambda2 = 1e-4;
    double lambda3 = 10;
    double mu0 = 0.1;
    double rho = 1.1;
    double mu_max = 1e8;
    double epsilon = 1e-6;
    int max_iter = 60;
    Eigen::Index alpha = 0;
    Eigen::Index k = 0;

    void add_controls(CLI::App &app) {
        app.add_option("--alpha", alpha, "selected features (default max(m, floor(0.9 d)))");
        app.add_option("--k", k, "neighbor candidates per sample");
        app.add_option("--mu0", mu0, "initial penalty")->capture_default_str();
        app.add_option("--rho", rho, "penalty growth factor")->capture_default_str();
        app.add_option("--mu-max", mu_max, "penalty cap")->capture_default_str();
        app.add_option("--epsilon", epsilon, "stop when ||Z - B||_inf <= epsilon")
            ->capture_default_str();
        app.add_option("--max-iter", max_iter, "iteration cap")->capture_default_str();
    }

    Hyperparams<double> hyperparams() const {
        Hyperparams<double> h;
        h.lambda1 = lambda1;
        h.lambda2 = lambda2;
        h.lambda3 = lambda3;
        h.mu0 = mu0;
        h.rho = rho;
        h.mu_max = mu_max;
        h.epsilon = epsilon;
        h.max_iter = max_iter;
        h.alpha = alpha;
        h.k = k;
        return h;
    }
};

json hyperparams_json(const Hyperparams<double> &h) {
    return json{{"lambda1", h.lambda1}, {"lambda2", h.lambda2}, {"lambda3", h.lambda3},
                {"m", h.m},             {"alpha", h.alpha},     {"k", h.k},
                {"mu0", h.mu0},         {"rho", h.rho},         {"mu_max", h.mu_max},
                {"epsilon", h.epsilon}, {"max_iter", h.max_iter}};
}

json matrix_json(const Eigen::MatrixXd &m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json &j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string &what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw FormatError(what + ": expected " + std::to_string(rows) + " rows");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto &row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw FormatError(what + ": row " + std::to_string(i) + " should have " +
                              std::to_string(cols) + " entries");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

void write_text(const fs::path &path, const std::string &text) {
    auto out = open_out(path);
    out << text;
    if (!out)
        throw IoError("write to '" + path.string() + "' failed");
}

// ---------------------------------------------------------------------------
// fit / transform

struct Preprocess {
    std::optional<PcaModel> pca;
    bool normalize = true;

    Eigen::MatrixXd apply(const Eigen::MatrixXd &x) const {
        Eigen::MatrixXd y = pca ? pca->apply(x) : x;
        return normalize ? normalize_columns(std::move(y)) : y;
    }
};

struct FitCommand {
    fs::path data;
    fs::path out_dir;
    Eigen::Index m = 0;
    std::uint64_t seed = 0;
    double pca_energy = 0.98;
    Eigen::Index pca_dim = 0;
    bool no_pca = false;
    bool no_normalize = false;
    bool emit_selected = false;
    SolverFlags solver;

    void add(CLI::App &app) {
        app.add_option("--data", data, "dataset manifest")->required();
        app.add_option("--out", out_dir, "output directory")->required();
        app.add_option("--m", m, "target dimension")->required();
        app.add_option("--lambda1", solver.lambda1, "Frobenius weight on Q")->capture_default_str();
        app.add_option("--lambda2", solver.lambda2, "nuclear-norm weight on Z")->capture_default_str();
        app.add_option("--lambda3", solver.lambda3, "Frobenius weight on S")->capture_default_str();
        solver.add_controls(app);
        app.add_option("--seed", seed, "recorded in the metadata")->capture_default_str();
        app.add_option("--pca-energy", pca_energy, "PCA energy kept before fitting")
            ->capture_default_str();
        app.add_option("--pca-dim", pca_dim, "explicit PCA dimension (overrides energy)");
        app.add_flag("--no-pca", no_pca, "fit on the raw features");
        app.add_flag("--no-normalize", no_normalize, "skip unit-norm column scaling");
        app.add_flag("--emit-selected", emit_selected, "also write selected.txt");
    }

    int run(std::ostream &out) const {
        auto t0 = Clock::now();
        const DatasetManifest manifest = parse_manifest(data);
        const Dataset ds = load_dataset(manifest);
        const double t_load = seconds_since(t0);

        t0 = Clock::now();
        Preprocess pre;
        pre.normalize = !no_normalize;
        if (!no_pca)
            pre.pca = pca_fit(ds.x, PcaTarget{pca_energy, pca_dim});
        const Eigen::MatrixXd x = pre.apply(ds.x);
        const double t_pre = seconds_since(t0);

        Hyperparams<double> h = solver.hyperparams();
        h.m = m;
        if (h.alpha == 0)
            h.alpha = alpha_policy(m, x.rows());
        if (h.k == 0)
            h.k = std::min<Eigen::Index>(10, x.cols() - 1);
        h.validate(x.rows(), x.cols());

        ensure_directory(out_dir);
        t0 = Clock::now();
        const auto result = fit(x, h);
        const double t_fit = seconds_since(t0);

        t0 = Clock::now();
        json proj{{"d", ds.x.rows()},
                  {"features", x.rows()},
                  {"m", result.projection.rows()},
                  {"alpha", result.projection.alpha()},
                  {"selected", result.projection.selected},
                  {"v", matrix_json(result.projection.v)},
                  {"normalize", pre.normalize},
                  {"pca", nullptr}};
        if (pre.pca) {
            std::vector<double> mean(pre.pca->mean.data(),
                                     pre.pca->mean.data() + pre.pca->mean.size());
            proj["pca"] = json{{"mean", mean}, {"basis", matrix_json(pre.pca->basis)}};
        }
        write_text(out_dir / "projection.json", proj.dump(2) + "\n");
        write_history(out_dir / "history.csv", result.history);
        if (emit_selected) {
            std::ostringstream sel;
            for (auto i : result.projection.selected)
                sel << i << '\n';
            write_text(out_dir / "selected.txt", sel.str());
        }
        const double t_write = seconds_since(t0);

        json meta{{"command", "fit"},
                  {"dataset", data.string()},
                  {"samples", ds.x.cols()},
                  {"input_features", ds.x.rows()},
                  {"features", x.rows()},
                  {"pca", {{"enabled", !no_pca}, {"energy", pca_energy}, {"dim", pre.pca ? pre.pca->dim() : 0}}},
                  {"normalize", pre.normalize},
                  {"hyperparameters", hyperparams_json(h)},
                  {"seed", seed},
                  {"converged", result.converged},
                  {"iterations", result.history.size()},
                  {"timings", {{"load", t_load}, {"preprocess", t_pre}, {"fit", t_fit}, {"write", t_write}}}};
        write_text(out_dir / "metadata.json", meta.dump(2) + "\n");

        if (result.converged)
            out << "converged@" << result.history.size();
        else
            out << "not converged after " << result.history.size() << " iterations";
        out << "; wrote " << (out_dir / "projection.json").string() << '\n';
        return 0;
    }
};

struct TransformCommand {
    fs::path projection;
    fs::path data;
    fs::path out_manifest;
    std::string format = "csv";

    void add(CLI::App &app) {
        app.add_option("--projection", projection, "projection.json from fit")->required();
        app.add_option("--data", data, "dataset manifest")->required();
        app.add_option("--out", out_manifest, "manifest path for the embedded data")->required();
        app.add_option("--format", format, "csv or binary")
            ->check(CLI::IsMember({"csv", "binary"}))
            ->capture_default_str();
    }

    int run(std::ostream &out) const {
        std::ifstream in(projection);
        if (!in)
            throw IoError("cannot open '" + projection.string() + "' for reading");
        json j;
        try {
            j = json::parse(in);
        } catch (const json::exception &e) {
            throw FormatError(projection.string() + ": " + e.what());
        }

        Preprocess pre;
        SparseProjection<double> q;
        try {
            const auto d = j.at("d").get<Eigen::Index>();
            const auto features = j.at("features").get<Eigen::Index>();
            const auto m = j.at("m").get<Eigen::Index>();
            q.d = features;
            q.selected = j.at("selected").get<std::vector<Eigen::Index>>();
            q.v = matrix_from_json(j.at("v"), m, static_cast<Eigen::Index>(q.selected.size()), "v");
            pre.normalize = j.at("normalize").get<bool>();
            if (!j.at("pca").is_null()) {
                const auto &p = j.at("pca");
                const auto mean = p.at("mean").get<std::vector<double>>();
                PcaModel model;
                model.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(),
                                                               static_cast<Eigen::Index>(mean.size()));
                model.basis = matrix_from_json(p.at("basis"), d, features, "pca.basis");
                pre.pca = std::move(model);
            }
            for (auto i : q.selected)
                if (i < 0 || i >= features)
                    throw FormatError("selected index " + std::to_string(i) + " out of range");
        } catch (const json::exception &e) {
            throw FormatError(projection.string() + ": " + e.what());
        }

        const Dataset ds = load_dataset(data);
        if (pre.pca && ds.x.rows() != pre.pca->mean.size())
            throw InvalidArgument("data has " + std::to_string(ds.x.rows()) +
                                  " features, projection was fitted on " +
                                  std::to_string(pre.pca->mean.size()));
        Dataset embedded;
        embedded.x = transform(q, pre.apply(ds.x));
        embedded.labels = ds.labels;
        if (!out_manifest.parent_path().empty())
            ensure_directory(out_manifest.parent_path());
        save_dataset(out_manifest, embedded, format == "csv" ? DataFormat::csv : DataFormat::binary,
                     "embedded");
        out << "wrote " << embedded.x.rows() << " x " << embedded.x.cols() << " to "
            << out_manifest.string() << '\n';
        return 0;
    }
};

// ---------------------------------------------------------------------------
// eval / sweep

std::string summary_csv(const PlanResult &result) {
    std::ostringstream os;
    os << "lambda1,lambda2,lambda3,m,alpha,mean,std,repeats\n";
    for (const auto &c : result.cells)
        os << format_double(c.point.lambda1) << ',' << format_double(c.point.lambda2) << ','
           << format_double(c.point.lambda3) << ',' << c.point.m << ',' << format_double(c.alpha)
           << ',' << format_double(c.mean) << ',' << format_double(c.stddev) << ',' << c.completed
           << '\n';
    return os.str();
}

std::string long_csv(const PlanResult &result) {
    std::ostringstream os;
    os << "lambda1,lambda2,lambda3,m,alpha,repeat,accuracy,status\n";
    for (const auto &t : result.trials) {
        os << format_double(t.point.lambda1) << ',' << format_double(t.point.lambda2) << ','
           << format_double(t.point.lambda3) << ',' << t.point.m << ',' << t.alpha << ','
           << t.repeat << ',';
        if (t.ok)
            os << format_double(t.accuracy) << ",ok\n";
        else
            os << ",error\n";
    }
    return os.str();
}

struct PlanCommand {
    fs::path data;
    fs::path out_dir;
    int trainers = 0;
    int repeats = 10;
    std::string method = "nglge";
    std::string dims;
    std::string lambda1;
    std::string lambda2;
    std::string lambda3;
    double alpha_fraction = 0.9;
    double pca_energy = 0.98;
    Eigen::Index pca_dim = 0;
    std::uint64_t seed = 0;
    int jobs = 1;
    SolverFlags solver;

    void add(CLI::App &app) {
        app.add_option("--data", data, "dataset manifest")->required();
        app.add_option("--out", out_dir, "output directory")->required();
        app.add_option("--tr", trainers, "training samples per class (default from manifest)");
        app.add_option("--repeats", repeats, "random splits per cell")->capture_default_str();
        app.add_option("--method", method, "nglge, pca or raw")
            ->check(CLI::IsMember({"nglge", "pca", "raw"}))
            ->capture_default_str();
        app.add_option("--m", dims, "comma-separated target dimensions (default from manifest)");
        app.add_option("--lambda1", lambda1, "comma-separated values");
        app.add_option("--lambda2", lambda2, "comma-separated values");
        app.add_option("--lambda3", lambda3, "comma-separated values");
        app.add_option("--alpha-fraction", alpha_fraction, "alpha = max(m, floor(fraction d))")
            ->capture_default_str();
        app.add_option("--pca-energy", pca_energy, "PCA energy kept before fitting")
            ->capture_default_str();
        app.add_option("--pca-dim", pca_dim, "explicit PCA dimension (overrides energy)");
        app.add_option("--seed", seed, "split seed of repeat 0")->capture_default_str();
        app.add_option("--jobs", jobs, "trials run in parallel")->capture_default_str();
        solver.add_controls(app);
    }

    ExperimentPlan plan(const DatasetManifest &manifest, const std::vector<double> &l1_default,
                        const std::vector<double> &l2_default,
                        const std::vector<double> &l3_default) const {
        ExperimentPlan p;
        p.dataset = data;
        p.trainers_per_class = trainers;
        if (p.trainers_per_class == 0 && !manifest.trainers_per_class.empty())
            p.trainers_per_class = manifest.trainers_per_class.front();
        p.repeats = repeats;
        p.method = parse_method(method);
        p.pca = PcaTarget{pca_energy, pca_dim};
        if (!dims.empty()) {
            p.dims = parse_list<Eigen::Index>(dims, "--m");
        } else if (auto r = manifest.reduced_dim ? manifest.reduced_dim
                                                 : known_reduced_dim(manifest.name)) {
            p.dims = {*r};
        }
        p.lambda1 = lambda1.empty() && !was_set("lambda1") ? l1_default
                                                           : parse_list<double>(lambda1, "--lambda1");
        p.lambda2 = lambda2.empty() && !was_set("lambda2") ? l2_default
                                                           : parse_list<double>(lambda2, "--lambda2");
        p.lambda3 = lambda3.empty() && !was_set("lambda3") ? l3_default
                                                           : parse_list<double>(lambda3, "--lambda3");
        p.alpha = solver.alpha;
        p.alpha_fraction = alpha_fraction;
        p.k = solver.k;
        p.seed = seed;
        p.jobs = jobs;
        p.solver = solver.hyperparams();
        if (p.trainers_per_class == 0)
            throw InvalidArgument("--tr is required when the manifest lists no trainers_per_class");
        p.validate();
        return p;
    }

    bool was_set(const std::string &name) const { return set_flags.count(name) > 0; }

    std::set<std::string> set_flags;

    void record_set_flags(const CLI::App &app) {
        for (const char *name : {"lambda1", "lambda2", "lambda3"})
            if (app.count(std::string("--") + name) > 0)
                set_flags.insert(name);
    }

    PlanResult execute(const ExperimentPlan &p, const DatasetManifest &manifest) const {
        const Dataset ds = load_dataset(manifest);
        return run_plan(p, ds);
    }

    void write_summary(const PlanResult &result, const std::string &title,
                       std::ostream &out) const {
        ensure_directory(out_dir);
        write_text(out_dir / "summary.csv", summary_csv(result));
        const std::string table = format_table(result, title);
        write_text(out_dir / "table.txt", table);
        out << table;
        std::size_t failed = 0;
        for (const auto &t : result.trials)
            failed += t.ok ? 0 : 1;
        if (failed > 0) {
            for (const auto &t : result.trials)
                if (!t.ok) {
                    warn(std::to_string(failed) + " trial(s) failed; first: " + t.error);
                    break;
                }
        }
    }
};

std::string plan_title(const DatasetManifest &manifest, const ExperimentPlan &p) {
    return (manifest.name.empty() ? std::string("dataset") : manifest.name) + ", " +
           to_string(p.method) + ", #Tr=" + std::to_string(p.trainers_per_class) + ", " +
           std::to_string(p.repeats) + " repeats";
}

struct EvalCommand : PlanCommand {
    int run(std::ostream &out) const {
        const DatasetManifest manifest = parse_manifest(data);
        const ExperimentPlan p = plan(manifest, {1e-4}, {1e-4}, {10});
        const PlanResult result = execute(p, manifest);
        write_summary(result, plan_title(manifest, p), out);
        return 0;
    }
};

struct SweepCommand : PlanCommand {
    std::string mode = "surface";

    void add(CLI::App &app) {
        PlanCommand::add(app);
        app.add_option("--mode", mode,
                       "surface (lambda1 x lambda2 grid), lambda3 (ladder) or dims (accuracy vs m)")
            ->check(CLI::IsMember({"surface", "lambda3", "dims"}))
            ->capture_default_str();
    }

    int run(std::ostream &out) const {
        const DatasetManifest manifest = parse_manifest(data);
        ExperimentPlan p;
        if (mode == "surface")
            p = plan(manifest, log_grid(), log_grid(), {10});
        else if (mode == "lambda3")
            p = plan(manifest, {1e-4}, {1e-4}, {1, 5, 10, 50, 100});
        else
            p = plan(manifest, {1e-4}, {1e-4}, {10});
        if (mode == "dims" && dims.empty())
            throw InvalidArgument("dims mode needs an explicit --m list");
        const PlanResult result = execute(p, manifest);
        ensure_directory(out_dir);
        write_text(out_dir / "sweep.csv", long_csv(result));
        write_summary(result, plan_title(manifest, p) + ", " + mode + " sweep", out);
        return 0;
    }
};

// ---------------------------------------------------------------------------
// diagnose / blobs

struct DiagnoseCommand {
    fs::path history;
    double epsilon = 1e-6;

    void add(CLI::App &app) {
        app.add_option("--history", history, "history.csv from fit")->required();
        app.add_option("--epsilon", epsilon, "residual tolerance")->capture_default_str();
    }

    int run(std::ostream &out) const {
        const auto rows = read_history(history);
        const Diagnosis dx = diagnose(rows, epsilon);
        char buf[64];
        out << "verdict: "
            << (dx.converged ? "converged@" + std::to_string(dx.converged_at) : "not-converged")
            << '\n';
        out << "iterations: " << dx.iterations << '\n';
        std::snprintf(buf, sizeof buf, "%.10g", dx.final_objective);
        out << "final objective: " << buf << '\n';
        std::snprintf(buf, sizeof buf, "%.3e", dx.relative_change);
        out << "relative change (last 5): " << buf << '\n';
        return 0;
    }
};

struct BlobsCommand {
    fs::path out_manifest;
    SyntheticSpec spec;
    std::string format = "csv";
    int trainers = 0;

    void add(CLI::App &app) {
        app.add_option("--out", out_manifest, "manifest path to write")->required();
        app.add_option("--classes", spec.classes, "number of classes")->capture_default_str();
        app.add_option("--dim", spec.ambient_dim, "ambient dimension")->capture_default_str();
        app.add_option("--intrinsic", spec.intrinsic_dim, "latent dimension")->capture_default_str();
        app.add_option("--per-class", spec.per_class, "samples per class")->capture_default_str();
        app.add_option("--noise", spec.noise, "isotropic noise std")->capture_default_str();
        app.add_option("--seed", spec.seed, "generator seed")->capture_default_str();
        app.add_option("--format", format, "csv or binary")
            ->check(CLI::IsMember({"csv", "binary"}))
            ->capture_default_str();
        app.add_option("--tr", trainers, "trainers_per_class recorded in the manifest");
    }

    int run(std::ostream &out) const {
        const Dataset ds = make_blobs(spec);
        if (!out_manifest.parent_path().empty())
            ensure_directory(out_manifest.parent_path());
        auto manifest = save_dataset(out_manifest, ds,
                                     format == "csv" ? DataFormat::csv : DataFormat::binary, "blobs");
        if (trainers > 0) {
            manifest.trainers_per_class = {trainers};
            write_manifest(out_manifest, manifest);
        }
        out << "wrote " << ds.x.rows() << " x " << ds.x.cols() << " to " << out_manifest.string()
            << '\n';
        return 0;
    }
};

} // namespace

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::unsupported_size:
        return 2;
    case ErrorKind::io_error:
        return 3;
    case ErrorKind::format_error:
        return 4;
    case ErrorKind::numerical_error:
        return 5;
    }
    return 2;
}

std::string error_line(ErrorKind kind, const std::string &message) {
    std::string escaped;
    for (char c : message) {
        if (c == '"' || c == '\\')
            escaped += '\\';
        if (c == '\n')
            escaped += "\\n";
        else
            escaped += c;
    }
    // unsupported-size reports as invalid-argument so the kinds match the exit codes
    const ErrorKind shown = kind == ErrorKind::unsupported_size ? ErrorKind::invalid_argument : kind;
    return "error kind=" + std::string(to_string(shown)) + " message=\"" + escaped + "\"";
}

void write_history(const fs::path &path, const std::vector<IterationLog<double>> &history) {
    auto out = open_out(path);
    out << history_header << '\n';
    for (const auto &h : history)
        out << h.iteration << ',' << format_double(h.objective) << ','
            << format_double(h.residual) << ',' << format_double(h.mu) << ',' << h.support_min()
            << ',' << format_double(h.support_median()) << ',' << h.support_max() << '\n';
    if (!out)
        throw IoError("write to '" + path.string() + "' failed");
}

std::vector<HistoryRow> read_history(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open history '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line))
        throw FormatError(path.string() + ": empty history file");
    if (trim(line) != history_header)
        throw FormatError(path.string() + ": unexpected header '" + trim(line) + "'");

    std::vector<HistoryRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const bool complete_line = !in.eof();
        line = trim(line);
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            cells.push_back(trim(cell));
        if (cells.size() != 7 || (!complete_line && cells.back().empty()))
            throw IoError(path.string() + ": line " + std::to_string(line_no) +
                          " is truncated (expected 7 fields, found " +
                          std::to_string(cells.size()) + ")");
        double values[7];
        for (int c = 0; c < 7; ++c) {
            std::size_t used = 0;
            try {
                values[c] = std::stod(cells[static_cast<std::size_t>(c)], &used);
            } catch (const std::exception &) {
                used = 0;
            }
            if (used == 0 || used != cells[static_cast<std::size_t>(c)].size())
                throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                                  ": cannot parse '" + cells[static_cast<std::size_t>(c)] + "'");
        }
        rows.push_back(HistoryRow{static_cast<int>(values[0]), values[1], values[2], values[3],
                                  values[4], values[5], values[6]});
    }
    if (rows.empty())
        throw FormatError(path.string() + ": history has no iterations");
    return rows;
}

Diagnosis diagnose(const std::vector<HistoryRow> &rows, double epsilon) {
    Diagnosis dx;
    if (rows.empty())
        return dx;
    for (const auto &r : rows)
        if (r.residual <= epsilon) {
            dx.converged = true;
            dx.converged_at = r.iteration;
            break;
        }
    dx.iterations = rows.back().iteration;
    dx.final_objective = rows.back().objective;
    const std::size_t back = rows.size() > 5 ? rows.size() - 6 : 0;
    const double ref = rows[back].objective;
    const double diff = std::abs(dx.final_objective - ref);
    dx.relative_change = diff == 0 ? 0 : diff / std::max(std::abs(ref), 1e-300);
    return dx;
}

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Neighborhood-adaptive graph embedding: fit, transform, evaluate, sweep, diagnose"};
    app.name("nglge");
    app.require_subcommand(1);

    FitCommand fit_cmd;
    TransformCommand transform_cmd;
    EvalCommand eval_cmd;
    SweepCommand sweep_cmd;
    DiagnoseCommand diagnose_cmd;
    BlobsCommand blobs_cmd;

    auto *fit_app = app.add_subcommand("fit", "learn a projection and write its artifacts");
    fit_cmd.add(*fit_app);
    auto *transform_app = app.add_subcommand("transform", "embed a dataset with a fitted projection");
    transform_cmd.add(*transform_app);
    auto *eval_app = app.add_subcommand("eval", "repeated-split 1-NN evaluation over a grid");
    eval_cmd.add(*eval_app);
    auto *sweep_app = app.add_subcommand("sweep", "parameter sweep with one CSV row per trial");
    sweep_cmd.add(*sweep_app);
    auto *diagnose_app = app.add_subcommand("diagnose", "convergence verdict from a history CSV");
    diagnose_cmd.add(*diagnose_app);
    auto *blobs_app = app.add_subcommand("blobs", "write a synthetic labeled dataset");
    blobs_cmd.add(*blobs_app);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError &e) {
        err << error_line(ErrorKind::invalid_argument, e.what()) << '\n';
        return exit_code(ErrorKind::invalid_argument);
    }

    try {
        if (fit_app->parsed())
            return fit_cmd.run(out);
        if (transform_app->parsed())
            return transform_cmd.run(out);
        if (eval_app->parsed()) {
            eval_cmd.record_set_flags(*eval_app);
            return eval_cmd.run(out);
        }
        if (sweep_app->parsed()) {
            sweep_cmd.record_set_flags(*sweep_app);
            return sweep_cmd.run(out);
        }
        if (diagnose_app->parsed())
            return diagnose_cmd.run(out);
        if (blobs_app->parsed())
            return blobs_cmd.run(out);
    } catch (const Error &e) {
        err << error_line(e.kind(), e.what()) << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error &e) {
        err << error_line(ErrorKind::io_error, e.what()) << '\n';
        return exit_code(ErrorKind::io_error);
    } catch (const json::exception &e) {
        err << error_line(ErrorKind::format_error, e.what()) << '\n';
        return exit_code(ErrorKind::format_error);
    } catch (const std::exception &e) {
        err << error_line(ErrorKind::numerical_error, e.what()) << '\n';
        return exit_code(ErrorKind::numerical_error);
    }
    return 0;
}

} // namespace nglge::cli
