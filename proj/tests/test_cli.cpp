#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nglge/cli.hpp"
#include "nglge/data_io.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace nglge;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures = NGLGE_FIXTURE_DIR;

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &tag) {
        path = fs::temp_directory_path() / ("nglge_cli_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::size_t line_count(const std::string &text) {
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

const std::string blobs = (fixtures / "blobs.manifest").string();

} // namespace

TEST_CASE("error lines and exit codes") {
    CHECK(cli::exit_code(ErrorKind::invalid_argument) == 2);
    CHECK(cli::exit_code(ErrorKind::io_error) == 3);
    CHECK(cli::exit_code(ErrorKind::format_error) == 4);
    CHECK(cli::exit_code(ErrorKind::numerical_error) == 5);
    CHECK(cli::error_line(ErrorKind::io_error, "no \"x\"") ==
          "error kind=io-error message=\"no \\\"x\\\"\"");

    const auto none = run({});
    CHECK(none.code == 2);
    CHECK(none.err.rfind("error kind=invalid-argument", 0) == 0);
    CHECK(run({"bogus"}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("fit writes its three artifacts") {
    TempDir dir("fit");
    const auto out = (dir.path / "a").string();
    const auto r = run({"fit", "--data", blobs, "--out", out, "--m", "3", "--k", "5", "--seed", "7"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(dir.path / "a" / "projection.json"));
    CHECK(fs::exists(dir.path / "a" / "metadata.json"));
    const std::string history = slurp(dir.path / "a" / "history.csv");
    CHECK(history.rfind(cli::history_header, 0) == 0);
    CHECK(line_count(history) - 1 <= 60);
    CHECK(line_count(history) >= 2);

    const auto meta = nlohmann::json::parse(slurp(dir.path / "a" / "metadata.json"));
    for (const char *key : {"command", "dataset", "samples", "input_features", "features", "pca",
                            "normalize", "hyperparameters", "seed", "converged", "iterations",
                            "timings"})
        CHECK_MESSAGE(meta.contains(key), key);
    CHECK(meta["seed"] == 7);
    CHECK(meta["hyperparameters"]["m"] == 3);

    const auto proj = nlohmann::json::parse(slurp(dir.path / "a" / "projection.json"));
    CHECK(proj["m"] == 3);
    CHECK(proj["selected"].size() == proj["alpha"].get<std::size_t>());

    SUBCASE("same seed, same history bytes") {
        const auto out2 = (dir.path / "b").string();
        REQUIRE(run({"fit", "--data", blobs, "--out", out2, "--m", "3", "--k", "5", "--seed", "7"})
                    .code == 0);
        CHECK(slurp(dir.path / "b" / "history.csv") == history);
    }

    SUBCASE("transform applies the stored preprocessing and projection") {
        const auto emb = (dir.path / "emb" / "emb.manifest").string();
        const auto t = run({"transform", "--projection", (dir.path / "a" / "projection.json").string(),
                            "--data", blobs, "--out", emb});
        REQUIRE_MESSAGE(t.code == 0, t.err);
        const auto ds = load_dataset(emb);
        CHECK(ds.x.rows() == 3);
        CHECK(ds.labels == load_dataset(blobs).labels);
    }

    SUBCASE("diagnose reads the history back") {
        const auto d = run({"diagnose", "--history", (dir.path / "a" / "history.csv").string()});
        CHECK(d.code == 0);
        CHECK(d.out.find("verdict: ") != std::string::npos);
        CHECK(d.out.find("final objective: ") != std::string::npos);
    }
}

TEST_CASE("fit argument errors") {
    TempDir dir("fit_err");
    const auto out = dir.path.string();
    const auto bad = run({"fit", "--data", blobs, "--out", out, "--m", "4", "--alpha", "2"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("kind=invalid-argument") != std::string::npos);
    CHECK(bad.err.find("m <= alpha") != std::string::npos);
    CHECK(line_count(bad.err) == 1);

    const auto missing = run({"fit", "--data", (dir.path / "none.manifest").string(), "--out", out,
                              "--m", "2"});
    CHECK(missing.code == 3);
    CHECK(missing.err.find("kind=io-error") != std::string::npos);

    CHECK(run({"fit", "--data", blobs, "--out", out}).code == 2); // --m is required
}

TEST_CASE("eval") {
    TempDir dir("eval");
    const auto out = dir.path.string();
    const std::vector<std::string> args{"eval",  "--data",     blobs, "--out", out,  "--tr",
                                        "3",     "--repeats",  "2",   "--m",   "2",  "--lambda3",
                                        "1,10",  "--max-iter", "8"};
    const auto r = run(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string summary = slurp(dir.path / "summary.csv");
    CHECK(summary.rfind("lambda1,lambda2,lambda3,m,alpha,mean,std,repeats\n", 0) == 0);
    CHECK(line_count(summary) == 3);
    CHECK(fs::exists(dir.path / "table.txt"));
    CHECK(r.out.find("±") != std::string::npos);

    const auto again = run(args);
    CHECK(slurp(dir.path / "summary.csv") == summary);

    SUBCASE("single cell") {
        auto one = args;
        one[12] = "10";
        REQUIRE(run(one).code == 0);
        CHECK(line_count(slurp(dir.path / "summary.csv")) == 2);
    }

    SUBCASE("baseline") {
        REQUIRE(run({"eval", "--data", blobs, "--out", out, "--tr", "3", "--repeats", "2", "--m", "2",
                     "--method", "pca"})
                    .code == 0);
        CHECK(line_count(slurp(dir.path / "summary.csv")) == 2);
    }
}

TEST_CASE("sweep") {
    TempDir dir("sweep");
    const auto out = dir.path.string();

    SUBCASE("lambda3 ladder") {
        const auto r = run({"sweep", "--data", blobs, "--out", out, "--tr", "3", "--repeats", "1",
                            "--m", "2", "--mode", "lambda3", "--max-iter", "5"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(line_count(slurp(dir.path / "summary.csv")) == 6);
        const std::string sweep = slurp(dir.path / "sweep.csv");
        CHECK(sweep.rfind("lambda1,lambda2,lambda3,m,alpha,repeat,accuracy,status\n", 0) == 0);
        CHECK(line_count(sweep) == 6);
    }

    SUBCASE("lambda1 x lambda2 surface: 81 cells by default") {
        const auto r = run({"sweep", "--data", blobs, "--out", out, "--tr", "3", "--repeats", "1",
                            "--m", "2", "--max-iter", "1"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(line_count(slurp(dir.path / "summary.csv")) == 82);
        CHECK(line_count(slurp(dir.path / "sweep.csv")) == 82);
    }

    SUBCASE("dimension sweep, one row per cell per repeat") {
        const auto r = run({"sweep", "--data", blobs, "--out", out, "--tr", "3", "--repeats", "2",
                            "--m", "1,2,3", "--mode", "dims", "--max-iter", "3"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        CHECK(line_count(slurp(dir.path / "summary.csv")) == 4);
        CHECK(line_count(slurp(dir.path / "sweep.csv")) == 7);
    }

    SUBCASE("empty grid") {
        const auto r = run({"sweep", "--data", blobs, "--out", out, "--tr", "3", "--m", "2",
                            "--lambda1", ""});
        CHECK(r.code == 2);
        CHECK(r.err.find("kind=invalid-argument") != std::string::npos);
    }
}

TEST_CASE("diagnose fixtures") {
    const auto conv = run({"diagnose", "--history", (fixtures / "converged_history.csv").string()});
    REQUIRE_MESSAGE(conv.code == 0, conv.err);
    CHECK(conv.out.find("verdict: converged@14") != std::string::npos);

    const auto rows = cli::read_history(fixtures / "flat_history.csv");
    const auto dx = cli::diagnose(rows, 1e-6);
    CHECK(dx.relative_change == 0.0);
    CHECK_FALSE(dx.converged);
    const auto flat = run({"diagnose", "--history", (fixtures / "flat_history.csv").string()});
    CHECK(flat.out.find("verdict: not-converged") != std::string::npos);

    const auto cut = run({"diagnose", "--history", (fixtures / "truncated_history.csv").string()});
    CHECK(cut.code == 3);
    CHECK(cut.err.find("kind=io-error") != std::string::npos);
    CHECK(cut.err.find("line 5") != std::string::npos);

    const auto missing = run({"diagnose", "--history", (fixtures / "nope.csv").string()});
    CHECK(missing.code == 3);
}

TEST_CASE("history round trip") {
    TempDir dir("history");
    std::vector<IterationLog<double>> logs(3);
    for (int i = 0; i < 3; ++i) {
        logs[static_cast<std::size_t>(i)].iteration = i + 1;
        logs[static_cast<std::size_t>(i)].objective = 1.0 / (i + 3);
        logs[static_cast<std::size_t>(i)].residual = std::pow(10.0, -i);
        logs[static_cast<std::size_t>(i)].mu = 0.1 * std::pow(1.1, i + 1);
        logs[static_cast<std::size_t>(i)].support_sizes = {1, 4, 2, 3};
    }
    cli::write_history(dir.path / "h.csv", logs);
    const auto rows = cli::read_history(dir.path / "h.csv");
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rows[i].objective == logs[i].objective);
        CHECK(rows[i].residual == logs[i].residual);
        CHECK(rows[i].mu == logs[i].mu);
        CHECK(rows[i].support_min == 1);
        CHECK(rows[i].support_med == 2.5);
        CHECK(rows[i].support_max == 4);
    }
}

TEST_CASE("blobs generator command") {
    TempDir dir("blobs");
    const auto m = (dir.path / "b.manifest").string();
    const auto r = run({"blobs", "--out", m, "--classes", "2", "--dim", "6", "--intrinsic", "2",
                        "--per-class", "4", "--seed", "3", "--tr", "2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto ds = load_dataset(m);
    CHECK(ds.x.rows() == 6);
    CHECK(ds.x.cols() == 8);
    CHECK(parse_manifest(m).trainers_per_class == std::vector<int>{2});
}
