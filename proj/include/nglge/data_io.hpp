#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nglge {

using Labels = std::vector<int>;

/// A labeled sample matrix, one column per sample (d x n).
struct Dataset {
    Eigen::MatrixXd x;
    Labels labels;

    Eigen::Index features() const { return x.rows(); }
    Eigen::Index samples() const { return x.cols(); }
};

enum class DataFormat { csv, binary };

/// Key-value description of a dataset on disk.
///
///   name = EYaleB
///   format = binary        # or csv
///   d = 1024
///   n = 2414
///   c = 38
///   data = eyaleb.f64      # relative to the manifest's directory
///   labels = eyaleb.labels # binary format only: whitespace-separated ints
///
/// CSV files hold d + 1 rows of n comma-separated values: the features,
/// then the label row. Binary files hold d * n little-endian float64 values,
/// feature-major (all n values of feature 0, then feature 1, ...).
struct DatasetManifest {
    std::string name;
    DataFormat format = DataFormat::csv;
    Eigen::Index d = 0;
    Eigen::Index n = 0;
    int c = 0;
    std::filesystem::path data;
    std::filesystem::path labels;
    std::optional<Eigen::Index> reduced_dim;
    std::vector<int> trainers_per_class;
};

/// Default reduced dimension for the benchmark databases, by name.
std::optional<Eigen::Index> known_reduced_dim(const std::string &name);

DatasetManifest parse_manifest(const std::filesystem::path &path);
void write_manifest(const std::filesystem::path &path, const DatasetManifest &manifest);

Dataset load_dataset(const std::filesystem::path &manifest_path);
Dataset load_dataset(const DatasetManifest &manifest);

/// Writes data file(s) next to `manifest_path` and the manifest itself.
/// Returns the manifest as written.
DatasetManifest save_dataset(const std::filesystem::path &manifest_path, const Dataset &data,
                             DataFormat format, const std::string &name = "dataset");

/// 17 significant digits; parses back to the same double.
std::string format_double(double v);

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path &path);

struct SyntheticSpec {
    int classes = 5;
    Eigen::Index ambient_dim = 100;
    Eigen::Index intrinsic_dim = 5;
    Eigen::Index per_class = 40;
    double noise = 0.1;
    std::uint64_t seed = 0;
};

/// Class means ~ N(0, I_r) in an r-dimensional latent space, mapped into d
/// dimensions by a random orthonormal d x r basis, plus isotropic N(0, noise^2)
/// noise. Samples are grouped by class.
Dataset make_blobs(const SyntheticSpec &spec);

/// Checks labels are 0..c-1 with every class present; returns c.
int validate_labels(const Labels &labels);

} // namespace nglge
