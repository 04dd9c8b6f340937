#include "nglge/data_io.hpp"

#include "nglge/error.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace nglge {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string &text, const std::string &field) {
    T value{};
    const auto *begin = text.data();
    const auto *end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw FormatError("cannot parse " + field + " from '" + text + "'");
    return value;
}

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ','))
        out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',')
        out.emplace_back();
    return out;
}

std::ifstream open_in(const fs::path &path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in)
        throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

std::ofstream open_out(const fs::path &path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out)
        throw IoError("cannot open '" + path.string() + "' for writing");
    return out;
}

double to_little_endian(double v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::array<unsigned char, sizeof(double)> bytes;
        std::memcpy(bytes.data(), &v, sizeof v);
        std::reverse(bytes.begin(), bytes.end());
        std::memcpy(&v, bytes.data(), sizeof v);
        return v;
    }
}

} // namespace

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                   std::chars_format::general, 17);
    (void)ec;
    return std::string(buf.data(), ptr);
}

std::optional<Eigen::Index> known_reduced_dim(const std::string &name) {
    static const std::map<std::string, Eigen::Index> dims{
        {"EYaleB", 140}, {"YTC", 150}, {"Binalpha", 200},
        {"USPS", 40},    {"ETH80", 70}, {"15-Scene", 140},
    };
    if (auto it = dims.find(name); it != dims.end())
        return it->second;
    return std::nullopt;
}

int validate_labels(const Labels &labels) {
    if (labels.empty())
        return 0;
    const int lo = *std::min_element(labels.begin(), labels.end());
    const int hi = *std::max_element(labels.begin(), labels.end());
    if (lo != 0)
        throw FormatError("labels: class ids must start at 0, smallest is " + std::to_string(lo));
    std::vector<bool> seen(static_cast<std::size_t>(hi) + 1, false);
    for (int l : labels)
        seen[static_cast<std::size_t>(l)] = true;
    for (std::size_t c = 0; c < seen.size(); ++c)
        if (!seen[c])
            throw FormatError("labels: class ids are not contiguous, missing " + std::to_string(c));
    return hi + 1;
}

DatasetManifest parse_manifest(const fs::path &path) {
    auto in = open_in(path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("manifest line " + std::to_string(lineno) + ": expected key = value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    auto require = [&](const std::string &key) -> const std::string & {
        auto it = kv.find(key);
        if (it == kv.end() || it->second.empty())
            throw FormatError("manifest: missing field '" + key + "'");
        return it->second;
    };

    DatasetManifest m;
    const fs::path base = path.parent_path();
    m.name = kv.count("name") ? kv["name"] : path.stem().string();
    const std::string &format = require("format");
    if (format == "csv")
        m.format = DataFormat::csv;
    else if (format == "binary")
        m.format = DataFormat::binary;
    else
        throw FormatError("manifest: field 'format' must be csv or binary, got '" + format + "'");
    m.d = parse_number<Eigen::Index>(require("d"), "d");
    m.n = parse_number<Eigen::Index>(require("n"), "n");
    m.c = parse_number<int>(require("c"), "c");
    if (m.d < 1 || m.n < 1 || m.c < 1)
        throw FormatError("manifest: d, n and c must be positive");
    m.data = base / require("data");
    if (m.format == DataFormat::binary)
        m.labels = base / require("labels");
    if (auto it = kv.find("reduced_dim"); it != kv.end())
        m.reduced_dim = parse_number<Eigen::Index>(it->second, "reduced_dim");
    else
        m.reduced_dim = known_reduced_dim(m.name);
    if (auto it = kv.find("trainers"); it != kv.end()) {
        std::istringstream list(it->second);
        std::string item;
        while (std::getline(list, item, ','))
            m.trainers_per_class.push_back(parse_number<int>(trim(item), "trainers"));
    }
    return m;
}

void write_manifest(const fs::path &path, const DatasetManifest &m) {
    auto out = open_out(path);
    out << "name = " << m.name << '\n'
        << "format = " << (m.format == DataFormat::csv ? "csv" : "binary") << '\n'
        << "d = " << m.d << '\n'
        << "n = " << m.n << '\n'
        << "c = " << m.c << '\n'
        << "data = " << m.data.filename().string() << '\n';
    if (m.format == DataFormat::binary)
        out << "labels = " << m.labels.filename().string() << '\n';
    if (m.reduced_dim)
        out << "reduced_dim = " << *m.reduced_dim << '\n';
    if (!m.trainers_per_class.empty()) {
        out << "trainers = ";
        for (std::size_t i = 0; i < m.trainers_per_class.size(); ++i)
            out << (i ? "," : "") << m.trainers_per_class[i];
        out << '\n';
    }
    if (!out)
        throw IoError("failed writing manifest '" + path.string() + "'");
}

Eigen::MatrixXd read_csv_matrix(const fs::path &path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty())
            continue;
        std::vector<double> row;
        for (const auto &cell : split_csv_line(line))
            row.push_back(parse_number<double>(
                cell, "value on line " + std::to_string(lineno) + " of '" + path.string() + "'"));
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError("'" + path.string() + "' line " + std::to_string(lineno) + ": " +
                              std::to_string(row.size()) + " values, expected " +
                              std::to_string(rows.front().size()));
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                      rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return x;
}

namespace {

Dataset load_csv(const DatasetManifest &m) {
    const Eigen::MatrixXd raw = read_csv_matrix(m.data);
    if (raw.rows() != m.d + 1)
        throw FormatError("field d: '" + m.data.string() + "' has " + std::to_string(raw.rows()) +
                          " rows, expected d + 1 = " + std::to_string(m.d + 1));
    if (raw.cols() != m.n)
        throw FormatError("field n: '" + m.data.string() + "' has " + std::to_string(raw.cols()) +
                          " columns, expected " + std::to_string(m.n));
    Dataset out;
    out.x = raw.topRows(m.d);
    out.labels.resize(static_cast<std::size_t>(m.n));
    for (Eigen::Index j = 0; j < m.n; ++j) {
        const double v = raw(m.d, j);
        if (v != static_cast<double>(static_cast<int>(v)))
            throw FormatError("labels: non-integer label " + format_double(v) + " at sample " +
                              std::to_string(j));
        out.labels[static_cast<std::size_t>(j)] = static_cast<int>(v);
    }
    return out;
}

Dataset load_binary(const DatasetManifest &m) {
    auto in = open_in(m.data, std::ios::in | std::ios::binary);
    const auto expected = static_cast<std::uintmax_t>(m.d) * static_cast<std::uintmax_t>(m.n) *
                          sizeof(double);
    const auto actual = fs::file_size(m.data);
    if (actual != expected)
        throw FormatError("'" + m.data.string() + "': expected " + std::to_string(expected) +
                          " bytes (d*n*8), found " + std::to_string(actual));
    std::vector<double> buffer(static_cast<std::size_t>(m.d * m.n));
    in.read(reinterpret_cast<char *>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(double)));
    if (!in)
        throw IoError("failed reading '" + m.data.string() + "'");

    Dataset out;
    out.x.resize(m.d, m.n);
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < m.d; ++i)
        for (Eigen::Index j = 0; j < m.n; ++j)
            out.x(i, j) = to_little_endian(buffer[at++]);

    auto lin = open_in(m.labels);
    int label = 0;
    while (lin >> label)
        out.labels.push_back(label);
    if (!lin.eof())
        throw FormatError("labels: '" + m.labels.string() + "' has a non-integer entry");
    if (static_cast<Eigen::Index>(out.labels.size()) != m.n)
        throw FormatError("field n: '" + m.labels.string() + "' has " +
                          std::to_string(out.labels.size()) + " labels, expected " +
                          std::to_string(m.n));
    return out;
}

} // namespace

Dataset load_dataset(const DatasetManifest &m) {
    Dataset out = m.format == DataFormat::csv ? load_csv(m) : load_binary(m);
    const int classes = validate_labels(out.labels);
    if (classes != m.c)
        throw FormatError("field c: labels contain " + std::to_string(classes) +
                          " classes, manifest declares " + std::to_string(m.c));
    return out;
}

Dataset load_dataset(const fs::path &manifest_path) {
    return load_dataset(parse_manifest(manifest_path));
}

DatasetManifest save_dataset(const fs::path &manifest_path, const Dataset &data,
                             DataFormat format, const std::string &name) {
    if (static_cast<Eigen::Index>(data.labels.size()) != data.samples())
        throw InvalidArgument("save_dataset: label count differs from sample count");
    DatasetManifest m;
    m.name = name;
    m.format = format;
    m.d = data.features();
    m.n = data.samples();
    m.c = validate_labels(data.labels);
    m.reduced_dim = known_reduced_dim(name);
    const fs::path base = manifest_path.parent_path();
    const std::string stem = manifest_path.stem().string();

    if (format == DataFormat::csv) {
        m.data = base / (stem + ".csv");
        auto out = open_out(m.data);
        for (Eigen::Index i = 0; i < m.d; ++i) {
            for (Eigen::Index j = 0; j < m.n; ++j)
                out << (j ? "," : "") << format_double(data.x(i, j));
            out << '\n';
        }
        for (Eigen::Index j = 0; j < m.n; ++j)
            out << (j ? "," : "") << data.labels[static_cast<std::size_t>(j)];
        out << '\n';
        if (!out)
            throw IoError("failed writing '" + m.data.string() + "'");
    } else {
        m.data = base / (stem + ".f64");
        m.labels = base / (stem + ".labels");
        auto out = open_out(m.data, std::ios::out | std::ios::binary);
        for (Eigen::Index i = 0; i < m.d; ++i)
            for (Eigen::Index j = 0; j < m.n; ++j) {
                const double v = to_little_endian(data.x(i, j));
                out.write(reinterpret_cast<const char *>(&v), sizeof v);
            }
        if (!out)
            throw IoError("failed writing '" + m.data.string() + "'");
        auto lout = open_out(m.labels);
        for (std::size_t j = 0; j < data.labels.size(); ++j)
            lout << (j ? " " : "") << data.labels[j];
        lout << '\n';
    }
    write_manifest(manifest_path, m);
    return m;
}

Dataset make_blobs(const SyntheticSpec &spec) {
    if (spec.classes < 1 || spec.per_class < 1)
        throw InvalidArgument("make_blobs: need at least one class and one sample per class");
    if (spec.intrinsic_dim < 1 || spec.intrinsic_dim > spec.ambient_dim)
        throw InvalidArgument("make_blobs: need 1 <= intrinsic_dim <= ambient_dim");
    if (!(spec.noise >= 0))
        throw InvalidArgument("make_blobs: noise must be nonnegative");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd g(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i)
                g(i, j) = normal(rng);
        return g;
    };

    const Eigen::MatrixXd basis =
        Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian(spec.ambient_dim, spec.intrinsic_dim))
            .householderQ() *
        Eigen::MatrixXd::Identity(spec.ambient_dim, spec.intrinsic_dim);
    const Eigen::MatrixXd means = gaussian(spec.intrinsic_dim, spec.classes);

    Dataset out;
    const Eigen::Index n = spec.classes * spec.per_class;
    out.x.resize(spec.ambient_dim, n);
    out.labels.reserve(static_cast<std::size_t>(n));
    Eigen::Index col = 0;
    for (int c = 0; c < spec.classes; ++c) {
        const Eigen::VectorXd center = basis * means.col(c);
        for (Eigen::Index s = 0; s < spec.per_class; ++s, ++col) {
            out.x.col(col) = center + spec.noise * gaussian(spec.ambient_dim, 1);
            out.labels.push_back(c);
        }
    }
    return out;
}

} // namespace nglge
