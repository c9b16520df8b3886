#include "pkg/fusion.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace pkg::fusion {

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw ShapeMismatch("matrix data size does not match " + std::to_string(rows_) + "x" +
                            std::to_string(cols_));
}

bool FeatureMatrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

namespace {

// out = a * b, (n x k) * (k x m)
FeatureMatrix multiply(const FeatureMatrix& a, const FeatureMatrix& b) {
    FeatureMatrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = a.at(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) out.at(i, j) += aik * b.at(k, j);
        }
    return out;
}

// out = a * b^T, (n x k) * (m x k)^T
FeatureMatrix multiply_bt(const FeatureMatrix& a, const FeatureMatrix& b) {
    FeatureMatrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) sum += a.at(i, k) * b.at(j, k);
            out.at(i, j) = sum;
        }
    return out;
}

void require_square(const FeatureMatrix& m, std::size_t d, const char* name) {
    if (m.rows() != d || m.cols() != d)
        throw DimensionMismatch(std::string(name) + " must be " + std::to_string(d) + "x" +
                                std::to_string(d));
}

} // namespace

FeatureMatrix softmax_rows(const FeatureMatrix& m) {
    if (!m.all_finite()) throw NonFiniteInput("softmax input contains NaN or Inf");
    FeatureMatrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double row_max = m.at(i, 0);
        for (std::size_t j = 1; j < m.cols(); ++j) row_max = std::max(row_max, m.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            double e = std::exp(m.at(i, j) - row_max);
            out.at(i, j) = e;
            denom += e;
        }
        for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) /= denom;
    }
    return out;
}

FeatureMatrix attention_scores(const FeatureMatrix& h_txt, const FeatureMatrix& h_img,
                               const FusionWeights& w, const FusionOptions& opts) {
    if (h_txt.rows() == 0 || h_img.rows() == 0)
        throw DimensionMismatch("hidden state matrices need at least one row");
    const std::size_t d = h_txt.cols();
    if (h_img.cols() != d)
        throw DimensionMismatch("text and image hidden dims differ: " + std::to_string(d) +
                                " vs " + std::to_string(h_img.cols()));
    require_square(w.wq, d, "Wq");
    require_square(w.wk, d, "Wk");

    FeatureMatrix scores = multiply_bt(multiply(h_txt, w.wq), multiply(h_img, w.wk));
    if (opts.scale_scores) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t i = 0; i < scores.rows(); ++i)
            for (std::size_t j = 0; j < scores.cols(); ++j) scores.at(i, j) *= scale;
    }
    return scores;
}

FeatureMatrix cross_attend(const FeatureMatrix& h_txt, const FeatureMatrix& h_img,
                           const FusionWeights& w, const FusionOptions& opts) {
    const std::size_t d = h_txt.cols();
    require_square(w.wv, d, "Wv");
    require_square(w.wo, d, "Wo");
    if (!h_txt.all_finite() || !h_img.all_finite())
        throw NonFiniteInput("hidden states contain NaN or Inf");

    FeatureMatrix attn = softmax_rows(attention_scores(h_txt, h_img, w, opts));
    FeatureMatrix context = multiply(attn, multiply(h_img, w.wv)); // n x d
    FeatureMatrix projected = multiply_bt(context, w.wo);          // n x d

    FeatureMatrix out = h_txt; // residual path is a plain copy
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out.at(i, j) += projected.at(i, j);
    if (!out.all_finite()) throw NonFiniteValue("fusion output contains NaN or Inf");
    return out;
}

namespace {

constexpr char kMagic[4] = {'P', 'K', 'G', 'F'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    char bytes[4];
    for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>(v >> (8 * i));
    out.write(bytes, 4);
}

std::uint32_t read_u32(std::ifstream& in) {
    char bytes[4];
    in.read(bytes, 4);
    if (!in) throw ShapeMismatch("feature file truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
    return v;
}

} // namespace

void save_features(const FeatureMatrix& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out.write(kMagic, 4);
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &v, sizeof bits);
        char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>(bits >> (8 * i));
        out.write(bytes, 8);
    }
    if (!out) throw IoFailure("failed writing " + path.string());
}

FeatureMatrix load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingFile(path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw ShapeMismatch("not a feature file (bad magic): " + path.string());
    std::uint32_t rows = read_u32(in);
    std::uint32_t cols = read_u32(in);
    if (rows == 0 || cols == 0) throw ShapeMismatch("feature matrix needs rows >= 1 and cols >= 1");

    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(rows) * cols);
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(rows) * cols; ++i) {
        char bytes[8];
        in.read(bytes, 8);
        if (!in) throw ShapeMismatch("feature file shorter than declared shape");
        std::uint64_t bits = 0;
        for (int j = 0; j < 8; ++j)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[j])) << (8 * j);
        double v = 0;
        std::memcpy(&v, &bits, sizeof v);
        if (!std::isfinite(v)) throw NonFiniteValue("feature file contains NaN or Inf");
        data.push_back(v);
    }
    if (in.get() != std::ifstream::traits_type::eof())
        throw ShapeMismatch("feature file longer than declared shape");
    return FeatureMatrix(rows, cols, std::move(data));
}

void save_features_json(const FeatureMatrix& m, const std::filesystem::path& path) {
    nlohmann::ordered_json obj{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
    out << obj.dump(2) << '\n';
    if (!out) throw IoFailure("failed writing " + path.string());
}

FeatureMatrix load_features_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path.string());
    nlohmann::json obj;
    try {
        in >> obj;
    } catch (const nlohmann::json::exception& e) {
        throw ShapeMismatch(std::string("invalid feature JSON: ") + e.what());
    }
    if (!obj.contains("rows") || !obj.contains("cols") || !obj.contains("data"))
        throw ShapeMismatch("feature JSON needs rows, cols and data");
    std::size_t rows = obj.at("rows").get<std::size_t>();
    std::size_t cols = obj.at("cols").get<std::size_t>();
    if (rows == 0 || cols == 0) throw ShapeMismatch("feature matrix needs rows >= 1 and cols >= 1");
    std::vector<double> data = obj.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols)
        throw ShapeMismatch("feature JSON data length does not match declared shape");
    for (double v : data)
        if (!std::isfinite(v)) throw NonFiniteValue("feature JSON contains NaN or Inf");
    return FeatureMatrix(rows, cols, std::move(data));
}

} // namespace pkg::fusion
