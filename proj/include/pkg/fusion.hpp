#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "pkg/errors.hpp"

namespace pkg::fusion {

// Dense row-major real matrix; rows are tokens/patches, columns the hidden
// dimension.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    FeatureMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;

    bool operator==(const FeatureMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Projections of the one-head cross-attention fusion; all d x d.
struct FusionWeights {
    FeatureMatrix wq;
    FeatureMatrix wk;
    FeatureMatrix wv;
    FeatureMatrix wo;
};

struct FusionOptions {
    // The printed formula carries no score scaling; 1/sqrt(d) is opt-in.
    bool scale_scores = false;
};

// Row-stochastic softmax with per-row max subtraction.
FeatureMatrix softmax_rows(const FeatureMatrix& m);

// H := Htxt + softmax((Htxt Wq)(Himg Wk)^T) (Himg Wv) Wo^T, hidden states as
// rows (the transpose-equivalent of the column-convention formula).
FeatureMatrix cross_attend(const FeatureMatrix& h_txt, const FeatureMatrix& h_img,
                           const FusionWeights& w, const FusionOptions& opts = {});

// Pre-softmax score matrix, exposed so scale behavior can be checked
// directly.
FeatureMatrix attention_scores(const FeatureMatrix& h_txt, const FeatureMatrix& h_img,
                               const FusionWeights& w, const FusionOptions& opts = {});

// Binary feature file: magic "PKGF", u32 rows, u32 cols, row-major f64,
// all little-endian.
FeatureMatrix load_features(const std::filesystem::path& path);
void save_features(const FeatureMatrix& m, const std::filesystem::path& path);

// JSON debug format {"rows", "cols", "data": [...]}.
FeatureMatrix load_features_json(const std::filesystem::path& path);
void save_features_json(const FeatureMatrix& m, const std::filesystem::path& path);

} // namespace pkg::fusion
