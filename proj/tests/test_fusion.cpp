#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pkg/fusion.hpp"
#include "test_support.hpp"

using namespace pkg;
using fusion::FeatureMatrix;
using testsupport::TempDir;

namespace {

FeatureMatrix random_matrix(std::mt19937& rng, std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    FeatureMatrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m.at(i, j) = dist(rng);
    return m;
}

fusion::FusionWeights random_weights(std::mt19937& rng, std::size_t d) {
    return {random_matrix(rng, d, d), random_matrix(rng, d, d), random_matrix(rng, d, d),
            random_matrix(rng, d, d)};
}

} // namespace

TEST_CASE("softmax of a constant row is uniform") {
    FeatureMatrix m(1, 3);
    const auto s = fusion::softmax_rows(m);
    for (std::size_t j = 0; j < 3; ++j) CHECK(s.at(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax closed form for a log-ratio pair") {
    FeatureMatrix m(1, 2);
    m.at(0, 0) = 5.0;
    m.at(0, 1) = 5.0 + std::log(2.0);
    const auto s = fusion::softmax_rows(m);
    CHECK(s.at(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(s.at(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax matches the naive oracle on random input") {
    std::mt19937 rng(3);
    const auto m = random_matrix(rng, 3, 4, 2.0);
    const auto got = fusion::softmax_rows(m);
    const auto want = oracles::naive_softmax(oracles::to_rows(m));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(got.at(i, j) == doctest::Approx(want[i][j]).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
    std::mt19937 rng(4);
    const auto s = fusion::softmax_rows(random_matrix(rng, 5, 7, 50.0));
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < s.cols(); ++j) {
            sum += s.at(i, j);
            CHECK(s.at(i, j) >= 0.0);
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("softmax rejects non-finite input") {
    FeatureMatrix m(1, 2);
    m.at(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(fusion::softmax_rows(m), fusion::NonFiniteInput);
}

TEST_CASE("zero output projection passes the residual through bitwise") {
    std::mt19937 rng(5);
    const auto h_txt = random_matrix(rng, 3, 4);
    const auto h_img = random_matrix(rng, 2, 4);
    fusion::FusionWeights w = random_weights(rng, 4);
    w.wo = FeatureMatrix(4, 4, 0.0);

    const auto out = fusion::cross_attend(h_txt, h_img, w);
    CHECK(out == h_txt);
}

TEST_CASE("single image token attends with weight one") {
    std::mt19937 rng(6);
    const auto h_txt = random_matrix(rng, 3, 2);
    const auto h_img = random_matrix(rng, 1, 2);
    const auto w = random_weights(rng, 2);

    const auto scores = fusion::attention_scores(h_txt, h_img, w);
    const auto attn = fusion::softmax_rows(scores);
    for (std::size_t i = 0; i < 3; ++i) CHECK(attn.at(i, 0) == 1.0);

    // output equals Htxt plus the broadcast projected image vector
    const auto out = fusion::cross_attend(h_txt, h_img, w);
    std::vector<double> v(2, 0.0);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 2; ++k) v[c] += h_img.at(0, k) * w.wv.at(k, c);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 2; ++c) {
            double proj = 0.0;
            for (std::size_t k = 0; k < 2; ++k) proj += v[k] * w.wo.at(c, k);
            CHECK(out.at(i, c) == doctest::Approx(h_txt.at(i, c) + proj).epsilon(1e-12));
        }
}

TEST_CASE("cross_attend matches the scalar-loop oracle") {
    std::mt19937 rng(7);
    const auto h_txt = random_matrix(rng, 2, 2);
    const auto h_img = random_matrix(rng, 3, 2);
    const auto w = random_weights(rng, 2);

    const auto got = fusion::cross_attend(h_txt, h_img, w);
    const auto want = oracles::naive_cross_attend(
        oracles::to_rows(h_txt), oracles::to_rows(h_img), oracles::to_rows(w.wq),
        oracles::to_rows(w.wk), oracles::to_rows(w.wv), oracles::to_rows(w.wo));
    for (std::size_t i = 0; i < got.rows(); ++i)
        for (std::size_t j = 0; j < got.cols(); ++j)
            CHECK(got.at(i, j) == doctest::Approx(want[i][j]).epsilon(1e-10));
}

TEST_CASE("permuting image rows leaves the output unchanged") {
    std::mt19937 rng(8);
    const auto h_txt = random_matrix(rng, 3, 4);
    const auto h_img = random_matrix(rng, 5, 4);
    const auto w = random_weights(rng, 4);

    FeatureMatrix permuted(5, 4);
    const std::size_t perm[5] = {3, 0, 4, 1, 2};
    for (std::size_t j = 0; j < 5; ++j)
        for (std::size_t c = 0; c < 4; ++c) permuted.at(j, c) = h_img.at(perm[j], c);

    const auto a = fusion::cross_attend(h_txt, h_img, w);
    const auto b = fusion::cross_attend(h_txt, permuted, w);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t c = 0; c < a.cols(); ++c)
            CHECK(std::abs(a.at(i, c) - b.at(i, c)) <= 1e-12);
}

TEST_CASE("scaling Wq scales the pre-softmax scores linearly") {
    std::mt19937 rng(9);
    const auto h_txt = random_matrix(rng, 2, 3);
    const auto h_img = random_matrix(rng, 4, 3);
    auto w = random_weights(rng, 3);

    const auto base = fusion::attention_scores(h_txt, h_img, w);
    const double c = 2.5;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) w.wq.at(i, j) *= c;
    const auto scaled = fusion::attention_scores(h_txt, h_img, w);
    for (std::size_t i = 0; i < base.rows(); ++i)
        for (std::size_t j = 0; j < base.cols(); ++j)
            CHECK(scaled.at(i, j) == doctest::Approx(c * base.at(i, j)).epsilon(1e-12));
}

TEST_CASE("optional score scaling divides by sqrt(d)") {
    std::mt19937 rng(10);
    const auto h_txt = random_matrix(rng, 2, 4);
    const auto h_img = random_matrix(rng, 2, 4);
    const auto w = random_weights(rng, 4);

    const auto plain = fusion::attention_scores(h_txt, h_img, w);
    const auto scaled = fusion::attention_scores(h_txt, h_img, w, {.scale_scores = true});
    for (std::size_t i = 0; i < plain.rows(); ++i)
        for (std::size_t j = 0; j < plain.cols(); ++j)
            CHECK(scaled.at(i, j) == doctest::Approx(plain.at(i, j) / 2.0).epsilon(1e-12));
}

TEST_CASE("dimension mismatches are rejected") {
    std::mt19937 rng(11);
    const auto h_txt = random_matrix(rng, 2, 3);
    const auto h_img = random_matrix(rng, 2, 4);
    const auto w = random_weights(rng, 3);
    CHECK_THROWS_AS(fusion::cross_attend(h_txt, h_img, w), fusion::DimensionMismatch);

    const auto h_img_ok = random_matrix(rng, 2, 3);
    auto bad = w;
    bad.wk = random_matrix(rng, 4, 4);
    CHECK_THROWS_AS(fusion::cross_attend(h_txt, h_img_ok, bad), fusion::DimensionMismatch);
}

TEST_CASE("feature files round trip bitwise") {
    TempDir dir;
    std::mt19937 rng(12);
    const auto m = random_matrix(rng, 6, 5, 100.0);

    fusion::save_features(m, dir.file("f.pkgf"));
    const auto loaded = fusion::load_features(dir.file("f.pkgf"));
    CHECK(loaded == m);

    fusion::save_features_json(m, dir.file("f.json"));
    const auto from_json = fusion::load_features_json(dir.file("f.json"));
    CHECK(from_json.rows() == m.rows());
    CHECK(from_json.cols() == m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            CHECK(from_json.at(i, j) == doctest::Approx(m.at(i, j)).epsilon(1e-15));
}

TEST_CASE("feature file validation") {
    TempDir dir;
    CHECK_THROWS_AS(fusion::load_features(dir.file("missing.pkgf")), MissingFile);

    testsupport::write_file(dir.file("bad.pkgf"), "WRNG1234");
    CHECK_THROWS_AS(fusion::load_features(dir.file("bad.pkgf")), fusion::ShapeMismatch);

    // declared 2x2 but carries a single value
    std::string truncated("PKGF", 4);
    const char shape[8] = {2, 0, 0, 0, 2, 0, 0, 0};
    truncated.append(shape, 8);
    truncated.append(8, '\0');
    testsupport::write_file(dir.file("trunc.pkgf"), truncated);
    CHECK_THROWS_AS(fusion::load_features(dir.file("trunc.pkgf")), fusion::ShapeMismatch);

    // NaN payload is rejected
    FeatureMatrix nan_matrix(1, 1);
    nan_matrix.at(0, 0) = 1.0;
    fusion::save_features(nan_matrix, dir.file("n.pkgf"));
    std::string bytes = testsupport::read_file(dir.file("n.pkgf"));
    const double nan_value = std::numeric_limits<double>::quiet_NaN();
    std::string nan_bytes(reinterpret_cast<const char*>(&nan_value), 8);
    bytes.replace(12, 8, nan_bytes);
    testsupport::write_file(dir.file("n.pkgf"), bytes);
    CHECK_THROWS_AS(fusion::load_features(dir.file("n.pkgf")), fusion::NonFiniteValue);
}
