#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "ttguide/tasks.hpp"
#include "ttguide/trainer.hpp"

using namespace ttguide;

namespace {

double row_mean(const Dataset& d, std::size_t i) {
    double s = 0;
    for (std::size_t j = 0; j < d.input_width(); ++j) s += d.inputs(i, j);
    return s / static_cast<double>(d.input_width());
}

std::vector<double> row(const Dataset& d, std::size_t i) {
    const auto v = d.inputs.values().subspan(i * d.input_width(), d.input_width());
    return {v.begin(), v.end()};
}

} // namespace

TEST_CASE("quantum-dot images are clean at zero noise") {
    const Dataset d = gen_quantum_dot(20, 0.0, 3);
    REQUIRE(d.inputs.shape() == Shape{20, kQdPixels});
    std::size_t exact = 0;
    for (double p : d.inputs.values()) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
        exact += (p == 0.0 || p == 1.0);
    }
    // feathered pixels are a minority
    CHECK(exact > d.inputs.size() / 2);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto r = row(d, i);
        CHECK(std::count(r.begin(), r.end(), 1.0) > 0);
        CHECK(std::count(r.begin(), r.end(), 0.0) > 0);
    }
    for (std::size_t i = 0; i < 20; ++i) CHECK(d.labels[i] == i % 2);

    const Dataset other = gen_quantum_dot(20, 0.0, 4);
    for (std::size_t i = 0; i < 20; ++i) CHECK(row(d, i) != row(other, i));
    for (std::size_t i = 1; i < 20; ++i) CHECK(row(d, i) != row(d, i - 1));
}

TEST_CASE("quantum-dot balance, clamp and determinism") {
    const Dataset d = gen_quantum_dot(2000, 0.3, 1);
    CHECK(d.class_counts() == std::vector<std::size_t>{1000, 1000});
    CHECK(*std::min_element(d.inputs.values().begin(), d.inputs.values().end()) >= 0.0);
    CHECK(*std::max_element(d.inputs.values().begin(), d.inputs.values().end()) <= 1.0);

    const Dataset heavy = gen_quantum_dot(10, 2.0, 1);
    for (double p : heavy.inputs.values()) CHECK((p >= 0.0 && p <= 1.0));

    const Dataset again = gen_quantum_dot(10, 2.0, 1);
    CHECK(again.inputs == heavy.inputs);
    CHECK(again.labels == heavy.labels);

    CHECK_THROWS_AS(gen_quantum_dot(7, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(gen_quantum_dot(8, -1.0, 1), ConfigError);
}

TEST_CASE("double-dot images cover more pixels than single-dot images") {
    // Monte-Carlo over 200 images per class
    const Dataset d = gen_quantum_dot(400, 0.0, 9);
    double m[2] = {0, 0};
    for (std::size_t i = 0; i < d.size(); ++i) m[d.labels[i]] += row_mean(d, i);
    CHECK(m[1] / 200 > m[0] / 200);
}

TEST_CASE("wide-output task") {
    const Dataset d = gen_wide_output(400, 8, 100, 0.0, 2);
    CHECK(d.class_counts() == std::vector<std::size_t>(100, 4));
    // zero noise: every sample equals its prototype
    for (std::size_t i = 100; i < 400; ++i) CHECK(row(d, i) == row(d, i % 100));

    // Bayes-optimal at zero noise: logits = -alpha * squared distance to each prototype.
    RowMatrixXd logits(400, 100);
    for (std::size_t i = 0; i < 400; ++i)
        for (std::size_t q = 0; q < 100; ++q) {
            double s = 0;
            for (std::size_t j = 0; j < 8; ++j) s += std::pow(d.inputs(i, j) - d.inputs(q, j), 2);
            logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(q)) = -1e4 * s;
        }
    CHECK(std::exp(cross_entropy(logits, d.labels)) == doctest::Approx(1.0).epsilon(1e-9));

    const Dataset noisy = gen_wide_output(200, 8, 100, 0.5, 2);
    CHECK(row(noisy, 0) != row(noisy, 100));
    CHECK(gen_wide_output(200, 8, 100, 0.5, 2).inputs == noisy.inputs);

    CHECK_THROWS_AS(gen_wide_output(50, 8, 100, 0.1, 1), ConfigError);
    CHECK_THROWS_AS(gen_wide_output(50, 8, 1, 0.1, 1), ConfigError);
}

TEST_CASE("frozen backbone") {
    const FrozenBackbone a = make_backbone(2500, 64, 2, 5);
    const FrozenBackbone b = make_backbone(2500, 64, 2, 5);
    CHECK(a.W0 == b.W0);
    CHECK(a.feature_map == b.feature_map);
    CHECK_FALSE(make_backbone(2500, 64, 2, 6).W0 == a.W0);

    std::size_t near = 0;
    const auto F = a.feature_map.matrix();
    for (Eigen::Index j = 0; j < F.cols(); ++j) near += std::abs(F.col(j).norm() - 1.0) <= 0.2;
    CHECK(static_cast<double>(near) >= 0.95 * 64);

    const DenseTensor zero = DenseTensor::zeros(Shape{3, 2500});
    CHECK(a.features(zero.matrix()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(forward(Adapter{make_lora(64, 2, 2, 1)}, a, zero).matrix().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("stratified split") {
    const Dataset d = gen_quantum_dot(2000, 0.3, 4);
    const auto [tr, te] = split(d, 0.9, 7);
    CHECK(tr.size() == 1800);
    CHECK(te.size() == 200);
    CHECK(tr.class_counts() == std::vector<std::size_t>{900, 900});

    // partition: every original row lands in exactly one half
    std::map<double, int> seen;
    for (std::size_t i = 0; i < d.size(); ++i) seen[row_mean(d, i) + 10.0 * d.labels[i]]++;
    for (const Dataset* part : {&tr, &te})
        for (std::size_t i = 0; i < part->size(); ++i) seen[row_mean(*part, i) + 10.0 * part->labels[i]]--;
    for (const auto& [k, v] : seen) CHECK(v == 0);

    const auto [tr2, te2] = split(d, 0.9, 7);
    CHECK(tr2.inputs == tr.inputs);
    CHECK(te2.labels == te.labels);
    const auto [tr3, te3] = split(d, 0.9, 8);
    CHECK_FALSE(tr3.inputs == tr.inputs);

    const Dataset w = gen_wide_output(301, 4, 3, 0.1, 1);
    const auto [a, b] = split(w, 0.5, 1);
    const auto ca = a.class_counts(), cw = w.class_counts();
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(2.0 * static_cast<double>(ca[c]) - static_cast<double>(cw[c])) <= 2.0);
    CHECK(a.size() + b.size() == 301);

    CHECK_THROWS_AS(split(d, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(split(d, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(split(gen_quantum_dot(2, 0.0, 1), 0.9, 1), ConfigError);
}
