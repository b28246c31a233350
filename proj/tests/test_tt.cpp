#include <doctest.h>

#include <cmath>

#include "ttguide/tt.hpp"
#include "tt_oracle.hpp"

using namespace ttguide;

namespace {

TTFormat table2_m1024() { return {{1, 2, 2, 1}, {16, 8, 257, 16}, {1, 2, 2, 1, 1}}; }
TTFormat table2_m2048() { return {{1, 2, 2, 1}, {16, 8, 257, 32}, {1, 2, 2, 1, 1}}; }
TTFormat table2_m4096() { return {{1, 2, 2, 1}, {16, 16, 257, 32}, {1, 2, 2, 1, 1}}; }
TTFormat table3(std::size_t r1, std::size_t r2, std::size_t r3, std::size_t r4) {
    return {{2, 2, 2, 2, 2}, {1, 8, 13, 25, 157}, {1, r1, r2, r3, r4, 1}};
}

} // namespace

TEST_CASE("format validation") {
    CHECK_NOTHROW(table2_m1024().validate());
    CHECK_THROWS_AS((TTFormat{{2, 2}, {2}, {1, 1, 1}}.validate()), ShapeError);
    CHECK_THROWS_AS((TTFormat{{2}, {2}, {1, 1, 1}}.validate()), ShapeError);
    CHECK_THROWS_AS((TTFormat{{2}, {2}, {2, 1}}.validate()), ShapeError);
    CHECK_THROWS_AS((TTFormat{{}, {}, {1}}.validate()), ShapeError);
    CHECK_THROWS_AS((TTFormat{{2, 0}, {2, 2}, {1, 1, 1}}.validate()), ShapeError);
}

TEST_CASE("tt_init") {
    const TTFormat f{{4}, {6}, {1, 1}};
    const auto tt = tt_init(f, 3);
    CHECK(tt.core(0).shape() == Shape{1, 4, 6, 1});
    CHECK(tt_init(f, 3) == tt);
    CHECK_NOTHROW(tt_init(table2_m1024(), 1));

    const double bound = std::sqrt(6.0 / (4.0 + 6.0));
    for (double v : tt.core(0).values()) CHECK(std::abs(v) <= bound);

    const auto m = tt_materialize(tt_init(TTFormat{{2, 3}, {3, 2}, {1, 2, 1}}, 5));
    double norm = 0;
    for (double v : m.values()) norm += v * v;
    CHECK(norm > 0.0);
}

TEST_CASE("tt_apply") {
    SUBCASE("all-ones single core sums the latent") {
        const TTFormat f{{5}, {3}, {1, 1}};
        TTMatrix<double> tt(f, {DenseTensor::constant(f.core_shape(0), 1.0)});
        const auto z = DenseTensor::from_vector({1, 2, 3, 4, 5});
        const auto y = tt_apply(tt, z);
        REQUIRE(y.size() == 3);
        for (double v : y.values()) CHECK(v == 15.0);
    }
    SUBCASE("wrong latent length") {
        const auto tt = tt_init(TTFormat{{2, 2}, {3, 1}, {1, 2, 1}}, 1);
        CHECK_THROWS_AS(tt_apply(tt, DenseTensor::from_vector({1, 2, 3})), ShapeError);
    }
    SUBCASE("agrees with brute-force materialization") {
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            const TTFormat f = test::random_format(seed, 4096);
            const auto tt = tt_init(f, seed);
            const auto z = init_gaussian(Shape{f.in_size()}, seed + 1000);
            const auto y = tt_apply(tt, z);
            const auto dense = test::brute_force_materialize(tt);
            const auto ref = test::row_times(z, dense);
            CHECK(frob_rel_error(y, ref) <= 1e-10);
        }
    }
}

TEST_CASE("tt_materialize") {
    SUBCASE("constant rank-1 cores give the all-ones matrix") {
        const TTFormat f{{2, 3}, {2, 2}, {1, 1, 1}};
        TTMatrix<double> tt(f, {DenseTensor::constant(f.core_shape(0), 1.0), DenseTensor::constant(f.core_shape(1), 1.0)});
        const auto m = tt_materialize(tt);
        CHECK(m.shape() == Shape{6, 4});
        for (double v : m.values()) CHECK(v == 1.0);
    }
    SUBCASE("rank-1 K=2 is a Kronecker product") {
        const TTFormat f{{2, 2}, {2, 2}, {1, 1, 1}};
        const auto tt = tt_init(f, 11);
        const auto m = tt_materialize(tt);
        const auto& a = tt.core(0);  // [1,2,2,1] == 2x2 slice
        const auto& b = tt.core(1);
        for (std::size_t i1 = 0; i1 < 2; ++i1)
            for (std::size_t i2 = 0; i2 < 2; ++i2)
                for (std::size_t j1 = 0; j1 < 2; ++j1)
                    for (std::size_t j2 = 0; j2 < 2; ++j2)
                        CHECK(m(i1 * 2 + i2, j1 * 2 + j2) == doctest::Approx(a[i1 * 2 + j1] * b[i2 * 2 + j2]).epsilon(1e-15));
    }
    SUBCASE("matches the brute-force entry formula") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const auto tt = tt_init(test::random_format(seed, 2048), seed * 3);
            CHECK(frob_rel_error(tt_materialize(tt), test::brute_force_materialize(tt)) <= 1e-12);
        }
    }
    SUBCASE("cap guard") {
        // 32 x 408200 fits under 2^24; an 8 x 2105344 head does not.
        const auto wide = tt_init(table3(8, 16, 16, 8), 1);
        CHECK_THROWS_AS(tt_materialize(wide, std::size_t{1} << 23), CapError);
        const auto over = tt_init(TTFormat{{2, 2, 2, 1}, {16, 16, 257, 32}, {1, 2, 2, 1, 1}}, 1);
        CHECK_THROWS_AS(tt_materialize(over), CapError);
        CHECK_THROWS_AS(tt_materialize(tt_init(TTFormat{{4}, {4}, {1, 1}}, 1), 15), CapError);
    }
}

TEST_CASE("tt_svd") {
    SUBCASE("rank-1 TT-matrix input collapses every rank") {
        // u and v Kronecker-factored along the mode split, so every interleaved
        // unfolding of u v^T has rank one.
        auto kron = [](const std::vector<DenseTensor>& parts) {
            std::vector<double> acc{1.0};
            for (const auto& p : parts) {
                std::vector<double> next;
                for (double a : acc)
                    for (double b : p.values()) next.push_back(a * b);
                acc = std::move(next);
            }
            return acc;
        };
        const auto uv = kron({init_gaussian(Shape{2}, 1), init_gaussian(Shape{2}, 2), init_gaussian(Shape{2}, 3)});
        const auto vv = kron({init_gaussian(Shape{2}, 4), init_gaussian(Shape{3}, 5), init_gaussian(Shape{2}, 6)});
        const auto w = matmul(DenseTensor(Shape{8, 1}, uv), DenseTensor(Shape{1, 12}, vv));
        const auto tt = tt_svd(w, {2, 2, 2}, {2, 3, 2}, {}, 1e-10);
        for (std::size_t r : tt.format().ranks) CHECK(r == 1);
        CHECK(frob_rel_error(tt_materialize(tt), w) <= 1e-10);
    }
    SUBCASE("random 4x4 full-rank round trip") {
        const auto w = init_gaussian(Shape{4, 4}, 77);
        const auto tt = tt_svd(w, {2, 2}, {2, 2});
        CHECK(frob_rel_error(tt_materialize(tt), w) <= 1e-10);
    }
    SUBCASE("identity is exact") {
        DenseTensor id = DenseTensor::zeros(Shape{4, 4});
        for (std::size_t i = 0; i < 4; ++i) id.mutable_values()[i * 5] = 1.0;
        const auto tt = tt_svd(id, {2, 2}, {2, 2}, {}, 0.0);
        CHECK(frob_rel_error(tt_materialize(tt), id) <= 1e-12);
    }
    SUBCASE("rank cap truncates") {
        const auto w = init_gaussian(Shape{16, 16}, 5);
        const auto tt = tt_svd(w, {4, 4}, {4, 4}, {3});
        CHECK(tt.format().ranks == std::vector<std::size_t>{1, 3, 1});
        CHECK(frob_rel_error(tt_materialize(tt), w) > 1e-3);
    }
    SUBCASE("bad factorization") {
        const auto w = init_gaussian(Shape{4, 6}, 5);
        CHECK_THROWS_AS(tt_svd(w, {2, 2}, {2, 2}), ShapeError);
    }
    SUBCASE("exact on random matrices with random factorizations") {
        for (std::uint64_t seed = 0; seed < 25; ++seed) {
            const TTFormat f = test::random_format(seed + 500, 256);
            const auto w = init_gaussian(Shape{f.in_size(), f.out_size()}, seed);
            const auto tt = tt_svd(w, f.in_dims, f.out_dims);
            CHECK(frob_rel_error(tt_materialize(tt), w) <= 1e-10);
        }
    }
}

TEST_CASE("parameter accounting") {
    CHECK(tt_param_count(table2_m1024()) == 32 + 64 + 1028 + 16);
    CHECK(tt_param_count(table2_m2048()) - tt_param_count(table2_m1024()) == 16);
    CHECK(tt_param_count(table2_m4096()) - tt_param_count(table2_m2048()) == 64);
    CHECK(tt_param_count(table3(8, 16, 16, 8)) == 17632);
    CHECK(tt_param_count(table3(12, 16, 16, 12)) - tt_param_count(table3(8, 16, 16, 8)) == 5488);
    CHECK(tt_param_count(table3(16, 16, 16, 16)) - tt_param_count(table3(12, 16, 16, 12)) == 5488);

    SUBCASE("monotone in every rank entry") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            TTFormat f = test::random_format(seed, 4096);
            const std::size_t base = tt_param_count(f);
            for (std::size_t k = 1; k + 1 < f.ranks.size(); ++k) {
                TTFormat g = f;
                ++g.ranks[k];
                CHECK(tt_param_count(g) > base);
            }
        }
    }
}

TEST_CASE("validate_adapter_format") {
    CHECK(table2_m1024().out_size() == 526336);
    CHECK(table2_m2048().out_size() == 1052672);
    CHECK(table2_m4096().out_size() == 2105344);
    CHECK(validate_adapter_format(table2_m1024(), 512, 2, 1024, 4).ok);
    CHECK(validate_adapter_format(table2_m2048(), 512, 2, 2048, 4).ok);
    CHECK(validate_adapter_format(table2_m4096(), 512, 2, 4096, 4).ok);

    const auto bad = validate_adapter_format(table2_m1024(), 512, 2, 1000, 4);
    CHECK_FALSE(bad.ok);
    CHECK(bad.violation.find("D*M + M*Q") != std::string::npos);

    const auto latent = validate_adapter_format(table2_m1024(), 512, 2, 1024, 8);
    CHECK_FALSE(latent.ok);
    CHECK(latent.violation.find("latent") != std::string::npos);

    CHECK(validate_adapter_format(table3(8, 16, 16, 8), 768, 50257, 8, 32).ok);
    CHECK_FALSE(validate_adapter_format(table3(8, 16, 16, 8), 768, 50257, 1, 32).ok);
}

TEST_CASE("tt_backward matches finite differences of a linear functional") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const TTFormat f = test::random_format(seed + 40, 256);
        auto tt = tt_init(f, seed);
        const auto z = init_gaussian(Shape{2, f.in_size()}, seed + 1);
        const auto probe = init_gaussian(Shape{2, f.out_size()}, seed + 2);
        TTChainTape<double> tape;
        tt_apply_batch(tt, z.matrix(), &tape);
        const auto grads = tt_backward(tt, tape, probe.matrix());

        auto objective = [&](const TTMatrix<double>& t) {
            return (tt_apply_batch(t, z.matrix()).array() * probe.matrix().array()).sum();
        };
        for (std::size_t k = 0; k < f.order(); ++k) {
            for (std::size_t p = 0; p < tt.core(k).size(); ++p) {
                auto plus = tt, minus = tt;
                plus.mutable_core(k).mutable_values()[p] += 1e-6;
                minus.mutable_core(k).mutable_values()[p] -= 1e-6;
                const double numeric = (objective(plus) - objective(minus)) / 2e-6;
                CHECK(grads[k][p] == doctest::Approx(numeric).epsilon(1e-6).scale(1.0));
            }
        }
    }
}
