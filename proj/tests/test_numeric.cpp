#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "seqdiff/linalg.hpp"
#include "seqdiff/rng.hpp"
#include "seqdiff/tape.hpp"

using namespace seqdiff;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) {
        v = scale * rng.normal();
    }
    return t;
}

} // namespace

TEST_CASE("matmul by identity returns the input") {
    Tape tape;
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) {
        eye.at(i, i) = 1.0;
    }
    Rng rng(7, "t");
    Tensor a = random_tensor({3, 5}, rng);
    Var out = tape.matmul(tape.constant(eye), tape.constant(a));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(tape.value(out)[i] == a[i]);
    }
}

TEST_CASE("softmax over a single element is exactly one") {
    Tape tape;
    Var out = tape.softmax_rows(tape.constant(Tensor({1, 1}, {3.7})));
    CHECK(tape.value(out)[0] == 1.0);
}

TEST_CASE("softmax matches the direct exp/sum oracle") {
    Tape tape;
    const double a = std::log(2.0), b = std::log(1.0);
    Var out = tape.softmax_rows(tape.constant(Tensor({1, 2}, {a, b})));
    // Hand oracle: e^x / sum e^x.
    const double ea = std::exp(a), eb = std::exp(b);
    CHECK(tape.value(out)[0] == doctest::Approx(ea / (ea + eb)).epsilon(1e-14));
    CHECK(tape.value(out)[1] == doctest::Approx(eb / (ea + eb)).epsilon(1e-14));
    CHECK(tape.value(out)[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(tape.value(out)[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("backward of x*x at x=3 is 6") {
    ParamStore params;
    params.create("x", Tensor({1}, {3.0}));
    Tape tape(&params);
    Var x = tape.param("x");
    GradientMap grads = tape.backward(tape.mul(x, x));
    CHECK(grads.at("x")[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward of sum(A*B) matches the transposed-product gradients") {
    Rng rng(11, "t");
    ParamStore params;
    params.create("A", random_tensor({3, 4}, rng));
    params.create("B", random_tensor({4, 5}, rng));

    auto build = [](Tape& t) { return t.sum_all(t.matmul(t.param("A"), t.param("B"))); };
    Tape tape(&params);
    GradientMap grads = tape.backward(build(tape));

    // d/dA sum(AB) = ones * B^T, d/dB = A^T * ones.
    const Tensor& a = params.at("A");
    const Tensor& b = params.at("B");
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t k = 0; k < 4; ++k) {
            double expect = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                expect += b.at(k, j);
            }
            CHECK(grads.at("A").at(i, k) == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t j = 0; j < 5; ++j) {
            double expect = 0.0;
            for (std::size_t i = 0; i < 3; ++i) {
                expect += a.at(i, k);
            }
            CHECK(grads.at("B").at(k, j) == doctest::Approx(expect).epsilon(1e-12));
        }
    }

    FiniteDiffReport fd = finite_diff_check_all(build, params, 1e-5, 1e-8);
    CHECK(fd.passed);
}

TEST_CASE("unused parameter receives a zero gradient of matching shape") {
    Rng rng(3, "t");
    ParamStore params;
    params.create("used", random_tensor({2, 2}, rng));
    params.create("unused", random_tensor({3, 7}, rng));
    Tape tape(&params);
    Var loss = tape.sum_all(tape.param("used"));
    GradientMap grads = tape.backward(loss);
    CHECK(grads.at("unused").shape() == std::vector<std::size_t>{3, 7});
    for (double g : grads.at("unused").values()) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("backward rejects a non-scalar loss") {
    ParamStore params;
    params.create("x", Tensor({2, 2}, {1, 2, 3, 4}));
    Tape tape(&params);
    Var x = tape.param("x");
    CHECK_THROWS_AS((void)tape.backward(x), ShapeError);
}

TEST_CASE("finite differences on a quadratic are accurate to 1e-8") {
    Rng rng(5, "t");
    ParamStore params;
    params.create("x", random_tensor({4}, rng, 2.0));
    auto build = [](Tape& t) {
        Var x = t.param("x");
        return t.sum_all(t.mul(x, x));
    };
    FiniteDiffReport fd = finite_diff_check(build, params, "x", 1e-5, 1e-8);
    CHECK(fd.passed);
    CHECK(fd.max_rel_error < 1e-8);
}

TEST_CASE("finite_diff_check with no parameters passes vacuously") {
    ParamStore params;
    auto build = [](Tape& t) { return t.sum_all(t.constant(Tensor({2}, {1.0, 2.0}))); };
    FiniteDiffReport fd = finite_diff_check_all(build, params, 1e-5, 1e-8);
    CHECK(fd.passed);
    CHECK(fd.checked == 0);
    CHECK(fd.max_rel_error == 0.0);
}

TEST_CASE("finite_diff_check validates step and tolerance bounds") {
    ParamStore params;
    params.create("x", Tensor({1}, {1.0}));
    auto build = [](Tape& t) { return t.sum_all(t.param("x")); };
    CHECK_THROWS_AS((void)finite_diff_check(build, params, "x", 0.0, 1e-6), ValueError);
    CHECK_THROWS_AS((void)finite_diff_check(build, params, "x", 0.02, 1e-6), ValueError);
    CHECK_THROWS_AS((void)finite_diff_check(build, params, "x", 1e-5, 0.0), ValueError);
}

TEST_CASE("every primitive's gradient matches central differences within 1e-6") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Rng rng(seed, "prim");

        // Dense path: matmul, matmul_nt, gelu, softmax, mul, sum.
        ParamStore p1;
        p1.create("A", random_tensor({3, 4}, rng));
        p1.create("B", random_tensor({4, 5}, rng));
        p1.create("C", random_tensor({3, 6}, rng));
        p1.create("D", random_tensor({5, 6}, rng));
        auto g1 = [](Tape& t) {
            Var prod = t.matmul(t.param("A"), t.param("B"));
            Var att = t.softmax_rows(t.matmul_nt(t.param("C"), t.param("D")));
            return t.sum_all(t.mul(t.gelu(prod), att));
        };
        FiniteDiffReport r1 = finite_diff_check_all(g1, p1, 1e-5, 1e-6);
        INFO("dense path worst: " << r1.worst_param << " err " << r1.max_rel_error);
        CHECK(r1.passed);

        // Normalization path: layer norm, row vectors, broadcast, slicing,
        // concat, reshape, scale, sub, mean.
        ParamStore p2;
        p2.create("x", random_tensor({4, 6}, rng));
        p2.create("gain", random_tensor({6}, rng));
        p2.create("bias", random_tensor({6}, rng));
        p2.create("v", random_tensor({3}, rng));
        auto g2 = [](Tape& t) {
            Var ln = t.layer_norm_rows(t.param("x"));
            Var y = t.add_rowvec(t.mul_rowvec(ln, t.param("gain")), t.param("bias"));
            Var s1 = t.slice_cols(y, 0, 3);
            Var s2 = t.slice_cols(y, 3, 3);
            Var bro = t.broadcast_rows(t.param("v"), 4);
            const Var parts[3] = {s1, t.sub(s2, bro), bro};
            Var cat = t.concat_cols(parts);
            Var z = t.reshape(cat, {2, 18});
            return t.mean_all(t.mul(z, t.scale(z, 0.5)));
        };
        FiniteDiffReport r2 = finite_diff_check_all(g2, p2, 1e-5, 1e-6);
        INFO("norm path worst: " << r2.worst_param << " err " << r2.max_rel_error);
        CHECK(r2.passed);
    }
}

TEST_CASE("evaluation is pure: identical inputs give bit-identical outputs") {
    Rng rng(23, "t");
    ParamStore params;
    params.create("A", random_tensor({5, 5}, rng, 3.0));
    auto build = [](Tape& t) {
        Var a = t.param("A");
        return t.softmax_rows(t.gelu(t.matmul(a, a)));
    };
    Tape t1(&params), t2(&params);
    const Tensor& o1 = t1.value(build(t1));
    const Tensor& o2 = t2.value(build(t2));
    REQUIRE(o1.size() == o2.size());
    CHECK(std::memcmp(o1.data(), o2.data(), o1.size() * sizeof(double)) == 0);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(29, "t");
    ParamStore params;
    params.create("x", random_tensor({3, 3}, rng));
    const double a = 1.7, b = -0.4;

    auto f = [](Tape& t) { return t.sum_all(t.mul(t.param("x"), t.param("x"))); };
    auto g = [](Tape& t) { return t.sum_all(t.gelu(t.param("x"))); };

    Tape tf(&params), tg(&params), tc(&params);
    GradientMap gf = tf.backward(f(tf));
    GradientMap gg = tg.backward(g(tg));
    Var combined = tc.add(tc.scale(f(tc), a), tc.scale(g(tc), b));
    GradientMap gc = tc.backward(combined);

    for (std::size_t i = 0; i < gc.at("x").size(); ++i) {
        const double expect = a * gf.at("x")[i] + b * gg.at("x")[i];
        CHECK(gc.at("x")[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("shape mismatches and non-finite intermediates are rejected") {
    Tape tape;
    Var a = tape.constant(Tensor({2, 3}));
    Var b = tape.constant(Tensor({3, 2}));
    CHECK_THROWS_AS((void)tape.add(a, b), ShapeError);
    CHECK_THROWS_AS((void)tape.matmul(a, a), ShapeError);
    CHECK_THROWS_AS((void)tape.slice_cols(a, 2, 5), ShapeError);

    CHECK_THROWS_AS((void)tape.constant(Tensor({1}, {std::nan("")})), ValueError);
    Var big = tape.constant(Tensor({1}, {1e200}));
    CHECK_THROWS_AS((void)tape.mul(big, big), ValueError);
}

TEST_CASE("counter-based rng replays streams exactly and separates tags") {
    Rng a1(42, "alpha", 3), a2(42, "alpha", 3), b(42, "beta", 3);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 256; ++i) {
        const double x = a1.uniform();
        all_equal &= (x == a2.uniform());
        any_diff |= (x != b.uniform());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("rng normal moments are sane") {
    Rng rng(123, "moments");
    const std::size_t n = 200000;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::fabs(mean) < 0.01);
    CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("symmetric eigendecomposition reconstructs the matrix") {
    Rng rng(77, "eig");
    const std::size_t n = 8;
    Tensor a({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = rng.normal();
            a.at(i, j) = v;
            a.at(j, i) = v;
        }
    }
    SymmetricEigen eig = symmetric_eigen(a);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            double av = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                av += a.at(i, j) * eig.vectors.at(j, k);
            }
            CHECK(av == doctest::Approx(eig.values[k] * eig.vectors.at(i, k)).epsilon(1e-9).scale(1.0));
        }
    }
    for (std::size_t k = 1; k < n; ++k) {
        CHECK(eig.values[k - 1] <= eig.values[k]);
    }
}

TEST_CASE("psd_sqrt squares back to the input and rejects indefinite input") {
    Rng rng(78, "sqrt");
    const std::size_t n = 6;
    Tensor b({n, n});
    for (double& v : b.values()) {
        v = rng.normal();
    }
    Tensor a({n, n});
    matmul_nt_raw(b, b, a, false); // b bᵀ is PSD
    Tensor s = psd_sqrt(a);
    Tensor s2({n, n});
    matmul_raw(s, s, s2, false);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(s2[i] == doctest::Approx(a[i]).epsilon(1e-9).scale(1.0));
    }

    Tensor bad({2, 2}, {1.0, 0.0, 0.0, -1e-3});
    CHECK_THROWS_AS((void)psd_sqrt(bad), NumericError);
}
