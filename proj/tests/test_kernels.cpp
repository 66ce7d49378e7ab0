#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "anchorlab/core.hpp"
#include "anchorlab/kernels.hpp"

using namespace anchorlab;
namespace k = anchorlab::kernels;

namespace {

std::vector<double> random_buffer(size_t count, Rng& rng) {
    std::vector<double> v(count);
    for (double& x : v) {
        x = rng.normal(0.0, 1.0);
    }
    return v;
}

bool identical(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("gemm: hand-multiplied 2x2 case") {
    const std::vector<double> a = {1, 2, 3, 4};
    const std::vector<double> b = {0, 1, 1, 0};
    std::vector<double> c(4);
    k::gemm_nn(a.data(), b.data(), c.data(), 2, 2, 2);
    CHECK(c == std::vector<double>{2, 1, 4, 3});
}

TEST_CASE("gemm: identity times A is A") {
    Rng rng(1, 0);
    const auto a = random_buffer(7 * 7, rng);
    std::vector<double> eye(7 * 7, 0.0);
    for (int i = 0; i < 7; ++i) {
        eye[static_cast<size_t>(i) * 7 + i] = 1.0;
    }
    std::vector<double> c(7 * 7);
    k::gemm_nn(eye.data(), a.data(), c.data(), 7, 7, 7);
    CHECK(identical(c, a));
}

TEST_CASE("omp gemm is bit-identical to the serial reference") {
    Rng rng(2, 0);
    for (const auto [m, kk, p] : {std::tuple{1, 1, 1}, std::tuple{9, 9, 9},
                                  std::tuple{37, 64, 201}, std::tuple{130, 400, 97},
                                  std::tuple{256, 201, 201}}) {
        const auto a = random_buffer(static_cast<size_t>(m) * kk, rng);
        const auto b = random_buffer(static_cast<size_t>(kk) * p, rng);
        std::vector<double> c1(static_cast<size_t>(m) * p), c2(c1.size());
        k::gemm_nn(a.data(), b.data(), c1.data(), m, kk, p);
        k::ref::gemm_nn(a.data(), b.data(), c2.data(), m, kk, p);
        CHECK(identical(c1, c2));
        // Accumulating variant too.
        k::gemm_nn(a.data(), b.data(), c1.data(), m, kk, p, true);
        k::ref::gemm_nn(a.data(), b.data(), c2.data(), m, kk, p, true);
        CHECK(identical(c1, c2));
    }
}

TEST_CASE("omp softmax/layernorm/attention match the serial references bitwise") {
    Rng rng(3, 0);
    const int rows = 45, cols = 9;
    const auto x = random_buffer(static_cast<size_t>(rows) * cols, rng);
    std::vector<double> y1(x.size()), y2(x.size());
    k::softmax_rows(x.data(), y1.data(), rows, cols, true, 9);
    k::ref::softmax_rows(x.data(), y2.data(), rows, cols, true, 9);
    CHECK(identical(y1, y2));

    const int d = 33;
    const auto xs = random_buffer(static_cast<size_t>(rows) * d, rng);
    const std::vector<double> gain(static_cast<size_t>(d), 1.0);
    const std::vector<double> bias(static_cast<size_t>(d), 0.0);
    std::vector<double> l1(xs.size()), l2(xs.size());
    std::vector<double> mean1(rows), rstd1(rows), mean2(rows), rstd2(rows);
    k::layer_norm_forward(xs.data(), gain.data(), bias.data(), l1.data(), mean1.data(),
                          rstd1.data(), rows, d, 1e-5);
    k::ref::layer_norm_forward(xs.data(), gain.data(), bias.data(), l2.data(), mean2.data(),
                               rstd2.data(), rows, d, 1e-5);
    CHECK(identical(l1, l2));

    const int batch = 5, n = 9, dh = 16;
    const auto q = random_buffer(static_cast<size_t>(batch) * n * dh, rng);
    const auto kk = random_buffer(q.size(), rng);
    const auto v = random_buffer(q.size(), rng);
    std::vector<double> attn1(static_cast<size_t>(batch) * n * n), attn2(attn1.size());
    std::vector<double> out1(q.size()), out2(q.size());
    k::attention_forward(q.data(), kk.data(), v.data(), attn1.data(), out1.data(), batch, n, dh,
                         true);
    k::ref::attention_forward(q.data(), kk.data(), v.data(), attn2.data(), out2.data(), batch, n,
                              dh, true);
    CHECK(identical(attn1, attn2));
    CHECK(identical(out1, out2));
}

TEST_CASE("softmax rows: closed-form and masking") {
    // Row (0, ln 3) -> (0.25, 0.75).
    const std::vector<double> x = {0.0, std::log(3.0)};
    std::vector<double> y(2);
    k::softmax_rows(x.data(), y.data(), 1, 2);
    CHECK(y[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.75).epsilon(1e-12));

    // Constant row -> uniform.
    const std::vector<double> c = {2.5, 2.5, 2.5, 2.5};
    std::vector<double> u(4);
    k::softmax_rows(c.data(), u.data(), 1, 4);
    for (double p : u) {
        CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
    }

    // Masked first row has a single visible entry.
    Rng rng(4, 0);
    const auto m = random_buffer(9 * 9, rng);
    std::vector<double> s(9 * 9);
    k::softmax_rows(m.data(), s.data(), 9, 9, true, 9);
    CHECK(s[0] == 1.0);
    for (int j = 1; j < 9; ++j) {
        CHECK(s[static_cast<size_t>(j)] == 0.0);
    }
    for (int i = 0; i < 9; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 9; ++j) {
            if (j > i) {
                CHECK(s[static_cast<size_t>(i) * 9 + j] == 0.0);
            }
            sum += s[static_cast<size_t>(i) * 9 + j];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layer norm: row statistics and degenerate row") {
    Rng rng(5, 0);
    const int rows = 8, d = 64;
    auto x = random_buffer(static_cast<size_t>(rows) * d, rng);
    for (int j = 0; j < d; ++j) {
        x[static_cast<size_t>(3) * d + j] = 4.2;  // constant row
    }
    const std::vector<double> gain(static_cast<size_t>(d), 1.0);
    const std::vector<double> bias(static_cast<size_t>(d), 0.0);
    std::vector<double> y(x.size()), mean(rows), rstd(rows);
    k::layer_norm_forward(x.data(), gain.data(), bias.data(), y.data(), mean.data(), rstd.data(),
                          rows, d, 1e-5);
    for (int i = 0; i < rows; ++i) {
        double mu = 0.0, var = 0.0;
        for (int j = 0; j < d; ++j) {
            mu += y[static_cast<size_t>(i) * d + j];
        }
        mu /= d;
        for (int j = 0; j < d; ++j) {
            const double dv = y[static_cast<size_t>(i) * d + j] - mu;
            var += dv * dv;
        }
        var /= d;
        CHECK(std::abs(mu) < 1e-9);
        if (i == 3) {
            // Variance floor keeps the constant row at (numerical) zero.
            for (int j = 0; j < d; ++j) {
                CHECK(std::abs(y[static_cast<size_t>(3) * d + j]) < 1e-9);
            }
        } else {
            CHECK(std::abs(var - 1.0) < 1e-4);
        }
    }
}

TEST_CASE("attention rows are stochastic and causally masked") {
    Rng rng(6, 0);
    const int batch = 3, n = 9, dh = 8;
    const auto q = random_buffer(static_cast<size_t>(batch) * n * dh, rng);
    const auto kk = random_buffer(q.size(), rng);
    const auto v = random_buffer(q.size(), rng);
    std::vector<double> attn(static_cast<size_t>(batch) * n * n), out(q.size());
    k::attention_forward(q.data(), kk.data(), v.data(), attn.data(), out.data(), batch, n, dh,
                         true);
    for (int b = 0; b < batch; ++b) {
        for (int i = 0; i < n; ++i) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                const double a = attn[(static_cast<size_t>(b) * n + i) * n + j];
                CHECK(a >= 0.0);
                if (j > i) {
                    CHECK(a == 0.0);
                }
                sum += a;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}
