#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "anchorlab/graph.hpp"
#include "testutil.hpp"

using namespace anchorlab;
using namespace anchorlab::diffcore;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    for (double& v : t.data) {
        v = rng.normal(0.0, 1.0);
    }
    return t;
}

}  // namespace

TEST_CASE("matmul: shape errors and hand case") {
    Graph g;
    const Graph::Id a = g.input(Tensor::from({2, 2}, {1, 2, 3, 4}));
    const Graph::Id b = g.input(Tensor::from({2, 2}, {0, 1, 1, 0}));
    const Graph::Id c = g.matmul(a, b);
    CHECK(g.value(c).data == std::vector<double>{2, 1, 4, 3});
    const Graph::Id bad = g.input(Tensor::zeros({3, 2}));
    CHECK_THROWS_AS(g.matmul(a, bad), ShapeMismatchError);
}

TEST_CASE("matmul gradient matches finite differences") {
    Rng rng(1, 0);
    Tensor a = random_tensor({4, 3}, rng);
    Tensor b = random_tensor({3, 5}, rng);
    // Nonlinear scalar objective so dC varies per entry: CE over relu(AB).
    const std::vector<Token> labels = {1, 4, 0, 2};
    auto fn = [&]() {
        Graph g;
        const Graph::Id c = g.relu(g.matmul(g.param(a), g.param(b)));
        return g.value(g.cross_entropy_last_token(c, labels, 1, 5)).data[0];
    };
    a.zero_grad();
    b.zero_grad();
    Graph g;
    const Graph::Id c = g.relu(g.matmul(g.param(a), g.param(b)));
    g.backward(g.cross_entropy_last_token(c, labels, 1, 5));
    CHECK(testutil::max_grad_rel_err(a.grad, testutil::finite_difference(a, fn)) < 1e-6);
    CHECK(testutil::max_grad_rel_err(b.grad, testutil::finite_difference(b, fn)) < 1e-6);
}

TEST_CASE("row_softmax examples") {
    Graph g;
    const Graph::Id x = g.input(Tensor::from({1, 2}, {0.0, std::log(3.0)}));
    const Graph::Id y = g.row_softmax(x);
    CHECK(g.value(y).data[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(g.value(y).data[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax gradient matches finite differences") {
    Rng rng(2, 0);
    Tensor x = random_tensor({3, 6}, rng);
    Tensor w = random_tensor({6, 4}, rng, false);
    // softmax -> fixed linear map -> CE gives every entry a distinct seed.
    const std::vector<Token> labels = {2, 0, 3};
    auto fn = [&]() {
        Graph g;
        const Graph::Id y = g.matmul(g.row_softmax(g.param(x)), g.input(w));
        return g.value(g.cross_entropy_last_token(y, labels, 1, 4)).data[0];
    };
    x.zero_grad();
    Graph g;
    const Graph::Id y = g.matmul(g.row_softmax(g.param(x)), g.input(w));
    g.backward(g.cross_entropy_last_token(y, labels, 1, 4));
    CHECK(testutil::max_grad_rel_err(x.grad, testutil::finite_difference(x, fn)) < 1e-5);
}

TEST_CASE("layer_norm: fixed point, degenerate row, gradient") {
    Graph g;
    Tensor gain = Tensor::zeros({1, 4}, true);
    std::fill(gain.data.begin(), gain.data.end(), 1.0);
    Tensor bias = Tensor::zeros({1, 4}, true);
    // Already-normalized row stays put (up to the epsilon inside the variance).
    const double r2 = std::sqrt(2.0);
    const Graph::Id x = g.input(Tensor::from({1, 4}, {-r2, -0.0, 0.0, r2}));
    const Graph::Id y = g.layer_norm(x, g.param(gain), g.param(bias));
    CHECK(g.value(y).data[0] == doctest::Approx(-r2).epsilon(1e-4));
    CHECK(g.value(y).data[3] == doctest::Approx(r2).epsilon(1e-4));

    // Constant row maps to zeros.
    const Graph::Id cx = g.input(Tensor::from({1, 4}, {5, 5, 5, 5}));
    const Graph::Id cy = g.layer_norm(cx, g.param(gain), g.param(bias));
    for (double v : g.value(cy).data) {
        CHECK(std::abs(v) < 1e-9);
    }
}

TEST_CASE("layer_norm gradient vs finite differences through cross entropy") {
    Rng rng(3, 0);
    Tensor x = random_tensor({4, 7}, rng);
    Tensor gain = random_tensor({1, 7}, rng);
    Tensor bias = random_tensor({1, 7}, rng);
    const std::vector<Token> labels = {2, 5, 0, 6};
    auto fn = [&]() {
        Graph g;
        const Graph::Id y = g.layer_norm(g.param(x), g.param(gain), g.param(bias));
        return g.value(g.cross_entropy_last_token(y, labels, 1, 7)).data[0];
    };
    x.zero_grad();
    gain.zero_grad();
    bias.zero_grad();
    Graph g;
    const Graph::Id y = g.layer_norm(g.param(x), g.param(gain), g.param(bias));
    g.backward(g.cross_entropy_last_token(y, labels, 1, 7));
    CHECK(testutil::max_grad_rel_err(x.grad, testutil::finite_difference(x, fn)) < 1e-5);
    CHECK(testutil::max_grad_rel_err(gain.grad, testutil::finite_difference(gain, fn)) < 1e-5);
    CHECK(testutil::max_grad_rel_err(bias.grad, testutil::finite_difference(bias, fn)) < 1e-5);
}

TEST_CASE("relu and embedding gradients") {
    Rng rng(4, 0);
    Tensor table = random_tensor({11, 5}, rng);
    const std::vector<Token> tokens = {3, 7, 3, 0, 10, 3};
    const std::vector<Token> labels = {1, 4, 0, 2, 3, 1};
    auto fn = [&]() {
        Graph g;
        const Graph::Id e = g.relu(g.embedding(tokens, g.param(table)));
        return g.value(g.cross_entropy_last_token(e, labels, 1, 5)).data[0];
    };
    table.zero_grad();
    Graph g;
    const Graph::Id e = g.relu(g.embedding(tokens, g.param(table)));
    g.backward(g.cross_entropy_last_token(e, labels, 1, 5));
    CHECK(testutil::max_grad_rel_err(table.grad, testutil::finite_difference(table, fn)) < 1e-5);
    CHECK_THROWS_AS(g.embedding({11}, g.param(table)), OutOfRangeError);
}

TEST_CASE("cross entropy: perfect prediction, uniform logits, closed-form grad") {
    // Probability 1 on the label -> loss 0 (via a huge logit margin).
    {
        Graph g;
        Tensor logits = Tensor::zeros({1, 4});
        logits.data = {1000.0, 0.0, 0.0, 0.0};
        const Graph::Id l = g.cross_entropy_last_token(g.input(logits), {0}, 1, 4);
        CHECK(g.value(l).data[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    // Uniform logits over V=201 -> ln 201.
    {
        Graph g;
        Tensor logits = Tensor::zeros({1, 201});
        const Graph::Id l = g.cross_entropy_last_token(g.input(logits), {42}, 1, 201);
        CHECK(g.value(l).data[0] == doctest::Approx(5.3033049080590757).epsilon(1e-12));
    }
    // Gradient = softmax - one_hot on the last row, zero elsewhere.
    {
        Rng rng(5, 0);
        Tensor logits = random_tensor({6, 9}, rng);  // 2 samples of n=3
        const std::vector<Token> labels = {4, 7};
        Graph g;
        const Graph::Id lg = g.param(logits);
        const Graph::Id l = g.cross_entropy_last_token(lg, labels, 3, 9);
        g.backward(l);
        auto fn = [&]() {
            Graph gg;
            return gg.value(gg.cross_entropy_last_token(gg.param(logits), labels, 3, 9)).data[0];
        };
        CHECK(testutil::max_grad_rel_err(logits.grad, testutil::finite_difference(logits, fn)) <
              1e-5);
        // Non-last rows receive exactly zero gradient.
        for (int r = 0; r < 6; ++r) {
            if (r == 2 || r == 5) {
                continue;
            }
            for (int c = 0; c < 9; ++c) {
                CHECK(logits.grad[static_cast<size_t>(r) * 9 + c] == 0.0);
            }
        }
        CHECK_THROWS_AS(g.cross_entropy_last_token(lg, {9, 0}, 3, 9), OutOfRangeError);
    }
}

TEST_CASE("attention gradients match finite differences") {
    Rng rng(6, 0);
    const int batch = 2, n = 5, dh = 4;
    Tensor q = random_tensor({batch * n, dh}, rng);
    Tensor k = random_tensor({batch * n, dh}, rng);
    Tensor v = random_tensor({batch * n, dh}, rng);
    const std::vector<Token> labels = {1, 3};
    for (const bool mask : {false, true}) {
        auto fn = [&]() {
            Graph g;
            const Graph::Id a = g.attention(g.param(q), g.param(k), g.param(v), batch, n, mask);
            return g.value(g.cross_entropy_last_token(a, labels, n, dh)).data[0];
        };
        q.zero_grad();
        k.zero_grad();
        v.zero_grad();
        Graph g;
        const Graph::Id a = g.attention(g.param(q), g.param(k), g.param(v), batch, n, mask);
        g.backward(g.cross_entropy_last_token(a, labels, n, dh));
        CHECK(testutil::max_grad_rel_err(q.grad, testutil::finite_difference(q, fn)) < 1e-4);
        CHECK(testutil::max_grad_rel_err(k.grad, testutil::finite_difference(k, fn)) < 1e-4);
        CHECK(testutil::max_grad_rel_err(v.grad, testutil::finite_difference(v, fn)) < 1e-4);
    }
}

TEST_CASE("backward: sum gradient, accumulation, scalar requirement") {
    Rng rng(7, 0);
    Tensor w = random_tensor({3, 3}, rng);
    Graph g;
    const Graph::Id s = g.sum(g.param(w));
    g.backward(s);
    for (double v : w.grad) {
        CHECK(v == 1.0);
    }
    // Second backward accumulates exactly 2x.
    g.backward(s);
    for (double v : w.grad) {
        CHECK(v == 2.0);
    }
    const Graph::Id mat = g.param(w);
    CHECK_THROWS_AS(g.backward(mat), NotScalarError);
}

TEST_CASE("composed matmul+softmax+cross-entropy graph passes the fd check") {
    Rng rng(8, 0);
    Tensor x = random_tensor({4, 6}, rng, false);
    Tensor w1 = random_tensor({6, 8}, rng);
    Tensor w2 = random_tensor({8, 5}, rng);
    const std::vector<Token> labels = {0, 2, 4, 1};
    auto fn = [&]() {
        Graph g;
        const Graph::Id h = g.relu(g.matmul(g.input(x), g.param(w1)));
        const Graph::Id logits = g.matmul(h, g.param(w2));
        return g.value(g.cross_entropy_last_token(logits, labels, 1, 5)).data[0];
    };
    w1.zero_grad();
    w2.zero_grad();
    Graph g;
    const Graph::Id h = g.relu(g.matmul(g.input(x), g.param(w1)));
    const Graph::Id logits = g.matmul(h, g.param(w2));
    g.backward(g.cross_entropy_last_token(logits, labels, 1, 5));
    CHECK(testutil::max_grad_rel_err(w1.grad, testutil::finite_difference(w1, fn)) < 1e-4);
    CHECK(testutil::max_grad_rel_err(w2.grad, testutil::finite_difference(w2, fn)) < 1e-4);
}

TEST_CASE("add_broadcast_rows and scale gradients") {
    Rng rng(9, 0);
    Tensor a = random_tensor({6, 4}, rng);
    Tensor b = random_tensor({2, 4}, rng);
    auto fn = [&]() {
        Graph g;
        const Graph::Id y = g.scale(g.add_broadcast_rows(g.param(a), g.param(b)), 1.7);
        return g.value(g.sum(y)).data[0];
    };
    a.zero_grad();
    b.zero_grad();
    Graph g;
    const Graph::Id y = g.scale(g.add_broadcast_rows(g.param(a), g.param(b)), 1.7);
    g.backward(g.sum(y));
    CHECK(testutil::max_grad_rel_err(a.grad, testutil::finite_difference(a, fn)) < 1e-6);
    CHECK(testutil::max_grad_rel_err(b.grad, testutil::finite_difference(b, fn)) < 1e-6);
}

TEST_CASE("forward values stay finite on large-magnitude inputs") {
    Graph g;
    Tensor x = Tensor::from({2, 3}, {1e3, -1e3, 500.0, -500.0, 999.0, -999.0});
    const Graph::Id y = g.row_softmax(g.input(x));
    for (double v : g.value(y).data) {
        CHECK(std::isfinite(v));
    }
}
