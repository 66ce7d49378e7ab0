#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "anchorlab/kernels.hpp"
#include "anchorlab/model.hpp"
#include "testutil.hpp"

using namespace anchorlab;
using namespace anchorlab::model;

namespace {

std::vector<TokenSequence> small_batch(int count, int n, int vocab, uint64_t seed) {
    Rng rng(seed, stream::kDataset);
    std::vector<TokenSequence> batch;
    for (int i = 0; i < count; ++i) {
        TokenSequence s;
        for (int j = 0; j < n; ++j) {
            s.tokens.push_back(rng.uniform_int(0, vocab - 1));
        }
        s.label = rng.uniform_int(0, vocab - 1);
        batch.push_back(std::move(s));
    }
    return batch;
}

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.d_m = 16;
    cfg.d_head = 4;
    cfg.vocab = 23;
    cfg.n = 5;
    return cfg;
}

}  // namespace

TEST_CASE("config validation enforces flag-implied dimensions") {
    ModelConfig cfg = tiny_config();
    cfg.flags.projection = false;
    CHECK_THROWS_AS(cfg.validate(), diffcore::ShapeMismatchError);
    cfg = tiny_config();
    cfg.flags.linear_after_attn = false;
    CHECK_THROWS_AS(cfg.validate(), diffcore::ShapeMismatchError);

    // adjusted_for_flags repairs both.
    cfg = tiny_config();
    cfg.flags.projection = false;
    cfg.flags.linear_after_attn = false;
    const ModelConfig fixed = cfg.adjusted_for_flags();
    CHECK(fixed.d_m == fixed.vocab);
    CHECK(fixed.heads * fixed.d_head == fixed.d_m);
}

TEST_CASE("every ablation flag combination yields a well-shaped forward pass") {
    const auto batch = small_batch(3, 5, 23, 1);
    for (int bits = 0; bits < 64; ++bits) {
        ModelConfig cfg = tiny_config();
        cfg.layers = 1;
        cfg.flags.mask = bits & 1;
        cfg.flags.residual = bits & 2;
        cfg.flags.layer_norm = bits & 4;
        cfg.flags.fnn = bits & 8;
        cfg.flags.linear_after_attn = bits & 16;
        cfg.flags.projection = bits & 32;
        const ModelConfig adjusted = cfg.adjusted_for_flags();
        Rng rng(2, stream::kInit);
        ModelParams params = ModelParams::init(adjusted, rng);
        ForwardPass fp = forward(params, batch);
        CHECK(fp.logits_value().rows() == 3 * 5);
        CHECK(fp.logits_value().cols() == adjusted.vocab);
        for (double v : fp.logits_value().data) {
            CHECK(std::isfinite(v));
        }
    }
}

TEST_CASE("attention rows sum to 1 and respect the causal mask in the trace") {
    const auto batch = small_batch(4, 5, 23, 3);
    Rng rng(4, stream::kInit);
    ModelParams params = ModelParams::init(tiny_config(), rng);
    ForwardOptions opts;
    opts.capture = true;
    ForwardPass fp = forward(params, batch, opts);
    REQUIRE(fp.trace.has_value());
    for (int l = 0; l < 2; ++l) {
        for (int h = 0; h < 2; ++h) {
            for (int b = 0; b < 4; ++b) {
                const Tensor m = fp.trace->sample_attention(l, h, b);
                for (int i = 0; i < 5; ++i) {
                    double sum = 0.0;
                    for (int j = 0; j < 5; ++j) {
                        if (j > i) {
                            CHECK(m.at(i, j) == 0.0);
                        }
                        sum += m.at(i, j);
                    }
                    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("capture on/off yields bit-identical logits") {
    const auto batch = small_batch(4, 5, 23, 5);
    Rng rng(6, stream::kInit);
    ModelParams params = ModelParams::init(tiny_config(), rng);
    ForwardPass plain = forward(params, batch);
    ForwardOptions opts;
    opts.capture = true;
    ForwardPass captured = forward(params, batch, opts);
    CHECK(std::memcmp(plain.logits_value().data.data(), captured.logits_value().data.data(),
                      plain.logits_value().numel() * sizeof(double)) == 0);
}

TEST_CASE("masked model: position-j logits are invariant to later tokens") {
    auto batch = small_batch(1, 5, 23, 7);
    Rng rng(8, stream::kInit);
    ModelParams params = ModelParams::init(tiny_config(), rng);
    ForwardPass before = forward(params, batch);
    // Perturb the last token; logits of earlier positions must not move a bit.
    batch[0].tokens[4] = (batch[0].tokens[4] + 1) % 23;
    ForwardPass after = forward(params, batch);
    for (int pos = 0; pos < 4; ++pos) {
        for (int c = 0; c < 23; ++c) {
            CHECK(before.logits_value().at(pos, c) == after.logits_value().at(pos, c));
        }
    }
}

TEST_CASE("simplified two-layer model equals the closed-form product") {
    // All components removed: logits = Attn2 Attn1 X1 Wv1 Wv2.
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 1;
    cfg.vocab = 19;
    cfg.d_m = 19;
    cfg.d_head = 19;
    cfg.n = 5;
    cfg.flags = {false, false, false, false, false, false};
    cfg.validate();
    Rng rng(9, stream::kInit);
    ModelParams params = ModelParams::init(cfg, rng);
    const auto batch = small_batch(2, 5, 19, 10);
    ForwardOptions opts;
    opts.capture = true;
    ForwardPass fp = forward(params, batch, opts);

    // Straight-line reimplementation with raw kernels.
    namespace k = anchorlab::kernels;
    const int n = 5, d = 19;
    for (int b = 0; b < 2; ++b) {
        std::vector<double> x1(static_cast<size_t>(n) * d);
        for (int i = 0; i < n; ++i) {
            const Token t = batch[static_cast<size_t>(b)].tokens[static_cast<size_t>(i)];
            for (int j = 0; j < d; ++j) {
                x1[static_cast<size_t>(i) * d + j] =
                    params.w_em.at(t, j) + params.x_pos.at(i, j);
            }
        }
        auto one_layer = [&](const std::vector<double>& x, const Tensor& wq, const Tensor& wk,
                             const Tensor& wv) {
            std::vector<double> q(static_cast<size_t>(n) * d), kk(q.size()), v(q.size());
            k::gemm_nn(x.data(), wq.data.data(), q.data(), n, d, d);
            k::gemm_nn(x.data(), wk.data.data(), kk.data(), n, d, d);
            k::gemm_nn(x.data(), wv.data.data(), v.data(), n, d, d);
            std::vector<double> attn(static_cast<size_t>(n) * n), out(q.size());
            k::attention_forward(q.data(), kk.data(), v.data(), attn.data(), out.data(), 1, n,
                                 d, false);
            return out;
        };
        const auto& l0 = params.layers[0];
        const auto& l1 = params.layers[1];
        const std::vector<double> x2 = one_layer(x1, l0.w_q[0], l0.w_k[0], l0.w_v[0]);
        const std::vector<double> x3 = one_layer(x2, l1.w_q[0], l1.w_k[0], l1.w_v[0]);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                CHECK(fp.logits_value().at(b * n + i, j) ==
                      doctest::Approx(x3[static_cast<size_t>(i) * d + j]).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("predict: argmax of the last row with lowest-index ties") {
    Tensor logits = Tensor::zeros({5, 7});
    logits.at(4, 3) = 2.0;
    CHECK(predict(logits, 5) == std::vector<Token>{3});
    // Tie between 1 and 4: lowest index wins.
    Tensor tie = Tensor::zeros({5, 7});
    tie.at(4, 1) = 5.0;
    tie.at(4, 4) = 5.0;
    CHECK(predict(tie, 5) == std::vector<Token>{1});
    // Adding a constant leaves the argmax unchanged.
    for (int c = 0; c < 7; ++c) {
        tie.at(4, c) += 100.0;
    }
    CHECK(predict(tie, 5) == std::vector<Token>{1});
}

TEST_CASE("override_attention: stochasticity precondition and no-op case") {
    const auto batch = small_batch(1, 5, 23, 11);
    Rng rng(12, stream::kInit);
    ModelConfig cfg = tiny_config();
    cfg.heads = 1;
    ModelParams params = ModelParams::init(cfg, rng);

    Tensor bad = Tensor::zeros({5, 5});
    CHECK_THROWS_AS(override_attention(params, batch, 1, bad), diffcore::NotStochasticError);

    // Overriding layer 1 with its own attention map reproduces the logits.
    ForwardOptions opts;
    opts.capture = true;
    ForwardPass fp = forward(params, batch, opts);
    const Tensor own = fp.trace->sample_attention(0, 0, 0);
    const Tensor overridden = override_attention(params, batch, 1, own);
    for (size_t i = 0; i < overridden.numel(); ++i) {
        CHECK(overridden.data[i] == doctest::Approx(fp.logits_value().data[i]).epsilon(1e-12));
    }
}

TEST_CASE("shift matrix is row-stochastic and shifts by the offset") {
    const Tensor m = shift_matrix(9, 1);
    for (int i = 0; i < 9; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 9; ++j) {
            sum += m.at(i, j);
        }
        CHECK(sum == 1.0);
    }
    CHECK(m.at(0, 0) == 1.0);
    for (int i = 1; i < 9; ++i) {
        CHECK(m.at(i, i - 1) == 1.0);
    }
}

TEST_CASE("mlp baseline: shape, degenerate parameters, gradient") {
    MlpConfig cfg;
    cfg.n = 5;
    cfg.vocab = 23;
    cfg.hidden = 13;
    Rng rng(13, stream::kInit);
    MlpParams params = MlpParams::init(cfg, rng);
    const auto batch = small_batch(3, 5, 23, 14);
    MlpForward mf = mlp_baseline_forward(params, batch);
    CHECK(mf.graph.value(mf.logits).rows() == 3);
    CHECK(mf.graph.value(mf.logits).cols() == 23);

    // Zero weights and biases -> uniform prediction probabilities.
    MlpParams zero = params;
    zero.visit([](const std::string&, Tensor& t) {
        std::fill(t.data.begin(), t.data.end(), 0.0);
    });
    MlpForward zf = mlp_baseline_forward(zero, batch);
    for (double v : zf.graph.value(zf.logits).data) {
        CHECK(v == 0.0);
    }

    // Gradient check on a small weight matrix.
    std::vector<Token> labels = {1, 2, 3};
    auto fn = [&]() {
        MlpForward f = mlp_baseline_forward(params, batch, &labels);
        return f.graph.value(f.loss).data[0];
    };
    params.zero_grad();
    MlpForward f = mlp_baseline_forward(params, batch, &labels);
    f.graph.backward(f.loss);
    CHECK(testutil::max_grad_rel_err(params.weights[4].grad,
                                     testutil::finite_difference(params.weights[4], fn)) < 1e-4);
    CHECK(testutil::max_grad_rel_err(params.biases[0].grad,
                                     testutil::finite_difference(params.biases[0], fn)) < 1e-4);
}

TEST_CASE("full 2-layer model passes the finite-difference gradient check") {
    ModelConfig cfg = tiny_config();
    Rng rng(15, stream::kInit);
    ModelParams params = ModelParams::init(cfg, rng);
    const auto batch = small_batch(2, 5, 23, 16);
    std::vector<Token> labels = {4, 9};
    auto fn = [&]() {
        ForwardOptions opts;
        opts.labels = &labels;
        ForwardPass fp = forward(params, batch, opts);
        return fp.loss_value();
    };
    params.zero_grad();
    ForwardOptions opts;
    opts.labels = &labels;
    ForwardPass fp = forward(params, batch, opts);
    fp.graph.backward(fp.loss);
    // Every parameter tensor, spot-checked in full.
    params.visit([&](const std::string& name, Tensor& t) {
        INFO("parameter ", name);
        CHECK(testutil::max_grad_rel_err(t.grad, testutil::finite_difference(t, fn)) < 1e-4);
    });
}
