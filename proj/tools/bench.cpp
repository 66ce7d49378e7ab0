// Benchmark comparing the OpenMP kernels against the serial references.
// Checks bit-exact agreement on every shape it times.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "anchorlab/kernels.hpp"
#include "anchorlab/model.hpp"
#include "anchorlab/train.hpp"

using namespace anchorlab;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

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

void bench_gemm(int m, int k, int p, Rng& rng) {
    const auto a = random_buffer(static_cast<size_t>(m) * k, rng);
    const auto b = random_buffer(static_cast<size_t>(k) * p, rng);
    std::vector<double> c_par(static_cast<size_t>(m) * p), c_ref(c_par.size());

    kernels::gemm_nn(a.data(), b.data(), c_par.data(), m, k, p);
    kernels::ref::gemm_nn(a.data(), b.data(), c_ref.data(), m, k, p);
    const bool exact = identical(c_par, c_ref);

    const double flops = 2.0 * m * k * p;
    const int iters = std::max(1, static_cast<int>(2e9 / flops));
    auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) {
        kernels::gemm_nn(a.data(), b.data(), c_par.data(), m, k, p);
    }
    const double t_par = seconds_since(t0) / iters;
    t0 = Clock::now();
    for (int i = 0; i < iters; ++i) {
        kernels::ref::gemm_nn(a.data(), b.data(), c_ref.data(), m, k, p);
    }
    const double t_ref = seconds_since(t0) / iters;
    std::printf("gemm %4dx%4dx%4d  omp %7.2f GF/s  serial %7.2f GF/s  speedup %.2fx  %s\n", m, k,
                p, flops / t_par / 1e9, flops / t_ref / 1e9, t_ref / t_par,
                exact ? "bit-exact" : "MISMATCH");
}

void bench_attention(int batch, int n, int dh, Rng& rng) {
    const size_t rows = static_cast<size_t>(batch) * n;
    const auto q = random_buffer(rows * dh, rng);
    const auto k = random_buffer(rows * dh, rng);
    const auto v = random_buffer(rows * dh, rng);
    std::vector<double> attn(rows * n), out(rows * dh);
    std::vector<double> attn_ref(rows * n), out_ref(rows * dh);

    kernels::attention_forward(q.data(), k.data(), v.data(), attn.data(), out.data(), batch, n,
                               dh, true);
    kernels::ref::attention_forward(q.data(), k.data(), v.data(), attn_ref.data(),
                                    out_ref.data(), batch, n, dh, true);
    const bool exact = identical(attn, attn_ref) && identical(out, out_ref);

    const int iters = 50;
    auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) {
        kernels::attention_forward(q.data(), k.data(), v.data(), attn.data(), out.data(), batch,
                                   n, dh, true);
    }
    const double t_par = seconds_since(t0) / iters;
    t0 = Clock::now();
    for (int i = 0; i < iters; ++i) {
        kernels::ref::attention_forward(q.data(), k.data(), v.data(), attn_ref.data(),
                                        out_ref.data(), batch, n, dh, true);
    }
    const double t_ref = seconds_since(t0) / iters;
    std::printf("attention b=%d n=%d dh=%d  omp %6.3f ms  serial %6.3f ms  speedup %.2fx  %s\n",
                batch, n, dh, t_par * 1e3, t_ref * 1e3, t_ref / t_par,
                exact ? "bit-exact" : "MISMATCH");
}

void bench_train_step() {
    Rng data_rng(7, stream::kDataset);
    const Vocab vocab = Vocab::make(kVocabSize, 20, 100, {3});
    const auto ds = taskgen::gen_identity(data_rng, vocab, 3, 100);

    model::ModelConfig cfg;
    cfg.layers = 2;
    cfg.heads = 2;
    Rng init_rng(7, stream::kInit);
    model::ModelParams params = model::ModelParams::init(cfg, init_rng);
    train::TrainConfig tc;
    train::AdamW opt(tc);

    std::vector<Token> labels;
    for (const auto& s : ds.samples) {
        labels.push_back(s.label);
    }
    model::ForwardOptions opts;
    opts.labels = &labels;

    const int iters = 10;
    auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) {
        model::ForwardPass fp = model::forward(params, ds.samples, opts);
        params.zero_grad();
        fp.graph.backward(fp.loss);
        opt.step(params, 2e-4);
    }
    const double per_step = seconds_since(t0) / iters;
    std::printf("train step (L=2 H=2 d_m=400, batch 100): %.3f s/step, %.1f s per 600-sample epoch\n",
                per_step, per_step * 6);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif
    Rng rng(42, 0);
    bench_gemm(900, 400, 1200, rng);
    bench_gemm(900, 1200, 400, rng);
    bench_gemm(900, 400, 64, rng);
    bench_gemm(900, 201, 201, rng);
    bench_attention(100, 9, 64, rng);
    bench_train_step();
    return 0;
}
