#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "anchorlab/graph.hpp"
#include "anchorlab/taskgen.hpp"
#include "anchorlab/tensor.hpp"

namespace anchorlab::model {

using diffcore::Graph;
using diffcore::Tensor;

// Per-component ablation switches (all on = the full decoder block).
struct Flags {
    bool mask = true;
    bool residual = true;
    bool layer_norm = true;
    bool fnn = true;
    bool linear_after_attn = true;
    bool projection = true;
};

struct ModelConfig {
    int layers = 4;
    int heads = 4;
    int d_m = 400;
    int d_head = 64;
    int vocab = kVocabSize;
    int n = kSeqLen;
    Flags flags;
    double init_scale = 0.02;

    // Dimension constraints implied by removed components:
    // no projection -> d_m == vocab; no linear -> heads * d_head == d_m.
    void validate() const;
    // Rewrites d_m / d_head / heads so the flag set is well-posed.
    ModelConfig adjusted_for_flags() const;
};

struct LayerParams {
    std::vector<Tensor> w_q, w_k, w_v;  // per head, d_m x d_head
    Tensor w_attn;                      // (heads*d_head) x d_m, when linear_after_attn
    Tensor ln1_gain, ln1_bias;
    Tensor w_fc1, w_fc2;                // d_m x 3d_m, 3d_m x d_m
    Tensor ln2_gain, ln2_bias;
};

struct ModelParams {
    ModelConfig config;
    Tensor w_em;   // vocab x d_m
    Tensor x_pos;  // n x d_m, learned
    std::vector<LayerParams> layers;
    Tensor w_proj;  // d_m x vocab
    Tensor b_proj;  // 1 x vocab

    static ModelParams init(const ModelConfig& cfg, Rng& rng);

    // Deterministic traversal of every live parameter; drives init, AdamW
    // state, checkpoints and gradient checks.
    void visit(const std::function<void(const std::string&, Tensor&)>& fn);
    void visit(const std::function<void(const std::string&, const Tensor&)>& fn) const;

    void zero_grad();
    size_t param_count() const;
};

struct LayerTrace {
    std::vector<Tensor> attn;     // per head, (batch*n) x n row-stochastic
    std::vector<Tensor> q, k, v;  // per head, (batch*n) x d_head
    Tensor x_in, x_pr, x_ao, x_do;
};

struct ForwardTrace {
    int batch = 0;
    int n = 0;
    std::vector<LayerTrace> layers;
    Tensor logits;

    // n x n map of one sample.
    Tensor sample_attention(int layer, int head, int sample) const;
};

struct ForwardOptions {
    bool capture = false;
    int override_layer = -1;          // 1-indexed layer whose attention is replaced
    const Tensor* override_attn = nullptr;
    const std::vector<Token>* labels = nullptr;  // enables the loss node
};

struct ForwardPass {
    Graph graph;
    Graph::Id logits = -1;
    Graph::Id loss = -1;  // -1 when no labels were given
    int batch = 0;
    std::optional<ForwardTrace> trace;

    const Tensor& logits_value() const { return graph.value(logits); }
    double loss_value() const { return graph.value(loss).data[0]; }
};

ForwardPass forward(ModelParams& params, const std::vector<TokenSequence>& batch,
                    const ForwardOptions& opts = {});

// argmax of the last row per sample; ties break to the lowest index.
std::vector<Token> predict(const Tensor& logits, int n);
// argmax of every position's row, per sample.
std::vector<std::vector<Token>> predict_all_positions(const Tensor& logits, int n);

// Forward pass with the given layer's attention replaced by a fixed
// row-stochastic matrix (all heads, all samples).
Tensor override_attention(ModelParams& params, const std::vector<TokenSequence>& batch,
                          int layer, const Tensor& replacement);

// The hard one-position-shift map: row i attends to i-1, row 1 to itself
// (rows must be stochastic).
Tensor shift_matrix(int n, int offset = 1);

// Fraction of argmax predictions matching the labels.
double accuracy(ModelParams& params, const taskgen::LabeledDataset& ds, int eval_batch = 256);

// ---------------------------------------------------------------------------
// Fully-connected baseline over the concatenated one-hot sequence.
// ---------------------------------------------------------------------------

struct MlpConfig {
    int n = kSeqLen;
    int vocab = kVocabSize;
    int hidden = 400;
    double init_scale = 0.02;
};

struct MlpParams {
    MlpConfig config;
    std::vector<Tensor> weights;  // 5 affine stages: 4 hidden + output
    std::vector<Tensor> biases;

    static MlpParams init(const MlpConfig& cfg, Rng& rng);
    void visit(const std::function<void(const std::string&, Tensor&)>& fn);
    void zero_grad();
};

struct MlpForward {
    Graph graph;
    Graph::Id logits = -1;  // batch x vocab
    Graph::Id loss = -1;
};

MlpForward mlp_baseline_forward(MlpParams& params, const std::vector<TokenSequence>& batch,
                                const std::vector<Token>* labels = nullptr);

double mlp_accuracy(MlpParams& params, const taskgen::LabeledDataset& ds, int eval_batch = 256);

}  // namespace anchorlab::model
