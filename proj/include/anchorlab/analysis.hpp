#pragma once

#include <optional>
#include <vector>

#include "anchorlab/model.hpp"
#include "anchorlab/train.hpp"

namespace anchorlab::analysis {

struct DegenerateDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Mean sub-diagonal mass: rows i in [k+1, n] of attn[i][i-k] (1-indexed).
double shift_score(const model::Tensor& attn, int offset);
// Mean attention on column c over rows [r, n].
double broadcast_score(const model::Tensor& attn, int key_col, int start_row);

struct AttentionPattern {
    enum class Kind { Shift, Broadcast, Other };
    Kind kind = Kind::Other;
    int shift_offset = 0;
    int col = 0;        // broadcast column (0 = per-sample key column)
    int start_row = 0;  // broadcast start row (0 = per-sample key row)
    bool key_anchored = false;
    double score = 0.0;
};

// Per-(layer, head) best pattern over a probe batch. key_pos holds each
// sample's 1-indexed key position; when empty only the fixed-(c, r) search
// runs. A head is Other unless its best score reaches tau.
std::vector<std::vector<AttentionPattern>> classify_heads(const model::ForwardTrace& trace,
                                                          const std::vector<int>& key_pos,
                                                          double tau = 0.8);

struct MappingSequence {
    std::vector<int> deltas;
    int terminal_index = 0;  // j of the definition; 0 when the sequence is empty
    bool stabilized = true;  // false when outputs never settle before position n
};

// Successive output differences after the key item until the per-position
// outputs stabilize. `outputs` holds argmax predictions for every position.
MappingSequence mapping_sequence(const std::vector<Token>& outputs,
                                 const std::vector<Token>& tokens, int key_index);

// Number of distinct mapping sequences the model produces on the dataset's
// samples of one anchor pair.
int distinct_mapping_sequences(model::ModelParams& params, const taskgen::LabeledDataset& ds,
                               const std::pair<Token, Token>& pair, int eval_batch = 256);

// H x H mean pairwise cosine similarity of flattened attention maps.
model::Tensor condensation_similarity(const model::ForwardTrace& trace, int layer);
double mean_off_diagonal(const model::Tensor& sym);

// Cosine between rows of X_pos W_Q and X_pos W_K of one head.
model::Tensor qk_alignment(const model::ModelParams& params, int layer, int head);

struct PcaResult {
    model::Tensor projection;  // m x 2
    model::Tensor components;  // 2 x d, orthonormal, sign-normalized
    std::vector<double> eigenvalues;
};

// Top-2 principal components via deterministic power iteration with
// deflation. Sign convention: first coordinate above 1e-12 is positive.
PcaResult pca_project(const model::Tensor& vectors);

struct ProjectionResponse {
    std::vector<double> probs;
    double mass(Token lo, Token hi) const;
    double max_prob() const;
};

// softmax(v W_proj + b_proj) for a d_m row vector.
ProjectionResponse projection_response(const model::ModelParams& params,
                                       const std::vector<double>& vec);

// Mean X^(l) input rows split into key-position rows (beta0) and the rest
// (alpha0), over a captured probe trace.
std::pair<std::vector<double>, std::vector<double>> alpha_beta_vectors(
    const model::ForwardTrace& trace, int layer, const std::vector<int>& key_pos);

struct FrequencyComparison {
    std::optional<int> epochs_low;   // task one
    std::optional<int> epochs_high;  // task two
    bool never_reached_low = false;
    bool never_reached_high = false;
};

// First epoch with test accuracy >= threshold for each report.
FrequencyComparison frequency_comparison(const train::TrainReport& report_low,
                                         const train::TrainReport& report_high,
                                         double threshold = 0.9);

}  // namespace anchorlab::analysis
