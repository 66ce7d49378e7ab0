#include "anchorlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "anchorlab/kernels.hpp"

namespace anchorlab::analysis {

using model::Tensor;

double shift_score(const Tensor& attn, int offset) {
    const int n = attn.rows();
    if (offset < 1 || offset >= n) {
        throw std::invalid_argument("shift_score: offset outside [1, n)");
    }
    double sum = 0.0;
    int rows = 0;
    for (int i = offset + 1; i <= n; ++i) {
        sum += attn.at(i - 1, i - offset - 1);
        ++rows;
    }
    return sum / rows;
}

double broadcast_score(const Tensor& attn, int key_col, int start_row) {
    const int n = attn.rows();
    if (start_row < 1 || start_row > n || key_col < 1 || key_col > start_row) {
        throw std::invalid_argument("broadcast_score: need 1 <= c <= r <= n");
    }
    double sum = 0.0;
    int rows = 0;
    for (int i = start_row; i <= n; ++i) {
        sum += attn.at(i - 1, key_col - 1);
        ++rows;
    }
    return sum / rows;
}

std::vector<std::vector<AttentionPattern>> classify_heads(const model::ForwardTrace& trace,
                                                          const std::vector<int>& key_pos,
                                                          double tau) {
    const int n = trace.n;
    const int batch = trace.batch;
    std::vector<std::vector<AttentionPattern>> result;
    for (size_t layer = 0; layer < trace.layers.size(); ++layer) {
        std::vector<AttentionPattern> per_head;
        const size_t heads = trace.layers[layer].attn.size();
        for (size_t head = 0; head < heads; ++head) {
            std::vector<Tensor> maps;
            maps.reserve(static_cast<size_t>(batch));
            for (int b = 0; b < batch; ++b) {
                maps.push_back(trace.sample_attention(static_cast<int>(layer),
                                                      static_cast<int>(head), b));
            }
            AttentionPattern best;

            for (int k = 1; k < n; ++k) {
                double mean = 0.0;
                for (const Tensor& m : maps) {
                    mean += shift_score(m, k);
                }
                mean /= batch;
                if (mean > best.score) {
                    best = AttentionPattern{AttentionPattern::Kind::Shift, k, 0, 0, false, mean};
                }
            }

            // Fixed-column broadcast, (c, r) searched jointly.
            for (int c = 1; c <= n; ++c) {
                for (int r = std::max(c, 2); r <= n; ++r) {
                    double mean = 0.0;
                    for (const Tensor& m : maps) {
                        mean += broadcast_score(m, c, r);
                    }
                    mean /= batch;
                    if (mean > best.score) {
                        best = AttentionPattern{AttentionPattern::Kind::Broadcast, 0, c, r,
                                                false, mean};
                    }
                }
            }

            // Per-sample key column broadcast (the pattern the tasks induce).
            if (static_cast<int>(key_pos.size()) == batch) {
                double mean = 0.0;
                for (int b = 0; b < batch; ++b) {
                    mean += broadcast_score(maps[static_cast<size_t>(b)],
                                            key_pos[static_cast<size_t>(b)],
                                            key_pos[static_cast<size_t>(b)]);
                }
                mean /= batch;
                if (mean > best.score) {
                    best = AttentionPattern{AttentionPattern::Kind::Broadcast, 0, 0, 0, true,
                                            mean};
                }
            }

            if (best.score < tau) {
                best.kind = AttentionPattern::Kind::Other;
            }
            per_head.push_back(best);
        }
        result.push_back(std::move(per_head));
    }
    return result;
}

MappingSequence mapping_sequence(const std::vector<Token>& outputs,
                                 const std::vector<Token>& tokens, int key_index) {
    const int n = static_cast<int>(outputs.size());
    if (key_index < 1 || key_index >= n) {
        throw std::invalid_argument("mapping_sequence: key index outside [1, n)");
    }
    std::vector<int> deltas;
    deltas.push_back(outputs[static_cast<size_t>(key_index)] -
                     tokens[static_cast<size_t>(key_index - 1)]);
    for (int k = key_index + 2; k <= n; ++k) {
        deltas.push_back(outputs[static_cast<size_t>(k - 1)] - outputs[static_cast<size_t>(k - 2)]);
    }
    int j = 0;  // index into deltas of the last nonzero
    for (size_t d = 0; d < deltas.size(); ++d) {
        if (deltas[d] != 0) {
            j = static_cast<int>(d) + 1;
        }
    }
    MappingSequence ms;
    if (j == 0) {
        return ms;  // constant from key_index+1 onward and equal to the key item
    }
    ms.deltas.assign(deltas.begin(), deltas.begin() + j);
    ms.terminal_index = key_index + j;
    ms.stabilized = ms.terminal_index < n;
    return ms;
}

int distinct_mapping_sequences(model::ModelParams& params, const taskgen::LabeledDataset& ds,
                               const std::pair<Token, Token>& pair, int eval_batch) {
    std::set<std::vector<int>> seen;
    std::vector<TokenSequence> chunk;
    std::vector<int> key_pos;
    auto flush = [&]() {
        if (chunk.empty()) {
            return;
        }
        model::ForwardPass fp = model::forward(params, chunk);
        const auto outs = model::predict_all_positions(fp.logits_value(), params.config.n);
        for (size_t i = 0; i < chunk.size(); ++i) {
            const MappingSequence ms =
                mapping_sequence(outs[i], chunk[i].tokens, key_pos[i]);
            seen.insert(ms.deltas);
        }
        chunk.clear();
        key_pos.clear();
    };
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        if (ds.meta[i].pair != pair) {
            continue;
        }
        chunk.push_back(ds.samples[i]);
        key_pos.push_back(ds.meta[i].key_pos);
        if (static_cast<int>(chunk.size()) == eval_batch) {
            flush();
        }
    }
    flush();
    return static_cast<int>(seen.size());
}

namespace {

double cosine(const double* a, const double* b, size_t count) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < count; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

Tensor condensation_similarity(const model::ForwardTrace& trace, int layer) {
    const auto& lt = trace.layers.at(static_cast<size_t>(layer));
    const int heads = static_cast<int>(lt.attn.size());
    if (heads < 2) {
        throw std::invalid_argument("condensation_similarity: need >= 2 heads");
    }
    const size_t map_len = static_cast<size_t>(trace.n) * trace.n;
    Tensor sim = Tensor::zeros({heads, heads});
    for (int h1 = 0; h1 < heads; ++h1) {
        for (int h2 = 0; h2 < heads; ++h2) {
            double mean = 0.0;
            for (int b = 0; b < trace.batch; ++b) {
                const double* a =
                    lt.attn[static_cast<size_t>(h1)].data.data() + static_cast<size_t>(b) * map_len;
                const double* c =
                    lt.attn[static_cast<size_t>(h2)].data.data() + static_cast<size_t>(b) * map_len;
                mean += cosine(a, c, map_len);
            }
            sim.at(h1, h2) = mean / trace.batch;
        }
    }
    return sim;
}

double mean_off_diagonal(const Tensor& sym) {
    const int n = sym.rows();
    double sum = 0.0;
    int count = 0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i != j) {
                sum += sym.at(i, j);
                ++count;
            }
        }
    }
    return count > 0 ? sum / count : 0.0;
}

Tensor qk_alignment(const model::ModelParams& params, int layer, int head) {
    const auto& lp = params.layers.at(static_cast<size_t>(layer));
    const Tensor& wq = lp.w_q.at(static_cast<size_t>(head));
    const Tensor& wk = lp.w_k.at(static_cast<size_t>(head));
    const int n = params.config.n;
    const int dm = params.config.d_m;
    const int dh = params.config.d_head;
    std::vector<double> q(static_cast<size_t>(n) * dh);
    std::vector<double> k(static_cast<size_t>(n) * dh);
    kernels::gemm_nn(params.x_pos.data.data(), wq.data.data(), q.data(), n, dm, dh);
    kernels::gemm_nn(params.x_pos.data.data(), wk.data.data(), k.data(), n, dm, dh);
    Tensor cos = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            cos.at(i, j) = cosine(q.data() + static_cast<size_t>(i) * dh,
                                  k.data() + static_cast<size_t>(j) * dh, static_cast<size_t>(dh));
        }
    }
    return cos;
}

namespace {

// Deterministic power iteration on the covariance; start vector is the basis
// vector of the largest-variance coordinate.
std::vector<double> top_eigenvector(const std::vector<double>& cov, int d, double* eigenvalue) {
    int start = 0;
    for (int j = 1; j < d; ++j) {
        if (cov[static_cast<size_t>(j) * d + j] > cov[static_cast<size_t>(start) * d + start]) {
            start = j;
        }
    }
    std::vector<double> v(static_cast<size_t>(d), 0.0);
    v[static_cast<size_t>(start)] = 1.0;
    std::vector<double> w(static_cast<size_t>(d));
    for (int iter = 0; iter < 500; ++iter) {
        kernels::gemm_nn(cov.data(), v.data(), w.data(), d, d, 1);
        double norm = 0.0;
        for (double x : w) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm == 0.0) {
            break;
        }
        for (int j = 0; j < d; ++j) {
            v[static_cast<size_t>(j)] = w[static_cast<size_t>(j)] / norm;
        }
    }
    kernels::gemm_nn(cov.data(), v.data(), w.data(), d, d, 1);
    double lambda = 0.0;
    for (int j = 0; j < d; ++j) {
        lambda += v[static_cast<size_t>(j)] * w[static_cast<size_t>(j)];
    }
    *eigenvalue = lambda;
    // Sign convention: first coordinate with magnitude above 1e-12 positive.
    for (double x : v) {
        if (std::abs(x) > 1e-12) {
            if (x < 0.0) {
                for (double& y : v) {
                    y = -y;
                }
            }
            break;
        }
    }
    return v;
}

}  // namespace

PcaResult pca_project(const Tensor& vectors) {
    const int m = vectors.rows();
    const int d = vectors.cols();
    if (m < 2) {
        throw std::invalid_argument("pca_project: need at least 2 rows");
    }
    std::vector<double> centered(vectors.data);
    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d; ++j) {
            mean[static_cast<size_t>(j)] += vectors.at(i, j);
        }
    }
    for (double& x : mean) {
        x /= m;
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < d; ++j) {
            centered[static_cast<size_t>(i) * d + j] -= mean[static_cast<size_t>(j)];
        }
    }
    std::vector<double> ct(static_cast<size_t>(d) * m);
    kernels::transpose(centered.data(), ct.data(), m, d);
    std::vector<double> cov(static_cast<size_t>(d) * d);
    kernels::gemm_nn(ct.data(), centered.data(), cov.data(), d, m, d);
    for (double& x : cov) {
        x /= m;
    }
    double total_var = 0.0;
    for (int j = 0; j < d; ++j) {
        total_var += cov[static_cast<size_t>(j) * d + j];
    }
    if (total_var <= 0.0) {
        throw DegenerateDataError("pca_project: zero variance");
    }

    PcaResult res;
    res.components = Tensor::zeros({2, d});
    for (int comp = 0; comp < 2; ++comp) {
        double lambda = 0.0;
        const std::vector<double> v = top_eigenvector(cov, d, &lambda);
        res.eigenvalues.push_back(lambda);
        for (int j = 0; j < d; ++j) {
            res.components.at(comp, j) = v[static_cast<size_t>(j)];
        }
        // Deflate.
        for (int a = 0; a < d; ++a) {
            for (int b = 0; b < d; ++b) {
                cov[static_cast<size_t>(a) * d + b] -=
                    lambda * v[static_cast<size_t>(a)] * v[static_cast<size_t>(b)];
            }
        }
    }
    res.projection = Tensor::zeros({m, 2});
    std::vector<double> comp_t(static_cast<size_t>(d) * 2);
    kernels::transpose(res.components.data.data(), comp_t.data(), 2, d);
    kernels::gemm_nn(centered.data(), comp_t.data(), res.projection.data.data(), m, d, 2);
    return res;
}

double ProjectionResponse::mass(Token lo, Token hi) const {
    double sum = 0.0;
    for (Token t = lo; t <= hi && t < static_cast<Token>(probs.size()); ++t) {
        sum += probs[static_cast<size_t>(t)];
    }
    return sum;
}

double ProjectionResponse::max_prob() const {
    return *std::max_element(probs.begin(), probs.end());
}

ProjectionResponse projection_response(const model::ModelParams& params,
                                       const std::vector<double>& vec) {
    if (!params.config.flags.projection) {
        throw std::invalid_argument("projection_response: model has no projection layer");
    }
    const int dm = params.config.d_m;
    const int v = params.config.vocab;
    if (static_cast<int>(vec.size()) != dm) {
        throw diffcore::ShapeMismatchError("projection_response: vector length != d_m");
    }
    std::vector<double> logits(static_cast<size_t>(v));
    kernels::gemm_nn(vec.data(), params.w_proj.data.data(), logits.data(), 1, dm, v);
    for (int j = 0; j < v; ++j) {
        logits[static_cast<size_t>(j)] += params.b_proj.data[static_cast<size_t>(j)];
    }
    ProjectionResponse resp;
    resp.probs.assign(static_cast<size_t>(v), 0.0);
    kernels::softmax_rows(logits.data(), resp.probs.data(), 1, v);
    return resp;
}

std::pair<std::vector<double>, std::vector<double>> alpha_beta_vectors(
    const model::ForwardTrace& trace, int layer, const std::vector<int>& key_pos) {
    const auto& lt = trace.layers.at(static_cast<size_t>(layer));
    const int d = lt.x_in.cols();
    const int n = trace.n;
    std::vector<double> alpha(static_cast<size_t>(d), 0.0);
    std::vector<double> beta(static_cast<size_t>(d), 0.0);
    size_t alpha_rows = 0, beta_rows = 0;
    for (int b = 0; b < trace.batch; ++b) {
        for (int i = 1; i <= n; ++i) {
            const double* row =
                lt.x_in.data.data() + (static_cast<size_t>(b) * n + i - 1) * d;
            const bool is_key = i == key_pos.at(static_cast<size_t>(b));
            double* dst = is_key ? beta.data() : alpha.data();
            for (int j = 0; j < d; ++j) {
                dst[j] += row[j];
            }
            (is_key ? beta_rows : alpha_rows) += 1;
        }
    }
    for (double& x : alpha) {
        x /= static_cast<double>(alpha_rows);
    }
    for (double& x : beta) {
        x /= static_cast<double>(beta_rows);
    }
    return {alpha, beta};
}

FrequencyComparison frequency_comparison(const train::TrainReport& report_low,
                                         const train::TrainReport& report_high,
                                         double threshold) {
    FrequencyComparison fc;
    fc.epochs_low = report_low.first_epoch_at(&train::ReportRow::acc_test_data, threshold);
    fc.epochs_high = report_high.first_epoch_at(&train::ReportRow::acc_test_data, threshold);
    fc.never_reached_low = !fc.epochs_low.has_value();
    fc.never_reached_high = !fc.epochs_high.has_value();
    return fc;
}

}  // namespace anchorlab::analysis
