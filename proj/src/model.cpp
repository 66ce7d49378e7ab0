#include "anchorlab/model.hpp"

#include <algorithm>
#include <cmath>

namespace anchorlab::model {

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || d_m < 1 || d_head < 1 || vocab < 2 || n < 2) {
        throw diffcore::ShapeMismatchError("ModelConfig: all dimensions must be >= 1");
    }
    if (!flags.projection && d_m != vocab) {
        throw diffcore::ShapeMismatchError("ModelConfig: no projection requires d_m == vocab");
    }
    if (!flags.linear_after_attn && heads * d_head != d_m) {
        throw diffcore::ShapeMismatchError(
            "ModelConfig: no linear-after-attention requires heads*d_head == d_m");
    }
}

ModelConfig ModelConfig::adjusted_for_flags() const {
    ModelConfig cfg = *this;
    if (!cfg.flags.projection) {
        cfg.d_m = cfg.vocab;
    }
    if (!cfg.flags.linear_after_attn) {
        if (cfg.d_m % cfg.heads != 0) {
            cfg.heads = 1;
        }
        cfg.d_head = cfg.d_m / cfg.heads;
    }
    cfg.validate();
    return cfg;
}

namespace {

Tensor gaussian(std::vector<int> shape, double stddev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (double& v : t.data) {
        v = rng.normal(0.0, stddev);
    }
    return t;
}

Tensor constant(std::vector<int> shape, double value) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.w_em = gaussian({cfg.vocab, cfg.d_m}, cfg.init_scale, rng);
    p.x_pos = gaussian({cfg.n, cfg.d_m}, cfg.init_scale, rng);
    p.layers.resize(static_cast<size_t>(cfg.layers));
    for (auto& layer : p.layers) {
        for (int h = 0; h < cfg.heads; ++h) {
            layer.w_q.push_back(gaussian({cfg.d_m, cfg.d_head}, cfg.init_scale, rng));
            layer.w_k.push_back(gaussian({cfg.d_m, cfg.d_head}, cfg.init_scale, rng));
            layer.w_v.push_back(gaussian({cfg.d_m, cfg.d_head}, cfg.init_scale, rng));
        }
        if (cfg.flags.linear_after_attn) {
            layer.w_attn = gaussian({cfg.heads * cfg.d_head, cfg.d_m}, cfg.init_scale, rng);
        }
        if (cfg.flags.layer_norm) {
            layer.ln1_gain = constant({1, cfg.d_m}, 1.0);
            layer.ln1_bias = constant({1, cfg.d_m}, 0.0);
        }
        if (cfg.flags.fnn) {
            layer.w_fc1 = gaussian({cfg.d_m, 3 * cfg.d_m}, cfg.init_scale, rng);
            layer.w_fc2 = gaussian({3 * cfg.d_m, cfg.d_m}, cfg.init_scale, rng);
            if (cfg.flags.layer_norm) {
                layer.ln2_gain = constant({1, cfg.d_m}, 1.0);
                layer.ln2_bias = constant({1, cfg.d_m}, 0.0);
            }
        }
    }
    if (cfg.flags.projection) {
        p.w_proj = gaussian({cfg.d_m, cfg.vocab}, cfg.init_scale, rng);
        p.b_proj = constant({1, cfg.vocab}, 0.0);
    }
    return p;
}

void ModelParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("w_em", w_em);
    fn("x_pos", x_pos);
    for (size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        LayerParams& layer = layers[l];
        for (size_t h = 0; h < layer.w_q.size(); ++h) {
            fn(prefix + "w_q" + std::to_string(h), layer.w_q[h]);
            fn(prefix + "w_k" + std::to_string(h), layer.w_k[h]);
            fn(prefix + "w_v" + std::to_string(h), layer.w_v[h]);
        }
        if (config.flags.linear_after_attn) {
            fn(prefix + "w_attn", layer.w_attn);
        }
        if (config.flags.layer_norm) {
            fn(prefix + "ln1_gain", layer.ln1_gain);
            fn(prefix + "ln1_bias", layer.ln1_bias);
        }
        if (config.flags.fnn) {
            fn(prefix + "w_fc1", layer.w_fc1);
            fn(prefix + "w_fc2", layer.w_fc2);
            if (config.flags.layer_norm) {
                fn(prefix + "ln2_gain", layer.ln2_gain);
                fn(prefix + "ln2_bias", layer.ln2_bias);
            }
        }
    }
    if (config.flags.projection) {
        fn("w_proj", w_proj);
        fn("b_proj", b_proj);
    }
}

void ModelParams::visit(const std::function<void(const std::string&, const Tensor&)>& fn) const {
    const_cast<ModelParams*>(this)->visit(
        [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

void ModelParams::zero_grad() {
    visit([](const std::string&, Tensor& t) { t.zero_grad(); });
}

size_t ModelParams::param_count() const {
    size_t count = 0;
    visit([&count](const std::string&, const Tensor& t) { count += t.numel(); });
    return count;
}

ForwardPass forward(ModelParams& params, const std::vector<TokenSequence>& batch,
                    const ForwardOptions& opts) {
    const ModelConfig& cfg = params.config;
    const int batch_size = static_cast<int>(batch.size());
    ForwardPass fp;
    fp.batch = batch_size;
    Graph& g = fp.graph;

    std::vector<Token> flat;
    flat.reserve(static_cast<size_t>(batch_size) * cfg.n);
    for (const TokenSequence& s : batch) {
        if (static_cast<int>(s.tokens.size()) != cfg.n) {
            throw diffcore::ShapeMismatchError("forward: sequence length != config n");
        }
        flat.insert(flat.end(), s.tokens.begin(), s.tokens.end());
    }

    if (opts.capture) {
        fp.trace.emplace();
        fp.trace->batch = batch_size;
        fp.trace->n = cfg.n;
    }

    const Graph::Id em = g.param(params.w_em);
    const Graph::Id pos = g.param(params.x_pos);
    Graph::Id x = g.add_broadcast_rows(g.embedding(flat, em), pos);

    for (int l = 0; l < cfg.layers; ++l) {
        LayerParams& layer = params.layers[static_cast<size_t>(l)];
        LayerTrace lt;
        if (opts.capture) {
            lt.x_in = g.value(x);
        }
        const bool overridden = opts.override_layer == l + 1;
        std::vector<Graph::Id> head_outs;
        std::vector<Graph::Id> head_attn_ids;
        for (int h = 0; h < cfg.heads; ++h) {
            const Graph::Id q = g.matmul(x, g.param(layer.w_q[static_cast<size_t>(h)]));
            const Graph::Id k = g.matmul(x, g.param(layer.w_k[static_cast<size_t>(h)]));
            const Graph::Id v = g.matmul(x, g.param(layer.w_v[static_cast<size_t>(h)]));
            const Graph::Id att = g.attention(q, k, v, batch_size, cfg.n, cfg.flags.mask,
                                              overridden ? opts.override_attn : nullptr);
            head_outs.push_back(att);
            head_attn_ids.push_back(att);
            if (opts.capture) {
                lt.q.push_back(g.value(q));
                lt.k.push_back(g.value(k));
                lt.v.push_back(g.value(v));
                lt.attn.push_back(g.attention_map(att));
            }
        }
        Graph::Id x_qkv = cfg.heads == 1 ? head_outs[0] : g.concat_cols(head_outs);
        Graph::Id x_pr =
            cfg.flags.linear_after_attn ? g.matmul(x_qkv, g.param(layer.w_attn)) : x_qkv;
        Graph::Id x_ao = cfg.flags.residual ? g.add(x, x_pr) : x_pr;
        if (cfg.flags.layer_norm) {
            x_ao = g.layer_norm(x_ao, g.param(layer.ln1_gain), g.param(layer.ln1_bias));
        }
        Graph::Id x_do = x_ao;
        if (cfg.flags.fnn) {
            const Graph::Id h1 = g.relu(g.matmul(x_ao, g.param(layer.w_fc1)));
            const Graph::Id f = g.matmul(h1, g.param(layer.w_fc2));
            x_do = cfg.flags.residual ? g.add(x_ao, f) : f;
            if (cfg.flags.layer_norm) {
                x_do = g.layer_norm(x_do, g.param(layer.ln2_gain), g.param(layer.ln2_bias));
            }
        }
        if (opts.capture) {
            lt.x_pr = g.value(x_pr);
            lt.x_ao = g.value(x_ao);
            lt.x_do = g.value(x_do);
            fp.trace->layers.push_back(std::move(lt));
        }
        x = x_do;
    }

    fp.logits = cfg.flags.projection
                    ? g.add_broadcast_rows(g.matmul(x, g.param(params.w_proj)),
                                           g.param(params.b_proj))
                    : x;
    if (opts.capture) {
        fp.trace->logits = g.value(fp.logits);
    }
    if (opts.labels != nullptr) {
        fp.loss = g.cross_entropy_last_token(fp.logits, *opts.labels, cfg.n, cfg.vocab);
    }
    return fp;
}

Tensor ForwardTrace::sample_attention(int layer, int head, int sample) const {
    const Tensor& maps = layers.at(static_cast<size_t>(layer)).attn.at(static_cast<size_t>(head));
    Tensor out = Tensor::zeros({n, n});
    std::copy_n(maps.data.begin() + static_cast<size_t>(sample) * n * n,
                static_cast<size_t>(n) * n, out.data.begin());
    return out;
}

std::vector<Token> predict(const Tensor& logits, int n) {
    const int rows = logits.rows();
    const int v = logits.cols();
    std::vector<Token> out;
    for (int r = n - 1; r < rows; r += n) {
        int best = 0;
        for (int j = 1; j < v; ++j) {
            if (logits.at(r, j) > logits.at(r, best)) {
                best = j;
            }
        }
        out.push_back(best);
    }
    return out;
}

std::vector<std::vector<Token>> predict_all_positions(const Tensor& logits, int n) {
    const int rows = logits.rows();
    const int v = logits.cols();
    std::vector<std::vector<Token>> out;
    for (int base = 0; base < rows; base += n) {
        std::vector<Token> seq;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            for (int j = 1; j < v; ++j) {
                if (logits.at(base + i, j) > logits.at(base + i, best)) {
                    best = j;
                }
            }
            seq.push_back(best);
        }
        out.push_back(std::move(seq));
    }
    return out;
}

Tensor override_attention(ModelParams& params, const std::vector<TokenSequence>& batch,
                          int layer, const Tensor& replacement) {
    ForwardOptions opts;
    opts.override_layer = layer;
    opts.override_attn = &replacement;
    ForwardPass fp = forward(params, batch, opts);
    return fp.logits_value();
}

Tensor shift_matrix(int n, int offset) {
    Tensor m = Tensor::zeros({n, n});
    for (int i = 0; i < n; ++i) {
        m.at(i, std::max(i - offset, 0)) = 1.0;
    }
    return m;
}

double accuracy(ModelParams& params, const taskgen::LabeledDataset& ds, int eval_batch) {
    if (ds.samples.empty()) {
        return 0.0;
    }
    size_t correct = 0;
    for (size_t start = 0; start < ds.samples.size(); start += static_cast<size_t>(eval_batch)) {
        const size_t end = std::min(ds.samples.size(), start + static_cast<size_t>(eval_batch));
        std::vector<TokenSequence> chunk(ds.samples.begin() + static_cast<ptrdiff_t>(start),
                                         ds.samples.begin() + static_cast<ptrdiff_t>(end));
        ForwardPass fp = forward(params, chunk);
        const std::vector<Token> pred = predict(fp.logits_value(), params.config.n);
        for (size_t i = 0; i < chunk.size(); ++i) {
            if (pred[i] == ds.samples[start + i].label) {
                ++correct;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

// ---------------------------------------------------------------------------
// MLP baseline
// ---------------------------------------------------------------------------

MlpParams MlpParams::init(const MlpConfig& cfg, Rng& rng) {
    MlpParams p;
    p.config = cfg;
    const int in = cfg.n * cfg.vocab;
    const std::vector<std::pair<int, int>> dims = {{in, cfg.hidden},
                                                   {cfg.hidden, cfg.hidden},
                                                   {cfg.hidden, cfg.hidden},
                                                   {cfg.hidden, cfg.hidden},
                                                   {cfg.hidden, cfg.vocab}};
    for (const auto& [r, c] : dims) {
        p.weights.push_back(gaussian({r, c}, cfg.init_scale, rng));
        p.biases.push_back(constant({1, c}, 0.0));
    }
    return p;
}

void MlpParams::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
    for (size_t i = 0; i < weights.size(); ++i) {
        fn("w" + std::to_string(i), weights[i]);
        fn("b" + std::to_string(i), biases[i]);
    }
}

void MlpParams::zero_grad() {
    visit([](const std::string&, Tensor& t) { t.zero_grad(); });
}

MlpForward mlp_baseline_forward(MlpParams& params, const std::vector<TokenSequence>& batch,
                                const std::vector<Token>* labels) {
    const MlpConfig& cfg = params.config;
    const int b = static_cast<int>(batch.size());
    MlpForward mf;
    Graph& g = mf.graph;
    Tensor x = Tensor::zeros({b, cfg.n * cfg.vocab});
    for (int s = 0; s < b; ++s) {
        const auto& tokens = batch[static_cast<size_t>(s)].tokens;
        for (int i = 0; i < cfg.n; ++i) {
            const Token t = tokens[static_cast<size_t>(i)];
            if (t < 0 || t >= cfg.vocab) {
                throw OutOfRangeError("mlp_baseline_forward: token outside vocab");
            }
            x.at(s, i * cfg.vocab + t) = 1.0;
        }
    }
    Graph::Id h = g.input(std::move(x));
    for (size_t stage = 0; stage < params.weights.size(); ++stage) {
        h = g.add_broadcast_rows(g.matmul(h, g.param(params.weights[stage])),
                                 g.param(params.biases[stage]));
        if (stage + 1 < params.weights.size()) {
            h = g.relu(h);
        }
    }
    mf.logits = h;
    if (labels != nullptr) {
        mf.loss = g.cross_entropy_last_token(mf.logits, *labels, 1, cfg.vocab);
    }
    return mf;
}

double mlp_accuracy(MlpParams& params, const taskgen::LabeledDataset& ds, int eval_batch) {
    if (ds.samples.empty()) {
        return 0.0;
    }
    size_t correct = 0;
    for (size_t start = 0; start < ds.samples.size(); start += static_cast<size_t>(eval_batch)) {
        const size_t end = std::min(ds.samples.size(), start + static_cast<size_t>(eval_batch));
        std::vector<TokenSequence> chunk(ds.samples.begin() + static_cast<ptrdiff_t>(start),
                                         ds.samples.begin() + static_cast<ptrdiff_t>(end));
        MlpForward mf = mlp_baseline_forward(params, chunk);
        const std::vector<Token> pred = model::predict(mf.graph.value(mf.logits), 1);
        for (size_t i = 0; i < chunk.size(); ++i) {
            if (pred[i] == ds.samples[start + i].label) {
                ++correct;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.samples.size());
}

}  // namespace anchorlab::model
