#include "anchorlab/train.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>

#include "anchorlab/kernels.hpp"

namespace anchorlab::train {

double lr_at(int epoch, const TrainConfig& cfg) {
    if (epoch <= cfg.warmup_epochs) {
        return cfg.lr_min +
               (cfg.lr_max - cfg.lr_min) * static_cast<double>(epoch) / cfg.warmup_epochs;
    }
    const double progress = static_cast<double>(epoch - cfg.warmup_epochs) /
                            static_cast<double>(cfg.epochs - cfg.warmup_epochs);
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(M_PI * progress)) / 2.0;
}

void AdamW::update(const std::string& name, model::Tensor& p, double lr) {
    auto& [m, v] = state_[name];
    if (m.size() != p.data.size()) {
        m.assign(p.data.size(), 0.0);
        v.assign(p.data.size(), 0.0);
    }
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double b1 = beta1_, b2 = beta2_, eps = eps_, wd = wd_;
    double* pd = p.data.data();
    const double* gd = p.grad.data();
    double* md = m.data();
    double* vd = v.data();
    const ptrdiff_t count = static_cast<ptrdiff_t>(p.data.size());
#pragma omp parallel for schedule(static)
    for (ptrdiff_t i = 0; i < count; ++i) {
        pd[i] -= lr * wd * pd[i];
        md[i] = b1 * md[i] + (1.0 - b1) * gd[i];
        vd[i] = b2 * vd[i] + (1.0 - b2) * gd[i] * gd[i];
        const double mhat = md[i] / bc1;
        const double vhat = vd[i] / bc2;
        pd[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void AdamW::step(model::ModelParams& params, double lr) {
    ++t_;
    params.visit([this, lr](const std::string& name, model::Tensor& p) {
        if (p.grad.size() == p.data.size()) {
            update(name, p, lr);
        }
    });
}

void AdamW::step(model::MlpParams& params, double lr) {
    ++t_;
    params.visit([this, lr](const std::string& name, model::Tensor& p) {
        if (p.grad.size() == p.data.size()) {
            update(name, p, lr);
        }
    });
}

std::optional<int> TrainReport::first_epoch_at(double ReportRow::* metric,
                                               double threshold) const {
    for (const ReportRow& row : rows) {
        const double v = row.*metric;
        if (!std::isnan(v) && v >= threshold) {
            return row.epoch;
        }
    }
    return std::nullopt;
}

std::vector<double> track_label_probs(model::ModelParams& params,
                                      const taskgen::LabeledDataset& probe,
                                      const std::vector<int>& offsets, int eval_batch) {
    const int n = params.config.n;
    const int vocab = params.config.vocab;
    std::vector<double> sums(offsets.size(), 0.0);
    for (size_t start = 0; start < probe.samples.size(); start += static_cast<size_t>(eval_batch)) {
        const size_t end = std::min(probe.samples.size(), start + static_cast<size_t>(eval_batch));
        std::vector<TokenSequence> chunk(probe.samples.begin() + static_cast<ptrdiff_t>(start),
                                         probe.samples.begin() + static_cast<ptrdiff_t>(end));
        model::ForwardPass fp = model::forward(params, chunk);
        const model::Tensor& logits = fp.logits_value();
        for (size_t i = 0; i < chunk.size(); ++i) {
            const int row = static_cast<int>(i) * n + n - 1;
            std::vector<double> soft(static_cast<size_t>(vocab));
            kernels::softmax_rows(logits.data.data() + static_cast<size_t>(row) * vocab,
                                  soft.data(), 1, vocab);
            // Track relative to the key item, not the (possibly flipped) label.
            const auto& meta = probe.meta[start + i];
            const Token key =
                probe.samples[start + i].tokens[static_cast<size_t>(meta.key_pos - 1)];
            for (size_t o = 0; o < offsets.size(); ++o) {
                const int target = key + offsets[o];
                if (target >= 0 && target < vocab) {
                    sums[o] += soft[static_cast<size_t>(target)];
                }
            }
        }
    }
    for (double& s : sums) {
        s /= static_cast<double>(probe.samples.size());
    }
    return sums;
}

namespace {

ReportRow evaluate(model::ModelParams& params, const ExperimentData& data, int epoch,
                   double mean_loss, double lr) {
    ReportRow row;
    row.epoch = epoch;
    row.loss = mean_loss;
    row.lr = lr;
    row.acc_train = model::accuracy(params, data.train);
    row.acc_test_data = model::accuracy(params, data.test_data);
    if (data.test_task) {
        row.acc_test_task = model::accuracy(params, *data.test_task);
    }
    if (data.probe_seen) {
        const std::vector<double> probs = track_label_probs(params, *data.probe_seen, {0, 1});
        row.p_x = probs[0];
        row.p_x1 = probs[1];
    }
    return row;
}

}  // namespace

RunResult run_experiment(const ExperimentData& data, const model::ModelConfig& model_cfg,
                         const TrainConfig& train_cfg) {
    train_cfg.validate();
    model_cfg.validate();

    Rng init_rng(train_cfg.seed, stream::kInit);
    Rng batch_rng(train_cfg.seed, stream::kBatching);

    RunResult result{TrainReport{}, model::ModelParams::init(model_cfg, init_rng)};
    model::ModelParams& params = result.params;
    AdamW opt(train_cfg);

    const size_t train_size = data.train.samples.size();
    std::vector<size_t> order(train_size);
    std::iota(order.begin(), order.end(), 0);

    result.report.rows.push_back(evaluate(params, data, 0, std::nan(""), lr_at(0, train_cfg)));

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch - 1, train_cfg);
        batch_rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (size_t start = 0; start < train_size; start += static_cast<size_t>(train_cfg.batch_size)) {
            const size_t end =
                std::min(train_size, start + static_cast<size_t>(train_cfg.batch_size));
            std::vector<TokenSequence> chunk;
            std::vector<Token> labels;
            chunk.reserve(end - start);
            labels.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                chunk.push_back(data.train.samples[order[i]]);
                labels.push_back(data.train.samples[order[i]].label);
            }
            model::ForwardOptions opts;
            opts.labels = &labels;
            model::ForwardPass fp = model::forward(params, chunk, opts);
            const double loss = fp.loss_value();
            if (!std::isfinite(loss)) {
                throw DivergenceError("run_experiment: non-finite loss at epoch " +
                                      std::to_string(epoch));
            }
            loss_sum += loss;
            ++batches;
            params.zero_grad();
            fp.graph.backward(fp.loss);
            opt.step(params, lr);
        }
        if (epoch % train_cfg.eval_interval == 0 || epoch == train_cfg.epochs) {
            result.report.rows.push_back(
                evaluate(params, data, epoch, loss_sum / batches, lr));
            if (std::getenv("ANCHORLAB_VERBOSE") != nullptr) {
                const ReportRow& r = result.report.rows.back();
                std::fprintf(stderr, "epoch %5d  loss %.4f  acc_train %.3f  acc_test %.3f\n",
                             r.epoch, r.loss, r.acc_train, r.acc_test_data);
            }
        }
    }
    return result;
}

double run_mlp_baseline(const ExperimentData& data, const model::MlpConfig& cfg,
                        const TrainConfig& train_cfg) {
    train_cfg.validate();
    Rng init_rng(train_cfg.seed, stream::kInit);
    Rng batch_rng(train_cfg.seed, stream::kBatching);
    model::MlpParams params = model::MlpParams::init(cfg, init_rng);
    AdamW opt(train_cfg);

    const size_t train_size = data.train.samples.size();
    std::vector<size_t> order(train_size);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch - 1, train_cfg);
        batch_rng.shuffle(order);
        for (size_t start = 0; start < train_size; start += static_cast<size_t>(train_cfg.batch_size)) {
            const size_t end =
                std::min(train_size, start + static_cast<size_t>(train_cfg.batch_size));
            std::vector<TokenSequence> chunk;
            std::vector<Token> labels;
            for (size_t i = start; i < end; ++i) {
                chunk.push_back(data.train.samples[order[i]]);
                labels.push_back(data.train.samples[order[i]].label);
            }
            model::MlpForward mf = model::mlp_baseline_forward(params, chunk, &labels);
            if (!std::isfinite(mf.graph.value(mf.loss).data[0])) {
                throw DivergenceError("run_mlp_baseline: non-finite loss");
            }
            params.zero_grad();
            mf.graph.backward(mf.loss);
            opt.step(params, lr);
        }
    }
    return model::mlp_accuracy(params, data.test_data);
}

}  // namespace anchorlab::train
