#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "anchorlab/model.hpp"
#include "anchorlab/split.hpp"
#include "anchorlab/taskgen.hpp"

namespace anchorlab::train {

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int epochs = 4000;
    int batch_size = 100;
    double lr_min = 2e-5;
    double lr_max = 2e-4;
    int warmup_epochs = 400;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    uint64_t seed = 1;
    int eval_interval = 10;

    void validate() const {
        if (warmup_epochs >= epochs || lr_min >= lr_max || batch_size < 1) {
            throw std::invalid_argument("TrainConfig: warmup < epochs and lr_min < lr_max required");
        }
    }

    // Appendix-scale schedule rescaled to `epochs` total epochs.
    TrainConfig rescaled(int new_epochs) const {
        TrainConfig c = *this;
        c.warmup_epochs = std::max(1, warmup_epochs * new_epochs / epochs);
        c.epochs = new_epochs;
        return c;
    }
};

// Linear warmup lr_min -> lr_max over [0, warmup], then cosine back to lr_min.
double lr_at(int epoch, const TrainConfig& cfg);

// Decoupled weight decay applied before the bias-corrected Adam term.
class AdamW {
public:
    explicit AdamW(const TrainConfig& cfg)
        : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps), wd_(cfg.weight_decay) {}

    void step(model::ModelParams& params, double lr);
    void step(model::MlpParams& params, double lr);

    int64_t steps_taken() const { return t_; }

private:
    void update(const std::string& name, model::Tensor& p, double lr);

    double beta1_, beta2_, eps_, wd_;
    int64_t t_ = 0;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> state_;
};

struct ReportRow {
    int epoch = 0;
    double loss = std::nan("");
    double lr = std::nan("");
    double acc_train = std::nan("");
    double acc_test_data = std::nan("");
    double acc_test_task = std::nan("");
    double p_x = std::nan("");
    double p_x1 = std::nan("");
};

struct TrainReport {
    std::vector<ReportRow> rows;

    // First evaluated epoch with the metric >= threshold; nullopt if never.
    std::optional<int> first_epoch_at(double ReportRow::* metric, double threshold) const;
    const ReportRow& final_row() const { return rows.back(); }
};

struct ExperimentData {
    taskgen::LabeledDataset train;
    taskgen::LabeledDataset test_data;
    std::optional<taskgen::LabeledDataset> test_task;
    // Statistical-output probes (seen / unseen content).
    std::optional<taskgen::LabeledDataset> probe_seen;
    std::optional<taskgen::LabeledDataset> probe_unseen;
};

struct RunResult {
    TrainReport report;
    model::ModelParams params;
};

// Mean softmax probability of label key+offset over the probe set, for each
// requested offset (x itself is offset 0).
std::vector<double> track_label_probs(model::ModelParams& params,
                                      const taskgen::LabeledDataset& probe,
                                      const std::vector<int>& offsets, int eval_batch = 256);

// Seeded end-to-end loop: AdamW + warmup/cosine schedule + fixed shuffle
// substream; evaluates train/test metrics every eval_interval epochs.
// Throws DivergenceError when the loss becomes non-finite.
RunResult run_experiment(const ExperimentData& data, const model::ModelConfig& model_cfg,
                         const TrainConfig& train_cfg);

// Matching loop for the fully-connected baseline (test accuracy only).
double run_mlp_baseline(const ExperimentData& data, const model::MlpConfig& cfg,
                        const TrainConfig& train_cfg);

}  // namespace anchorlab::train
