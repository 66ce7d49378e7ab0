#pragma once

#include <optional>
#include <string>
#include <vector>

#include "anchorlab/io.hpp"

namespace anchorlab::cli {

// One experiment: task + split + data budgets + model + schedule + seeds.
struct ExperimentConfig {
    Vocab vocab;
    taskgen::TaskSpec task;
    std::optional<split::SplitRule> rule;
    int train_count = 600;
    int test_data_count = 1000;
    int test_task_count = 0;
    int probe_count = 0;
    uint64_t data_seed = 1;
    model::ModelConfig model_cfg;
    train::TrainConfig train_cfg;
    std::vector<uint64_t> seeds = {1};
    std::string out_dir = "runs/out";
};

// Strict parse: unknown keys anywhere in the document are rejected.
ExperimentConfig load_experiment_config(const io::json& j);
ExperimentConfig load_experiment_config_file(const std::string& path);

// Restores the appendix-scale schedule (4000 epochs, warmup 400, batch 100,
// lr 2e-5 -> 2e-4 -> 2e-5).
void apply_paper_scale(train::TrainConfig& cfg);

// Generates train/test(/probe) datasets with split-constrained sampling.
train::ExperimentData build_experiment_data(const ExperimentConfig& cfg);

// Oracle + split validation; throws on any violation.
void validate_experiment_data(const ExperimentConfig& cfg, const train::ExperimentData& data);

int cmd_gen(const ExperimentConfig& cfg);
int cmd_split(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_analyze(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                const std::string& out_dir);
int cmd_ablate(const std::string& grid_config_path, bool paper_scale);
int cmd_report(const std::string& run_dir, const std::string& out_dir);

// Entry point used by tools/anchorlab_main.cpp; returns the exit status.
int run(int argc, char** argv);

}  // namespace anchorlab::cli
