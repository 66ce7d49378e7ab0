#pragma once

#include <string>

#include <json.hpp>

#include "anchorlab/model.hpp"
#include "anchorlab/split.hpp"
#include "anchorlab/taskgen.hpp"
#include "anchorlab/train.hpp"

namespace anchorlab::io {

using nlohmann::json;

struct HashMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path);
// Write-temp-then-rename so partial files never appear under the final name.
void atomic_write(const std::string& path, const std::string& content);
std::string fnv1a64_hex(const std::string& bytes);
std::string file_hash(const std::string& path);

// Dataset CSV: one sample per line, `t1,...,tn,label`, no header, LF endings.
std::string dataset_to_csv(const taskgen::LabeledDataset& ds);
taskgen::LabeledDataset dataset_from_csv(const std::string& csv, const taskgen::TaskSpec& task,
                                         taskgen::SplitTag tag);

// Re-derives SampleMeta (anchor/key positions, pair, branch, flip) by scanning
// the token pattern; used when loading CSV datasets.
taskgen::SampleMeta derive_meta(const taskgen::TaskSpec& task, const TokenSequence& sample);

json task_to_json(const taskgen::TaskSpec& task);
taskgen::TaskSpec task_from_json(const json& j);

json rule_to_json(const split::SplitRule& rule);
split::SplitRule rule_from_json(const json& j);

json vocab_to_json(const Vocab& vocab);
Vocab vocab_from_json(const json& j);

json model_config_to_json(const model::ModelConfig& cfg);
model::ModelConfig model_config_from_json(const json& j);

json train_config_to_json(const train::TrainConfig& cfg);
train::TrainConfig train_config_from_json(const json& j);

// TrainReport CSV: epoch,loss,lr,acc_train,acc_test_data,acc_test_task,p_x,p_x1
std::string report_to_csv(const train::TrainReport& report);
train::TrainReport report_from_csv(const std::string& csv);

// Checkpoint: one JSON document holding the manifest (config, seed, epoch)
// plus every parameter tensor as {"shape", "data"}. Round trips bit-exactly.
void save_checkpoint(const std::string& path, const model::ModelParams& params, uint64_t seed,
                     int epoch);

struct LoadedCheckpoint {
    model::ModelParams params;
    uint64_t seed = 0;
    int epoch = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

json tensor_to_json(const model::Tensor& t);
model::Tensor tensor_from_json(const json& j);

}  // namespace anchorlab::io
