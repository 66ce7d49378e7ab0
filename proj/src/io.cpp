#include "anchorlab/io.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace anchorlab::io {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("read_file: cannot open " + path);
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void atomic_write(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        fs::create_directories(target.parent_path());
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("atomic_write: cannot open " + tmp.string());
        }
        out << content;
    }
    fs::rename(tmp, target);
}

std::string fnv1a64_hex(const std::string& bytes) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[17];
    snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

std::string file_hash(const std::string& path) {
    return fnv1a64_hex(read_file(path));
}

std::string dataset_to_csv(const taskgen::LabeledDataset& ds) {
    std::ostringstream os;
    for (const TokenSequence& s : ds.samples) {
        for (Token t : s.tokens) {
            os << t << ',';
        }
        os << s.label << '\n';
    }
    return os.str();
}

taskgen::SampleMeta derive_meta(const taskgen::TaskSpec& task, const TokenSequence& sample) {
    using taskgen::TaskKind;
    taskgen::SampleMeta meta;
    const auto& tokens = sample.tokens;
    const int n = static_cast<int>(tokens.size());
    const std::set<Token> anchors(task.anchor_ids.begin(), task.anchor_ids.end());
    auto find_anchor = [&](int from) {
        for (int i = from; i <= n; ++i) {
            if (anchors.count(tokens[static_cast<size_t>(i - 1)])) {
                return i;
            }
        }
        return -1;
    };
    switch (task.kind) {
        case TaskKind::Identity:
        case TaskKind::Statistical:
        case TaskKind::MultiAnchor:
        case TaskKind::Frequency: {
            meta.anchor_pos = find_anchor(1);
            meta.key_pos = meta.anchor_pos + 1;
            const Token key = tokens[static_cast<size_t>(meta.key_pos - 1)];
            meta.flipped = task.kind == TaskKind::Statistical && sample.label == key + 1;
            break;
        }
        case TaskKind::OneAnchorOffset: {
            meta.anchor_pos = find_anchor(1);
            meta.key_pos =
                meta.anchor_pos + task.offsets.at(tokens[static_cast<size_t>(meta.anchor_pos - 1)]);
            break;
        }
        case TaskKind::ReadingComprehension: {
            const Token query = tokens[static_cast<size_t>(n - 1)];
            for (int j = 1; j <= 4; ++j) {
                if (tokens[static_cast<size_t>(2 * j - 2)] == query) {
                    meta.anchor_pos = 2 * j - 1;
                    meta.key_pos = 2 * j;
                }
            }
            break;
        }
        case TaskKind::Classification: {
            const Token x5 = tokens[static_cast<size_t>(n - 1)];
            int best = 1;
            for (int j = 2; j <= 4; ++j) {
                if (std::abs(tokens[static_cast<size_t>(2 * j - 2)] - x5) <
                    std::abs(tokens[static_cast<size_t>(2 * best - 2)] - x5)) {
                    best = j;
                }
            }
            meta.anchor_pos = 2 * best;
            meta.key_pos = n;
            break;
        }
        case TaskKind::Composite:
        case TaskKind::Synonym: {
            meta.anchor_pos = find_anchor(2);
            meta.second_anchor_pos = meta.anchor_pos + 1;
            meta.key_pos = meta.anchor_pos - 1;
            meta.pair = {tokens[static_cast<size_t>(meta.anchor_pos - 1)],
                         tokens[static_cast<size_t>(meta.anchor_pos)]};
            break;
        }
        case TaskKind::WorkingMemory: {
            const std::set<Token> firsts(task.first_anchors.begin(), task.first_anchors.end());
            const std::set<Token> seconds(task.second_anchors.begin(),
                                          task.second_anchors.end());
            for (int i = 1; i <= n; ++i) {
                if (firsts.count(tokens[static_cast<size_t>(i - 1)])) {
                    meta.anchor_pos = i;
                }
                if (seconds.count(tokens[static_cast<size_t>(i - 1)])) {
                    meta.second_anchor_pos = i;
                }
            }
            meta.key_pos = meta.anchor_pos - 1;
            break;
        }
        case TaskKind::Recitation: {
            const int p = find_anchor(2);
            meta.anchor_pos = p;
            const Token last = tokens[static_cast<size_t>(n - 1)];
            meta.forward = last == tokens[static_cast<size_t>(p - 2)];
            meta.key_pos = meta.forward ? p + 1 : p - 1;
            break;
        }
    }
    return meta;
}

taskgen::LabeledDataset dataset_from_csv(const std::string& csv, const taskgen::TaskSpec& task,
                                         taskgen::SplitTag tag) {
    taskgen::LabeledDataset ds;
    ds.task = task;
    ds.split_tag = tag;
    std::istringstream is(csv);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        TokenSequence s;
        std::istringstream ls(line);
        std::string field;
        std::vector<Token> values;
        while (std::getline(ls, field, ',')) {
            values.push_back(static_cast<Token>(std::stol(field)));
        }
        if (static_cast<int>(values.size()) != task.n + 1) {
            throw std::runtime_error("dataset_from_csv: expected " + std::to_string(task.n + 1) +
                                     " fields, got " + std::to_string(values.size()));
        }
        s.label = values.back();
        values.pop_back();
        s.tokens = std::move(values);
        ds.meta.push_back(derive_meta(task, s));
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

namespace {

json int_map_to_json(const std::map<Token, int>& m) {
    json arr = json::array();
    for (const auto& [k, v] : m) {
        arr.push_back({k, v});
    }
    return arr;
}

std::map<Token, int> int_map_from_json(const json& arr) {
    std::map<Token, int> m;
    for (const auto& e : arr) {
        m[e.at(0).get<Token>()] = e.at(1).get<int>();
    }
    return m;
}

json pairs_to_json(const std::vector<std::pair<Token, Token>>& pairs) {
    json arr = json::array();
    for (const auto& [a, b] : pairs) {
        arr.push_back({a, b});
    }
    return arr;
}

std::vector<std::pair<Token, Token>> pairs_from_json(const json& arr) {
    std::vector<std::pair<Token, Token>> pairs;
    for (const auto& e : arr) {
        pairs.emplace_back(e.at(0).get<Token>(), e.at(1).get<Token>());
    }
    return pairs;
}

}  // namespace

json task_to_json(const taskgen::TaskSpec& task) {
    json j;
    j["kind"] = taskgen::task_kind_name(task.kind);
    j["n"] = task.n;
    j["anchor_ids"] = task.anchor_ids;
    j["offsets"] = int_map_to_json(task.offsets);
    j["increments"] = int_map_to_json(task.increments);
    j["pairs"] = pairs_to_json(task.pairs);
    j["first_anchors"] = task.first_anchors;
    j["second_anchors"] = task.second_anchors;
    j["statistical_type"] =
        task.statistical_type == taskgen::StatisticalType::Replicated ? "replicated" : "random20";
    j["flip_fraction"] = task.flip_fraction;
    j["frequency_task_two"] = task.frequency_task_two;
    return j;
}

taskgen::TaskSpec task_from_json(const json& j) {
    taskgen::TaskSpec t;
    t.kind = taskgen::task_kind_from_name(j.at("kind").get<std::string>());
    t.n = j.at("n").get<int>();
    t.anchor_ids = j.at("anchor_ids").get<std::vector<Token>>();
    t.offsets = int_map_from_json(j.at("offsets"));
    t.increments = int_map_from_json(j.at("increments"));
    t.pairs = pairs_from_json(j.at("pairs"));
    t.first_anchors = j.at("first_anchors").get<std::vector<Token>>();
    t.second_anchors = j.at("second_anchors").get<std::vector<Token>>();
    t.statistical_type = j.at("statistical_type").get<std::string>() == "replicated"
                             ? taskgen::StatisticalType::Replicated
                             : taskgen::StatisticalType::Random20;
    t.flip_fraction = j.at("flip_fraction").get<double>();
    t.frequency_task_two = j.at("frequency_task_two").get<bool>();
    return t;
}

json rule_to_json(const split::SplitRule& rule) {
    json j;
    switch (rule.kind) {
        case split::SplitRule::Kind::ModularResidue:
            j["kind"] = "modular_residue";
            break;
        case split::SplitRule::Kind::AnchorBased:
            j["kind"] = "anchor_based";
            break;
        case split::SplitRule::Kind::CompositeAnchor:
            j["kind"] = "composite_anchor";
            break;
    }
    j["modulus"] = rule.modulus;
    json gamma = json::array();
    for (const auto& [pos, residues] : rule.gamma) {
        gamma.push_back({pos, std::vector<int>(residues.begin(), residues.end())});
    }
    j["gamma"] = gamma;
    json train_keys = json::array();
    for (const auto& [anchor, keys] : rule.train_keys) {
        train_keys.push_back({anchor, std::vector<Token>(keys.begin(), keys.end())});
    }
    j["train_keys"] = train_keys;
    j["held_out"] = pairs_to_json(rule.held_out);
    return j;
}

split::SplitRule rule_from_json(const json& j) {
    split::SplitRule rule;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "modular_residue") {
        rule.kind = split::SplitRule::Kind::ModularResidue;
    } else if (kind == "anchor_based") {
        rule.kind = split::SplitRule::Kind::AnchorBased;
    } else if (kind == "composite_anchor") {
        rule.kind = split::SplitRule::Kind::CompositeAnchor;
    } else {
        throw std::invalid_argument("rule_from_json: unknown kind " + kind);
    }
    rule.modulus = j.at("modulus").get<int>();
    for (const auto& e : j.at("gamma")) {
        const auto residues = e.at(1).get<std::vector<int>>();
        rule.gamma[e.at(0).get<int>()] = {residues.begin(), residues.end()};
    }
    for (const auto& e : j.at("train_keys")) {
        const auto keys = e.at(1).get<std::vector<Token>>();
        rule.train_keys[e.at(0).get<Token>()] = {keys.begin(), keys.end()};
    }
    rule.held_out = pairs_from_json(j.at("held_out"));
    return rule;
}

json vocab_to_json(const Vocab& vocab) {
    return json{{"size", vocab.size},
                {"item_lo", vocab.item_lo},
                {"item_hi", vocab.item_hi},
                {"anchor_ids", vocab.anchor_ids}};
}

Vocab vocab_from_json(const json& j) {
    return Vocab::make(j.at("size").get<int>(), j.at("item_lo").get<Token>(),
                       j.at("item_hi").get<Token>(), j.at("anchor_ids").get<std::vector<Token>>());
}

json model_config_to_json(const model::ModelConfig& cfg) {
    return json{{"layers", cfg.layers},
                {"heads", cfg.heads},
                {"d_m", cfg.d_m},
                {"d_head", cfg.d_head},
                {"vocab", cfg.vocab},
                {"n", cfg.n},
                {"init_scale", cfg.init_scale},
                {"flags",
                 {{"mask", cfg.flags.mask},
                  {"residual", cfg.flags.residual},
                  {"layer_norm", cfg.flags.layer_norm},
                  {"fnn", cfg.flags.fnn},
                  {"linear_after_attn", cfg.flags.linear_after_attn},
                  {"projection", cfg.flags.projection}}}};
}

model::ModelConfig model_config_from_json(const json& j) {
    model::ModelConfig cfg;
    cfg.layers = j.at("layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.d_m = j.at("d_m").get<int>();
    cfg.d_head = j.at("d_head").get<int>();
    cfg.vocab = j.at("vocab").get<int>();
    cfg.n = j.at("n").get<int>();
    cfg.init_scale = j.at("init_scale").get<double>();
    const json& f = j.at("flags");
    cfg.flags.mask = f.at("mask").get<bool>();
    cfg.flags.residual = f.at("residual").get<bool>();
    cfg.flags.layer_norm = f.at("layer_norm").get<bool>();
    cfg.flags.fnn = f.at("fnn").get<bool>();
    cfg.flags.linear_after_attn = f.at("linear_after_attn").get<bool>();
    cfg.flags.projection = f.at("projection").get<bool>();
    return cfg;
}

json train_config_to_json(const train::TrainConfig& cfg) {
    return json{{"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"lr_min", cfg.lr_min},
                {"lr_max", cfg.lr_max},
                {"warmup_epochs", cfg.warmup_epochs},
                {"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"eps", cfg.eps},
                {"weight_decay", cfg.weight_decay},
                {"seed", cfg.seed},
                {"eval_interval", cfg.eval_interval}};
}

train::TrainConfig train_config_from_json(const json& j) {
    train::TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.lr_min = j.at("lr_min").get<double>();
    cfg.lr_max = j.at("lr_max").get<double>();
    cfg.warmup_epochs = j.at("warmup_epochs").get<int>();
    cfg.beta1 = j.at("beta1").get<double>();
    cfg.beta2 = j.at("beta2").get<double>();
    cfg.eps = j.at("eps").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.eval_interval = j.at("eval_interval").get<int>();
    return cfg;
}

namespace {

std::string cell(double v) {
    if (std::isnan(v)) {
        return "";
    }
    char buf[32];
    snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_cell(const std::string& s) {
    return s.empty() ? std::nan("") : std::stod(s);
}

}  // namespace

std::string report_to_csv(const train::TrainReport& report) {
    std::ostringstream os;
    os << "epoch,loss,lr,acc_train,acc_test_data,acc_test_task,p_x,p_x1\n";
    for (const auto& r : report.rows) {
        os << r.epoch << ',' << cell(r.loss) << ',' << cell(r.lr) << ',' << cell(r.acc_train)
           << ',' << cell(r.acc_test_data) << ',' << cell(r.acc_test_task) << ',' << cell(r.p_x)
           << ',' << cell(r.p_x1) << '\n';
    }
    return os.str();
}

train::TrainReport report_from_csv(const std::string& csv) {
    train::TrainReport report;
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string f;
        while (std::getline(ls, f, ',')) {
            fields.push_back(f);
        }
        fields.resize(8);
        train::ReportRow r;
        r.epoch = std::stoi(fields[0]);
        r.loss = parse_cell(fields[1]);
        r.lr = parse_cell(fields[2]);
        r.acc_train = parse_cell(fields[3]);
        r.acc_test_data = parse_cell(fields[4]);
        r.acc_test_task = parse_cell(fields[5]);
        r.p_x = parse_cell(fields[6]);
        r.p_x1 = parse_cell(fields[7]);
        report.rows.push_back(r);
    }
    return report;
}

json tensor_to_json(const model::Tensor& t) {
    return json{{"shape", t.shape}, {"data", t.data}};
}

model::Tensor tensor_from_json(const json& j) {
    model::Tensor t = model::Tensor::from(j.at("shape").get<std::vector<int>>(),
                                          j.at("data").get<std::vector<double>>());
    t.requires_grad = true;
    t.grad.assign(t.data.size(), 0.0);
    return t;
}

void save_checkpoint(const std::string& path, const model::ModelParams& params, uint64_t seed,
                     int epoch) {
    json j;
    j["format"] = "anchorlab-checkpoint";
    j["version"] = 1;
    j["config"] = model_config_to_json(params.config);
    j["seed"] = seed;
    j["epoch"] = epoch;
    json tensors;
    params.visit([&tensors](const std::string& name, const model::Tensor& t) {
        tensors[name] = tensor_to_json(t);
    });
    j["params"] = std::move(tensors);
    atomic_write(path, j.dump());
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const json j = json::parse(read_file(path));
    if (j.at("format").get<std::string>() != "anchorlab-checkpoint") {
        throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);
    }
    LoadedCheckpoint out;
    out.seed = j.at("seed").get<uint64_t>();
    out.epoch = j.at("epoch").get<int>();
    const model::ModelConfig cfg = model_config_from_json(j.at("config"));
    Rng dummy(0, stream::kInit);
    out.params = model::ModelParams::init(cfg, dummy);
    const json& tensors = j.at("params");
    out.params.visit([&tensors](const std::string& name, model::Tensor& t) {
        t = tensor_from_json(tensors.at(name));
    });
    return out;
}

}  // namespace anchorlab::io
