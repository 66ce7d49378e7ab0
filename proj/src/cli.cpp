#include "anchorlab/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>

#include <CLI11.hpp>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "anchorlab/analysis.hpp"
#include "anchorlab/svg.hpp"

namespace anchorlab::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key)) {
            throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
        }
    }
}

taskgen::TaskSpec task_from_config(const json& j) {
    using taskgen::TaskSpec;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "identity") {
        require_keys(j, {"kind", "anchor"}, "task");
        return TaskSpec::identity(j.value("anchor", 3));
    }
    if (kind == "one_anchor_offset") {
        require_keys(j, {"kind", "offsets"}, "task");
        std::map<Token, int> offsets;
        for (const auto& e : j.at("offsets")) {
            offsets[e.at(0).get<Token>()] = e.at(1).get<int>();
        }
        return TaskSpec::one_anchor_offset(offsets);
    }
    if (kind == "reading_comprehension") {
        require_keys(j, {"kind"}, "task");
        return TaskSpec::reading_comprehension();
    }
    if (kind == "classification") {
        require_keys(j, {"kind"}, "task");
        return TaskSpec::classification();
    }
    if (kind == "composite") {
        require_keys(j, {"kind", "anchors", "increments"}, "task");
        std::vector<Token> anchors = {1, 2, 3, 4};
        std::map<Token, int> increments = {{1, 1}, {2, -1}, {3, 2}, {4, -2}};
        if (j.contains("anchors")) {
            anchors = j.at("anchors").get<std::vector<Token>>();
        }
        if (j.contains("increments")) {
            increments.clear();
            for (const auto& e : j.at("increments")) {
                increments[e.at(0).get<Token>()] = e.at(1).get<int>();
            }
        }
        return TaskSpec::composite(anchors, increments);
    }
    if (kind == "working_memory") {
        require_keys(j, {"kind", "first_anchors", "second_anchors"}, "task");
        return TaskSpec::working_memory(j.value("first_anchors", std::vector<Token>{2, 3}),
                                        j.value("second_anchors", std::vector<Token>{4, 5}));
    }
    if (kind == "synonym") {
        require_keys(j, {"kind", "with_synonym"}, "task");
        return TaskSpec::synonym(j.at("with_synonym").get<bool>());
    }
    if (kind == "recitation") {
        require_keys(j, {"kind", "anchor"}, "task");
        return TaskSpec::recitation(j.value("anchor", 3));
    }
    if (kind == "statistical") {
        require_keys(j, {"kind", "type", "anchor"}, "task");
        const std::string type = j.value("type", std::string("replicated"));
        return TaskSpec::statistical(type == "replicated" ? taskgen::StatisticalType::Replicated
                                                          : taskgen::StatisticalType::Random20,
                                     j.value("anchor", 3));
    }
    if (kind == "multi_anchor") {
        require_keys(j, {"kind"}, "task");
        return TaskSpec::multi_anchor();
    }
    if (kind == "frequency") {
        require_keys(j, {"kind", "task_two"}, "task");
        return TaskSpec::frequency(j.at("task_two").get<bool>());
    }
    throw std::invalid_argument("config: unknown task kind '" + kind + "'");
}

std::optional<split::SplitRule> rule_from_config(const json& j, const taskgen::TaskSpec& task,
                                                 const Vocab& vocab) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "none") {
        require_keys(j, {"kind"}, "split");
        return std::nullopt;
    }
    if (kind == "modular_residue") {
        require_keys(j, {"kind"}, "split");
        return split::SplitRule::modular_default(task.n);
    }
    if (kind == "modular_uniform") {
        require_keys(j, {"kind", "residues"}, "split");
        const auto residues = j.at("residues").get<std::vector<int>>();
        return split::SplitRule::modular_uniform({residues.begin(), residues.end()}, task.n);
    }
    if (kind == "anchor_based") {
        require_keys(j, {"kind"}, "split");
        return split::SplitRule::multi_anchor_intervals(vocab, task.anchor_ids);
    }
    if (kind == "composite_anchor") {
        require_keys(j, {"kind", "held_out", "with_modular"}, "split");
        std::vector<std::pair<Token, Token>> held_out;
        for (const auto& e : j.at("held_out")) {
            held_out.emplace_back(e.at(0).get<Token>(), e.at(1).get<Token>());
        }
        split::SplitRule rule = split::SplitRule::composite(held_out);
        if (j.value("with_modular", true)) {
            const split::SplitRule mod = split::SplitRule::modular_default(task.n);
            rule.gamma = mod.gamma;
            rule.modulus = mod.modulus;
        }
        return rule;
    }
    throw std::invalid_argument("config: unknown split kind '" + kind + "'");
}

Vocab default_vocab_for(const taskgen::TaskSpec& task) {
    return Vocab::make(kVocabSize, 20, 100, task.anchor_ids);
}

}  // namespace

ExperimentConfig load_experiment_config(const json& j) {
    require_keys(j, {"version", "vocab", "task", "split", "data", "model", "train", "out"},
                 "document root");
    if (j.at("version").get<int>() != 1) {
        throw std::invalid_argument("config: unsupported version");
    }
    ExperimentConfig cfg;
    cfg.task = task_from_config(j.at("task"));
    cfg.vocab = j.contains("vocab") ? io::vocab_from_json(j.at("vocab"))
                                    : default_vocab_for(cfg.task);
    cfg.rule = rule_from_config(j.at("split"), cfg.task, cfg.vocab);

    const json& d = j.at("data");
    require_keys(d, {"train", "test_data", "test_task", "probe", "seed"}, "data");
    cfg.train_count = d.at("train").get<int>();
    cfg.test_data_count = d.value("test_data", 1000);
    cfg.test_task_count = d.value("test_task", 0);
    cfg.probe_count = d.value("probe", 0);
    cfg.data_seed = d.value("seed", 1);

    cfg.model_cfg = io::model_config_from_json(j.at("model"));

    const json& t = j.at("train");
    require_keys(t,
                 {"epochs", "batch_size", "lr_min", "lr_max", "warmup_epochs", "beta1", "beta2",
                  "eps", "weight_decay", "seed", "eval_interval", "seeds"},
                 "train");
    train::TrainConfig tc;
    tc.epochs = t.value("epochs", tc.epochs);
    tc.batch_size = t.value("batch_size", tc.batch_size);
    tc.lr_min = t.value("lr_min", tc.lr_min);
    tc.lr_max = t.value("lr_max", tc.lr_max);
    tc.warmup_epochs = t.value("warmup_epochs", tc.warmup_epochs);
    tc.beta1 = t.value("beta1", tc.beta1);
    tc.beta2 = t.value("beta2", tc.beta2);
    tc.eps = t.value("eps", tc.eps);
    tc.weight_decay = t.value("weight_decay", tc.weight_decay);
    tc.eval_interval = t.value("eval_interval", tc.eval_interval);
    cfg.train_cfg = tc;
    cfg.seeds = t.value("seeds", std::vector<uint64_t>{1});

    cfg.out_dir = j.value("out", std::string("runs/out"));
    return cfg;
}

ExperimentConfig load_experiment_config_file(const std::string& path) {
    return load_experiment_config(json::parse(io::read_file(path)));
}

void apply_paper_scale(train::TrainConfig& cfg) {
    cfg.epochs = 4000;
    cfg.warmup_epochs = 400;
    cfg.batch_size = 100;
    cfg.lr_min = 2e-5;
    cfg.lr_max = 2e-4;
}

train::ExperimentData build_experiment_data(const ExperimentConfig& cfg) {
    Rng base(cfg.data_seed, stream::kDataset);
    Rng r_train = base.fork(1);
    Rng r_test = base.fork(2);
    Rng r_task = base.fork(3);
    Rng r_probe = base.fork(4);

    const split::SplitRule* rule = cfg.rule ? &*cfg.rule : nullptr;
    train::ExperimentData data;
    data.train = taskgen::generate(r_train, cfg.vocab, cfg.task, cfg.train_count,
                                   {rule, taskgen::SplitTag::Train});
    const taskgen::SplitTag test_tag =
        rule ? taskgen::SplitTag::TestData : taskgen::SplitTag::Train;

    if (cfg.task.kind == taskgen::TaskKind::Statistical) {
        // Probes carry the base (unflipped) identity labels.
        const taskgen::TaskSpec probe_task = taskgen::TaskSpec::identity(cfg.task.anchor_ids[0]);
        const int probe_n = cfg.probe_count > 0 ? cfg.probe_count : cfg.test_data_count;
        data.probe_seen = taskgen::generate(r_probe, cfg.vocab, probe_task, probe_n,
                                            {rule, taskgen::SplitTag::Train});
        data.probe_unseen =
            taskgen::generate(r_test, cfg.vocab, probe_task, cfg.test_data_count,
                              {rule, taskgen::SplitTag::TestData});
        data.test_data = *data.probe_unseen;
    } else {
        data.test_data =
            taskgen::generate(r_test, cfg.vocab, cfg.task, cfg.test_data_count, {rule, test_tag});
    }
    if (cfg.test_task_count > 0) {
        data.test_task = taskgen::generate(r_task, cfg.vocab, cfg.task, cfg.test_task_count,
                                           {rule, taskgen::SplitTag::TestTask});
    }
    return data;
}

void validate_experiment_data(const ExperimentConfig& cfg, const train::ExperimentData& data) {
    auto check_labels = [&](const taskgen::LabeledDataset& ds) {
        int flipped = 0;
        for (size_t i = 0; i < ds.samples.size(); ++i) {
            const Token base = taskgen::oracle_label(ds.task, ds.samples[i].tokens);
            if (ds.task.kind == taskgen::TaskKind::Statistical) {
                if (ds.samples[i].label == base + 1) {
                    ++flipped;
                } else if (ds.samples[i].label != base) {
                    throw std::runtime_error("validation: statistical label is neither x nor x+1");
                }
            } else if (ds.samples[i].label != base) {
                throw std::runtime_error("validation: sample " + std::to_string(i) +
                                         " label disagrees with the oracle");
            }
        }
        if (ds.task.kind == taskgen::TaskKind::Statistical && ds.split_tag == taskgen::SplitTag::Train) {
            const int expected =
                static_cast<int>(ds.task.flip_fraction * static_cast<double>(ds.samples.size()));
            if (flipped != expected) {
                throw std::runtime_error("validation: statistical flip count " +
                                         std::to_string(flipped) + " != " +
                                         std::to_string(expected));
            }
        }
    };
    check_labels(data.train);
    if (data.train.task.kind != taskgen::TaskKind::Statistical) {
        check_labels(data.test_data);
    }
    if (data.test_task) {
        check_labels(*data.test_task);
    }
    if (cfg.rule && data.train.task.kind != taskgen::TaskKind::Statistical) {
        const split::SplitReport rep = split::validate_split(data.train, data.test_data, *cfg.rule);
        if (!rep.ok()) {
            throw std::runtime_error("validation: split violations: " +
                                     std::to_string(rep.violations));
        }
    }
    if (cfg.rule && data.test_task) {
        const split::SplitReport rep =
            split::validate_split(data.train, *data.test_task, *cfg.rule);
        if (!rep.ok()) {
            throw std::runtime_error("validation: test-task split violations: " +
                                     std::to_string(rep.violations));
        }
    }
}

namespace {

struct DatasetFile {
    std::string name;
    const taskgen::LabeledDataset* ds;
};

json write_datasets(const ExperimentConfig& cfg, const train::ExperimentData& data) {
    std::vector<DatasetFile> files = {{"train", &data.train}, {"test_data", &data.test_data}};
    if (data.test_task) {
        files.push_back({"test_task", &*data.test_task});
    }
    if (data.probe_seen) {
        files.push_back({"probe_seen", &*data.probe_seen});
    }
    if (data.probe_unseen) {
        files.push_back({"probe_unseen", &*data.probe_unseen});
    }
    json out;
    for (const auto& [name, ds] : files) {
        const std::string path = cfg.out_dir + "/" + name + ".csv";
        const std::string csv = io::dataset_to_csv(*ds);
        io::atomic_write(path, csv);
        out[name] = {{"path", path},
                     {"hash", io::fnv1a64_hex(csv)},
                     {"count", ds->samples.size()},
                     {"task", io::task_to_json(ds->task)},
                     {"split_tag", taskgen::split_tag_name(ds->split_tag)}};
    }
    return out;
}

json gen_manifest(const ExperimentConfig& cfg, const train::ExperimentData& data) {
    json m;
    m["version"] = 1;
    m["task"] = io::task_to_json(cfg.task);
    m["vocab"] = io::vocab_to_json(cfg.vocab);
    m["rule"] = cfg.rule ? io::rule_to_json(*cfg.rule) : json(nullptr);
    m["data_seed"] = cfg.data_seed;
    m["files"] = write_datasets(cfg, data);
    return m;
}

void verify_hashes(const json& manifest) {
    for (const auto& [name, entry] : manifest.at("files").items()) {
        (void)name;
        const std::string path = entry.at("path").get<std::string>();
        const std::string expected = entry.at("hash").get<std::string>();
        if (io::file_hash(path) != expected) {
            throw io::HashMismatchError("dataset file changed since gen: " + path);
        }
    }
}

}  // namespace

int cmd_gen(const ExperimentConfig& cfg) {
    const train::ExperimentData data = build_experiment_data(cfg);
    validate_experiment_data(cfg, data);
    const json manifest = gen_manifest(cfg, data);
    io::atomic_write(cfg.out_dir + "/gen_manifest.json", manifest.dump(2));
    std::printf("gen: wrote %s (train=%zu test_data=%zu)\n",
                (cfg.out_dir + "/gen_manifest.json").c_str(), data.train.samples.size(),
                data.test_data.samples.size());
    return 0;
}

int cmd_split(const ExperimentConfig& cfg) {
    const train::ExperimentData data = build_experiment_data(cfg);
    json m;
    m["rule"] = cfg.rule ? io::rule_to_json(*cfg.rule) : json(nullptr);
    if (cfg.rule) {
        const split::SplitReport rep = split::validate_split(data.train, data.test_data, *cfg.rule);
        m["train_count"] = rep.train_count;
        m["test_count"] = rep.test_count;
        m["violations"] = rep.violations;
        io::atomic_write(cfg.out_dir + "/split_manifest.json", m.dump(2));
        std::printf("split: %d violations over %d samples\n", rep.violations,
                    rep.train_count + rep.test_count);
        return rep.ok() ? 0 : 1;
    }
    io::atomic_write(cfg.out_dir + "/split_manifest.json", m.dump(2));
    std::printf("split: no rule configured\n");
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    const std::string manifest_path = cfg.out_dir + "/gen_manifest.json";
    if (fs::exists(manifest_path)) {
        verify_hashes(json::parse(io::read_file(manifest_path)));
    }
    const train::ExperimentData data = build_experiment_data(cfg);
    validate_experiment_data(cfg, data);
    for (uint64_t seed : cfg.seeds) {
        train::TrainConfig tc = cfg.train_cfg;
        tc.seed = seed;
        try {
            train::RunResult result = train::run_experiment(data, cfg.model_cfg, tc);
            const std::string tag = "seed" + std::to_string(seed);
            io::atomic_write(cfg.out_dir + "/report_" + tag + ".csv",
                             io::report_to_csv(result.report));
            io::save_checkpoint(cfg.out_dir + "/checkpoint_" + tag + ".json", result.params,
                                seed, tc.epochs);
            json run;
            run["model"] = io::model_config_to_json(cfg.model_cfg);
            run["train"] = io::train_config_to_json(tc);
            run["task"] = io::task_to_json(cfg.task);
            run["data_seed"] = cfg.data_seed;
            if (fs::exists(manifest_path)) {
                run["datasets"] = json::parse(io::read_file(manifest_path)).at("files");
            }
            io::atomic_write(cfg.out_dir + "/run_manifest_" + tag + ".json", run.dump(2));
            const train::ReportRow& last = result.report.final_row();
            std::printf("train seed=%llu: loss=%.4f acc_train=%.3f acc_test=%.3f\n",
                        static_cast<unsigned long long>(seed), last.loss, last.acc_train,
                        last.acc_test_data);
        } catch (const train::DivergenceError& e) {
            std::fprintf(stderr, "train seed=%llu diverged: %s\n",
                         static_cast<unsigned long long>(seed), e.what());
            return 2;
        }
    }
    return 0;
}

int cmd_analyze(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                const std::string& out_dir) {
    io::LoadedCheckpoint ckpt = io::load_checkpoint(checkpoint_path);
    Rng base(cfg.data_seed, stream::kProbe);
    Rng r_probe = base.fork(1);
    const int probe_n = cfg.probe_count > 0 ? cfg.probe_count : 256;
    const split::SplitRule* rule = cfg.rule ? &*cfg.rule : nullptr;
    const taskgen::LabeledDataset probe = taskgen::generate(
        r_probe, cfg.vocab, cfg.task, probe_n, {rule, taskgen::SplitTag::TestData});

    model::ForwardOptions opts;
    opts.capture = true;
    model::ForwardPass fp = model::forward(ckpt.params, probe.samples, opts);
    std::vector<int> key_pos;
    for (const auto& meta : probe.meta) {
        key_pos.push_back(meta.key_pos);
    }

    json report;
    report["checkpoint"] = checkpoint_path;
    report["probe_count"] = probe_n;
    const auto patterns = analysis::classify_heads(*fp.trace, key_pos);
    json heads = json::array();
    const model::ModelConfig& mc = ckpt.params.config;
    for (int l = 0; l < mc.layers; ++l) {
        for (int h = 0; h < mc.heads; ++h) {
            const analysis::AttentionPattern& p =
                patterns[static_cast<size_t>(l)][static_cast<size_t>(h)];
            std::string kind = "other";
            if (p.kind == analysis::AttentionPattern::Kind::Shift) {
                kind = "shift";
            } else if (p.kind == analysis::AttentionPattern::Kind::Broadcast) {
                kind = "broadcast";
            }
            heads.push_back({{"layer", l + 1},
                             {"head", h + 1},
                             {"kind", kind},
                             {"shift_offset", p.shift_offset},
                             {"col", p.col},
                             {"start_row", p.start_row},
                             {"key_anchored", p.key_anchored},
                             {"score", p.score}});
            // Mean attention map over the probe batch, one heatmap per head.
            std::vector<double> mean(static_cast<size_t>(mc.n) * mc.n, 0.0);
            for (int b = 0; b < fp.trace->batch; ++b) {
                const model::Tensor m = fp.trace->sample_attention(l, h, b);
                for (size_t i = 0; i < mean.size(); ++i) {
                    mean[i] += m.data[i];
                }
            }
            for (double& v : mean) {
                v /= fp.trace->batch;
            }
            io::atomic_write(out_dir + "/attn_layer" + std::to_string(l + 1) + "_head" +
                                 std::to_string(h + 1) + ".svg",
                             svg::heatmap(mean, mc.n, mc.n,
                                          "layer " + std::to_string(l + 1) + " head " +
                                              std::to_string(h + 1)));
        }
    }
    report["heads"] = heads;

    if (mc.heads >= 2) {
        json cond = json::array();
        for (int l = 0; l < mc.layers; ++l) {
            const model::Tensor sim = analysis::condensation_similarity(*fp.trace, l);
            cond.push_back({{"layer", l + 1},
                            {"mean_off_diagonal", analysis::mean_off_diagonal(sim)}});
        }
        report["condensation"] = cond;
    }

    json qk = json::array();
    for (int h = 0; h < mc.heads; ++h) {
        const model::Tensor cos = analysis::qk_alignment(ckpt.params, 0, h);
        double superdiag = 0.0;
        for (int i = 0; i + 1 < mc.n; ++i) {
            superdiag += cos.at(i, i + 1);
        }
        qk.push_back({{"head", h + 1}, {"mean_superdiagonal_cos", superdiag / (mc.n - 1)}});
    }
    report["qk_alignment_layer1"] = qk;

    if (cfg.task.kind == taskgen::TaskKind::Composite ||
        cfg.task.kind == taskgen::TaskKind::Synonym) {
        json ms = json::array();
        for (const auto& pair : cfg.task.pairs) {
            ms.push_back({{"pair", {pair.first, pair.second}},
                          {"distinct_sequences",
                           analysis::distinct_mapping_sequences(ckpt.params, probe, pair)}});
        }
        report["mapping_sequences"] = ms;
    }

    if (mc.flags.projection) {
        const auto [alpha, beta] = analysis::alpha_beta_vectors(*fp.trace, mc.layers - 1, key_pos);
        (void)beta;
        const analysis::ProjectionResponse resp =
            analysis::projection_response(ckpt.params, alpha);
        report["projection_response_alpha0"] = {
            {"mass_item_range", resp.mass(cfg.vocab.item_lo, cfg.vocab.item_hi)},
            {"max_prob", resp.max_prob()}};
    }

    io::atomic_write(out_dir + "/analysis.json", report.dump(2));
    std::printf("analyze: wrote %s\n", (out_dir + "/analysis.json").c_str());
    return 0;
}

namespace {

model::Flags flags_from_json(const json& j) {
    model::Flags f;
    require_keys(j, {"mask", "residual", "layer_norm", "fnn", "linear_after_attn", "projection"},
                 "flags");
    f.mask = j.value("mask", true);
    f.residual = j.value("residual", true);
    f.layer_norm = j.value("layer_norm", true);
    f.fnn = j.value("fnn", true);
    f.linear_after_attn = j.value("linear_after_attn", true);
    f.projection = j.value("projection", true);
    return f;
}

}  // namespace

int cmd_ablate(const std::string& grid_config_path, bool paper_scale) {
    const json j = json::parse(io::read_file(grid_config_path));
    require_keys(j, {"version", "cells", "base_model", "task", "data", "train", "out"},
                 "ablation grid");
    const std::string out_dir = j.at("out").get<std::string>();

    json exp_cfg;
    exp_cfg["version"] = 1;
    exp_cfg["task"] = j.at("task");
    exp_cfg["split"] = {{"kind", "modular_residue"}};
    exp_cfg["data"] = j.at("data");
    exp_cfg["model"] = j.at("base_model");
    exp_cfg["train"] = j.at("train");
    exp_cfg["out"] = out_dir;
    ExperimentConfig cfg = load_experiment_config(exp_cfg);
    if (paper_scale) {
        apply_paper_scale(cfg.train_cfg);
    }

    const train::ExperimentData data = build_experiment_data(cfg);
    validate_experiment_data(cfg, data);

    std::string csv = "cell,seed,acc_train,acc_test\n";
    json adjustments = json::array();
    for (const auto& cell : j.at("cells")) {
        require_keys(cell, {"name", "flags"}, "cell");
        const std::string name = cell.at("name").get<std::string>();
        model::ModelConfig mc = cfg.model_cfg;
        mc.flags = flags_from_json(cell.at("flags"));
        const model::ModelConfig adjusted = mc.adjusted_for_flags();
        if (adjusted.d_m != mc.d_m || adjusted.d_head != mc.d_head ||
            adjusted.heads != mc.heads) {
            adjustments.push_back({{"cell", name},
                                   {"d_m", adjusted.d_m},
                                   {"d_head", adjusted.d_head},
                                   {"heads", adjusted.heads}});
        }
        for (uint64_t seed : cfg.seeds) {
            train::TrainConfig tc = cfg.train_cfg;
            tc.seed = seed;
            const train::RunResult result = train::run_experiment(data, adjusted, tc);
            const train::ReportRow& last = result.report.final_row();
            char line[160];
            snprintf(line, sizeof(line), "%s,%llu,%.17g,%.17g\n", name.c_str(),
                     static_cast<unsigned long long>(seed), last.acc_train, last.acc_test_data);
            csv += line;
            std::printf("ablate cell=%s seed=%llu train=%.3f test=%.3f\n", name.c_str(),
                        static_cast<unsigned long long>(seed), last.acc_train,
                        last.acc_test_data);
        }
    }
    io::atomic_write(out_dir + "/ablation.csv", csv);
    io::atomic_write(out_dir + "/ablation_adjustments.json", adjustments.dump(2));
    return 0;
}

int cmd_report(const std::string& run_dir, const std::string& out_dir) {
    std::vector<svg::Series> loss_series, acc_series;
    std::string summary = "report,final_epoch,final_loss,final_acc_train,final_acc_test\n";
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("report_", 0) != 0 || entry.path().extension() != ".csv") {
            continue;
        }
        const train::TrainReport report = io::report_from_csv(io::read_file(entry.path()));
        svg::Series loss{name, {}}, acc{name, {}};
        for (const auto& row : report.rows) {
            loss.points.emplace_back(row.epoch, row.loss);
            acc.points.emplace_back(row.epoch, row.acc_test_data);
        }
        loss_series.push_back(std::move(loss));
        acc_series.push_back(std::move(acc));
        const auto& last = report.final_row();
        char line[256];
        snprintf(line, sizeof(line), "%s,%d,%.6g,%.6g,%.6g\n", name.c_str(), last.epoch,
                 last.loss, last.acc_train, last.acc_test_data);
        summary += line;
    }
    if (loss_series.empty()) {
        std::fprintf(stderr, "report: no report_*.csv files in %s\n", run_dir.c_str());
        return 1;
    }
    io::atomic_write(out_dir + "/loss.svg",
                     svg::line_chart(loss_series, "training loss", "epoch", "loss"));
    io::atomic_write(out_dir + "/accuracy.svg",
                     svg::line_chart(acc_series, "test accuracy", "epoch", "accuracy"));
    io::atomic_write(out_dir + "/summary.csv", summary);
    std::printf("report: wrote %s\n", (out_dir + "/summary.csv").c_str());
    return 0;
}

int run(int argc, char** argv) {
#ifdef _OPENMP
    if (const char* env = std::getenv("ANCHORLAB_THREADS")) {
        const int cap = std::atoi(env);
        if (cap > 0) {
            omp_set_num_threads(std::min(cap, omp_get_max_threads()));
        }
    }
#endif
    CLI::App app{"anchorlab: anchor-function benchmark laboratory"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_override, run_dir;
    uint64_t seed_override = 0;
    bool paper_scale = false;
    bool have_seed = false;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config) {
            sub->add_option("--config", config_path, "experiment config JSON")->required();
        }
        sub->add_option("--out", out_override, "output directory override");
        sub->add_option("--seed", seed_override, "data seed override")
            ->each([&](const std::string&) { have_seed = true; });
        sub->add_flag("--paper-scale", paper_scale,
                      "use the full-scale schedule (4000 epochs, warmup 400)");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate and validate datasets");
    add_common(gen, true);
    CLI::App* spl = app.add_subcommand("split", "validate split membership, write manifest");
    add_common(spl, true);
    CLI::App* trn = app.add_subcommand("train", "train one experiment per seed");
    add_common(trn, true);
    CLI::App* ana = app.add_subcommand("analyze", "attention-mechanism analysis of a checkpoint");
    add_common(ana, true);
    ana->add_option("--checkpoint", checkpoint_path, "checkpoint JSON")->required();
    CLI::App* abl = app.add_subcommand("ablate", "component-ablation grid");
    abl->add_option("--config", config_path, "grid config JSON")->required();
    abl->add_flag("--paper-scale", paper_scale, "use the full-scale schedule");
    CLI::App* rep = app.add_subcommand("report", "render report CSVs as SVG charts");
    rep->add_option("--run", run_dir, "directory of report_*.csv files")->required();
    rep->add_option("--out", out_override, "output directory (defaults to --run)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (abl->parsed()) {
            return cmd_ablate(config_path, paper_scale);
        }
        if (rep->parsed()) {
            return cmd_report(run_dir, out_override.empty() ? run_dir : out_override);
        }
        ExperimentConfig cfg = load_experiment_config_file(config_path);
        if (!out_override.empty()) {
            cfg.out_dir = out_override;
        }
        if (have_seed) {
            cfg.data_seed = seed_override;
        }
        if (paper_scale) {
            apply_paper_scale(cfg.train_cfg);
        }
        if (gen->parsed()) {
            return cmd_gen(cfg);
        }
        if (spl->parsed()) {
            return cmd_split(cfg);
        }
        if (trn->parsed()) {
            return cmd_train(cfg);
        }
        if (ana->parsed()) {
            return cmd_analyze(checkpoint_path, cfg,
                               out_override.empty() ? cfg.out_dir : out_override);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace anchorlab::cli
