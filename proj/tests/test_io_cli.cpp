#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "anchorlab/cli.hpp"
#include "anchorlab/svg.hpp"
#include "testutil.hpp"

using namespace anchorlab;
namespace fs = std::filesystem;

TEST_CASE("fnv1a64: frozen vectors") {
    CHECK(io::fnv1a64_hex("") == "cbf29ce484222325");
    CHECK(io::fnv1a64_hex("anchorlab") == "2d5ec9e9613f2eab");
}

TEST_CASE("atomic_write leaves no tmp file and round-trips content") {
    testutil::TempDir dir("io");
    const std::string path = dir.str() + "/sub/file.txt";
    io::atomic_write(path, "hello\n");
    CHECK(io::read_file(path) == "hello\n");
    CHECK(!fs::exists(path + ".tmp"));
}

TEST_CASE("dataset CSV round trip preserves samples and re-derives meta") {
    Rng rng(1, stream::kDataset);
    const Vocab vocab = Vocab::make(kVocabSize, 20, 100, {3});
    const taskgen::LabeledDataset ds = taskgen::gen_identity(rng, vocab, 3, 200);
    const std::string csv = io::dataset_to_csv(ds);
    // Line count equals the sample count.
    CHECK(static_cast<size_t>(std::count(csv.begin(), csv.end(), '\n')) == ds.samples.size());
    const taskgen::LabeledDataset back =
        io::dataset_from_csv(csv, ds.task, taskgen::SplitTag::Train);
    REQUIRE(back.samples.size() == ds.samples.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].tokens == ds.samples[i].tokens);
        CHECK(back.samples[i].label == ds.samples[i].label);
        CHECK(back.meta[i].anchor_pos == ds.meta[i].anchor_pos);
        CHECK(back.meta[i].key_pos == ds.meta[i].key_pos);
    }
}

TEST_CASE("task, rule, and config JSON round trips") {
    const taskgen::TaskSpec task = taskgen::TaskSpec::synonym(true);
    const taskgen::TaskSpec task2 = io::task_from_json(io::task_to_json(task));
    CHECK(task2.kind == task.kind);
    CHECK(task2.anchor_ids == task.anchor_ids);
    CHECK(task2.increments == task.increments);
    CHECK(task2.pairs == task.pairs);

    split::SplitRule rule = split::SplitRule::modular_default();
    rule.held_out = {{2, 1}};
    const split::SplitRule rule2 = io::rule_from_json(io::rule_to_json(rule));
    CHECK(rule2.gamma == rule.gamma);
    CHECK(rule2.held_out == rule.held_out);

    model::ModelConfig mc;
    mc.flags.fnn = false;
    const model::ModelConfig mc2 = io::model_config_from_json(io::model_config_to_json(mc));
    CHECK(mc2.d_m == mc.d_m);
    CHECK(mc2.flags.fnn == false);

    train::TrainConfig tc;
    tc.lr_max = 7e-4;
    const train::TrainConfig tc2 = io::train_config_from_json(io::train_config_to_json(tc));
    CHECK(tc2.lr_max == 7e-4);
}

TEST_CASE("report CSV round trips including empty cells") {
    train::TrainReport report;
    train::ReportRow row;
    row.epoch = 10;
    row.loss = 1.2345678901234567;
    row.lr = 2e-4;
    row.acc_train = 0.5;
    row.acc_test_data = 0.25;
    report.rows.push_back(row);  // acc_test_task, p_x, p_x1 stay NaN
    const std::string csv = io::report_to_csv(report);
    const train::TrainReport back = io::report_from_csv(csv);
    REQUIRE(back.rows.size() == 1);
    CHECK(back.rows[0].loss == row.loss);
    CHECK(std::isnan(back.rows[0].acc_test_task));
    CHECK(back.rows[0].acc_test_data == 0.25);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    testutil::TempDir dir("ckpt");
    model::ModelConfig cfg;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.d_m = 12;
    cfg.d_head = 4;
    cfg.vocab = 17;
    cfg.n = 5;
    Rng rng(7, stream::kInit);
    model::ModelParams params = model::ModelParams::init(cfg, rng);
    const std::string path = dir.str() + "/ckpt.json";
    io::save_checkpoint(path, params, 7, 42);
    const io::LoadedCheckpoint loaded = io::load_checkpoint(path);
    CHECK(loaded.seed == 7);
    CHECK(loaded.epoch == 42);
    bool identical = true;
    params.visit([&](const std::string& name, const model::Tensor& t) {
        loaded.params.visit([&](const std::string& n2, const model::Tensor& t2) {
            if (n2 == name) {
                identical = identical && std::memcmp(t.data.data(), t2.data.data(),
                                                     t.data.size() * sizeof(double)) == 0;
            }
        });
    });
    CHECK(identical);
    // Save the loaded copy: byte-identical file.
    const std::string path2 = dir.str() + "/ckpt2.json";
    io::save_checkpoint(path2, loaded.params, 7, 42);
    CHECK(io::read_file(path) == io::read_file(path2));
}

TEST_CASE("experiment config: strict keys, invariants, defaults") {
    io::json j = io::json::parse(R"({
        "version": 1,
        "task": {"kind": "identity", "anchor": 3},
        "split": {"kind": "modular_residue"},
        "data": {"train": 100, "test_data": 50, "seed": 9},
        "model": {"layers": 2, "heads": 2, "d_m": 32, "d_head": 8, "vocab": 201, "n": 9,
                  "init_scale": 0.02,
                  "flags": {"mask": true, "residual": true, "layer_norm": true, "fnn": true,
                             "linear_after_attn": true, "projection": true}},
        "train": {"epochs": 10, "warmup_epochs": 2, "seeds": [1, 2]},
        "out": "runs/x"
    })");
    const cli::ExperimentConfig cfg = cli::load_experiment_config(j);
    CHECK(cfg.train_count == 100);
    CHECK(cfg.seeds.size() == 2);
    CHECK(cfg.vocab.anchor_ids == std::vector<Token>{3});

    io::json bad = j;
    bad["task"]["typo_key"] = 1;
    CHECK_THROWS_AS(cli::load_experiment_config(bad), std::invalid_argument);

    // Anchor inside the item range is rejected at vocab construction.
    io::json bad_vocab = j;
    bad_vocab["vocab"] = {{"size", 201}, {"item_lo", 2}, {"item_hi", 100}, {"anchor_ids", {3}}};
    CHECK_THROWS_AS(cli::load_experiment_config(bad_vocab), std::invalid_argument);
}

TEST_CASE("cmd_gen is deterministic and validates before writing") {
    testutil::TempDir dir("gen");
    cli::ExperimentConfig cfg;
    cfg.task = taskgen::TaskSpec::identity(3);
    cfg.vocab = Vocab::make(kVocabSize, 20, 100, {3});
    cfg.rule = split::SplitRule::modular_default();
    cfg.train_count = 120;
    cfg.test_data_count = 60;
    cfg.out_dir = dir.str() + "/a";
    CHECK(cli::cmd_gen(cfg) == 0);
    cfg.out_dir = dir.str() + "/b";
    CHECK(cli::cmd_gen(cfg) == 0);
    // Byte-identical dataset files across runs.
    CHECK(io::read_file(dir.str() + "/a/train.csv") == io::read_file(dir.str() + "/b/train.csv"));
    const auto manifest = io::json::parse(io::read_file(dir.str() + "/a/gen_manifest.json"));
    CHECK(manifest.at("files").at("train").at("count").get<int>() == 120);
    // Line count equals the requested count.
    const std::string csv = io::read_file(dir.str() + "/a/train.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 120);
}

TEST_CASE("cmd_train detects tampered datasets via hashes") {
    testutil::TempDir dir("hash");
    cli::ExperimentConfig cfg;
    cfg.task = taskgen::TaskSpec::identity(3);
    cfg.vocab = Vocab::make(kVocabSize, 20, 100, {3});
    cfg.rule = split::SplitRule::modular_default();
    cfg.train_count = 60;
    cfg.test_data_count = 30;
    cfg.model_cfg.layers = 1;
    cfg.model_cfg.heads = 1;
    cfg.model_cfg.d_m = 16;
    cfg.model_cfg.d_head = 8;
    cfg.train_cfg.epochs = 2;
    cfg.train_cfg.warmup_epochs = 1;
    cfg.train_cfg.batch_size = 30;
    cfg.train_cfg.eval_interval = 2;
    cfg.seeds = {1};
    cfg.out_dir = dir.str();
    CHECK(cli::cmd_gen(cfg) == 0);
    // Tamper with one byte of the train file.
    std::string csv = io::read_file(dir.str() + "/train.csv");
    csv[0] = csv[0] == '2' ? '3' : '2';
    io::atomic_write(dir.str() + "/train.csv", csv);
    CHECK_THROWS_AS(cli::cmd_train(cfg), io::HashMismatchError);
}

TEST_CASE("cmd_train writes reports and checkpoints; analyze consumes them") {
    testutil::TempDir dir("train");
    cli::ExperimentConfig cfg;
    cfg.task = taskgen::TaskSpec::identity(3);
    cfg.vocab = Vocab::make(kVocabSize, 20, 100, {3});
    cfg.rule = split::SplitRule::modular_default();
    cfg.train_count = 60;
    cfg.test_data_count = 30;
    cfg.probe_count = 16;
    cfg.model_cfg.layers = 1;
    cfg.model_cfg.heads = 2;
    cfg.model_cfg.d_m = 16;
    cfg.model_cfg.d_head = 8;
    cfg.train_cfg.epochs = 2;
    cfg.train_cfg.warmup_epochs = 1;
    cfg.train_cfg.batch_size = 30;
    cfg.train_cfg.eval_interval = 2;
    cfg.seeds = {1};
    cfg.out_dir = dir.str();
    CHECK(cli::cmd_train(cfg) == 0);
    CHECK(fs::exists(dir.str() + "/report_seed1.csv"));
    CHECK(fs::exists(dir.str() + "/checkpoint_seed1.json"));
    CHECK(fs::exists(dir.str() + "/run_manifest_seed1.json"));

    CHECK(cli::cmd_analyze(dir.str() + "/checkpoint_seed1.json", cfg, dir.str()) == 0);
    const auto analysis = io::json::parse(io::read_file(dir.str() + "/analysis.json"));
    CHECK(analysis.contains("heads"));
    CHECK(analysis.at("heads").size() == 2);
    // Untrained-ish model: heads are classified Other at tau = 0.8.
    int other = 0;
    for (const auto& h : analysis.at("heads")) {
        other += h.at("kind").get<std::string>() == "other" ? 1 : 0;
    }
    CHECK(other == 2);
    CHECK(fs::exists(dir.str() + "/attn_layer1_head1.svg"));

    CHECK(cli::cmd_report(dir.str(), dir.str()) == 0);
    CHECK(fs::exists(dir.str() + "/loss.svg"));
    CHECK(fs::exists(dir.str() + "/accuracy.svg"));
    CHECK(fs::exists(dir.str() + "/summary.csv"));
}

TEST_CASE("svg emitters produce well-formed documents") {
    const std::string hm = svg::heatmap({0.0, 0.5, 1.0, 0.25}, 2, 2, "t");
    CHECK(hm.rfind("<svg", 0) == 0);
    CHECK(hm.find("</svg>") != std::string::npos);
    CHECK(std::count(hm.begin(), hm.end(), '<') >= 6);

    svg::Series s;
    s.name = "acc";
    s.points = {{0, 0.1}, {10, std::nan("")}, {20, 0.9}};
    const std::string lc = svg::line_chart({s}, "title", "epoch", "acc");
    CHECK(lc.rfind("<svg", 0) == 0);
    CHECK(lc.find("polyline") != std::string::npos);
}
