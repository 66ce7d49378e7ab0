#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "anchorlab/split.hpp"
#include "anchorlab/taskgen.hpp"

using namespace anchorlab;
using namespace anchorlab::split;

TEST_CASE("modular assignment: worked residues") {
    const SplitRule rule = SplitRule::modular_default(9);
    // key 43 at position 5: mod(43,8)=3 = 5-2 -> Test.
    CHECK(assign_modular(43, 5, rule) == Membership::Test);
    // key 44 at position 5: mod(44,8)=4 != 3 -> Train.
    CHECK(assign_modular(44, 5, rule) == Membership::Train);
}

TEST_CASE("modular partition is exhaustive, exclusive, and 1/8-sized per position") {
    const SplitRule rule = SplitRule::modular_default(9);
    for (int pos = 1; pos <= 9; ++pos) {
        int test_count = 0;
        for (Token x = 20; x <= 100; ++x) {
            const Membership m = assign_modular(x, pos, rule);
            CHECK(((m == Membership::Train) != (m == Membership::Test)));
            test_count += m == Membership::Test ? 1 : 0;
        }
        // 81 values, one residue class in Gamma_i: 10 or 11 values.
        CHECK(test_count >= 10);
        CHECK(test_count <= 11);
    }
}

TEST_CASE("anchor-based assignment over the multi-anchor intervals") {
    const Vocab vocab = Vocab::make(kVocabSize, 20, 100, taskgen::TaskSpec::multi_anchor().anchor_ids);
    const SplitRule rule = SplitRule::multi_anchor_intervals(vocab, vocab.anchor_ids);
    // G_1^c = [20,27]: key 20 is Test.
    CHECK(assign_anchor_based(1, 20, rule) == Membership::Test);
    // G_10^c = [92,99]: key 100 is Train.
    CHECK(assign_anchor_based(10, 100, rule) == Membership::Train);
    CHECK_THROWS_AS(assign_anchor_based(11, 50, rule), UnknownAnchorError);
    // Exhaustive: partitions [20,100] for every anchor.
    for (Token a = 1; a <= 10; ++a) {
        int test_count = 0;
        for (Token x = 20; x <= 100; ++x) {
            const Membership m = assign_anchor_based(a, x, rule);
            const bool in_interval = x >= 12 + 8 * a && x <= 12 + 8 * (a + 1) - 1;
            CHECK((m == Membership::Test) == in_interval);
            test_count += m == Membership::Test ? 1 : 0;
        }
        CHECK(test_count == 8);
    }
}

TEST_CASE("composite pair assignment and partition") {
    const taskgen::TaskSpec task = taskgen::TaskSpec::composite();
    SplitRule rule = SplitRule::composite({{4, 4}});
    int train_pairs = 0;
    for (const auto& pair : task.pairs) {
        if (assign_composite(pair, rule) == PairClass::TrainPair) {
            ++train_pairs;
        }
    }
    CHECK(train_pairs == 15);
    CHECK(assign_composite({1, 2}, rule) == PairClass::TrainPair);
    CHECK(assign_composite({4, 4}, rule) == PairClass::TestTaskPair);
}

TEST_CASE("validate_split: clean datasets, then one injected violation") {
    const Vocab vocab = Vocab::make(kVocabSize, 20, 100, {3});
    const SplitRule rule = SplitRule::modular_default(9);
    Rng r1(31, stream::kDataset), r2(32, stream::kDataset);
    taskgen::LabeledDataset train =
        taskgen::gen_identity(r1, vocab, 3, 400, {&rule, taskgen::SplitTag::Train});
    taskgen::LabeledDataset test =
        taskgen::gen_identity(r2, vocab, 3, 400, {&rule, taskgen::SplitTag::TestData});
    SplitReport rep = validate_split(train, test, rule);
    CHECK(rep.ok());
    CHECK(rep.train_count + rep.test_count == 800);

    // Move one test sample into train: exactly one violation.
    train.samples.push_back(test.samples[0]);
    train.meta.push_back(test.meta[0]);
    rep = validate_split(train, test, rule);
    CHECK(rep.violations == 1);
}

TEST_CASE("composite generation respects held-out pairs and key residues") {
    const taskgen::TaskSpec task = taskgen::TaskSpec::composite();
    const Vocab vocab = Vocab::make(kVocabSize, 20, 100, task.anchor_ids);
    SplitRule rule = SplitRule::composite({{2, 1}});
    const SplitRule modular = SplitRule::modular_default(9);
    rule.gamma = modular.gamma;
    rule.modulus = modular.modulus;

    Rng r1(33, stream::kDataset), r2(34, stream::kDataset), r3(35, stream::kDataset);
    const auto train = taskgen::gen_composite(r1, vocab, task.pairs, task.increments, 600,
                                              {&rule, taskgen::SplitTag::Train});
    const auto test_data = taskgen::gen_composite(r2, vocab, task.pairs, task.increments, 300,
                                                  {&rule, taskgen::SplitTag::TestData});
    const auto test_task = taskgen::gen_composite(r3, vocab, task.pairs, task.increments, 300,
                                                  {&rule, taskgen::SplitTag::TestTask});
    for (const auto& meta : train.meta) {
        CHECK(meta.pair != std::pair<Token, Token>{2, 1});
    }
    for (const auto& meta : test_task.meta) {
        CHECK(meta.pair == std::pair<Token, Token>{2, 1});
    }
    CHECK(validate_split(train, test_data, rule).ok());
    CHECK(validate_split(train, test_task, rule).ok());
}
