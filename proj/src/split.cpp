#include "anchorlab/split.hpp"

#include <algorithm>

#include "anchorlab/taskgen.hpp"

namespace anchorlab::split {

SplitRule SplitRule::modular_default(int n) {
    SplitRule rule;
    rule.kind = Kind::ModularResidue;
    rule.modulus = n - 1;
    for (int i = 1; i <= n; ++i) {
        int r = (i - 2) % rule.modulus;
        if (r < 0) {
            r += rule.modulus;
        }
        rule.gamma[i] = {r};
    }
    return rule;
}

SplitRule SplitRule::modular_uniform(std::set<int> residues, int n) {
    SplitRule rule;
    rule.kind = Kind::ModularResidue;
    rule.modulus = n - 1;
    for (int i = 1; i <= n; ++i) {
        rule.gamma[i] = residues;
    }
    return rule;
}

SplitRule SplitRule::anchor_based(std::map<Token, std::set<Token>> train_keys) {
    SplitRule rule;
    rule.kind = Kind::AnchorBased;
    rule.train_keys = std::move(train_keys);
    return rule;
}

SplitRule SplitRule::composite(std::vector<std::pair<Token, Token>> held_out) {
    SplitRule rule;
    rule.kind = Kind::CompositeAnchor;
    rule.held_out = std::move(held_out);
    return rule;
}

SplitRule SplitRule::multi_anchor_intervals(const Vocab& vocab,
                                            const std::vector<Token>& anchors) {
    std::map<Token, std::set<Token>> train_keys;
    for (Token a : anchors) {
        const Token test_lo = 12 + 8 * a;
        const Token test_hi = 12 + 8 * (a + 1) - 1;
        std::set<Token> keys;
        for (Token x = vocab.item_lo; x <= vocab.item_hi; ++x) {
            if (x < test_lo || x > test_hi) {
                keys.insert(x);
            }
        }
        train_keys[a] = std::move(keys);
    }
    return anchor_based(std::move(train_keys));
}

Membership assign_modular(Token key_value, int key_pos, const SplitRule& rule) {
    auto it = rule.gamma.find(key_pos);
    const int residue = static_cast<int>(key_value % rule.modulus);
    if (it == rule.gamma.end()) {
        return Membership::Train;  // position not governed by the rule
    }
    return it->second.count(residue) ? Membership::Test : Membership::Train;
}

Membership assign_modular(const TokenSequence& sample, int key_pos, const SplitRule& rule) {
    if (key_pos < 1 || key_pos > static_cast<int>(sample.tokens.size())) {
        throw std::invalid_argument("assign_modular: key_pos outside sequence");
    }
    return assign_modular(sample.tokens[static_cast<size_t>(key_pos - 1)], key_pos, rule);
}

Membership assign_anchor_based(Token anchor, Token key, const SplitRule& rule) {
    auto it = rule.train_keys.find(anchor);
    if (it == rule.train_keys.end()) {
        throw UnknownAnchorError("assign_anchor_based: no key set for anchor " +
                                 std::to_string(anchor));
    }
    return it->second.count(key) ? Membership::Train : Membership::Test;
}

PairClass assign_composite(const std::pair<Token, Token>& pair, const SplitRule& rule) {
    return std::find(rule.held_out.begin(), rule.held_out.end(), pair) != rule.held_out.end()
               ? PairClass::TestTaskPair
               : PairClass::TrainPair;
}

namespace {

// Expected membership of one sample under the rule, using its metadata.
bool sample_matches(const TokenSequence& s, const taskgen::SampleMeta& m,
                    taskgen::SplitTag tag, const SplitRule& rule) {
    switch (rule.kind) {
        case SplitRule::Kind::ModularResidue: {
            const Membership got = assign_modular(s, m.key_pos, rule);
            return (tag == taskgen::SplitTag::Train) == (got == Membership::Train);
        }
        case SplitRule::Kind::AnchorBased: {
            const Token anchor = s.tokens[static_cast<size_t>(m.anchor_pos - 1)];
            const Token key = s.tokens[static_cast<size_t>(m.key_pos - 1)];
            const Membership got = assign_anchor_based(anchor, key, rule);
            return (tag == taskgen::SplitTag::Train) == (got == Membership::Train);
        }
        case SplitRule::Kind::CompositeAnchor: {
            const PairClass got = assign_composite(m.pair, rule);
            if (tag == taskgen::SplitTag::TestTask) {
                return got == PairClass::TestTaskPair;
            }
            if (got != PairClass::TrainPair) {
                return false;
            }
            // Held-in pairs are additionally separated by key residue when the
            // rule carries a gamma map (Train vs TestData).
            if (!rule.gamma.empty()) {
                const Membership mem = assign_modular(s, m.key_pos, rule);
                return (tag == taskgen::SplitTag::Train) == (mem == Membership::Train);
            }
            return tag == taskgen::SplitTag::Train;
        }
    }
    return false;
}

void check_dataset(const taskgen::LabeledDataset& ds, const SplitRule& rule,
                   SplitReport& report) {
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        if (!sample_matches(ds.samples[i], ds.meta[i], ds.split_tag, rule)) {
            ++report.violations;
            if (report.violation_details.size() < 16) {
                report.violation_details.push_back(taskgen::split_tag_name(ds.split_tag) +
                                                   " sample " + std::to_string(i));
            }
        }
    }
}

}  // namespace

SplitReport validate_split(const taskgen::LabeledDataset& train,
                           const taskgen::LabeledDataset& test, const SplitRule& rule) {
    SplitReport report;
    report.train_count = static_cast<int>(train.size());
    report.test_count = static_cast<int>(test.size());
    check_dataset(train, rule, report);
    check_dataset(test, rule, report);
    return report;
}

}  // namespace anchorlab::split
