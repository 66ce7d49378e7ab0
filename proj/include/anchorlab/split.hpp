#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "anchorlab/core.hpp"

namespace anchorlab::taskgen {
struct LabeledDataset;
}

namespace anchorlab::split {

struct UnknownAnchorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownPairError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Membership { Train, Test };
enum class PairClass { TrainPair, TestTaskPair };

// Train/test separation scheme. Exactly one of the three parameter blocks is
// meaningful, selected by kind.
struct SplitRule {
    enum class Kind { ModularResidue, AnchorBased, CompositeAnchor };

    Kind kind = Kind::ModularResidue;

    // ModularResidue: membership of key value x at key position i is decided
    // by whether mod(x, modulus) lies in gamma[i].
    int modulus = kSeqLen - 1;
    std::map<int, std::set<int>> gamma;  // key position (1-indexed) -> residue set

    // AnchorBased: per-anchor train key sets G_a.
    std::map<Token, std::set<Token>> train_keys;

    // CompositeAnchor: anchor pairs excluded from training.
    std::vector<std::pair<Token, Token>> held_out;

    // Gamma_i = {mod(i-2, n-1)} for every key position i in [2, n].
    static SplitRule modular_default(int n = kSeqLen);
    // Same residue set at every key position (position-independent split).
    static SplitRule modular_uniform(std::set<int> residues, int n = kSeqLen);
    static SplitRule anchor_based(std::map<Token, std::set<Token>> train_keys);
    static SplitRule composite(std::vector<std::pair<Token, Token>> held_out);

    // Anchor-based rule of the multi-anchor task: test keys for anchor a are
    // G_a^c = [12+8a, 12+8(a+1)-1], train keys are [lo, hi] \ G_a^c.
    static SplitRule multi_anchor_intervals(const Vocab& vocab,
                                            const std::vector<Token>& anchors);
};

Membership assign_modular(Token key_value, int key_pos, const SplitRule& rule);
Membership assign_modular(const TokenSequence& sample, int key_pos, const SplitRule& rule);
Membership assign_anchor_based(Token anchor, Token key, const SplitRule& rule);
PairClass assign_composite(const std::pair<Token, Token>& pair, const SplitRule& rule);

struct SplitReport {
    int train_count = 0;
    int test_count = 0;
    int violations = 0;
    std::vector<std::string> violation_details;  // capped, for diagnostics

    bool ok() const { return violations == 0; }
};

// Re-checks every sample's membership against the rule. Violations are
// reported, never thrown.
SplitReport validate_split(const taskgen::LabeledDataset& train,
                           const taskgen::LabeledDataset& test,
                           const SplitRule& rule);

}  // namespace anchorlab::split
