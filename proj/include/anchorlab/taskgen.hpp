#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "anchorlab/core.hpp"
#include "anchorlab/split.hpp"

namespace anchorlab::taskgen {

struct MalformedSampleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OffsetOverflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct RangeOverflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadBudgetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TaskKind {
    Identity,
    OneAnchorOffset,
    ReadingComprehension,
    Classification,
    Composite,
    WorkingMemory,
    Synonym,
    Recitation,
    Statistical,
    MultiAnchor,
    Frequency,
};

std::string task_kind_name(TaskKind kind);
TaskKind task_kind_from_name(const std::string& name);

enum class StatisticalType { Replicated, Random20 };

// Declarative description of one anchor task. Kind-specific parameters are
// validated by the factory functions below.
struct TaskSpec {
    TaskKind kind = TaskKind::Identity;
    int n = kSeqLen;
    std::vector<Token> anchor_ids;

    // OneAnchorOffset / Frequency: anchor -> key offset.
    std::map<Token, int> offsets;
    // Composite / WorkingMemory / Synonym / MultiAnchor: anchor -> increment c_a.
    std::map<Token, int> increments;
    // Composite / Synonym: the pool of (a1, a2) pairs instantiated in data.
    std::vector<std::pair<Token, Token>> pairs;
    // WorkingMemory: admissible first/second anchor values.
    std::vector<Token> first_anchors;
    std::vector<Token> second_anchors;
    // Statistical.
    StatisticalType statistical_type = StatisticalType::Replicated;
    double flip_fraction = 0.2;
    // Frequency: false = task one (always x), true = task two (anchor 4 -> x+1).
    bool frequency_task_two = false;

    static TaskSpec identity(Token anchor = 3);
    static TaskSpec one_anchor_offset(std::map<Token, int> offsets);
    static TaskSpec reading_comprehension();
    static TaskSpec classification();
    static TaskSpec composite(std::vector<Token> anchors = {1, 2, 3, 4},
                              std::map<Token, int> increments = {{1, 1}, {2, -1}, {3, 2}, {4, -2}});
    static TaskSpec working_memory(std::vector<Token> first = {2, 3},
                                   std::vector<Token> second = {4, 5});
    static TaskSpec synonym(bool with_synonym);
    static TaskSpec recitation(Token anchor = 3);
    static TaskSpec statistical(StatisticalType type, Token anchor = 3);
    static TaskSpec multi_anchor();
    static TaskSpec frequency(bool task_two);
};

enum class SplitTag { Train, TestData, TestTask };

std::string split_tag_name(SplitTag tag);

// Per-sample bookkeeping used by split validation and mechanism analysis.
struct SampleMeta {
    int anchor_pos = -1;       // 1-indexed; first anchor for two-anchor tasks
    int second_anchor_pos = -1;
    int key_pos = -1;          // 1-indexed position of the key item
    std::pair<Token, Token> pair{-1, -1};  // composite/synonym anchor pair
    bool forward = false;      // recitation branch tag
    bool flipped = false;      // statistical x+1 label
};

struct LabeledDataset {
    std::vector<TokenSequence> samples;
    std::vector<SampleMeta> meta;
    TaskSpec task;
    SplitTag split_tag = SplitTag::Train;

    size_t size() const { return samples.size(); }
};

// Constrains key sampling during generation: nullptr rule means unconstrained.
struct GenConstraint {
    const split::SplitRule* rule = nullptr;
    SplitTag tag = SplitTag::Train;
};

// ---------------------------------------------------------------------------
// Generators. Each places the anchor pattern by construction and samples
// fillers from item_range minus the task's anchors.
// ---------------------------------------------------------------------------

LabeledDataset gen_identity(Rng& rng, const Vocab& vocab, Token anchor, int count,
                            const GenConstraint& c = {});
LabeledDataset gen_one_anchor_offset(Rng& rng, const Vocab& vocab, Token anchor, int offset,
                                     int count, const GenConstraint& c = {});
// Mixed-offset dataset (one anchor per sequence, anchors in equal proportion).
LabeledDataset gen_offset_mix(Rng& rng, const Vocab& vocab, const std::map<Token, int>& offsets,
                              int count, const GenConstraint& c = {});
LabeledDataset gen_reading_comprehension(Rng& rng, const Vocab& vocab, int count,
                                         const GenConstraint& c = {});
LabeledDataset gen_classification(Rng& rng, const Vocab& vocab, int count,
                                  const GenConstraint& c = {});
LabeledDataset gen_composite(Rng& rng, const Vocab& vocab,
                             const std::vector<std::pair<Token, Token>>& anchor_pairs,
                             const std::map<Token, int>& increments, int count,
                             const GenConstraint& c = {});
LabeledDataset gen_working_memory(Rng& rng, const Vocab& vocab, int count,
                                  const GenConstraint& c = {},
                                  const TaskSpec& spec = TaskSpec::working_memory());
LabeledDataset gen_synonym(Rng& rng, const Vocab& vocab, int total, bool with_synonym,
                           const GenConstraint& c = {});
LabeledDataset gen_recitation(Rng& rng, const Vocab& vocab, int count,
                              const GenConstraint& c = {});
LabeledDataset gen_statistical(Rng& rng, const Vocab& vocab, Token anchor, int total,
                               StatisticalType type, const GenConstraint& c = {});
LabeledDataset gen_multi_anchor(Rng& rng, const Vocab& vocab, int count,
                                const GenConstraint& c = {});
std::pair<LabeledDataset, LabeledDataset> gen_frequency_pair(Rng& rng, const Vocab& vocab,
                                                             int count,
                                                             const GenConstraint& c = {});

// Dispatch on task.kind; used by the CLI.
LabeledDataset generate(Rng& rng, const Vocab& vocab, const TaskSpec& task, int count,
                        const GenConstraint& c = {});

// ---------------------------------------------------------------------------
// Independent label oracle: re-derives the label by a direct scan of the
// token pattern, sharing no code with the generators. Throws
// MalformedSampleError when the required pattern is absent or duplicated.
// For Statistical the oracle returns the base (unflipped) label.
// ---------------------------------------------------------------------------
Token oracle_label(const TaskSpec& task, const std::vector<Token>& tokens);

// ---------------------------------------------------------------------------
// Analytic (weighted) reformulations over real scalars. Exact matches use the
// limit convention: a singular weight dominates the average.
// ---------------------------------------------------------------------------
double analytic_one_anchor_eval(const std::vector<double>& tokens, double anchor,
                                const std::function<double(double)>& g);
double analytic_recitation_eval(const std::vector<double>& tokens, double anchor);

}  // namespace anchorlab::taskgen
