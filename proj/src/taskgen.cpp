#include "anchorlab/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace anchorlab::taskgen {

// ---------------------------------------------------------------------------
// TaskSpec factories
// ---------------------------------------------------------------------------

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::Identity: return "identity";
        case TaskKind::OneAnchorOffset: return "one_anchor_offset";
        case TaskKind::ReadingComprehension: return "reading_comprehension";
        case TaskKind::Classification: return "classification";
        case TaskKind::Composite: return "composite";
        case TaskKind::WorkingMemory: return "working_memory";
        case TaskKind::Synonym: return "synonym";
        case TaskKind::Recitation: return "recitation";
        case TaskKind::Statistical: return "statistical";
        case TaskKind::MultiAnchor: return "multi_anchor";
        case TaskKind::Frequency: return "frequency";
    }
    throw std::logic_error("task_kind_name: unknown kind");
}

TaskKind task_kind_from_name(const std::string& name) {
    for (int k = 0; k <= static_cast<int>(TaskKind::Frequency); ++k) {
        if (task_kind_name(static_cast<TaskKind>(k)) == name) {
            return static_cast<TaskKind>(k);
        }
    }
    throw std::invalid_argument("unknown task kind: " + name);
}

std::string split_tag_name(SplitTag tag) {
    switch (tag) {
        case SplitTag::Train: return "train";
        case SplitTag::TestData: return "test_data";
        case SplitTag::TestTask: return "test_task";
    }
    throw std::logic_error("split_tag_name: unknown tag");
}

TaskSpec TaskSpec::identity(Token anchor) {
    TaskSpec t;
    t.kind = TaskKind::Identity;
    t.anchor_ids = {anchor};
    return t;
}

TaskSpec TaskSpec::one_anchor_offset(std::map<Token, int> offsets) {
    if (offsets.empty()) {
        throw std::invalid_argument("one_anchor_offset: at least one anchor required");
    }
    TaskSpec t;
    t.kind = TaskKind::OneAnchorOffset;
    for (const auto& [a, o] : offsets) {
        if (o < 1 || o > t.n - 1) {
            throw std::invalid_argument("one_anchor_offset: offset outside [1, n-1]");
        }
        t.anchor_ids.push_back(a);
    }
    t.offsets = std::move(offsets);
    return t;
}

TaskSpec TaskSpec::reading_comprehension() {
    TaskSpec t;
    t.kind = TaskKind::ReadingComprehension;
    t.anchor_ids = {1, 2, 3, 4, 5, 6, 7, 8};
    return t;
}

TaskSpec TaskSpec::classification() {
    TaskSpec t;
    t.kind = TaskKind::Classification;
    t.anchor_ids = {1, 2, 3, 4, 5, 6, 7, 8};
    return t;
}

TaskSpec TaskSpec::composite(std::vector<Token> anchors, std::map<Token, int> increments) {
    if (anchors.size() < 2) {
        throw std::invalid_argument("composite: at least two anchors required");
    }
    TaskSpec t;
    t.kind = TaskKind::Composite;
    t.anchor_ids = anchors;
    for (Token a : anchors) {
        if (!increments.count(a)) {
            throw std::invalid_argument("composite: increment missing for anchor " +
                                        std::to_string(a));
        }
    }
    t.increments = std::move(increments);
    for (Token a1 : anchors) {
        for (Token a2 : anchors) {
            t.pairs.emplace_back(a1, a2);
        }
    }
    return t;
}

TaskSpec TaskSpec::working_memory(std::vector<Token> first, std::vector<Token> second) {
    TaskSpec t;
    t.kind = TaskKind::WorkingMemory;
    t.first_anchors = std::move(first);
    t.second_anchors = std::move(second);
    t.anchor_ids = t.first_anchors;
    t.anchor_ids.insert(t.anchor_ids.end(), t.second_anchors.begin(), t.second_anchors.end());
    t.increments = {{2, 1}, {3, -1}, {4, 2}, {5, -2}};
    for (Token a : t.anchor_ids) {
        if (!t.increments.count(a)) {
            t.increments[a] = 1;
        }
    }
    return t;
}

TaskSpec TaskSpec::synonym(bool with_synonym) {
    TaskSpec t;
    t.kind = TaskKind::Synonym;
    t.anchor_ids = {1, 2, 4, 9};
    t.increments = {{1, 1}, {2, -1}, {4, -2}, {9, 2}};
    t.pairs = {{1, 9}, {2, 9}, {9, 1}, {9, 2}, {1, 2}, {1, 4}, {2, 1}, {4, 1}, {2, 4}, {4, 2}};
    if (with_synonym) {
        t.anchor_ids.push_back(3);
        t.increments[3] = t.increments[9];  // anchor 3 is the synonym of anchor 9
        const std::vector<std::pair<Token, Token>> extra = {{1, 3}, {3, 1}, {2, 3},
                                                            {3, 2}, {4, 3}, {3, 4}};
        t.pairs.insert(t.pairs.end(), extra.begin(), extra.end());
    }
    return t;
}

TaskSpec TaskSpec::recitation(Token anchor) {
    TaskSpec t;
    t.kind = TaskKind::Recitation;
    t.anchor_ids = {anchor};
    return t;
}

TaskSpec TaskSpec::statistical(StatisticalType type, Token anchor) {
    TaskSpec t;
    t.kind = TaskKind::Statistical;
    t.anchor_ids = {anchor};
    t.statistical_type = type;
    return t;
}

TaskSpec TaskSpec::multi_anchor() {
    TaskSpec t;
    t.kind = TaskKind::MultiAnchor;
    for (Token a = 1; a <= 10; ++a) {
        t.anchor_ids.push_back(a);
        t.increments[a] = a;  // f_a(x) = x + a
    }
    return t;
}

TaskSpec TaskSpec::frequency(bool task_two) {
    TaskSpec t;
    t.kind = TaskKind::Frequency;
    t.anchor_ids = {3, 4};
    t.offsets = {{3, 1}, {4, 1}};
    t.frequency_task_two = task_two;
    return t;
}

// ---------------------------------------------------------------------------
// Generation helpers
// ---------------------------------------------------------------------------

namespace {

std::set<Token> anchor_set(const TaskSpec& task) {
    return {task.anchor_ids.begin(), task.anchor_ids.end()};
}

// Membership class the key value must satisfy under the constraint. TestTask
// samples use train-residue keys so pair novelty is the only unseen factor.
split::Membership key_target(SplitTag tag) {
    return tag == SplitTag::TestData ? split::Membership::Test : split::Membership::Train;
}

Token sample_key(Rng& rng, const Vocab& vocab, const std::set<Token>& forbidden, int key_pos,
                 Token anchor, const GenConstraint& c) {
    std::vector<Token> allowed;
    allowed.reserve(static_cast<size_t>(vocab.item_count()));
    for (Token x = vocab.item_lo; x <= vocab.item_hi; ++x) {
        if (forbidden.count(x)) {
            continue;
        }
        if (c.rule) {
            using Kind = split::SplitRule::Kind;
            if (c.rule->kind == Kind::AnchorBased) {
                if (split::assign_anchor_based(anchor, x, *c.rule) != key_target(c.tag)) {
                    continue;
                }
            } else if (!c.rule->gamma.empty()) {
                if (split::assign_modular(x, key_pos, *c.rule) != key_target(c.tag)) {
                    continue;
                }
            }
        }
        allowed.push_back(x);
    }
    if (allowed.empty()) {
        throw EmptyDomainError("sample_key: no admissible key value at position " +
                               std::to_string(key_pos));
    }
    return allowed[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(allowed.size()) - 1))];
}

// Fills every position still holding -1 with a filler token.
void fill_rest(Rng& rng, const Vocab& vocab, const std::set<Token>& forbidden,
               std::vector<Token>& tokens) {
    for (Token& t : tokens) {
        if (t < 0) {
            t = sample_filler(rng, vocab, forbidden);
        }
    }
}

LabeledDataset make_empty(const TaskSpec& task, SplitTag tag, int count) {
    LabeledDataset ds;
    ds.task = task;
    ds.split_tag = tag;
    ds.samples.reserve(static_cast<size_t>(count));
    ds.meta.reserve(static_cast<size_t>(count));
    return ds;
}

// Composite-style sample: key at i-1, anchors at (i, i+1).
void push_pair_sample(LabeledDataset& ds, Rng& rng, const Vocab& vocab, const TaskSpec& task,
                      const std::pair<Token, Token>& pair, const GenConstraint& c) {
    const int n = task.n;
    const std::set<Token> forbidden = anchor_set(task);
    const int i = rng.uniform_int(2, n - 1);
    std::vector<Token> tokens(static_cast<size_t>(n), -1);
    const Token key = sample_key(rng, vocab, forbidden, i - 1, pair.first, c);
    tokens[static_cast<size_t>(i - 2)] = key;
    tokens[static_cast<size_t>(i - 1)] = pair.first;
    tokens[static_cast<size_t>(i)] = pair.second;
    fill_rest(rng, vocab, forbidden, tokens);
    const int label = key + task.increments.at(pair.first) + task.increments.at(pair.second);
    if (label < 0 || label >= vocab.size) {
        throw RangeOverflowError("composite label outside [0, V)");
    }
    SampleMeta meta;
    meta.key_pos = i - 1;
    meta.anchor_pos = i;
    meta.second_anchor_pos = i + 1;
    meta.pair = pair;
    ds.samples.push_back({std::move(tokens), static_cast<Token>(label)});
    ds.meta.push_back(meta);
}

}  // namespace

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

LabeledDataset gen_identity(Rng& rng, const Vocab& vocab, Token anchor, int count,
                            const GenConstraint& c) {
    const TaskSpec task = TaskSpec::identity(anchor);
    LabeledDataset ds = make_empty(task, c.tag, count);
    const std::set<Token> forbidden = anchor_set(task);
    for (int s = 0; s < count; ++s) {
        const int p = rng.uniform_int(1, task.n - 1);
        std::vector<Token> tokens(static_cast<size_t>(task.n), -1);
        const Token key = sample_key(rng, vocab, forbidden, p + 1, anchor, c);
        tokens[static_cast<size_t>(p - 1)] = anchor;
        tokens[static_cast<size_t>(p)] = key;
        fill_rest(rng, vocab, forbidden, tokens);
        SampleMeta meta;
        meta.anchor_pos = p;
        meta.key_pos = p + 1;
        ds.samples.push_back({std::move(tokens), key});
        ds.meta.push_back(meta);
    }
    return ds;
}

LabeledDataset gen_one_anchor_offset(Rng& rng, const Vocab& vocab, Token anchor, int offset,
                                     int count, const GenConstraint& c) {
    return gen_offset_mix(rng, vocab, {{anchor, offset}}, count, c);
}

LabeledDataset gen_offset_mix(Rng& rng, const Vocab& vocab, const std::map<Token, int>& offsets,
                              int count, const GenConstraint& c) {
    const TaskSpec task = TaskSpec::one_anchor_offset(offsets);
    LabeledDataset ds = make_empty(task, c.tag, count);
    const std::set<Token> forbidden = anchor_set(task);
    for (int s = 0; s < count; ++s) {
        const Token anchor = task.anchor_ids[static_cast<size_t>(s) % task.anchor_ids.size()];
        const int offset = task.offsets.at(anchor);
        if (task.n - offset < 1) {
            throw OffsetOverflowError("gen_offset_mix: no valid anchor position");
        }
        const int p = rng.uniform_int(1, task.n - offset);
        std::vector<Token> tokens(static_cast<size_t>(task.n), -1);
        const Token key = sample_key(rng, vocab, forbidden, p + offset, anchor, c);
        tokens[static_cast<size_t>(p - 1)] = anchor;
        tokens[static_cast<size_t>(p + offset - 1)] = key;
        fill_rest(rng, vocab, forbidden, tokens);
        SampleMeta meta;
        meta.anchor_pos = p;
        meta.key_pos = p + offset;
        ds.samples.push_back({std::move(tokens), key});
        ds.meta.push_back(meta);
    }
    return ds;
}

LabeledDataset gen_reading_comprehension(Rng& rng, const Vocab& vocab, int count,
                                         const GenConstraint& c) {
    const TaskSpec task = TaskSpec::reading_comprehension();
    LabeledDataset ds = make_empty(task, c.tag, count);
    const std::set<Token> forbidden = anchor_set(task);
    for (int s = 0; s < count; ++s) {
        std::vector<Token> pool = task.anchor_ids;
        rng.shuffle(pool);
        const int k = rng.uniform_int(1, 4);  // which pair is queried
        std::vector<Token> tokens(static_cast<size_t>(task.n), -1);
        for (int j = 1; j <= 4; ++j) {
            tokens[static_cast<size_t>(2 * j - 2)] = pool[static_cast<size_t>(j - 1)];
        }
        const Token key = sample_key(rng, vocab, forbidden, 2 * k, pool[static_cast<size_t>(k - 1)], c);
        tokens[static_cast<size_t>(2 * k - 1)] = key;
        tokens[static_cast<size_t>(task.n - 1)] = pool[static_cast<size_t>(k - 1)];
        fill_rest(rng, vocab, forbidden, tokens);
        SampleMeta meta;
        meta.anchor_pos = 2 * k - 1;
        meta.key_pos = 2 * k;
        ds.samples.push_back({std::move(tokens), key});
        ds.meta.push_back(meta);
    }
    return ds;
}

LabeledDataset gen_classification(Rng& rng, const Vocab& vocab, int count,
                                  const GenConstraint& c) {
    const TaskSpec task = TaskSpec::classification();
    LabeledDataset ds = make_empty(task, c.tag, count);
    const std::set<Token> forbidden = anchor_set(task);
    for (int s = 0; s < count; ++s) {
        std::vector<Token> pool = task.anchor_ids;
        rng.shuffle(pool);
        // Resample x values until the argmin is unique.
        while (true) {
            std::vector<Token> xs(4);
            for (auto& x : xs) {
                x = sample_filler(rng, vocab, forbidden);
            }
            const Token x5 = sample_key(rng, vocab, forbidden, task.n, 0, c);
            int best = 0;
            bool tie = false;
            for (int j = 1; j < 4; ++j) {
                const int dj = std::abs(xs[static_cast<size_t>(j)] - x5);
                const int db = std::abs(xs[static_cast<size_t>(best)] - x5);
                if (dj < db) {
                    best = j;
                    tie = false;
                } else if (dj == db) {
                    tie = true;
                }
            }
            if (tie) {
                continue;
            }
            std::vector<Token> tokens(static_cast<size_t>(task.n));
            for (int j = 0; j < 4; ++j) {
                tokens[static_cast<size_t>(2 * j)] = xs[static_cast<size_t>(j)];
                tokens[static_cast<size_t>(2 * j + 1)] = pool[static_cast<size_t>(j)];
            }
            tokens[static_cast<size_t>(task.n - 1)] = x5;
            SampleMeta meta;
            meta.anchor_pos = 2 * (best + 1);
            meta.key_pos = task.n;
            ds.samples.push_back({std::move(tokens), pool[static_cast<size_t>(best)]});
            ds.meta.push_back(meta);
            break;
        }
    }
    return ds;
}

LabeledDataset gen_composite(Rng& rng, const Vocab& vocab,
                             const std::vector<std::pair<Token, Token>>& anchor_pairs,
                             const std::map<Token, int>& increments, int count,
                             const GenConstraint& c) {
    std::vector<Token> anchors;
    for (const auto& [a, inc] : increments) {
        (void)inc;
        anchors.push_back(a);
    }
    TaskSpec task = TaskSpec::composite(anchors, increments);
    task.pairs = anchor_pairs;

    std::vector<std::pair<Token, Token>> pool = anchor_pairs;
    if (c.rule && c.rule->kind == split::SplitRule::Kind::CompositeAnchor) {
        const bool want_held_out = c.tag == SplitTag::TestTask;
        std::erase_if(pool, [&](const auto& p) {
            const bool held = split::assign_composite(p, *c.rule) ==
                              split::PairClass::TestTaskPair;
            return held != want_held_out;
        });
        if (pool.empty()) {
            throw EmptyDomainError("gen_composite: empty pair pool for split class");
        }
    }

    LabeledDataset ds = make_empty(task, c.tag, count);
    for (int s = 0; s < count; ++s) {
        const auto& pair = pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
        push_pair_sample(ds, rng, vocab, task, pair, c);
    }
    return ds;
}

LabeledDataset gen_working_memory(Rng& rng, const Vocab& vocab, int count,
                                  const GenConstraint& c, const TaskSpec& spec) {
    LabeledDataset ds = make_empty(spec, c.tag, count);
    const std::set<Token> forbidden = anchor_set(spec);
    const int n = spec.n;
    for (int s = 0; s < count; ++s) {
        const Token a1 = spec.first_anchors[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(spec.first_anchors.size()) - 1))];
        const Token a2 = spec.second_anchors[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(spec.second_anchors.size()) - 1))];
        const int p = rng.uniform_int(1, n - 3);      // key position
        const int q = rng.uniform_int(p + 3, n);      // second anchor, >=1 filler gap
        std::vector<Token> tokens(static_cast<size_t>(n), -1);
        const Token key = sample_key(rng, vocab, forbidden, p, a1, c);
        tokens[static_cast<size_t>(p - 1)] = key;
        tokens[static_cast<size_t>(p)] = a1;
        tokens[static_cast<size_t>(q - 1)] = a2;
        fill_rest(rng, vocab, forbidden, tokens);
        const int label = key + spec.increments.at(a1) + spec.increments.at(a2);
        if (label < 0 || label >= vocab.size) {
            throw RangeOverflowError("working_memory label outside [0, V)");
        }
        SampleMeta meta;
        meta.key_pos = p;
        meta.anchor_pos = p + 1;
        meta.second_anchor_pos = q;
        ds.samples.push_back({std::move(tokens), static_cast<Token>(label)});
        ds.meta.push_back(meta);
    }
    return ds;
}

LabeledDataset gen_synonym(Rng& rng, const Vocab& vocab, int total, bool with_synonym,
                           const GenConstraint& c) {
    const TaskSpec task = TaskSpec::synonym(with_synonym);
    LabeledDataset ds = make_empty(task, c.tag, total);
    if (!with_synonym) {
        // Original dataset: the 10-pair pool, equal counts.
        if (total % 10 != 0) {
            std::fprintf(stderr, "gen_synonym: total %d not divisible by 10, rounding down\n",
                         total);
        }
        const int per_pair = total / 10;
        for (const auto& pair : task.pairs) {
            for (int s = 0; s < per_pair; ++s) {
                push_pair_sample(ds, rng, vocab, task, pair, c);
            }
        }
        return ds;
    }
    if (total < 400) {
        throw BadBudgetError("gen_synonym: total must be >= 400 with synonym augmentation");
    }
    if ((total - 400) % 12 != 0) {
        std::fprintf(stderr, "gen_synonym: (M-400) %% 12 != 0, rounding down\n");
    }
    const int per_other = (total - 400) / 12;
    for (const auto& pair : task.pairs) {
        const bool contains9 = pair.first == 9 || pair.second == 9;
        const int n_pair = contains9 ? 100 : per_other;
        for (int s = 0; s < n_pair; ++s) {
            push_pair_sample(ds, rng, vocab, task, pair, c);
        }
    }
    return ds;
}

LabeledDataset gen_recitation(Rng& rng, const Vocab& vocab, int count, const GenConstraint& c) {
    const TaskSpec task = TaskSpec::recitation();
    const Token anchor = task.anchor_ids[0];
    LabeledDataset ds = make_empty(task, c.tag, count);
    const int n = task.n;
    for (int s = 0; s < count; ++s) {
        const int p = rng.uniform_int(1, n - 3);  // block (m, anchor, n) at p..p+2
        const bool forward = rng.uniform_int(0, 1) == 1;
        // forward: last token repeats m, label is n; backward: last repeats n, label m.
        const int key_pos = forward ? p + 2 : p;
        std::set<Token> forbidden = anchor_set(task);
        const Token first = sample_key(rng, vocab, forbidden, key_pos, anchor, c);
        // The constrained draw is the label source; the other block token is free.
        forbidden.insert(first);
        const Token other = sample_filler(rng, vocab, forbidden);
        const Token m = forward ? other : first;
        const Token nn = forward ? first : other;
        forbidden.insert(other);
        std::vector<Token> tokens(static_cast<size_t>(n), -1);
        tokens[static_cast<size_t>(p - 1)] = m;
        tokens[static_cast<size_t>(p)] = anchor;
        tokens[static_cast<size_t>(p + 1)] = nn;
        tokens[static_cast<size_t>(n - 1)] = forward ? m : nn;
        fill_rest(rng, vocab, forbidden, tokens);
        SampleMeta meta;
        meta.anchor_pos = p + 1;
        meta.key_pos = key_pos;
        meta.forward = forward;
        ds.samples.push_back({std::move(tokens), forward ? nn : m});
        ds.meta.push_back(meta);
    }
    return ds;
}

LabeledDataset gen_statistical(Rng& rng, const Vocab& vocab, Token anchor, int total,
                               StatisticalType type, const GenConstraint& c) {
    TaskSpec task = TaskSpec::statistical(type, anchor);
    if (type == StatisticalType::Replicated && total % 5 != 0) {
        throw std::invalid_argument("gen_statistical: Replicated total must be divisible by 5");
    }
    LabeledDataset ds = make_empty(task, c.tag, total);
    const std::set<Token> forbidden = anchor_set(task);

    auto base_sample = [&]() {
        const int p = rng.uniform_int(1, task.n - 1);
        std::vector<Token> tokens(static_cast<size_t>(task.n), -1);
        const Token key = sample_key(rng, vocab, forbidden, p + 1, anchor, c);
        tokens[static_cast<size_t>(p - 1)] = anchor;
        tokens[static_cast<size_t>(p)] = key;
        fill_rest(rng, vocab, forbidden, tokens);
        SampleMeta meta;
        meta.anchor_pos = p;
        meta.key_pos = p + 1;
        return std::make_pair(TokenSequence{std::move(tokens), key}, meta);
    };

    if (type == StatisticalType::Replicated) {
        for (int b = 0; b < total / 5; ++b) {
            auto [seq, meta] = base_sample();
            for (int copy = 0; copy < 5; ++copy) {
                TokenSequence s = seq;
                SampleMeta m = meta;
                if (copy == 4) {
                    s.label = static_cast<Token>(s.label + 1);
                    m.flipped = true;
                }
                ds.samples.push_back(std::move(s));
                ds.meta.push_back(m);
            }
        }
    } else {
        for (int s = 0; s < total; ++s) {
            auto [seq, meta] = base_sample();
            ds.samples.push_back(std::move(seq));
            ds.meta.push_back(meta);
        }
        // Exactly floor(0.2 * total) flips, sampled without replacement.
        const int flips = static_cast<int>(task.flip_fraction * total);
        std::vector<int> idx(static_cast<size_t>(total));
        std::iota(idx.begin(), idx.end(), 0);
        for (int f = 0; f < flips; ++f) {
            const int j = rng.uniform_int(f, total - 1);
            std::swap(idx[static_cast<size_t>(f)], idx[static_cast<size_t>(j)]);
            auto& s = ds.samples[static_cast<size_t>(idx[static_cast<size_t>(f)])];
            s.label = static_cast<Token>(s.label + 1);
            ds.meta[static_cast<size_t>(idx[static_cast<size_t>(f)])].flipped = true;
        }
    }
    return ds;
}

LabeledDataset gen_multi_anchor(Rng& rng, const Vocab& vocab, int count, const GenConstraint& c) {
    const TaskSpec task = TaskSpec::multi_anchor();
    LabeledDataset ds = make_empty(task, c.tag, count);
    const std::set<Token> forbidden = anchor_set(task);
    for (int s = 0; s < count; ++s) {
        const Token anchor = task.anchor_ids[static_cast<size_t>(s) % task.anchor_ids.size()];
        const int p = rng.uniform_int(1, task.n - 1);
        std::vector<Token> tokens(static_cast<size_t>(task.n), -1);
        const Token key = sample_key(rng, vocab, forbidden, p + 1, anchor, c);
        tokens[static_cast<size_t>(p - 1)] = anchor;
        tokens[static_cast<size_t>(p)] = key;
        fill_rest(rng, vocab, forbidden, tokens);
        const int label = key + task.increments.at(anchor);
        if (label < 0 || label >= vocab.size) {
            throw RangeOverflowError("multi_anchor label outside [0, V)");
        }
        SampleMeta meta;
        meta.anchor_pos = p;
        meta.key_pos = p + 1;
        ds.samples.push_back({std::move(tokens), static_cast<Token>(label)});
        ds.meta.push_back(meta);
    }
    return ds;
}

std::pair<LabeledDataset, LabeledDataset> gen_frequency_pair(Rng& rng, const Vocab& vocab,
                                                             int count, const GenConstraint& c) {
    const TaskSpec t1 = TaskSpec::frequency(false);
    const TaskSpec t2 = TaskSpec::frequency(true);
    LabeledDataset d1 = make_empty(t1, c.tag, count);
    LabeledDataset d2 = make_empty(t2, c.tag, count);
    const std::set<Token> forbidden = anchor_set(t1);
    for (int s = 0; s < count; ++s) {
        const Token anchor = t1.anchor_ids[static_cast<size_t>(s) % t1.anchor_ids.size()];
        const int p = rng.uniform_int(1, t1.n - 1);
        std::vector<Token> tokens(static_cast<size_t>(t1.n), -1);
        const Token key = sample_key(rng, vocab, forbidden, p + 1, anchor, c);
        tokens[static_cast<size_t>(p - 1)] = anchor;
        tokens[static_cast<size_t>(p)] = key;
        fill_rest(rng, vocab, forbidden, tokens);
        SampleMeta meta;
        meta.anchor_pos = p;
        meta.key_pos = p + 1;
        d1.samples.push_back({tokens, key});
        d1.meta.push_back(meta);
        const Token label2 = anchor == 4 ? static_cast<Token>(key + 1) : key;
        d2.samples.push_back({std::move(tokens), label2});
        d2.meta.push_back(meta);
    }
    return {std::move(d1), std::move(d2)};
}

LabeledDataset generate(Rng& rng, const Vocab& vocab, const TaskSpec& task, int count,
                        const GenConstraint& c) {
    switch (task.kind) {
        case TaskKind::Identity:
            return gen_identity(rng, vocab, task.anchor_ids.at(0), count, c);
        case TaskKind::OneAnchorOffset:
            return gen_offset_mix(rng, vocab, task.offsets, count, c);
        case TaskKind::ReadingComprehension:
            return gen_reading_comprehension(rng, vocab, count, c);
        case TaskKind::Classification:
            return gen_classification(rng, vocab, count, c);
        case TaskKind::Composite:
            return gen_composite(rng, vocab, task.pairs, task.increments, count, c);
        case TaskKind::WorkingMemory:
            return gen_working_memory(rng, vocab, count, c, task);
        case TaskKind::Synonym:
            return gen_synonym(rng, vocab, count, task.anchor_ids.size() == 5, c);
        case TaskKind::Recitation:
            return gen_recitation(rng, vocab, count, c);
        case TaskKind::Statistical:
            return gen_statistical(rng, vocab, task.anchor_ids.at(0), count,
                                   task.statistical_type, c);
        case TaskKind::MultiAnchor:
            return gen_multi_anchor(rng, vocab, count, c);
        case TaskKind::Frequency: {
            auto [d1, d2] = gen_frequency_pair(rng, vocab, count, c);
            return task.frequency_task_two ? std::move(d2) : std::move(d1);
        }
    }
    throw std::logic_error("generate: unknown task kind");
}

// ---------------------------------------------------------------------------
// Independent oracle
// ---------------------------------------------------------------------------

namespace {

// Positions (1-indexed) of tokens belonging to `ids`.
std::vector<int> occurrences(const std::vector<Token>& tokens, const std::set<Token>& ids) {
    std::vector<int> pos;
    for (size_t j = 0; j < tokens.size(); ++j) {
        if (ids.count(tokens[j])) {
            pos.push_back(static_cast<int>(j) + 1);
        }
    }
    return pos;
}

int require_single(const std::vector<int>& pos, const char* what) {
    if (pos.size() != 1) {
        throw MalformedSampleError(std::string(what) + ": expected exactly one occurrence, got " +
                                   std::to_string(pos.size()));
    }
    return pos[0];
}

Token at(const std::vector<Token>& tokens, int pos1) {
    if (pos1 < 1 || pos1 > static_cast<int>(tokens.size())) {
        throw MalformedSampleError("oracle: referenced position outside sequence");
    }
    return tokens[static_cast<size_t>(pos1 - 1)];
}

}  // namespace

Token oracle_label(const TaskSpec& task, const std::vector<Token>& tokens) {
    const int n = static_cast<int>(tokens.size());
    const std::set<Token> anchors = anchor_set(task);
    switch (task.kind) {
        case TaskKind::Identity:
        case TaskKind::Statistical: {
            const int p = require_single(occurrences(tokens, anchors), "identity anchor");
            if (p > n - 1) {
                throw MalformedSampleError("identity: anchor at last position has no key");
            }
            return at(tokens, p + 1);
        }
        case TaskKind::OneAnchorOffset: {
            const int p = require_single(occurrences(tokens, anchors), "offset anchor");
            const int offset = task.offsets.at(at(tokens, p));
            if (p + offset > n) {
                throw MalformedSampleError("offset: key position beyond sequence end");
            }
            return at(tokens, p + offset);
        }
        case TaskKind::Frequency: {
            const int p = require_single(occurrences(tokens, anchors), "frequency anchor");
            if (p > n - 1) {
                throw MalformedSampleError("frequency: anchor at last position");
            }
            const Token x = at(tokens, p + 1);
            if (task.frequency_task_two && at(tokens, p) == 4) {
                return static_cast<Token>(x + 1);
            }
            return x;
        }
        case TaskKind::ReadingComprehension: {
            const Token query = at(tokens, n);
            int match = -1;
            for (int j = 1; j <= 4; ++j) {
                if (at(tokens, 2 * j - 1) == query) {
                    if (match != -1) {
                        throw MalformedSampleError("reading: query matches several anchors");
                    }
                    match = j;
                }
            }
            if (match == -1) {
                throw MalformedSampleError("reading: query matches no anchor");
            }
            return at(tokens, 2 * match);
        }
        case TaskKind::Classification: {
            const Token x5 = at(tokens, n);
            int best = -1;
            int best_d = 0;
            bool tie = false;
            for (int j = 1; j <= 4; ++j) {
                const int d = std::abs(at(tokens, 2 * j - 1) - x5);
                if (best == -1 || d < best_d) {
                    best = j;
                    best_d = d;
                    tie = false;
                } else if (d == best_d) {
                    tie = true;
                }
            }
            if (tie) {
                throw MalformedSampleError("classification: argmin tie");
            }
            return at(tokens, 2 * best);
        }
        case TaskKind::Composite:
        case TaskKind::Synonym: {
            const std::vector<int> pos = occurrences(tokens, anchors);
            if (pos.size() != 2 || pos[1] != pos[0] + 1) {
                throw MalformedSampleError("composite: need exactly one consecutive anchor pair");
            }
            if (pos[0] < 2) {
                throw MalformedSampleError("composite: pair at sequence start has no key");
            }
            const Token key = at(tokens, pos[0] - 1);
            return static_cast<Token>(key + task.increments.at(at(tokens, pos[0])) +
                                      task.increments.at(at(tokens, pos[1])));
        }
        case TaskKind::WorkingMemory: {
            const std::set<Token> firsts(task.first_anchors.begin(), task.first_anchors.end());
            const std::set<Token> seconds(task.second_anchors.begin(), task.second_anchors.end());
            const int p1 = require_single(occurrences(tokens, firsts), "working-memory a1");
            const int p2 = require_single(occurrences(tokens, seconds), "working-memory a2");
            if (p1 < 2 || p2 <= p1 + 1) {
                throw MalformedSampleError("working-memory: bad anchor placement");
            }
            const Token key = at(tokens, p1 - 1);
            return static_cast<Token>(key + task.increments.at(at(tokens, p1)) +
                                      task.increments.at(at(tokens, p2)));
        }
        case TaskKind::Recitation: {
            const int p = require_single(occurrences(tokens, anchors), "recitation anchor");
            if (p < 2 || p > n - 2) {
                throw MalformedSampleError("recitation: anchor too close to an edge");
            }
            const Token m = at(tokens, p - 1);
            const Token nn = at(tokens, p + 1);
            const Token last = at(tokens, n);
            if (m == nn) {
                throw MalformedSampleError("recitation: m == n is ambiguous");
            }
            if (last == m) {
                return nn;  // forward
            }
            if (last == nn) {
                return m;  // backward
            }
            throw MalformedSampleError("recitation: last token matches neither block token");
        }
        case TaskKind::MultiAnchor: {
            const int p = require_single(occurrences(tokens, anchors), "multi-anchor");
            if (p > n - 1) {
                throw MalformedSampleError("multi-anchor: anchor at last position");
            }
            return static_cast<Token>(at(tokens, p + 1) + at(tokens, p));
        }
    }
    throw std::logic_error("oracle_label: unknown task kind");
}

// ---------------------------------------------------------------------------
// Analytic reformulations
// ---------------------------------------------------------------------------

double analytic_one_anchor_eval(const std::vector<double>& tokens, double anchor,
                                const std::function<double(double)>& g) {
    const int n = static_cast<int>(tokens.size());
    int exact = -1;
    for (int j = 1; j <= n - 1; ++j) {
        if (tokens[static_cast<size_t>(j - 1)] == anchor) {
            if (exact != -1) {
                throw std::invalid_argument("analytic_one_anchor_eval: several exact matches");
            }
            exact = j;
        }
    }
    if (exact != -1) {
        return g(tokens[static_cast<size_t>(exact)]);
    }
    double num = 0.0;
    double den = 0.0;
    for (int j = 1; j <= n - 1; ++j) {
        const double w = 1.0 / std::abs(tokens[static_cast<size_t>(j - 1)] - anchor);
        num += g(tokens[static_cast<size_t>(j)]) * w;
        den += w;
    }
    return num / den;
}

double analytic_recitation_eval(const std::vector<double>& tokens, double anchor) {
    const int n = static_cast<int>(tokens.size());
    int exact = -1;
    for (int j = 2; j <= n - 1; ++j) {
        if (tokens[static_cast<size_t>(j - 1)] == anchor) {
            if (exact != -1) {
                throw std::invalid_argument("analytic_recitation_eval: several exact matches");
            }
            exact = j;
        }
    }
    const double xn = tokens[static_cast<size_t>(n - 1)];
    if (exact != -1) {
        return tokens[static_cast<size_t>(exact)] + tokens[static_cast<size_t>(exact - 2)] - xn;
    }
    double num = 0.0;
    double den = 0.0;
    for (int j = 2; j <= n - 1; ++j) {
        const double w = 1.0 / std::abs(tokens[static_cast<size_t>(j - 1)] - anchor);
        num += (tokens[static_cast<size_t>(j)] + tokens[static_cast<size_t>(j - 2)]) * w;
        den += w;
    }
    return num / den - xn;
}

}  // namespace anchorlab::taskgen
