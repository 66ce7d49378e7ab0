#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace anchorlab {

using Token = int32_t;

constexpr int kSeqLen = 9;       // sequence length n
constexpr int kVocabSize = 201;  // dictionary size V, ids 0..200

struct EmptyDomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OutOfRangeError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Token universe: total size V, an inclusive range for key/filler items, and
// the designated anchor ids. Anchors must lie outside the item range.
struct Vocab {
    int size = kVocabSize;
    Token item_lo = 20;
    Token item_hi = 100;
    std::vector<Token> anchor_ids;

    static Vocab make(int size, Token item_lo, Token item_hi, std::vector<Token> anchors);

    bool in_item_range(Token t) const { return t >= item_lo && t <= item_hi; }
    bool is_anchor(Token t) const;
    int item_count() const { return item_hi - item_lo + 1; }
};

// One sample: n token ids plus the label token.
struct TokenSequence {
    std::vector<Token> tokens;
    Token label = 0;
};

// Counter-based deterministic generator (splitmix64 core). Identical
// (seed, stream) pairs produce identical draw sequences on every platform.
// fork() derives an independent substream; the parent is unaffected.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0);

    uint64_t next_u64();
    double next_unit();                  // uniform in [0, 1)
    int uniform_int(int lo, int hi);     // uniform inclusive, unbiased
    double normal(double mean = 0.0, double stddev = 1.0);
    Rng fork(uint64_t substream) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

// Named substreams so experiments vary exactly one randomness source.
namespace stream {
constexpr uint64_t kDataset = 1;
constexpr uint64_t kInit = 2;
constexpr uint64_t kBatching = 3;
constexpr uint64_t kProbe = 4;
}  // namespace stream

// Uniform draw from item_range \ forbidden. Throws EmptyDomainError when the
// domain is empty.
Token sample_filler(Rng& rng, const Vocab& vocab, const std::set<Token>& forbidden);

// Standard basis vector e_t in R^V.
std::vector<double> one_hot(Token t, int vocab_size);

}  // namespace anchorlab
