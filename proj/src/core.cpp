#include "anchorlab/core.hpp"

#include <algorithm>
#include <cmath>

namespace anchorlab {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

uint64_t splitmix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

Vocab Vocab::make(int size, Token item_lo, Token item_hi, std::vector<Token> anchors) {
    if (size <= 0 || item_lo > item_hi || item_lo < 0 || item_hi >= size) {
        throw std::invalid_argument("Vocab: item_range must be a nonempty subset of [0, V)");
    }
    std::sort(anchors.begin(), anchors.end());
    if (std::adjacent_find(anchors.begin(), anchors.end()) != anchors.end()) {
        throw std::invalid_argument("Vocab: anchor ids must be pairwise distinct");
    }
    for (Token a : anchors) {
        if (a < 0 || a >= size) {
            throw std::invalid_argument("Vocab: anchor id outside [0, V)");
        }
        if (a >= item_lo && a <= item_hi) {
            throw std::invalid_argument("Vocab: anchor id inside item_range");
        }
    }
    Vocab v;
    v.size = size;
    v.item_lo = item_lo;
    v.item_hi = item_hi;
    v.anchor_ids = std::move(anchors);
    return v;
}

bool Vocab::is_anchor(Token t) const {
    return std::binary_search(anchor_ids.begin(), anchor_ids.end(), t);
}

Rng::Rng(uint64_t seed, uint64_t stream) {
    key_ = splitmix(seed + kGolden) ^ splitmix(stream * kGolden + 0x632BE59BD9B4E019ULL);
}

uint64_t Rng::next_u64() {
    ++counter_;
    return splitmix(key_ + counter_ * kGolden);
}

double Rng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

int Rng::uniform_int(int lo, int hi) {
    if (lo > hi) {
        throw std::invalid_argument("uniform_int: empty range");
    }
    const uint64_t range = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    // Lemire's unbiased multiply-shift rejection.
    uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * range;
    auto low = static_cast<uint64_t>(m);
    if (low < range) {
        const uint64_t threshold = (-range) % range;
        while (low < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * range;
            low = static_cast<uint64_t>(m);
        }
    }
    return lo + static_cast<int>(m >> 64);
}

double Rng::normal(double mean, double stddev) {
    // Box-Muller, cosine branch only: two draws per value, no cached state.
    const double u1 = 1.0 - next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

Rng Rng::fork(uint64_t substream) const {
    Rng child(0, 0);
    child.key_ = splitmix(key_ ^ splitmix(substream + 0xD1342543DE82EF95ULL));
    child.counter_ = 0;
    return child;
}

Token sample_filler(Rng& rng, const Vocab& vocab, const std::set<Token>& forbidden) {
    int excluded = 0;
    for (Token t : forbidden) {
        if (vocab.in_item_range(t)) {
            ++excluded;
        }
    }
    const int domain = vocab.item_count() - excluded;
    if (domain <= 0) {
        throw EmptyDomainError("sample_filler: item_range \\ forbidden is empty");
    }
    int k = rng.uniform_int(0, domain - 1);
    for (Token t = vocab.item_lo; t <= vocab.item_hi; ++t) {
        if (forbidden.count(t)) {
            continue;
        }
        if (k == 0) {
            return t;
        }
        --k;
    }
    throw std::logic_error("sample_filler: unreachable");
}

std::vector<double> one_hot(Token t, int vocab_size) {
    if (t < 0 || t >= vocab_size) {
        throw OutOfRangeError("one_hot: token id outside [0, V)");
    }
    std::vector<double> v(static_cast<size_t>(vocab_size), 0.0);
    v[static_cast<size_t>(t)] = 1.0;
    return v;
}

}  // namespace anchorlab
