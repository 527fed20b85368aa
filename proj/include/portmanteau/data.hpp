#pragma once

// Alphabet, normalization, dataset / word-list loading, sequence encoding
// and cross-validation fold plans.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "portmanteau/errors.hpp"
#include "portmanteau/random.hpp"

namespace portmanteau {

using SymbolId = std::size_t;
using Sequence = std::vector<SymbolId>;

// Fixed 29-symbol alphabet: pad, a-z, separator ';' and stop '.'.
class Alphabet {
public:
    static constexpr char kPadChar = '_';
    static constexpr char kSeparatorChar = ';';
    static constexpr char kStopChar = '.';

    static const Alphabet& standard() {
        static const Alphabet a;
        return a;
    }

    std::size_t size() const { return symbols_.size(); }
    SymbolId pad() const { return 0; }
    SymbolId separator() const { return 27; }
    SymbolId stop() const { return 28; }

    bool is_letter(char c) const { return c >= 'a' && c <= 'z'; }

    SymbolId id(char c) const {
        const auto pos = symbols_.find(c);
        if (pos == std::string::npos) {
            throw EncodingError(std::string("character '") + c + "' is not in the alphabet");
        }
        return pos;
    }

    char symbol(SymbolId id) const {
        if (id >= symbols_.size()) throw IndexError("symbol id " + std::to_string(id) + " out of range");
        return symbols_[id];
    }

    Sequence encode(std::string_view s) const {
        Sequence out;
        out.reserve(s.size());
        for (char c : s) out.push_back(id(c));
        return out;
    }

    std::string decode(std::span<const SymbolId> ids) const {
        std::string out;
        out.reserve(ids.size());
        for (SymbolId i : ids) out.push_back(symbol(i));
        return out;
    }

    // Ordered symbol list as stored in model files.
    const std::string& spec() const { return symbols_; }
    std::uint64_t hash() const { return fnv1a64(symbols_); }

private:
    Alphabet() : symbols_("_abcdefghijklmnopqrstuvwxyz;.") {}
    std::string symbols_;
};

// ---------------------------------------------------------------------------
// Normalization

enum class NormalizePolicy { Drop, Reject };

struct RejectedRecord : std::invalid_argument {
    RejectedRecord(std::string raw_text, const std::string& why)
        : std::invalid_argument(why + ": \"" + raw_text + "\""), raw(std::move(raw_text)) {}
    std::string raw;
};

// Lowercases ASCII letters. Anything else (digits, hyphens, apostrophes,
// non-ASCII bytes) is dropped under Drop or rejected under Reject.
inline std::string normalize(std::string_view raw, NormalizePolicy policy = NormalizePolicy::Drop) {
    std::string out;
    out.reserve(raw.size());
    for (char ch : raw) {
        const auto u = static_cast<unsigned char>(ch);
        if (u < 128 && std::isalpha(u)) {
            out.push_back(static_cast<char>(std::tolower(u)));
        } else if (policy == NormalizePolicy::Reject) {
            throw RejectedRecord(std::string(raw), "character outside [a-z]");
        }
    }
    if (out.empty()) throw RejectedRecord(std::string(raw), "empty after normalization");
    return out;
}

// ---------------------------------------------------------------------------
// Examples and encoding

struct Example {
    std::string root1;
    std::string root2;
    std::optional<std::string> target;

    bool operator==(const Example&) const = default;
};

// root1 ++ [separator] ++ root2
inline Sequence encode_input(std::string_view root1, std::string_view root2,
                             const Alphabet& a = Alphabet::standard()) {
    Sequence ids = a.encode(root1);
    ids.push_back(a.separator());
    const Sequence tail = a.encode(root2);
    ids.insert(ids.end(), tail.begin(), tail.end());
    return ids;
}

inline Sequence encode_input(const Example& e, const Alphabet& a = Alphabet::standard()) {
    return encode_input(e.root1, e.root2, a);
}

// Word followed by the stop symbol.
inline Sequence encode_target(std::string_view word, const Alphabet& a = Alphabet::standard()) {
    Sequence ids = a.encode(word);
    ids.push_back(a.stop());
    return ids;
}

// ---------------------------------------------------------------------------
// Dataset files

struct Rejection {
    std::size_t line = 0;
    std::string cause;
    std::string text;
};

struct Dataset {
    std::vector<Example> examples;
    std::vector<Rejection> rejections;
};

inline std::vector<std::string> split_tabs(std::string_view line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find('\t', start);
        fields.emplace_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return fields;
}

inline std::string strip_cr(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

// Parses `root1<TAB>root2<TAB>portmanteau` records. Malformed lines and
// duplicate triples are reported, not fatal.
inline Dataset parse_dataset(std::istream& in, NormalizePolicy policy = NormalizePolicy::Drop) {
    Dataset ds;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = strip_cr(std::move(line));
        if (line.empty() || line[0] == '#') continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 3) {
            ds.rejections.push_back(
                {lineno, "expected 3 tab-separated fields, found " + std::to_string(fields.size()), line});
            continue;
        }
        try {
            Example e{normalize(fields[0], policy), normalize(fields[1], policy), normalize(fields[2], policy)};
            if (!seen.emplace(e.root1, e.root2, *e.target).second) {
                ds.rejections.push_back({lineno, "duplicate record", line});
                continue;
            }
            ds.examples.push_back(std::move(e));
        } catch (const RejectedRecord& r) {
            ds.rejections.push_back({lineno, r.what(), line});
        }
    }
    return ds;
}

inline Dataset load_dataset(const std::string& path, NormalizePolicy policy = NormalizePolicy::Drop) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read dataset file '" + path + "'");
    return parse_dataset(in, policy);
}

inline std::string format_dataset(std::span<const Example> examples) {
    std::string out;
    for (const auto& e : examples) {
        out += e.root1 + '\t' + e.root2 + '\t' + e.target.value_or("") + '\n';
    }
    return out;
}

// Stable fingerprint of a dataset's normalized contents.
inline std::uint64_t fingerprint(std::span<const Example> examples) {
    return fnv1a64(format_dataset(examples));
}

// ---------------------------------------------------------------------------
// Word lists

struct WordList {
    std::vector<std::string> words;
    std::size_t skipped = 0;
};

// Normalizes, drops invalid words (counted in `skipped`) and deduplicates,
// preserving first occurrence order.
inline WordList make_wordlist(std::span<const std::string> raw, NormalizePolicy policy = NormalizePolicy::Drop) {
    WordList wl;
    std::unordered_set<std::string> seen;
    for (const auto& r : raw) {
        std::string w;
        try {
            w = normalize(r, policy);
        } catch (const RejectedRecord&) {
            ++wl.skipped;
            continue;
        }
        if (seen.insert(w).second) wl.words.push_back(std::move(w));
    }
    return wl;
}

inline WordList load_wordlist(const std::string& path, NormalizePolicy policy = NormalizePolicy::Drop) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read word list '" + path + "'");
    std::vector<std::string> raw;
    std::string line;
    while (std::getline(in, line)) {
        line = strip_cr(std::move(line));
        if (!line.empty()) raw.push_back(line);
    }
    return make_wordlist(raw, policy);
}

// ---------------------------------------------------------------------------
// Fold plans

// Deterministic shuffled partition into k folds whose sizes differ by at
// most one. For fold i: test = i, validation = (i + 1) mod k, train = rest.
class FoldPlan {
public:
    FoldPlan(std::size_t n, std::size_t k, std::uint64_t seed) : k_(k), seed_(seed), assignment_(n) {
        if (k < 2) throw ContractError("make_folds: k must be at least 2");
        if (n < k) {
            throw ContractError("make_folds: " + std::to_string(n) + " examples cannot fill " +
                                std::to_string(k) + " folds");
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(seed);
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t pos = 0; pos < n; ++pos) assignment_[order[pos]] = pos % k;
    }

    std::size_t k() const { return k_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t size() const { return assignment_.size(); }
    const std::vector<std::size_t>& assignment() const { return assignment_; }

    std::size_t validation_fold(std::size_t fold) const { return (fold + 1) % k_; }

    std::vector<std::size_t> indices_in(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment_.size(); ++i)
            if (assignment_[i] == fold) out.push_back(i);
        return out;
    }
    std::vector<std::size_t> test_indices(std::size_t fold) const { return indices_in(fold); }
    std::vector<std::size_t> validation_indices(std::size_t fold) const {
        return indices_in(validation_fold(fold));
    }
    std::vector<std::size_t> train_indices(std::size_t fold) const {
        const std::size_t v = validation_fold(fold);
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment_.size(); ++i)
            if (assignment_[i] != fold && assignment_[i] != v) out.push_back(i);
        return out;
    }

    // `index<TAB>fold` per line.
    std::string to_tsv() const {
        std::string out;
        for (std::size_t i = 0; i < assignment_.size(); ++i) {
            out += std::to_string(i) + '\t' + std::to_string(assignment_[i]) + '\n';
        }
        return out;
    }

private:
    std::size_t k_;
    std::uint64_t seed_;
    std::vector<std::size_t> assignment_;
};

inline FoldPlan make_folds(std::size_t n, std::size_t k, std::uint64_t seed) { return FoldPlan(n, k, seed); }

template <typename T>
std::vector<T> select(std::span<const T> items, std::span<const std::size_t> indices) {
    std::vector<T> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(items[i]);
    return out;
}

}  // namespace portmanteau
