#pragma once

// Matches / Distance metrics, coverage and uncovered-subset analysis, and
// the paired bootstrap comparison of two systems.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "portmanteau/data.hpp"
#include "portmanteau/decoding.hpp"
#include "portmanteau/random.hpp"

namespace portmanteau {

// Unit-cost Levenshtein distance.
inline std::size_t edit_distance(std::string_view a, std::string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

struct EvalRow {
    std::string root1;
    std::string root2;
    std::string truth;
    std::string prediction;
    std::size_t distance = 0;
    bool covered = false;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double matches_pct = 0.0;
    double mean_distance = 0.0;
    double coverage_pct = 0.0;
    std::size_t n = 0;

    // Recomputes the aggregates from `rows`.
    void aggregate() {
        n = rows.size();
        if (n == 0) {
            matches_pct = mean_distance = coverage_pct = 0.0;
            return;
        }
        std::size_t exact = 0, covered = 0, dist = 0;
        for (const auto& r : rows) {
            exact += r.prediction == r.truth ? 1 : 0;
            covered += r.covered ? 1 : 0;
            dist += r.distance;
        }
        const double dn = static_cast<double>(n);
        matches_pct = 100.0 * static_cast<double>(exact) / dn;
        mean_distance = static_cast<double>(dist) / dn;
        coverage_pct = 100.0 * static_cast<double>(covered) / dn;
    }
};

inline EvalReport evaluate(std::span<const std::string> predictions, std::span<const std::string> truths) {
    if (predictions.size() != truths.size()) {
        throw ContractError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                            std::to_string(truths.size()) + " truths");
    }
    if (truths.empty()) throw ContractError("evaluate: nothing to evaluate");
    EvalReport r;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        r.rows.push_back({"", "", truths[i], predictions[i], edit_distance(predictions[i], truths[i]), false});
    }
    r.aggregate();
    return r;
}

// Also fills roots and the coverage flag from the examples.
inline EvalReport evaluate(std::span<const Example> examples, std::span<const std::string> predictions) {
    if (predictions.size() != examples.size()) {
        throw ContractError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                            std::to_string(examples.size()) + " examples");
    }
    if (examples.empty()) throw ContractError("evaluate: nothing to evaluate");
    EvalReport r;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        if (!e.target) throw ContractError("evaluate: example " + std::to_string(i) + " has no truth");
        r.rows.push_back({e.root1, e.root2, *e.target, predictions[i], edit_distance(predictions[i], *e.target),
                          is_covered(e.root1, e.root2, *e.target)});
    }
    r.aggregate();
    return r;
}

inline std::string report_tsv(const EvalReport& r) {
    std::ostringstream out;
    out << "root1\troot2\ttruth\tprediction\tdistance\tcovered\n";
    for (const auto& row : r.rows) {
        out << row.root1 << '\t' << row.root2 << '\t' << row.truth << '\t' << row.prediction << '\t'
            << row.distance << '\t' << (row.covered ? 1 : 0) << '\n';
    }
    return out.str();
}

inline std::string format_fixed(double v, int digits) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(digits);
    out << v;
    return out.str();
}

inline std::string report_summary(const EvalReport& r) {
    return "n=" + std::to_string(r.n) + " matches=" + format_fixed(r.matches_pct, 2) +
           "% distance=" + format_fixed(r.mean_distance, 4) + " coverage=" + format_fixed(r.coverage_pct, 2) + "%";
}

// ---------------------------------------------------------------------------
// Coverage

struct CoverageReport {
    std::size_t n = 0;
    std::size_t covered = 0;
    double coverage_pct = 0.0;
    std::vector<std::size_t> uncovered;
};

// Fraction of truths expressible as prefix(root1) + suffix(root2).
inline CoverageReport coverage_report(std::span<const Example> examples) {
    CoverageReport c;
    c.n = examples.size();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        if (!e.target) throw ContractError("coverage_report: example " + std::to_string(i) + " has no truth");
        if (is_covered(e.root1, e.root2, *e.target)) {
            ++c.covered;
        } else {
            c.uncovered.push_back(i);
        }
    }
    c.coverage_pct = c.n ? 100.0 * static_cast<double>(c.covered) / static_cast<double>(c.n) : 0.0;
    return c;
}

struct UncoveredAnalysis {
    std::size_t total = 0;
    std::vector<std::size_t> uncovered;
    // Reports restricted to the uncovered examples, one per system; empty
    // when every truth is covered.
    std::map<std::string, EvalReport> systems;

    bool empty() const { return uncovered.empty(); }
};

inline UncoveredAnalysis uncovered_analysis(std::span<const Example> examples,
                                            const std::map<std::string, std::vector<std::string>>& predictions) {
    UncoveredAnalysis a;
    a.total = examples.size();
    a.uncovered = coverage_report(examples).uncovered;
    if (a.uncovered.empty()) return a;
    const auto subset = select(examples, std::span<const std::size_t>(a.uncovered));
    for (const auto& [name, preds] : predictions) {
        if (preds.size() != examples.size()) {
            throw ContractError("uncovered_analysis: system '" + name + "' has " + std::to_string(preds.size()) +
                                " predictions for " + std::to_string(examples.size()) + " examples");
        }
        const auto sub = select(std::span<const std::string>(preds), std::span<const std::size_t>(a.uncovered));
        a.systems.emplace(name, evaluate(subset, sub));
    }
    return a;
}

// ---------------------------------------------------------------------------
// Paired bootstrap

struct BootstrapConfig {
    std::size_t resamples = 1000;       // M
    std::optional<std::size_t> subset;  // N; defaults to floor(n / 2)
    std::uint64_t seed = 1;
    double margin = 0.2;
};

struct BootstrapResult {
    std::size_t resamples = 0;
    std::size_t subset = 0;
    std::uint64_t seed = 0;
    // Fraction of subsets where A has strictly more exact matches than B.
    double p_better = 0.0;
    double margin = 0.0;
    // Fraction of subsets where Distance(B) - Distance(A) >= margin.
    double p_distance_margin = 0.0;
};

// Each resample draws N distinct indices; A and B are compared on the same
// indices.
inline BootstrapResult paired_bootstrap(std::span<const std::string> preds_a, std::span<const std::string> preds_b,
                                        std::span<const std::string> truths, const BootstrapConfig& cfg) {
    const std::size_t n = truths.size();
    if (preds_a.size() != n || preds_b.size() != n) {
        throw ContractError("paired_bootstrap: misaligned inputs (A=" + std::to_string(preds_a.size()) +
                            ", B=" + std::to_string(preds_b.size()) + ", truths=" + std::to_string(n) + ")");
    }
    const std::size_t subset = cfg.subset.value_or(n / 2);
    if (subset > n) {
        throw ContractError("paired_bootstrap: subset size " + std::to_string(subset) + " exceeds " +
                            std::to_string(n) + " examples");
    }
    if (subset == 0 || cfg.resamples == 0) throw ContractError("paired_bootstrap: M and N must be positive");

    std::vector<int> match_a(n), match_b(n);
    std::vector<double> dist_a(n), dist_b(n);
    for (std::size_t i = 0; i < n; ++i) {
        match_a[i] = preds_a[i] == truths[i];
        match_b[i] = preds_b[i] == truths[i];
        dist_a[i] = static_cast<double>(edit_distance(preds_a[i], truths[i]));
        dist_b[i] = static_cast<double>(edit_distance(preds_b[i], truths[i]));
    }

    Rng rng(cfg.seed);
    std::vector<std::size_t> idx(n);
    std::size_t wins = 0, margin_wins = 0;
    for (std::size_t m = 0; m < cfg.resamples; ++m) {
        std::iota(idx.begin(), idx.end(), 0);
        // Partial Fisher-Yates: the first `subset` slots are the sample.
        for (std::size_t k = 0; k < subset; ++k) {
            const std::size_t j = k + static_cast<std::size_t>(rng.below(n - k));
            std::swap(idx[k], idx[j]);
        }
        long ma = 0, mb = 0;
        double da = 0.0, db = 0.0;
        for (std::size_t k = 0; k < subset; ++k) {
            const std::size_t i = idx[k];
            ma += match_a[i];
            mb += match_b[i];
            da += dist_a[i];
            db += dist_b[i];
        }
        if (ma > mb) ++wins;
        const double gap = (db - da) / static_cast<double>(subset);
        if (gap >= cfg.margin - 1e-12) ++margin_wins;
    }
    BootstrapResult r;
    r.resamples = cfg.resamples;
    r.subset = subset;
    r.seed = cfg.seed;
    r.margin = cfg.margin;
    r.p_better = static_cast<double>(wins) / static_cast<double>(cfg.resamples);
    r.p_distance_margin = static_cast<double>(margin_wins) / static_cast<double>(cfg.resamples);
    return r;
}

}  // namespace portmanteau
