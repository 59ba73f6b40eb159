#pragma once

#include <vector>

namespace semcon {

// Items × categories count matrix; each row sums to the same annotator count.
struct AnnotationMatrix {
    std::vector<std::vector<int>> counts;

    std::size_t items() const { return counts.size(); }
    std::size_t categories() const { return counts.empty() ? 0 : counts.front().size(); }
    // Throws unless rectangular with non-negative entries and a constant row
    // sum r ≥ 2; returns r.
    int validate() const;
};

// Sample Pearson correlation. Both series must have equal length ≥ 2 and be
// non-constant (a constant series has undefined correlation — error, not 0).
double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Pearson over average ranks (ties share the mean of their rank positions).
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// κ = (P̄ − P̄ₑ)/(1 − P̄ₑ); throws when P̄ₑ == 1 (all annotation mass in a
// single category leaves κ undefined).
double fleiss_kappa(const AnnotationMatrix& m);

}  // namespace semcon
