#include "semcon/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace semcon {

int AnnotationMatrix::validate() const {
    if (counts.empty()) throw std::invalid_argument("annotation matrix has no items");
    const std::size_t cats = counts.front().size();
    if (cats == 0) throw std::invalid_argument("annotation matrix has no categories");
    long long r = -1;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i].size() != cats)
            throw std::invalid_argument("annotation matrix row " + std::to_string(i) +
                                        " has inconsistent width");
        long long row_sum = 0;
        for (int v : counts[i]) {
            if (v < 0)
                throw std::invalid_argument("annotation matrix row " + std::to_string(i) +
                                            " has a negative count");
            row_sum += v;
        }
        if (r == -1) r = row_sum;
        if (row_sum != r)
            throw std::invalid_argument("annotation matrix rows must share one annotator count (row " +
                                        std::to_string(i) + " sums to " + std::to_string(row_sum) +
                                        ", expected " + std::to_string(r) + ")");
    }
    if (r < 2) throw std::invalid_argument("fleiss kappa needs at least 2 annotators");
    return static_cast<int>(r);
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("pearson: series lengths differ (" + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()) + ")");
    const std::size_t n = x.size();
    if (n < 2) throw std::invalid_argument("pearson: need at least 2 points");
    for (double v : x)
        if (!std::isfinite(v)) throw std::invalid_argument("pearson: non-finite value in x");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("pearson: non-finite value in y");

    double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: correlation undefined for a constant series");
    double r = sxy / (std::sqrt(sxx) * std::sqrt(syy));
    return std::clamp(r, -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        // Positions i..j (0-based) share the mean of 1-based ranks i+1..j+1.
        double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("spearman: series lengths differ (" +
                                    std::to_string(x.size()) + " vs " + std::to_string(y.size()) +
                                    ")");
    if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 points");
    return pearson(average_ranks(x), average_ranks(y));
}

double fleiss_kappa(const AnnotationMatrix& m) {
    const long long r = m.validate();
    const std::size_t items = m.items();
    const std::size_t cats = m.categories();

    double p_bar = 0.0;
    std::vector<long long> column_totals(cats, 0);
    for (const auto& row : m.counts) {
        long long sq = 0;
        for (std::size_t j = 0; j < cats; ++j) {
            sq += static_cast<long long>(row[j]) * row[j];
            column_totals[j] += row[j];
        }
        p_bar += static_cast<double>(sq - r) / static_cast<double>(r * (r - 1));
    }
    p_bar /= static_cast<double>(items);

    double pe = 0.0;
    const double mass = static_cast<double>(items) * static_cast<double>(r);
    for (long long t : column_totals) {
        double pj = static_cast<double>(t) / mass;
        pe += pj * pj;
    }
    if (pe >= 1.0)
        throw std::invalid_argument(
            "fleiss kappa undefined: all annotation mass in one category (expected agreement 1)");
    return (p_bar - pe) / (1.0 - pe);
}

}  // namespace semcon
