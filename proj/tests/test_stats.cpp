#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "semcon/stats.hpp"

using namespace semcon;

namespace {

// High-precision direct-formula oracle for Pearson, computed in long double.
long double oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    long double mx = 0.0L, my = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    long double sxy = 0.0L, sxx = 0.0L, syy = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// Independent average-rank assignment for the Spearman oracle.
std::vector<double> oracle_ranks(const std::vector<double>& v) {
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::size_t below = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (v[j] < v[i]) ++below;
            if (v[j] == v[i]) ++equal;
        }
        // positions below+1 .. below+equal share the average rank
        ranks[i] = below + (equal + 1) / 2.0;
    }
    return ranks;
}

}  // namespace

TEST_CASE("pearson: perfect linear, perfect inverse, and spec preconditions") {
    CHECK(pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_AS(pearson({1, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1}, {2}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({2, 2, 2}, {1, 2, 3}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1, 2, 3}, {5, 5, 5}), std::invalid_argument);
}

TEST_CASE("pearson equals the high-precision oracle on random fixtures") {
    std::mt19937_64 gen(2718);
    std::uniform_real_distribution<double> val(-5.0, 5.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(10), y(10);
        for (int i = 0; i < 10; ++i) {
            x[i] = val(gen);
            y[i] = val(gen);
        }
        double got = pearson(x, y);
        CHECK(std::abs(got - static_cast<double>(oracle_pearson(x, y))) < 1e-12);
        CHECK(got >= -1.0);
        CHECK(got <= 1.0);
    }
}

TEST_CASE("pearson is invariant under positive affine transforms and flips sign on negation") {
    std::vector<double> x = {0.1, 0.9, 0.4, 0.7, 0.2};
    std::vector<double> y = {1.0, 0.3, 0.8, 0.5, 0.6};
    double base = pearson(x, y);
    std::vector<double> ax(x.size()), nx(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        ax[i] = 3.5 * x[i] + 2.0;
        nx[i] = -x[i];
    }
    CHECK(std::abs(pearson(ax, y) - base) < 1e-9);
    CHECK(std::abs(pearson(nx, y) + base) < 1e-9);
}

TEST_CASE("spearman: monotone series, ties example, and self-correlation") {
    CHECK(spearman({1, 2, 3, 4}, {10, 100, 1000, 10000}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {8, 6, 4, 2}) == doctest::Approx(-1.0));
    // Ties spec example: ranks of y=[1,1,2,2] are [1.5,1.5,3.5,3.5];
    // pearson([1,2,3,4],[1.5,1.5,3.5,3.5]) = 2/sqrt(5) = 0.894427190999916
    CHECK(spearman({1, 2, 3, 4}, {1, 1, 2, 2}) ==
          doctest::Approx(0.894427190999916).epsilon(1e-12));
    std::vector<double> x = {0.3, 0.1, 0.9, 0.5};
    CHECK(spearman(x, x) == doctest::Approx(1.0));
}

TEST_CASE("spearman equals pearson over the oracle's average ranks") {
    std::mt19937_64 gen(1618);
    std::uniform_int_distribution<int> val(0, 4);  // small range forces ties
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(12), y(12);
        for (int i = 0; i < 12; ++i) {
            x[i] = val(gen);
            y[i] = val(gen);
        }
        std::vector<double> rx = oracle_ranks(x), ry = oracle_ranks(y);
        bool rx_const = std::all_of(rx.begin(), rx.end(), [&](double v) { return v == rx[0]; });
        bool ry_const = std::all_of(ry.begin(), ry.end(), [&](double v) { return v == ry[0]; });
        if (rx_const || ry_const) continue;  // undefined correlation; skip draw
        double got = spearman(x, y);
        double want = static_cast<double>(oracle_pearson(rx, ry));
        CHECK(std::abs(got - want) < 1e-12);
    }
}

TEST_CASE("fleiss kappa: perfect agreement across ≥2 categories is exactly 1") {
    AnnotationMatrix m;
    m.counts = {{3, 0}, {0, 3}, {3, 0}, {0, 3}};
    CHECK(fleiss_kappa(m) == 1.0);
}

TEST_CASE("fleiss kappa: chance-level constructed matrix gives exactly 0") {
    // r=2, two categories: P̄ == P̄ₑ by construction.
    AnnotationMatrix m;
    m.counts = {{2, 0}, {0, 2}, {1, 1}, {1, 1}};
    CHECK(fleiss_kappa(m) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fleiss kappa: undefined when all mass is in one category") {
    AnnotationMatrix m;
    m.counts = {{3, 0}, {3, 0}};
    CHECK_THROWS_AS(fleiss_kappa(m), std::invalid_argument);
}

TEST_CASE("fleiss kappa matrix validation") {
    AnnotationMatrix ragged;
    ragged.counts = {{1, 2}, {1, 2, 0}};
    CHECK_THROWS_AS(ragged.validate(), std::invalid_argument);
    AnnotationMatrix uneven;
    uneven.counts = {{2, 1}, {1, 1}};
    CHECK_THROWS_AS(uneven.validate(), std::invalid_argument);
    AnnotationMatrix negative;
    negative.counts = {{3, -1}, {1, 1}};
    CHECK_THROWS_AS(negative.validate(), std::invalid_argument);
    AnnotationMatrix single_rater;
    single_rater.counts = {{1, 0}, {0, 1}};
    CHECK_THROWS_AS(single_rater.validate(), std::invalid_argument);
    AnnotationMatrix good;
    good.counts = {{2, 1}, {0, 3}};
    CHECK(good.validate() == 3);
}

TEST_CASE("fleiss kappa equals the direct-formula oracle on random matrices") {
    std::mt19937_64 gen(4242);
    std::uniform_int_distribution<int> cats(2, 4);
    for (int trial = 0; trial < 100; ++trial) {
        int k = cats(gen);
        int r = 3;
        int items = 5;
        AnnotationMatrix m;
        for (int i = 0; i < items; ++i) {
            std::vector<int> row(k, 0);
            std::uniform_int_distribution<int> cat(0, k - 1);
            for (int a = 0; a < r; ++a) ++row[cat(gen)];
            m.counts.push_back(std::move(row));
        }
        // direct-formula oracle in long double
        long double p_bar = 0.0L;
        std::vector<long double> pj(k, 0.0L);
        for (const auto& row : m.counts) {
            long double sum_sq = 0.0L;
            for (int j = 0; j < k; ++j) {
                sum_sq += static_cast<long double>(row[j]) * row[j];
                pj[j] += row[j];
            }
            p_bar += (sum_sq - r) / (static_cast<long double>(r) * (r - 1));
        }
        p_bar /= items;
        long double pe = 0.0L;
        for (int j = 0; j < k; ++j) {
            long double p = pj[j] / (static_cast<long double>(items) * r);
            pe += p * p;
        }
        if (pe >= 1.0L) {
            CHECK_THROWS_AS(fleiss_kappa(m), std::invalid_argument);
            continue;
        }
        long double want = (p_bar - pe) / (1.0L - pe);
        CHECK(std::abs(fleiss_kappa(m) - static_cast<double>(want)) < 1e-12);
    }
}
