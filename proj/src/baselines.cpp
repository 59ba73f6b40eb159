#include "semcon/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "semcon/text.hpp"

namespace semcon {

namespace {

constexpr double kBleuEps = 1e-9;

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& tokens,
                                                     std::size_t n) {
    std::map<std::vector<std::string>, int> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
    return counts;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

double bleu(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> cand = metric_tokens(candidate);
    std::vector<std::string> ref = metric_tokens(reference);
    if (cand.empty()) return 0.0;

    // Capping the order at the candidate length keeps short identical texts
    // at exactly 1 instead of averaging in undefined higher-order precisions.
    std::size_t max_order = std::min<std::size_t>(4, cand.size());
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= max_order; ++n) {
        auto cand_counts = ngram_counts(cand, n);
        auto ref_counts = ngram_counts(ref, n);
        std::size_t total = 0, matched = 0;
        for (const auto& [gram, count] : cand_counts) {
            total += static_cast<std::size_t>(count);
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end())
                matched += static_cast<std::size_t>(std::min(count, it->second));
        }
        double precision =
            total == 0 ? 0.0 : static_cast<double>(matched) / static_cast<double>(total);
        if (precision == 0.0) precision = kBleuEps;
        log_sum += std::log(precision);
    }
    double geo_mean = std::exp(log_sum / static_cast<double>(max_order));

    double bp = 1.0;
    if (cand.size() < ref.size())
        bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size()));
    double score = bp * geo_mean;
    return std::clamp(score, 0.0, 1.0);
}

double rouge_l(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> cand = metric_tokens(candidate);
    std::vector<std::string> ref = metric_tokens(reference);
    if (cand.empty() || ref.empty()) return 0.0;
    double lcs = static_cast<double>(lcs_length(cand, ref));
    double precision = lcs / static_cast<double>(cand.size());
    double recall = lcs / static_cast<double>(ref.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double pairwise_consistency(const std::vector<std::string>& texts, PairMetric metric) {
    if (texts.size() < 2)
        throw std::invalid_argument("pairwise consistency needs at least 2 texts");
    double (*fn)(const std::string&, const std::string&) =
        metric == PairMetric::Bleu ? bleu : rouge_l;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        for (std::size_t j = 0; j < texts.size(); ++j) {
            if (i == j) continue;
            total += fn(texts[i], texts[j]);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

double cosine_consistency(const std::vector<std::vector<double>>& vectors) {
    if (vectors.size() < 2)
        throw std::invalid_argument("cosine consistency needs at least 2 embeddings");
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        for (std::size_t j = i + 1; j < vectors.size(); ++j) {
            total += (cosine_similarity(vectors[i], vectors[j]) + 1.0) / 2.0;
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

double cosine_consistency(const std::vector<EmbeddingVector>& embeddings) {
    std::vector<std::vector<double>> vectors;
    vectors.reserve(embeddings.size());
    for (const EmbeddingVector& e : embeddings) vectors.push_back(e.values);
    return cosine_consistency(vectors);
}

}  // namespace semcon
