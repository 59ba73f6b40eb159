#pragma once

#include <string>
#include <vector>

#include "semcon/embedder.hpp"

namespace semcon {

// Sentence BLEU over case-folded tokens (edge punctuation stripped), modified
// n-gram precisions up to order min(4, candidate length) so bleu(x,x) = 1
// even for short texts. Zero precisions are replaced by ε = 1e-9; brevity
// penalty exp(1 − r/c) applies when the candidate is shorter than the
// reference. Empty candidate scores 0.
double bleu(const std::string& candidate, const std::string& reference);

// ROUGE-L F1: P = LCS/|candidate|, R = LCS/|reference|, F = 2PR/(P+R)
// (0 when P + R = 0). Same tokenization as bleu.
double rouge_l(const std::string& candidate, const std::string& reference);

enum class PairMetric { Bleu, RougeL };

// Mean of metric(tᵢ, tⱼ) over all ordered pairs i ≠ j; symmetrizes the
// asymmetric sentence metrics into one consistency value per question.
double pairwise_consistency(const std::vector<std::string>& texts, PairMetric metric);

// Mean over unordered pairs of (cos+1)/2 — the sentence-cosine stand-in for
// token-level BERTScore.
double cosine_consistency(const std::vector<EmbeddingVector>& embeddings);
double cosine_consistency(const std::vector<std::vector<double>>& vectors);

}  // namespace semcon
