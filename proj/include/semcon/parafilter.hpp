#pragma once

#include <string>
#include <vector>

#include "semcon/embedder.hpp"
#include "semcon/records.hpp"

namespace semcon {

struct ParaScoreParams {
    double omega = 0.05;  // weight of the lexical-divergence bonus
    double tau = 0.35;    // divergence saturation point
};

struct FilterParams {
    double threshold = 0.8;  // acceptance is strict: score > threshold
    ParaScoreParams score;
};

// Levenshtein distance over case-folded word tokens, normalized by the longer
// token count. 0 for identical token sequences (including two empty texts).
double normalized_edit_distance(const std::string& a, const std::string& b);

// Reference-free quality score: (cos+1)/2 + ω·min(nED, τ)/τ. Rewards meaning
// preservation and, up to a cap, surface divergence. Range [0, 1+ω];
// parascore(x, x) is exactly 1.
double parascore(const std::string& source, const std::string& candidate, Embedder& embedder,
                 const ParaScoreParams& params = {});

// Scores every candidate against its source question and sets
// parascore/accepted in place (ordering preserved). accepted ⇔ score strictly
// above the threshold; a candidate whose text exactly matches an earlier
// accepted one is rejected regardless of score; empty candidates score 0.
std::vector<ParaphraseRecord> filter_paraphrases(std::vector<ParaphraseRecord> candidates,
                                                 const QuestionRecord& source, Embedder& embedder,
                                                 const FilterParams& params = {});

}  // namespace semcon
