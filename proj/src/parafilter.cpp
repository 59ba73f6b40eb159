#include "semcon/parafilter.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "semcon/text.hpp"

namespace semcon {

namespace {

std::size_t levenshtein(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace

double normalized_edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::string> ta = word_tokens(a);
    std::vector<std::string> tb = word_tokens(b);
    std::size_t longest = std::max(ta.size(), tb.size());
    if (longest == 0) return 0.0;
    return static_cast<double>(levenshtein(ta, tb)) / static_cast<double>(longest);
}

double parascore(const std::string& source, const std::string& candidate, Embedder& embedder,
                 const ParaScoreParams& params) {
    if (trim(source).empty() || trim(candidate).empty())
        throw std::invalid_argument("parascore requires non-empty texts");
    if (params.tau <= 0.0) throw std::invalid_argument("tau must be positive");
    std::vector<EmbeddingVector> vecs = embedder.embed_batch({source, candidate});
    double sim = (cosine_similarity(vecs[0], vecs[1]) + 1.0) / 2.0;
    double ned = normalized_edit_distance(source, candidate);
    return sim + params.omega * (std::min(ned, params.tau) / params.tau);
}

std::vector<ParaphraseRecord> filter_paraphrases(std::vector<ParaphraseRecord> candidates,
                                                 const QuestionRecord& source, Embedder& embedder,
                                                 const FilterParams& params) {
    for (const ParaphraseRecord& c : candidates)
        if (c.question_id != source.id)
            throw std::invalid_argument("candidate \"" + c.id + "\" belongs to question \"" +
                                        c.question_id + "\", not \"" + source.id + "\"");

    std::set<std::string> accepted_texts;
    for (ParaphraseRecord& c : candidates) {
        if (trim(c.text).empty()) {
            c.parascore = 0.0;
            c.accepted = false;
            continue;
        }
        c.parascore = parascore(source.text, c.text, embedder, params.score);
        bool duplicate = accepted_texts.count(c.text) > 0;
        c.accepted = !duplicate && c.parascore > params.threshold;
        if (c.accepted) accepted_texts.insert(c.text);
    }
    return candidates;
}

}  // namespace semcon
