#include "semcon/semgraph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace semcon {

SemanticGraph build_graph(const std::vector<EmbeddingVector>& embeddings) {
    if (embeddings.empty()) throw std::invalid_argument("cannot build graph from zero embeddings");
    const std::size_t n = embeddings.size();
    SemanticGraph g;
    g.n = n;
    g.dist.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d = 1.0 - cosine_similarity(embeddings[i], embeddings[j]);
            d = std::clamp(d, 0.0, 2.0);
            g.dist[i][j] = d;
            g.dist[j][i] = d;
        }
    }
    return g;
}

SemanticGraph graph_from_distances(std::vector<std::vector<double>> dist) {
    const std::size_t n = dist.size();
    if (n == 0) throw std::invalid_argument("empty distance matrix");
    for (std::size_t i = 0; i < n; ++i) {
        if (dist[i].size() != n) throw std::invalid_argument("distance matrix is not square");
        if (dist[i][i] != 0.0) throw std::invalid_argument("distance matrix diagonal must be zero");
        for (std::size_t j = 0; j < n; ++j) {
            double d = dist[i][j];
            if (!std::isfinite(d) || d < 0.0 || d > 2.0)
                throw std::invalid_argument("distance entries must lie in [0,2]");
            if (d != dist[j][i]) throw std::invalid_argument("distance matrix must be symmetric");
        }
    }
    SemanticGraph g;
    g.n = n;
    g.dist = std::move(dist);
    return g;
}

std::vector<double> information_functional(const SemanticGraph& g) {
    std::vector<double> f(g.n, 0.0);
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) f[i] += g.dist[i][j];
    return f;
}

std::pair<std::vector<double>, bool> node_distribution(const SemanticGraph& g, double eps_total) {
    std::vector<double> f = information_functional(g);
    double total = 0.0;
    for (double v : f) total += v;
    if (total <= eps_total) {
        std::vector<double> uniform(g.n, 1.0 / static_cast<double>(g.n));
        return {uniform, true};
    }
    std::vector<double> p(g.n);
    for (std::size_t i = 0; i < g.n; ++i) p[i] = f[i] / total;
    return {p, false};
}

namespace {

void check_distribution(const std::vector<double>& p) {
    if (p.empty()) throw std::invalid_argument("entropy of empty distribution");
    double total = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw std::invalid_argument("probabilities must be non-negative");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw std::invalid_argument("probabilities must sum to 1 (got " + std::to_string(total) +
                                    ")");
}

bool all_equal(const std::vector<double>& p) {
    for (double v : p)
        if (v != p.front()) return false;
    return true;
}

}  // namespace

double raw_entropy(const std::vector<double>& p) {
    check_distribution(p);
    if (p.size() == 1) return 0.0;
    if (all_equal(p)) return std::log(static_cast<double>(p.size()));
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double entropy(const std::vector<double>& p) {
    check_distribution(p);
    const std::size_t n = p.size();
    if (n == 1) return 0.0;
    // Uniform short-circuit: the maximum-entropy case must normalize to
    // exactly 1.0, not 1 ± rounding, so downstream identities (equilateral
    // law) hold without slack.
    if (all_equal(p)) return 1.0;
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    double norm = h / std::log(static_cast<double>(n));
    return std::clamp(norm, 0.0, 1.0);
}

double mean_distance(const SemanticGraph& g) {
    if (g.n < 2) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j = 0; j < g.n; ++j) total += g.dist[i][j];
    return total / (static_cast<double>(g.n) * static_cast<double>(g.n - 1));
}

SgeBreakdown sge(const SemanticGraph& g, double eps_total) {
    SgeBreakdown b;
    b.n = g.n;
    b.f = information_functional(g);
    auto [p, degenerate] = node_distribution(g, eps_total);
    b.p = std::move(p);
    b.degenerate = degenerate;
    b.mean_distance = mean_distance(g);

    if (g.n == 1 || degenerate) {
        b.entropy = (g.n == 1) ? 0.0 : 1.0;  // entropy of the reporting distribution
        b.raw_entropy = (g.n == 1) ? 0.0 : std::log(static_cast<double>(g.n));
        b.sge = 1.0;
        return b;
    }

    b.entropy = entropy(b.p);
    b.raw_entropy = raw_entropy(b.p);
    double raw_sge = 1.0 - b.mean_distance * b.entropy;
    b.sge = std::clamp(raw_sge, 0.0, 1.0);
    b.clamped = (raw_sge != b.sge);
    return b;
}

SgeBreakdown sge_from_vectors(const std::vector<std::vector<double>>& vectors, double eps_total) {
    if (vectors.empty()) throw std::invalid_argument("cannot score zero vectors");
    std::vector<EmbeddingVector> embs;
    embs.reserve(vectors.size());
    for (const auto& v : vectors) embs.push_back(make_embedding(v, "raw", "raw", ""));
    return sge(build_graph(embs), eps_total);
}

std::string variant_label(Variant v) {
    switch (v) {
        case Variant::Ans: return "Ans";
        case Variant::RoT: return "RoT";
        case Variant::QP: return "QP";
    }
    throw std::logic_error("unknown variant");
}

Variant variant_from_string(const std::string& s) {
    std::string lower;
    lower.reserve(s.size());
    for (char c : s) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "ans" || lower == "answer" || lower == "answers") return Variant::Ans;
    if (lower == "rot" || lower == "rots") return Variant::RoT;
    if (lower == "qp" || lower == "paraphrase" || lower == "paraphrases") return Variant::QP;
    throw std::invalid_argument("unknown variant \"" + s + "\" (expected ans, rot, or qp)");
}

ConsistencyScore score_question(const std::vector<std::string>& texts, Embedder& embedder,
                                Variant variant) {
    if (texts.empty()) throw std::invalid_argument("cannot score a question with zero texts");
    std::vector<EmbeddingVector> embs = embedder.embed_batch(texts);
    ConsistencyScore score;
    score.variant = variant;
    score.breakdown = sge(build_graph(embs));
    score.value = score.breakdown.sge;
    return score;
}

}  // namespace semcon
