#pragma once

#include <string>
#include <vector>

#include "semcon/embedder.hpp"

namespace semcon {

// Complete graph over one question's responses; edges carry cosine distance.
struct SemanticGraph {
    std::size_t n = 0;
    std::vector<std::vector<double>> dist;  // n×n, symmetric, zero diagonal, entries in [0,2]
};

struct SgeBreakdown {
    std::size_t n = 0;
    std::vector<double> f;   // information functional per node (row sums of dist)
    std::vector<double> p;   // node distribution f/Σf (uniform when degenerate)
    double entropy = 0.0;    // −Σ p log p normalized by log n, in [0,1]
    double raw_entropy = 0.0;  // natural-log entropy before normalization
    double mean_distance = 0.0;  // D(G): mean over ordered pairs i≠j
    double sge = 1.0;        // clamp(1 − D·H, 0, 1); 1 exactly when degenerate or n=1
    bool degenerate = false;  // Σf ≤ eps_total (all nodes semantically identical)
    bool clamped = false;     // 1 − D·H fell outside [0,1]
};

inline constexpr double kSgeEpsTotal = 1e-9;

SemanticGraph build_graph(const std::vector<EmbeddingVector>& embeddings);
SemanticGraph graph_from_distances(std::vector<std::vector<double>> dist);

std::vector<double> information_functional(const SemanticGraph& g);

// Returns (p, degenerate). Degenerate graphs get the uniform distribution,
// used for reporting only — sge() short-circuits before p matters.
std::pair<std::vector<double>, bool> node_distribution(const SemanticGraph& g,
                                                       double eps_total = kSgeEpsTotal);

// Normalized entropy: −Σ p log p / log n for n ≥ 2 (0·log 0 := 0), 0 for
// n = 1. A distribution with all masses equal returns exactly 1.0.
double entropy(const std::vector<double>& p);
double raw_entropy(const std::vector<double>& p);  // natural log, unnormalized

double mean_distance(const SemanticGraph& g);

SgeBreakdown sge(const SemanticGraph& g, double eps_total = kSgeEpsTotal);

// Convenience for scoring straight from raw vectors (e.g. rows of an
// embedding file).
SgeBreakdown sge_from_vectors(const std::vector<std::vector<double>>& vectors,
                              double eps_total = kSgeEpsTotal);

enum class Variant { Ans, RoT, QP };

std::string variant_label(Variant v);            // "Ans" | "RoT" | "QP"
Variant variant_from_string(const std::string&);  // accepts ans/rot/qp, any case

struct ConsistencyScore {
    Variant variant = Variant::Ans;
    double value = 1.0;
    SgeBreakdown breakdown;
};

ConsistencyScore score_question(const std::vector<std::string>& texts, Embedder& embedder,
                                Variant variant);

}  // namespace semcon
