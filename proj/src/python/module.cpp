// Python bindings for the semcon core: metric primitives, filtering, stats,
// and the full pipeline runner.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <unistd.h>

#include <filesystem>

#include "semcon/baselines.hpp"
#include "semcon/embedder.hpp"
#include "semcon/parafilter.hpp"
#include "semcon/pipeline.hpp"
#include "semcon/semgraph.hpp"
#include "semcon/stats.hpp"
#include "semcon/text.hpp"

namespace py = pybind11;
using namespace semcon;

namespace {

py::dict breakdown_to_dict(const SgeBreakdown& b) {
    py::dict d;
    d["n"] = b.n;
    d["f"] = b.f;
    d["p"] = b.p;
    d["entropy"] = b.entropy;
    d["raw_entropy"] = b.raw_entropy;
    d["mean_distance"] = b.mean_distance;
    d["sge"] = b.sge;
    d["degenerate"] = b.degenerate;
    d["clamped"] = b.clamped;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Semantic-consistency scoring core (SGE, baselines, stats, pipeline)";

    // --- semantic graph entropy ---
    m.def(
        "sge",
        [](const std::vector<std::vector<double>>& vectors) {
            return breakdown_to_dict(sge_from_vectors(vectors));
        },
        py::arg("vectors"),
        "Full SGE breakdown for one group of embedding vectors (one per text).");
    m.def(
        "sge_from_distances",
        [](std::vector<std::vector<double>> dist) {
            return breakdown_to_dict(sge(graph_from_distances(std::move(dist))));
        },
        py::arg("distances"),
        "Full SGE breakdown from a symmetric zero-diagonal distance matrix.");
    m.def("entropy", &entropy, py::arg("p"),
          "Normalized Shannon entropy of a distribution (log-n base).");
    m.def("raw_entropy", &raw_entropy, py::arg("p"),
          "Natural-log Shannon entropy of a distribution.");
    m.def(
        "mean_distance",
        [](std::vector<std::vector<double>> dist) {
            return mean_distance(graph_from_distances(std::move(dist)));
        },
        py::arg("distances"), "Mean pairwise distance D(G) of a distance matrix.");
    m.def(
        "cosine_similarity",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return cosine_similarity(a, b);
        },
        py::arg("a"), py::arg("b"));

    // --- baselines ---
    m.def("bleu", &bleu, py::arg("candidate"), py::arg("reference"),
          "Sentence BLEU with brevity penalty (max order adapts to short texts).");
    m.def("rouge_l", &rouge_l, py::arg("candidate"), py::arg("reference"),
          "ROUGE-L F1 over case-folded tokens.");
    m.def(
        "pairwise_consistency",
        [](const std::vector<std::string>& texts, const std::string& metric) {
            if (metric == "bleu") return pairwise_consistency(texts, PairMetric::Bleu);
            if (metric == "rouge_l") return pairwise_consistency(texts, PairMetric::RougeL);
            throw std::invalid_argument("metric must be 'bleu' or 'rouge_l'");
        },
        py::arg("texts"), py::arg("metric"),
        "Mean metric over all ordered pairs of distinct texts.");
    m.def(
        "cosine_consistency",
        [](const std::vector<std::vector<double>>& vectors) {
            return cosine_consistency(vectors);
        },
        py::arg("vectors"),
        "Mean (cos+1)/2 over unordered pairs of embedding vectors.");

    // --- paraphrase quality ---
    m.def("normalized_edit_distance", &normalized_edit_distance, py::arg("a"), py::arg("b"),
          "Word-token Levenshtein distance normalized by the longer length.");
    m.def(
        "parascore",
        [](const std::string& source, const std::string& candidate, std::size_t dim, double omega,
           double tau) {
            // Per-process scratch cache so the real cached-Embedder code path
            // runs; keys include the backend id, so dims never collide.
            static const std::filesystem::path cache_dir =
                std::filesystem::temp_directory_path() /
                ("semcon-py-cache-" + std::to_string(static_cast<unsigned long>(getpid())));
            auto backend = std::make_shared<TestEmbeddingBackend>(dim);
            Embedder embedder(backend, std::make_shared<FsCache>(cache_dir));
            ParaScoreParams params;
            params.omega = omega;
            params.tau = tau;
            return parascore(source, candidate, embedder, params);
        },
        py::arg("source"), py::arg("candidate"), py::arg("dim") = 64, py::arg("omega") = 0.05,
        py::arg("tau") = 0.35,
        "Reference-free ParaScore under the built-in deterministic test embedder.");

    // --- statistics ---
    m.def("pearson", &pearson, py::arg("x"), py::arg("y"));
    m.def("spearman", &spearman, py::arg("x"), py::arg("y"));
    m.def(
        "fleiss_kappa",
        [](const std::vector<std::vector<int>>& counts) {
            AnnotationMatrix m_;
            m_.counts = counts;
            return fleiss_kappa(m_);
        },
        py::arg("counts"), "Fleiss' kappa over an items x categories count matrix.");

    // --- text utilities ---
    m.def("word_tokens", &word_tokens, py::arg("text"));
    m.def("metric_tokens", &metric_tokens, py::arg("text"));

    // --- test embedder (deterministic, offline) ---
    m.def(
        "test_embed",
        [](const std::vector<std::string>& texts, std::size_t dim) {
            TestEmbeddingBackend backend(dim);
            return backend.embed_batch(texts);
        },
        py::arg("texts"), py::arg("dim") = 64,
        "Deterministic token-hash embeddings (the built-in test backend).");

    // --- pipeline ---
    m.def(
        "run_pipeline",
        [](const std::filesystem::path& config_path, bool mock) {
            RunConfig cfg = RunConfig::load(config_path);
            if (mock) cfg.mock = true;
            RunManifest manifest = run_pipeline(std::move(cfg));
            py::dict d;
            d["status"] = manifest.status;
            d["failed_stage"] = manifest.failed_stage;
            py::list stages;
            for (const StageStatus& s : manifest.stages) {
                py::dict sd;
                sd["name"] = s.name;
                sd["status"] = s.status;
                sd["backend_requests"] = s.backend_requests;
                sd["cache_hits"] = s.cache_hits;
                sd["detail"] = s.detail;
                stages.append(sd);
            }
            d["stages"] = stages;
            d["total_backend_requests"] = manifest.total_backend_requests();
            return d;
        },
        py::arg("config_path"), py::arg("mock") = false,
        "Run the full pipeline from a JSON config; returns the manifest as a dict.");
}
