#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "semcon/embedder.hpp"
#include "semcon/genclient.hpp"
#include "semcon/parafilter.hpp"
#include "semcon/semgraph.hpp"

namespace semcon {

struct EmbeddingConfig {
    std::string kind = "http";  // "http" | "test"
    HttpEmbedderConfig http;
    std::size_t test_dim = 64;
};

struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path out_dir;
    std::filesystem::path cache_dir;  // defaults to <out_dir>/cache when empty

    std::uint64_t seed = 42;
    double sample_fraction = 1.0;
    int k_paraphrases = 10;
    int parallelism = 4;
    FilterParams filter;

    std::vector<std::string> metrics = {"sge", "bleu", "rouge_l", "cosine"};
    std::vector<Variant> variants = {Variant::QP, Variant::Ans, Variant::RoT};

    GenerationBackendConfig paraphrase_backend;
    std::vector<GenerationBackendConfig> response_models;
    EmbeddingConfig embedding;

    // Empty paths fall back to the built-in templates.
    std::filesystem::path paraphrase_template;
    std::filesystem::path response_template;
    std::filesystem::path rot_template;

    std::filesystem::path human_scores;  // optional scores JSONL, metric "human"

    bool mock = false;
    std::filesystem::path mock_fixture;  // optional canned completions for the mock

    // Parses the config document; relative paths resolve against base_dir.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);

    // Fills mock defaults (backends, models) and validates; called by
    // run_pipeline, exposed for the CLI's standalone commands.
    void finalize();

    nlohmann::json to_json() const;  // resolved echo, embedded in the manifest
};

struct StageStatus {
    std::string name;
    std::string status;  // "completed" | "skipped" | "failed"
    std::size_t backend_requests = 0;
    std::size_t cache_hits = 0;
    std::string detail;
};

struct RunManifest {
    std::string status = "completed";  // "completed" | "failed"
    std::string failed_stage;
    std::vector<StageStatus> stages;
    nlohmann::json config_echo;

    std::size_t total_backend_requests() const;
    const StageStatus* stage(const std::string& name) const;
    nlohmann::json to_json() const;
};

// Executes ingest → paraphrase → filter → respond → rot → embed → score →
// report. A stage whose artifacts already exist is skipped unless an upstream
// stage executed in this run. Stage failures stop the pipeline and are
// recorded rather than thrown; the manifest is always written to
// <out_dir>/manifest.json.
RunManifest run_pipeline(RunConfig config);

// Deterministic sub-sample: seeded shuffle, keep ceil(fraction·n) (at least
// one), restore corpus order.
std::vector<QuestionRecord> sample_questions(std::vector<QuestionRecord> questions,
                                             double fraction, std::uint64_t seed);

// Built-in prompt templates (compiled in from templates/).
const std::string& default_paraphrase_template();
const std::string& default_response_template();
const std::string& default_rot_template();

}  // namespace semcon
