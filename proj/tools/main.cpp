// semcon — command-line front end for the semantic-consistency toolkit.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 runtime or stage
// failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "semcon/baselines.hpp"
#include "semcon/embedder.hpp"
#include "semcon/genclient.hpp"
#include "semcon/parafilter.hpp"
#include "semcon/pipeline.hpp"
#include "semcon/records.hpp"
#include "semcon/report.hpp"
#include "semcon/semgraph.hpp"
#include "semcon/stats.hpp"
#include "semcon/text.hpp"

namespace {

using namespace semcon;
using json = nlohmann::json;

struct GlobalOpts {
    std::string config_path;
    std::string cache_dir = "cache";
    bool mock = false;
    std::string mock_fixture;
};

std::shared_ptr<FsCache> open_cache(const GlobalOpts& g) {
    return std::make_shared<FsCache>(g.cache_dir);
}

struct BackendOpts {
    std::string base_url;
    std::string model;
    std::string api_key_env = "SEMCON_API_KEY";
    double temperature = 0.0;
    int max_tokens = 512;
    int parallelism = 4;
    std::string template_path;
};

void add_backend_opts(CLI::App* cmd, BackendOpts& b, double default_temperature) {
    b.temperature = default_temperature;
    cmd->add_option("--backend-url", b.base_url, "Chat-completions base URL");
    cmd->add_option("--model", b.model, "Model id sent to the backend");
    cmd->add_option("--api-key-env", b.api_key_env,
                    "Environment variable holding the bearer token");
    cmd->add_option("--temperature", b.temperature, "Sampling temperature")
        ->capture_default_str();
    cmd->add_option("--max-tokens", b.max_tokens, "Completion token cap")->capture_default_str();
    cmd->add_option("--parallelism", b.parallelism, "Concurrent requests")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--template", b.template_path, "Prompt template path (sectioned format)");
}

GenerationBackendConfig backend_config(const BackendOpts& b, const GlobalOpts& g,
                                       const char* what) {
    GenerationBackendConfig c;
    c.base_url = b.base_url;
    c.model_id = b.model;
    c.api_key_env = b.api_key_env;
    c.temperature = b.temperature;
    c.max_tokens = b.max_tokens;
    if (g.mock) {
        if (c.model_id.empty()) c.model_id = "mock-model";
    } else if (c.base_url.empty() || c.model_id.empty()) {
        throw std::invalid_argument(std::string(what) +
                                    " needs --backend-url and --model (or pass --mock)");
    }
    return c;
}

std::shared_ptr<ChatBackend> make_chat_backend(const GlobalOpts& g,
                                               const GenerationBackendConfig& cfg) {
    if (g.mock) {
        if (!g.mock_fixture.empty()) return std::make_shared<MockChatBackend>(g.mock_fixture);
        return std::make_shared<MockChatBackend>();
    }
    return std::make_shared<HttpChatBackend>(cfg);
}

struct EmbedOpts {
    std::string base_url;
    std::string model;
    std::string api_key_env = "SEMCON_API_KEY";
    std::size_t dim = 64;
};

void add_embed_opts(CLI::App* cmd, EmbedOpts& e, const char* url_flag, const char* model_flag) {
    cmd->add_option(url_flag, e.base_url, "Embeddings base URL");
    cmd->add_option(model_flag, e.model, "Embedding model id");
    cmd->add_option("--api-key-env", e.api_key_env,
                    "Environment variable holding the bearer token");
    cmd->add_option("--dim", e.dim, "Vector dimension of the built-in test embedder")
        ->capture_default_str();
}

std::unique_ptr<Embedder> make_embedder(const GlobalOpts& g, const EmbedOpts& e,
                                        const char* what) {
    std::shared_ptr<EmbeddingBackend> backend;
    if (g.mock || (e.base_url.empty() && e.model.empty())) {
        backend = std::make_shared<TestEmbeddingBackend>(e.dim);
    } else if (e.base_url.empty() || e.model.empty()) {
        throw std::invalid_argument(std::string(what) +
                                    " needs both an embeddings URL and model (or pass --mock "
                                    "for the built-in test embedder)");
    } else {
        HttpEmbedderConfig cfg;
        cfg.base_url = e.base_url;
        cfg.model = e.model;
        if (const char* key = std::getenv(e.api_key_env.c_str())) cfg.api_key = key;
        backend = std::make_shared<HttpEmbeddingBackend>(cfg);
    }
    return std::make_unique<Embedder>(backend, open_cache(g));
}

PromptTemplate resolve_template(const std::string& path, const std::string& fallback,
                                const std::string& name) {
    if (!path.empty()) return PromptTemplate::load(path);
    return PromptTemplate::parse(fallback, name);
}

enum class RecordKind { Question, Paraphrase, Response, Rot };

RecordKind detect_record_kind(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ": first record is not JSON: " + e.what());
        }
        if (j.contains("question_id")) return RecordKind::Paraphrase;
        if (j.contains("paraphrase_id")) return RecordKind::Response;
        if (j.contains("response_id")) return RecordKind::Rot;
        return RecordKind::Question;
    }
    throw std::runtime_error(path.string() + " has no records");
}

std::vector<std::string> record_texts(const std::filesystem::path& path, RecordKind kind) {
    std::vector<std::string> texts;
    switch (kind) {
        case RecordKind::Question:
            for (const auto& r : load_records<QuestionRecord>(path)) texts.push_back(r.text);
            break;
        case RecordKind::Paraphrase:
            for (const auto& r : load_records<ParaphraseRecord>(path)) texts.push_back(r.text);
            break;
        case RecordKind::Response:
            for (const auto& r : load_records<ResponseRecord>(path)) texts.push_back(r.text);
            break;
        case RecordKind::Rot:
            for (const auto& r : load_records<RotRecord>(path)) texts.push_back(r.text);
            break;
    }
    return texts;
}

void print_batch_failures(const std::vector<BatchFailure>& failures,
                          const std::vector<std::string>& names) {
    for (const BatchFailure& f : failures)
        std::cerr << "warning: " << names[f.index] << ": " << f.error << "\n";
}

int cmd_run(const GlobalOpts& g, const std::string& corpus_override,
            const std::string& out_dir_override, double sample_fraction_override,
            std::uint64_t seed_override, bool seed_given, bool fraction_given) {
    if (g.config_path.empty())
        throw std::invalid_argument("run needs --config pointing at a run configuration");
    RunConfig cfg = RunConfig::load(g.config_path);
    if (!corpus_override.empty()) cfg.corpus = corpus_override;
    if (!out_dir_override.empty()) cfg.out_dir = out_dir_override;
    if (fraction_given) cfg.sample_fraction = sample_fraction_override;
    if (seed_given) cfg.seed = seed_override;
    if (g.mock) cfg.mock = true;
    if (!g.mock_fixture.empty()) cfg.mock_fixture = g.mock_fixture;
    if (g.cache_dir != "cache") cfg.cache_dir = g.cache_dir;

    RunManifest manifest = run_pipeline(std::move(cfg));
    for (const StageStatus& s : manifest.stages) {
        std::cout << s.name << ": " << s.status;
        if (s.status == "completed")
            std::cout << " (backend_requests=" << s.backend_requests
                      << ", cache_hits=" << s.cache_hits << ")";
        if (!s.detail.empty()) std::cout << " — " << s.detail;
        std::cout << "\n";
    }
    std::cout << "total backend requests: " << manifest.total_backend_requests() << "\n";
    if (manifest.status != "completed") {
        std::cerr << "error: stage \"" << manifest.failed_stage << "\" failed; see manifest\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semcon — semantic-consistency scoring for language-model answers"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "Run configuration document (JSON)");
    app.add_option("--cache-dir", g.cache_dir, "Backend response cache directory")
        ->capture_default_str();
    app.add_flag("--mock", g.mock, "Use the mock generation backend and test embedder");
    app.add_option("--mock-fixture", g.mock_fixture,
                   "Canned completions JSONL for the mock backend");

    int exit_code = 0;

    // ---- ingest ----
    auto* ingest = app.add_subcommand("ingest", "Sample and normalize a question corpus");
    struct {
        std::string corpus, out;
        double fraction = 1.0;
        std::uint64_t seed = 42;
    } ing;
    ingest->add_option("--corpus", ing.corpus, "Question corpus JSONL")->required();
    ingest->add_option("--out", ing.out, "Output questions JSONL")->required();
    ingest->add_option("--sample-fraction", ing.fraction, "Keep ceil(fraction·n) questions")
        ->capture_default_str();
    ingest->add_option("--seed", ing.seed, "Sampling seed")->capture_default_str();
    ingest->callback([&] {
        auto questions = load_records<QuestionRecord>(ing.corpus);
        questions = sample_questions(std::move(questions), ing.fraction, ing.seed);
        save_records(questions, ing.out);
        std::cout << "wrote " << questions.size() << " question(s) to " << ing.out << "\n";
    });

    // ---- paraphrase ----
    auto* para = app.add_subcommand("paraphrase", "Generate k paraphrase candidates per question");
    struct {
        std::string questions, out;
        int k = 10;
        BackendOpts backend;
    } pa;
    para->add_option("--questions", pa.questions, "Questions JSONL")->required();
    para->add_option("--out", pa.out, "Output paraphrase candidates JSONL")->required();
    para->add_option("--k", pa.k, "Candidates per question")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    add_backend_opts(para, pa.backend, 0.7);
    para->callback([&] {
        auto questions = load_records<QuestionRecord>(pa.questions);
        GenerationBackendConfig cfg = backend_config(pa.backend, g, "paraphrase");
        GenClient client(make_chat_backend(g, cfg), cfg, open_cache(g));
        PromptTemplate tpl =
            resolve_template(pa.backend.template_path, default_paraphrase_template(), "paraphrase");
        auto outcome = run_batch(
            questions,
            [&](const QuestionRecord& q) { return client.generate_paraphrases(q, pa.k, tpl); },
            pa.backend.parallelism);
        std::vector<std::string> names;
        for (const auto& q : questions) names.push_back(q.id);
        print_batch_failures(outcome.failures, names);
        std::vector<ParaphraseRecord> all;
        for (auto& r : outcome.results)
            if (r)
                for (auto& p : *r) all.push_back(std::move(p));
        save_records(all, pa.out);
        std::cout << "wrote " << all.size() << " candidate(s) to " << pa.out
                  << " (backend_requests=" << client.backend_requests()
                  << ", cache_hits=" << client.cache_hits() << ")\n";
    });

    // ---- filter ----
    auto* filter = app.add_subcommand("filter", "Score candidates and gate them on ParaScore");
    struct {
        std::string questions, candidates, out;
        FilterParams params;
        EmbedOpts embed;
    } fi;
    filter->add_option("--questions", fi.questions, "Questions JSONL")->required();
    filter->add_option("--candidates", fi.candidates, "Paraphrase candidates JSONL")->required();
    filter->add_option("--out", fi.out, "Output filtered paraphrases JSONL")->required();
    filter->add_option("--threshold", fi.params.threshold, "Acceptance threshold (strict >)")
        ->capture_default_str();
    filter->add_option("--omega", fi.params.score.omega, "Diversity weight ω")
        ->capture_default_str();
    filter->add_option("--tau", fi.params.score.tau, "Edit-distance cap τ")->capture_default_str();
    add_embed_opts(filter, fi.embed, "--embedding-url", "--embedding-model");
    filter->callback([&] {
        auto questions = load_records<QuestionRecord>(fi.questions);
        auto candidates = load_records<ParaphraseRecord>(fi.candidates);
        validate_lineage(candidates, questions);
        auto embedder = make_embedder(g, fi.embed, "filter");
        std::map<std::string, std::vector<ParaphraseRecord>> by_question;
        for (auto& c : candidates) by_question[c.question_id].push_back(std::move(c));
        std::vector<ParaphraseRecord> out;
        std::size_t accepted = 0;
        for (const auto& q : questions) {
            auto it = by_question.find(q.id);
            if (it == by_question.end()) continue;
            for (auto& r : filter_paraphrases(std::move(it->second), q, *embedder, fi.params)) {
                if (r.accepted) ++accepted;
                out.push_back(std::move(r));
            }
        }
        save_records(out, fi.out);
        std::cout << "accepted " << accepted << " of " << out.size() << " candidate(s); wrote "
                  << fi.out << "\n";
    });

    // ---- respond ----
    auto* respond = app.add_subcommand("respond", "Answer accepted paraphrases with one model");
    struct {
        std::string paraphrases, out;
        BackendOpts backend;
    } re;
    respond->add_option("--paraphrases", re.paraphrases, "Filtered paraphrases JSONL")->required();
    respond->add_option("--out", re.out, "Output responses JSONL")->required();
    add_backend_opts(respond, re.backend, 0.0);
    respond->callback([&] {
        auto paraphrases = load_records<ParaphraseRecord>(re.paraphrases);
        std::vector<ParaphraseRecord> accepted;
        for (auto& p : paraphrases)
            if (p.accepted) accepted.push_back(std::move(p));
        GenerationBackendConfig cfg = backend_config(re.backend, g, "respond");
        GenClient client(make_chat_backend(g, cfg), cfg, open_cache(g));
        PromptTemplate tpl =
            resolve_template(re.backend.template_path, default_response_template(), "response");
        auto outcome = run_batch(
            accepted, [&](const ParaphraseRecord& p) { return client.generate_response(p, tpl); },
            re.backend.parallelism);
        std::vector<std::string> names;
        for (const auto& p : accepted) names.push_back(p.id);
        print_batch_failures(outcome.failures, names);
        std::vector<ResponseRecord> out;
        for (auto& r : outcome.results)
            if (r) out.push_back(std::move(*r));
        save_records(out, re.out);
        std::cout << "wrote " << out.size() << " response(s) to " << re.out
                  << " (backend_requests=" << client.backend_requests()
                  << ", cache_hits=" << client.cache_hits() << ")\n";
    });

    // ---- rot ----
    auto* rot = app.add_subcommand("rot", "Distill each response into a rule of thumb");
    struct {
        std::string responses, paraphrases, questions, out;
        BackendOpts backend;
    } ro;
    rot->add_option("--responses", ro.responses, "Responses JSONL")->required();
    rot->add_option("--paraphrases", ro.paraphrases, "Paraphrases JSONL (lineage join)")
        ->required();
    rot->add_option("--questions", ro.questions, "Questions JSONL (lineage join)")->required();
    rot->add_option("--out", ro.out, "Output rules-of-thumb JSONL")->required();
    add_backend_opts(rot, ro.backend, 0.0);
    rot->callback([&] {
        auto responses = load_records<ResponseRecord>(ro.responses);
        auto paraphrases = load_records<ParaphraseRecord>(ro.paraphrases);
        auto questions = load_records<QuestionRecord>(ro.questions);
        validate_lineage(paraphrases, questions);
        validate_lineage(responses, paraphrases);
        std::map<std::string, std::string> question_text;
        for (const auto& q : questions) question_text[q.id] = q.text;
        std::map<std::string, std::string> paraphrase_question;
        for (const auto& p : paraphrases) paraphrase_question[p.id] = p.question_id;
        GenerationBackendConfig cfg = backend_config(ro.backend, g, "rot");
        GenClient client(make_chat_backend(g, cfg), cfg, open_cache(g));
        PromptTemplate tpl = resolve_template(ro.backend.template_path, default_rot_template(),
                                              "rot");
        auto outcome = run_batch(
            responses,
            [&](const ResponseRecord& r) {
                const std::string& qid = paraphrase_question.at(r.paraphrase_id);
                return client.generate_rot(r, question_text.at(qid), tpl);
            },
            ro.backend.parallelism);
        std::vector<std::string> names;
        for (const auto& r : responses) names.push_back(r.id);
        print_batch_failures(outcome.failures, names);
        std::vector<RotRecord> out;
        for (auto& r : outcome.results)
            if (r) out.push_back(std::move(*r));
        save_records(out, ro.out);
        std::cout << "wrote " << out.size() << " rule(s) of thumb to " << ro.out
                  << " (backend_requests=" << client.backend_requests()
                  << ", cache_hits=" << client.cache_hits() << ")\n";
    });

    // ---- embed ----
    auto* embed = app.add_subcommand("embed", "Embed every record of a JSONL file");
    struct {
        std::string input, out;
        EmbedOpts opts;
    } em;
    embed->add_option("--input", em.input, "Records JSONL (kind auto-detected)")->required();
    embed->add_option("--out", em.out, "Output embeddings binary")->required();
    add_embed_opts(embed, em.opts, "--backend-url", "--model");
    embed->callback([&] {
        RecordKind kind = detect_record_kind(em.input);
        std::vector<std::string> texts = record_texts(em.input, kind);
        auto embedder = make_embedder(g, em.opts, "embed");
        EmbeddingMatrix m;
        m.backend_id = embedder->backend_id();
        m.model_id = embedder->model_id();
        constexpr std::size_t kChunk = 64;
        for (std::size_t start = 0; start < texts.size(); start += kChunk) {
            std::size_t end = std::min(texts.size(), start + kChunk);
            std::vector<std::string> chunk(texts.begin() + start, texts.begin() + end);
            for (auto& v : embedder->embed_batch(chunk)) m.rows.push_back(std::move(v.values));
        }
        m.dim = static_cast<std::uint32_t>(embedder->dim() ? embedder->dim() : 1);
        save_embeddings(m, em.out);
        std::cout << "embedded " << m.rows.size() << " record(s) at dim " << m.dim << " into "
                  << em.out << " (backend_requests=" << embedder->backend_requests()
                  << ", cache_hits=" << embedder->cache_hits() << ")\n";
    });

    // ---- score ----
    auto* score = app.add_subcommand("score", "Per-question consistency scores for one metric");
    struct {
        std::string metric, variant = "ans";
        std::string input, embeddings, out;
        std::string paraphrases, response_index, model;
    } sc;
    score->add_option("--metric", sc.metric, "sge | bleu | rouge_l | cosine")->required();
    score->add_option("--variant", sc.variant, "qp | ans | rot")->capture_default_str();
    score->add_option("--responses", sc.input,
                      "Records to score (paraphrases for qp, responses for ans, RoTs for rot)")
        ->required();
    score->add_option("--embeddings", sc.embeddings,
                      "Embeddings binary row-aligned with --responses (sge/cosine)");
    score->add_option("--out", sc.out, "Output scores JSONL")->required();
    score->add_option("--paraphrases", sc.paraphrases,
                      "Paraphrases JSONL for question joins (ans/rot)");
    score->add_option("--response-index", sc.response_index,
                      "Responses JSONL for RoT lineage joins (rot)");
    score->add_option("--model", sc.model,
                      "Restrict to one model id (required when the input mixes models)");
    score->callback([&] {
        Variant variant = variant_from_string(sc.variant);
        if (sc.metric != "sge" && sc.metric != "bleu" && sc.metric != "rouge_l" &&
            sc.metric != "cosine")
            throw std::invalid_argument("unknown metric \"" + sc.metric + "\"");
        const bool needs_vectors = sc.metric == "sge" || sc.metric == "cosine";
        if (needs_vectors && sc.embeddings.empty())
            throw std::invalid_argument("metric \"" + sc.metric + "\" needs --embeddings");

        // Group texts (and aligned embedding rows) per question id.
        struct Group {
            std::vector<std::string> texts;
            std::vector<std::vector<double>> vectors;
        };
        std::map<std::string, Group> groups;
        std::vector<std::string> question_order;
        EmbeddingMatrix matrix;
        std::size_t record_count = 0;
        auto add = [&](const std::string& qid, const std::string& text, std::size_t row) {
            auto [it, inserted] = groups.try_emplace(qid);
            if (inserted) question_order.push_back(qid);
            it->second.texts.push_back(text);
            if (needs_vectors) it->second.vectors.push_back(matrix.rows.at(row));
        };

        if (variant == Variant::QP) {
            auto records = load_records<ParaphraseRecord>(sc.input);
            record_count = records.size();
            if (needs_vectors) matrix = load_embeddings(sc.embeddings);
            if (needs_vectors && matrix.rows.size() != records.size())
                throw std::runtime_error("embeddings rows != record count");
            for (std::size_t i = 0; i < records.size(); ++i)
                if (records[i].accepted) add(records[i].question_id, records[i].text, i);
        } else if (variant == Variant::Ans) {
            if (sc.paraphrases.empty())
                throw std::invalid_argument("variant ans needs --paraphrases for question joins");
            auto records = load_records<ResponseRecord>(sc.input);
            record_count = records.size();
            auto paraphrases = load_records<ParaphraseRecord>(sc.paraphrases);
            validate_lineage(records, paraphrases);
            std::map<std::string, std::string> to_question;
            for (const auto& p : paraphrases) to_question[p.id] = p.question_id;
            std::set<std::string> models;
            for (const auto& r : records) models.insert(r.model_id);
            if (sc.model.empty() && models.size() > 1)
                throw std::invalid_argument(
                    "input mixes " + std::to_string(models.size()) +
                    " models; pass --model to pick one");
            if (needs_vectors) matrix = load_embeddings(sc.embeddings);
            if (needs_vectors && matrix.rows.size() != records.size())
                throw std::runtime_error("embeddings rows != record count");
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (!sc.model.empty() && records[i].model_id != sc.model) continue;
                add(to_question.at(records[i].paraphrase_id), records[i].text, i);
            }
        } else {
            if (sc.paraphrases.empty() || sc.response_index.empty())
                throw std::invalid_argument(
                    "variant rot needs --paraphrases and --response-index for lineage joins");
            auto records = load_records<RotRecord>(sc.input);
            record_count = records.size();
            auto responses = load_records<ResponseRecord>(sc.response_index);
            auto paraphrases = load_records<ParaphraseRecord>(sc.paraphrases);
            validate_lineage(responses, paraphrases);
            validate_lineage(records, responses);
            std::map<std::string, std::string> to_question;
            for (const auto& p : paraphrases) to_question[p.id] = p.question_id;
            std::map<std::string, const ResponseRecord*> by_id;
            for (const auto& r : responses) by_id[r.id] = &r;
            std::set<std::string> models;
            for (const auto& t : records) models.insert(by_id.at(t.response_id)->model_id);
            if (sc.model.empty() && models.size() > 1)
                throw std::invalid_argument(
                    "input mixes " + std::to_string(models.size()) +
                    " models; pass --model to pick one");
            if (needs_vectors) matrix = load_embeddings(sc.embeddings);
            if (needs_vectors && matrix.rows.size() != records.size())
                throw std::runtime_error("embeddings rows != record count");
            for (std::size_t i = 0; i < records.size(); ++i) {
                const ResponseRecord* resp = by_id.at(records[i].response_id);
                if (!sc.model.empty() && resp->model_id != sc.model) continue;
                add(to_question.at(resp->paraphrase_id), records[i].text, i);
            }
        }

        std::vector<ScoreRecord> out;
        std::size_t skipped = 0;
        for (const std::string& qid : question_order) {
            const Group& grp = groups.at(qid);
            if (grp.texts.size() < 2) {
                ++skipped;
                continue;
            }
            out.push_back(score_texts(qid, sc.metric, variant_label(variant), grp.texts,
                                      grp.vectors));
        }
        save_scores(out, sc.out);
        std::cout << "scored " << out.size() << " question(s) from " << record_count
                  << " record(s); wrote " << sc.out << "\n";
        if (skipped > 0)
            std::cerr << "warning: skipped " << skipped
                      << " question(s) with fewer than 2 texts\n";
    });

    // ---- report ----
    auto* report = app.add_subcommand("report", "Aggregate score files into the summary table");
    struct {
        std::string scores_dir, out_text, out_tsv, human;
        std::vector<std::string> footnotes;
    } rp;
    report->add_option("--scores", rp.scores_dir, "Scores directory holding index.json")
        ->required();
    report->add_option("--out-text", rp.out_text, "Aligned-text report path")->required();
    report->add_option("--out-tsv", rp.out_tsv, "Tab-separated report path")->required();
    report->add_option("--human", rp.human, "Human scores JSONL (adds HC columns)");
    report->add_option("--footnote", rp.footnotes, "Extra footnote line (repeatable)");
    report->callback([&] {
        std::filesystem::path dir = rp.scores_dir;
        std::ifstream in(dir / "index.json");
        if (!in) throw std::runtime_error("cannot open " + (dir / "index.json").string());
        json index = json::parse(in);
        std::vector<ScoreSeries> series;
        for (const auto& f : index.at("files")) {
            ScoreSeries s;
            s.metric = f.at("metric").get<std::string>();
            s.variant = f.at("variant").get<std::string>();
            s.model = f.at("model").get<std::string>();
            s.records = load_scores(dir / f.at("path").get<std::string>());
            series.push_back(std::move(s));
        }
        std::vector<ScoreRecord> human;
        if (!rp.human.empty()) human = load_scores(rp.human);
        std::vector<std::string> footnotes = {
            "SGE entropy is normalized by log n; raw natural-log entropy is kept in each "
            "score's breakdown.",
            "ROUGE variant: ROUGE-L (LCS F1).",
            "Per-question consistency aggregates response pairs: BLEU/ROUGE-L average all "
            "ordered pairs, cosine averages unordered pairs of (cos+1)/2."};
        footnotes.insert(footnotes.end(), rp.footnotes.begin(), rp.footnotes.end());
        ReportTable table = make_report(series, human, footnotes);
        std::ofstream text_out(rp.out_text, std::ios::binary | std::ios::trunc);
        text_out << render_text(table);
        std::ofstream tsv_out(rp.out_tsv, std::ios::binary | std::ios::trunc);
        tsv_out << render_tsv(table);
        if (!text_out.flush() || !tsv_out.flush())
            throw std::runtime_error("failed writing report files");
        std::cout << "wrote " << rp.out_text << " and " << rp.out_tsv << "\n";
    });

    // ---- stats ----
    auto* stats = app.add_subcommand("stats", "Correlation and agreement statistics");
    stats->require_subcommand(1);
    auto* correlate = stats->add_subcommand("correlate", "Pearson/Spearman between score files");
    struct {
        std::string a, b;
    } co;
    correlate->add_option("--a", co.a, "First scores JSONL")->required();
    correlate->add_option("--b", co.b, "Second scores JSONL")->required();
    correlate->callback([&] {
        auto series_a = load_scores(co.a);
        auto series_b = load_scores(co.b);
        std::map<std::string, double> ma, mb;
        for (const auto& r : series_a)
            if (!ma.emplace(r.question_id, r.value).second)
                throw std::runtime_error(co.a + ": duplicate question_id " + r.question_id);
        for (const auto& r : series_b)
            if (!mb.emplace(r.question_id, r.value).second)
                throw std::runtime_error(co.b + ": duplicate question_id " + r.question_id);
        std::vector<double> xs, ys;
        for (const auto& [qid, va] : ma) {
            auto it = mb.find(qid);
            if (it == mb.end()) continue;
            xs.push_back(va);
            ys.push_back(it->second);
        }
        std::cout << "n\t" << xs.size() << "\n";
        std::cout << "pearson\t" << pearson(xs, ys) << "\n";
        std::cout << "spearman\t" << spearman(xs, ys) << "\n";
    });
    auto* kappa = stats->add_subcommand("kappa", "Fleiss' kappa over an annotation matrix");
    struct {
        std::string annotations;
    } ka;
    kappa->add_option("--annotations", ka.annotations,
                      "JSONL, each line {\"item_id\",\"counts\":[...]}")
        ->required();
    kappa->callback([&] {
        std::ifstream in(ka.annotations, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + ka.annotations);
        AnnotationMatrix m;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            try {
                json j = json::parse(line);
                std::vector<int> row;
                for (const auto& c : j.at("counts")) row.push_back(c.get<int>());
                (void)j.at("item_id").get<std::string>();
                m.counts.push_back(std::move(row));
            } catch (const std::exception& e) {
                throw std::runtime_error(ka.annotations + ": line " + std::to_string(line_no) +
                                         ": " + e.what());
            }
        }
        int raters = m.validate();
        std::cout << "items\t" << m.items() << "\n";
        std::cout << "categories\t" << m.categories() << "\n";
        std::cout << "raters\t" << raters << "\n";
        std::cout << "kappa\t" << fleiss_kappa(m) << "\n";
    });

    // ---- run ----
    auto* run = app.add_subcommand("run", "Execute the full pipeline from a config document");
    struct {
        std::string corpus, out_dir;
        double sample_fraction = 1.0;
        std::uint64_t seed = 0;
    } ru;
    run->add_option("--corpus", ru.corpus, "Override the config's corpus path");
    run->add_option("--out-dir", ru.out_dir, "Override the config's output directory");
    auto* frac_opt =
        run->add_option("--sample-fraction", ru.sample_fraction, "Override the sample fraction");
    auto* seed_opt = run->add_option("--seed", ru.seed, "Override the run seed");
    run->callback([&] {
        exit_code = cmd_run(g, ru.corpus, ru.out_dir, ru.sample_fraction, ru.seed,
                            seed_opt->count() > 0, frac_opt->count() > 0);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}
