#include "semcon/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "default_templates.hpp"

#include "semcon/baselines.hpp"
#include "semcon/report.hpp"
#include "semcon/text.hpp"

namespace semcon {

using json = nlohmann::json;

const std::string& default_paraphrase_template() {
    static const std::string t = default_templates::kParaphrase;
    return t;
}
const std::string& default_response_template() {
    static const std::string t = default_templates::kResponse;
    return t;
}
const std::string& default_rot_template() {
    static const std::string t = default_templates::kRot;
    return t;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

GenerationBackendConfig backend_from_json(const json& j, double default_temperature) {
    GenerationBackendConfig c;
    c.temperature = default_temperature;
    if (j.contains("base_url")) c.base_url = j["base_url"].get<std::string>();
    if (j.contains("model_id")) c.model_id = j["model_id"].get<std::string>();
    if (j.contains("api_key_env")) c.api_key_env = j["api_key_env"].get<std::string>();
    if (j.contains("temperature")) c.temperature = j["temperature"].get<double>();
    if (j.contains("max_tokens")) c.max_tokens = j["max_tokens"].get<int>();
    if (j.contains("timeout_seconds")) c.timeout_seconds = j["timeout_seconds"].get<int>();
    if (j.contains("max_retries")) c.max_retries = j["max_retries"].get<int>();
    return c;
}

json backend_to_json(const GenerationBackendConfig& c) {
    return {{"api_key_env", c.api_key_env}, {"base_url", c.base_url},
            {"max_retries", c.max_retries}, {"max_tokens", c.max_tokens},
            {"model_id", c.model_id},       {"temperature", c.temperature},
            {"timeout_seconds", c.timeout_seconds}};
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    if (j.contains("corpus")) c.corpus = resolve(base_dir, j["corpus"].get<std::string>());
    if (j.contains("out_dir")) c.out_dir = resolve(base_dir, j["out_dir"].get<std::string>());
    if (j.contains("cache_dir")) c.cache_dir = resolve(base_dir, j["cache_dir"].get<std::string>());
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("sample_fraction")) c.sample_fraction = j["sample_fraction"].get<double>();
    if (j.contains("k_paraphrases")) c.k_paraphrases = j["k_paraphrases"].get<int>();
    if (j.contains("parallelism")) c.parallelism = j["parallelism"].get<int>();
    if (j.contains("filter")) {
        const json& f = j["filter"];
        if (f.contains("threshold")) c.filter.threshold = f["threshold"].get<double>();
        if (f.contains("omega")) c.filter.score.omega = f["omega"].get<double>();
        if (f.contains("tau")) c.filter.score.tau = f["tau"].get<double>();
    }
    if (j.contains("metrics")) c.metrics = j["metrics"].get<std::vector<std::string>>();
    if (j.contains("variants")) {
        c.variants.clear();
        for (const auto& v : j["variants"]) c.variants.push_back(variant_from_string(v));
    }
    if (j.contains("paraphrase_backend"))
        c.paraphrase_backend = backend_from_json(j["paraphrase_backend"], 0.7);
    else
        c.paraphrase_backend.temperature = 0.7;
    if (j.contains("response_models"))
        for (const auto& m : j["response_models"])
            c.response_models.push_back(backend_from_json(m, 0.0));
    if (j.contains("embedding")) {
        const json& e = j["embedding"];
        if (e.contains("kind")) c.embedding.kind = e["kind"].get<std::string>();
        if (e.contains("base_url")) c.embedding.http.base_url = e["base_url"].get<std::string>();
        if (e.contains("model")) c.embedding.http.model = e["model"].get<std::string>();
        if (e.contains("api_key")) c.embedding.http.api_key = e["api_key"].get<std::string>();
        if (e.contains("timeout_seconds"))
            c.embedding.http.timeout_seconds = e["timeout_seconds"].get<int>();
        if (e.contains("max_retries")) c.embedding.http.max_retries = e["max_retries"].get<int>();
        if (e.contains("dim")) c.embedding.test_dim = e["dim"].get<std::size_t>();
    }
    if (j.contains("templates")) {
        const json& t = j["templates"];
        if (t.contains("paraphrase"))
            c.paraphrase_template = resolve(base_dir, t["paraphrase"].get<std::string>());
        if (t.contains("response"))
            c.response_template = resolve(base_dir, t["response"].get<std::string>());
        if (t.contains("rot")) c.rot_template = resolve(base_dir, t["rot"].get<std::string>());
    }
    if (j.contains("human_scores"))
        c.human_scores = resolve(base_dir, j["human_scores"].get<std::string>());
    if (j.contains("mock")) c.mock = j["mock"].get<bool>();
    if (j.contains("mock_fixture"))
        c.mock_fixture = resolve(base_dir, j["mock_fixture"].get<std::string>());
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const std::exception& e) {
        throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j, std::filesystem::absolute(path).parent_path());
}

void RunConfig::finalize() {
    if (corpus.empty()) throw std::invalid_argument("config: \"corpus\" is required");
    if (out_dir.empty()) throw std::invalid_argument("config: \"out_dir\" is required");
    if (cache_dir.empty()) cache_dir = out_dir / "cache";
    if (k_paraphrases < 1) throw std::invalid_argument("config: k_paraphrases must be ≥ 1");
    if (parallelism < 1) throw std::invalid_argument("config: parallelism must be ≥ 1");
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
        throw std::invalid_argument("config: sample_fraction must be in (0, 1]");
    if (metrics.empty()) throw std::invalid_argument("config: metrics must not be empty");
    for (const std::string& m : metrics)
        if (m != "sge" && m != "bleu" && m != "rouge_l" && m != "cosine")
            throw std::invalid_argument("config: unknown metric \"" + m + "\"");
    if (variants.empty()) throw std::invalid_argument("config: variants must not be empty");

    if (mock) {
        if (paraphrase_backend.model_id.empty()) paraphrase_backend.model_id = "mock-paraphraser";
        if (response_models.empty()) {
            GenerationBackendConfig a;
            a.model_id = "model-a";
            GenerationBackendConfig b;
            b.model_id = "model-b";
            response_models = {a, b};
        }
        embedding.kind = "test";
    } else {
        if (paraphrase_backend.base_url.empty() || paraphrase_backend.model_id.empty())
            throw std::invalid_argument(
                "config: paraphrase_backend needs base_url and model_id (or pass --mock)");
        if (response_models.empty())
            throw std::invalid_argument("config: response_models must not be empty");
        for (const auto& m : response_models)
            if (m.base_url.empty() || m.model_id.empty())
                throw std::invalid_argument(
                    "config: every response model needs base_url and model_id");
        if (embedding.kind == "http") {
            if (embedding.http.base_url.empty() || embedding.http.model.empty())
                throw std::invalid_argument(
                    "config: embedding needs base_url and model (or kind \"test\")");
        } else if (embedding.kind != "test") {
            throw std::invalid_argument("config: embedding.kind must be \"http\" or \"test\"");
        }
    }
    if (embedding.kind == "test" && embedding.test_dim == 0)
        throw std::invalid_argument("config: embedding dim must be positive");

    std::set<std::string> model_ids;
    for (const auto& m : response_models)
        if (!model_ids.insert(m.model_id).second)
            throw std::invalid_argument("config: duplicate response model_id \"" + m.model_id +
                                        "\"");
}

json RunConfig::to_json() const {
    json j;
    j["corpus"] = corpus.string();
    j["out_dir"] = out_dir.string();
    j["cache_dir"] = cache_dir.string();
    j["seed"] = seed;
    j["sample_fraction"] = sample_fraction;
    j["k_paraphrases"] = k_paraphrases;
    j["parallelism"] = parallelism;
    j["filter"] = {{"omega", filter.score.omega},
                   {"tau", filter.score.tau},
                   {"threshold", filter.threshold}};
    j["metrics"] = metrics;
    json vs = json::array();
    for (Variant v : variants) vs.push_back(variant_label(v));
    j["variants"] = vs;
    j["paraphrase_backend"] = backend_to_json(paraphrase_backend);
    json models = json::array();
    for (const auto& m : response_models) models.push_back(backend_to_json(m));
    j["response_models"] = models;
    j["embedding"] = {{"base_url", embedding.http.base_url},
                      {"dim", embedding.test_dim},
                      {"kind", embedding.kind},
                      {"model", embedding.http.model}};
    j["templates"] = {{"paraphrase", paraphrase_template.string()},
                      {"response", response_template.string()},
                      {"rot", rot_template.string()}};
    j["human_scores"] = human_scores.string();
    j["mock"] = mock;
    j["mock_fixture"] = mock_fixture.string();
    return j;
}

std::size_t RunManifest::total_backend_requests() const {
    std::size_t total = 0;
    for (const StageStatus& s : stages) total += s.backend_requests;
    return total;
}

const StageStatus* RunManifest::stage(const std::string& name) const {
    for (const StageStatus& s : stages)
        if (s.name == name) return &s;
    return nullptr;
}

json RunManifest::to_json() const {
    json j;
    j["status"] = status;
    j["failed_stage"] = failed_stage;
    json st = json::array();
    for (const StageStatus& s : stages)
        st.push_back({{"backend_requests", s.backend_requests},
                      {"cache_hits", s.cache_hits},
                      {"detail", s.detail},
                      {"name", s.name},
                      {"status", s.status}});
    j["stages"] = st;
    j["config"] = config_echo;
    return j;
}

std::vector<QuestionRecord> sample_questions(std::vector<QuestionRecord> questions,
                                             double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("sample fraction must be in (0, 1]");
    if (fraction >= 1.0 || questions.empty()) return questions;

    std::size_t n = questions.size();
    std::size_t keep = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n)));
    keep = std::max<std::size_t>(1, std::min(keep, n));

    // Hand-rolled Fisher–Yates: std::shuffle's draw sequence is
    // implementation-defined, and sampling must be reproducible across
    // standard libraries.
    std::vector<std::size_t> index(n);
    for (std::size_t i = 0; i < n; ++i) index[i] = i;
    std::mt19937_64 gen(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(gen() % (i + 1));
        std::swap(index[i], index[j]);
    }
    index.resize(keep);
    std::sort(index.begin(), index.end());

    std::vector<QuestionRecord> out;
    out.reserve(keep);
    for (std::size_t i : index) out.push_back(std::move(questions[i]));
    return out;
}

namespace {

std::string sanitize_for_filename(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
            out += c;
        else
            out += '-';
    }
    return out;
}

std::string lower(const std::string& s) {
    std::string out;
    for (char c : s) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string failures_summary(const std::vector<BatchFailure>& failures,
                             const std::function<std::string(std::size_t)>& item_name) {
    if (failures.empty()) return "";
    std::ostringstream out;
    out << failures.size() << " item(s) failed:";
    std::size_t shown = std::min<std::size_t>(failures.size(), 5);
    for (std::size_t i = 0; i < shown; ++i)
        out << " [" << item_name(failures[i].index) << ": " << failures[i].error << "]";
    if (failures.size() > shown) out << " …";
    return out.str();
}

struct StageCounters {
    std::size_t backend_requests = 0;
    std::size_t cache_hits = 0;
    std::string detail;
};

// All artifact paths of one run directory.
struct RunPaths {
    std::filesystem::path questions;
    std::filesystem::path paraphrases_raw;
    std::filesystem::path paraphrases;
    std::filesystem::path responses;
    std::filesystem::path rots;
    std::filesystem::path emb_dir;
    std::filesystem::path emb_paraphrases;
    std::filesystem::path emb_responses;
    std::filesystem::path emb_rots;
    std::filesystem::path scores_dir;
    std::filesystem::path scores_index;
    std::filesystem::path report_text;
    std::filesystem::path report_tsv;
    std::filesystem::path manifest;

    explicit RunPaths(const std::filesystem::path& out) {
        questions = out / "questions.jsonl";
        paraphrases_raw = out / "paraphrases_raw.jsonl";
        paraphrases = out / "paraphrases.jsonl";
        responses = out / "responses.jsonl";
        rots = out / "rots.jsonl";
        emb_dir = out / "embeddings";
        emb_paraphrases = emb_dir / "paraphrases.bin";
        emb_responses = emb_dir / "responses.bin";
        emb_rots = emb_dir / "rots.bin";
        scores_dir = out / "scores";
        scores_index = scores_dir / "index.json";
        report_text = out / "report.txt";
        report_tsv = out / "report.tsv";
        manifest = out / "manifest.json";
    }
};

class PipelineRun {
  public:
    PipelineRun(RunConfig config)
        : cfg_(std::move(config)), paths_(cfg_.out_dir),
          cache_(std::make_shared<FsCache>(cfg_.cache_dir)) {}

    RunManifest execute();

  private:
    bool has_variant(Variant v) const {
        return std::find(cfg_.variants.begin(), cfg_.variants.end(), v) != cfg_.variants.end();
    }

    std::shared_ptr<ChatBackend> chat_backend(const GenerationBackendConfig& backend) const {
        if (cfg_.mock) {
            if (!cfg_.mock_fixture.empty())
                return std::make_shared<MockChatBackend>(cfg_.mock_fixture);
            return std::make_shared<MockChatBackend>();
        }
        return std::make_shared<HttpChatBackend>(backend);
    }

    std::unique_ptr<Embedder> embedder() const {
        std::shared_ptr<EmbeddingBackend> backend;
        if (cfg_.embedding.kind == "test")
            backend = std::make_shared<TestEmbeddingBackend>(cfg_.embedding.test_dim);
        else
            backend = std::make_shared<HttpEmbeddingBackend>(cfg_.embedding.http);
        return std::make_unique<Embedder>(backend, cache_);
    }

    PromptTemplate load_template(const std::filesystem::path& path,
                                 const std::string& fallback_text,
                                 const std::string& name) const {
        if (!path.empty()) return PromptTemplate::load(path);
        return PromptTemplate::parse(fallback_text, name);
    }

    StageCounters stage_ingest();
    StageCounters stage_paraphrase();
    StageCounters stage_filter();
    StageCounters stage_respond();
    StageCounters stage_rot();
    StageCounters stage_embed();
    StageCounters stage_score();
    StageCounters stage_report();

    bool scores_complete() const;

    RunConfig cfg_;
    RunPaths paths_;
    std::shared_ptr<FsCache> cache_;
};

StageCounters PipelineRun::stage_ingest() {
    std::vector<QuestionRecord> questions = load_records<QuestionRecord>(cfg_.corpus);
    if (questions.empty()) throw std::runtime_error("corpus " + cfg_.corpus.string() + " is empty");
    std::size_t total = questions.size();
    questions = sample_questions(std::move(questions), cfg_.sample_fraction, cfg_.seed);
    save_records(questions, paths_.questions);
    StageCounters c;
    std::ostringstream detail;
    detail << questions.size() << " question(s)";
    if (questions.size() != total) detail << " sampled from " << total;
    c.detail = detail.str();
    return c;
}

StageCounters PipelineRun::stage_paraphrase() {
    std::vector<QuestionRecord> questions = load_records<QuestionRecord>(paths_.questions);
    PromptTemplate tpl =
        load_template(cfg_.paraphrase_template, default_paraphrase_template(), "paraphrase");
    GenClient client(chat_backend(cfg_.paraphrase_backend), cfg_.paraphrase_backend, cache_);

    auto outcome = run_batch(
        questions,
        [&](const QuestionRecord& q) {
            return client.generate_paraphrases(q, cfg_.k_paraphrases, tpl);
        },
        cfg_.parallelism);

    std::vector<ParaphraseRecord> all;
    for (auto& item : outcome.results)
        if (item)
            for (ParaphraseRecord& r : *item) all.push_back(std::move(r));
    save_records(all, paths_.paraphrases_raw);

    StageCounters c;
    c.backend_requests = client.backend_requests();
    c.cache_hits = client.cache_hits();
    std::ostringstream detail;
    detail << all.size() << " candidate(s) for " << questions.size() << " question(s)";
    std::string failures = failures_summary(
        outcome.failures, [&](std::size_t i) { return questions[i].id; });
    if (!failures.empty()) detail << "; " << failures;
    c.detail = detail.str();
    return c;
}

StageCounters PipelineRun::stage_filter() {
    std::vector<QuestionRecord> questions = load_records<QuestionRecord>(paths_.questions);
    std::vector<ParaphraseRecord> raw = load_records<ParaphraseRecord>(paths_.paraphrases_raw);
    validate_lineage(raw, questions);

    std::map<std::string, std::vector<ParaphraseRecord>> by_question;
    for (ParaphraseRecord& r : raw) by_question[r.question_id].push_back(std::move(r));

    std::unique_ptr<Embedder> emb = embedder();
    std::vector<ParaphraseRecord> filtered;
    std::size_t accepted = 0;
    for (const QuestionRecord& q : questions) {
        auto it = by_question.find(q.id);
        if (it == by_question.end()) continue;
        std::vector<ParaphraseRecord> scored =
            filter_paraphrases(std::move(it->second), q, *emb, cfg_.filter);
        for (ParaphraseRecord& r : scored) {
            if (r.accepted) ++accepted;
            filtered.push_back(std::move(r));
        }
    }
    save_records(filtered, paths_.paraphrases);

    StageCounters c;
    c.backend_requests = emb->backend_requests();
    c.cache_hits = emb->cache_hits();
    c.detail = std::to_string(accepted) + " of " + std::to_string(filtered.size()) + " accepted";
    return c;
}

StageCounters PipelineRun::stage_respond() {
    std::vector<ParaphraseRecord> paraphrases = load_records<ParaphraseRecord>(paths_.paraphrases);
    std::vector<ParaphraseRecord> accepted;
    for (ParaphraseRecord& r : paraphrases)
        if (r.accepted) accepted.push_back(std::move(r));
    PromptTemplate tpl =
        load_template(cfg_.response_template, default_response_template(), "response");

    StageCounters c;
    std::vector<std::vector<std::optional<ResponseRecord>>> per_model;
    std::vector<std::string> failure_notes;
    for (const GenerationBackendConfig& model : cfg_.response_models) {
        GenClient client(chat_backend(model), model, cache_);
        auto outcome = run_batch(
            accepted,
            [&](const ParaphraseRecord& p) { return client.generate_response(p, tpl); },
            cfg_.parallelism);
        c.backend_requests += client.backend_requests();
        c.cache_hits += client.cache_hits();
        std::string failures = failures_summary(
            outcome.failures, [&](std::size_t i) { return model.model_id + "/" + accepted[i].id; });
        if (!failures.empty()) failure_notes.push_back(failures);
        per_model.push_back(std::move(outcome.results));
    }

    std::vector<ResponseRecord> responses;
    for (std::size_t p = 0; p < accepted.size(); ++p)
        for (std::size_t m = 0; m < per_model.size(); ++m)
            if (per_model[m][p]) responses.push_back(std::move(*per_model[m][p]));
    save_records(responses, paths_.responses);

    std::ostringstream detail;
    detail << responses.size() << " response(s) from " << cfg_.response_models.size()
           << " model(s) over " << accepted.size() << " accepted paraphrase(s)";
    for (const std::string& f : failure_notes) detail << "; " << f;
    c.detail = detail.str();
    return c;
}

StageCounters PipelineRun::stage_rot() {
    StageCounters c;
    if (!has_variant(Variant::RoT)) {
        save_records(std::vector<RotRecord>{}, paths_.rots);
        c.detail = "RoT variant disabled; wrote empty file";
        return c;
    }
    std::vector<QuestionRecord> questions = load_records<QuestionRecord>(paths_.questions);
    std::vector<ParaphraseRecord> paraphrases = load_records<ParaphraseRecord>(paths_.paraphrases);
    std::vector<ResponseRecord> responses = load_records<ResponseRecord>(paths_.responses);
    validate_lineage(responses, paraphrases);

    std::map<std::string, std::string> question_text;
    for (const QuestionRecord& q : questions) question_text[q.id] = q.text;
    std::map<std::string, std::string> paraphrase_question;
    for (const ParaphraseRecord& p : paraphrases) paraphrase_question[p.id] = p.question_id;

    PromptTemplate tpl = load_template(cfg_.rot_template, default_rot_template(), "rot");

    // Each response's RoT comes from the model that wrote the response, so
    // per-model RoT columns describe that model's own moral framing.
    std::map<std::string, const GenerationBackendConfig*> model_configs;
    for (const GenerationBackendConfig& m : cfg_.response_models)
        model_configs[m.model_id] = &m;

    std::vector<std::optional<RotRecord>> rots_by_response(responses.size());
    std::vector<std::string> failure_notes;
    for (const auto& [model_id, model_cfg] : model_configs) {
        std::vector<std::size_t> indices;
        for (std::size_t i = 0; i < responses.size(); ++i)
            if (responses[i].model_id == model_id) indices.push_back(i);
        if (indices.empty()) continue;
        GenClient client(chat_backend(*model_cfg), *model_cfg, cache_);
        auto outcome = run_batch(
            indices,
            [&](const std::size_t& i) {
                const ResponseRecord& r = responses[i];
                auto qit = paraphrase_question.find(r.paraphrase_id);
                if (qit == paraphrase_question.end())
                    throw std::runtime_error("response " + r.id + " has unknown paraphrase");
                return client.generate_rot(r, question_text.at(qit->second), tpl);
            },
            cfg_.parallelism);
        c.backend_requests += client.backend_requests();
        c.cache_hits += client.cache_hits();
        for (std::size_t k = 0; k < indices.size(); ++k)
            if (outcome.results[k]) rots_by_response[indices[k]] = std::move(outcome.results[k]);
        std::string failures = failures_summary(outcome.failures, [&](std::size_t k) {
            return responses[indices[k]].id;
        });
        if (!failures.empty()) failure_notes.push_back(failures);
    }
    for (const ResponseRecord& r : responses)
        if (!model_configs.count(r.model_id))
            throw std::runtime_error("response " + r.id + " names model \"" + r.model_id +
                                     "\" which is not in the configuration");

    std::vector<RotRecord> rots;
    for (auto& r : rots_by_response)
        if (r) rots.push_back(std::move(*r));
    save_records(rots, paths_.rots);

    std::ostringstream detail;
    detail << rots.size() << " rule(s) of thumb for " << responses.size() << " response(s)";
    for (const std::string& f : failure_notes) detail << "; " << f;
    c.detail = detail.str();
    return c;
}

StageCounters PipelineRun::stage_embed() {
    std::vector<ParaphraseRecord> paraphrases = load_records<ParaphraseRecord>(paths_.paraphrases);
    std::vector<ResponseRecord> responses = load_records<ResponseRecord>(paths_.responses);
    std::vector<RotRecord> rots = load_records<RotRecord>(paths_.rots);

    std::unique_ptr<Embedder> emb = embedder();
    std::filesystem::create_directories(paths_.emb_dir);

    auto embed_texts = [&](const std::vector<std::string>& texts,
                           const std::filesystem::path& out_path) {
        EmbeddingMatrix m;
        m.backend_id = emb->backend_id();
        m.model_id = emb->model_id();
        constexpr std::size_t kChunk = 64;
        for (std::size_t start = 0; start < texts.size(); start += kChunk) {
            std::size_t end = std::min(texts.size(), start + kChunk);
            std::vector<std::string> chunk(texts.begin() + start, texts.begin() + end);
            for (EmbeddingVector& v : emb->embed_batch(chunk)) m.rows.push_back(std::move(v.values));
        }
        m.dim = static_cast<std::uint32_t>(emb->dim() ? emb->dim() : 1);
        save_embeddings(m, out_path);
    };

    std::vector<std::string> texts;
    for (const auto& r : paraphrases) texts.push_back(r.text);
    embed_texts(texts, paths_.emb_paraphrases);
    texts.clear();
    for (const auto& r : responses) texts.push_back(r.text);
    embed_texts(texts, paths_.emb_responses);
    texts.clear();
    for (const auto& r : rots) texts.push_back(r.text);
    embed_texts(texts, paths_.emb_rots);

    StageCounters c;
    c.backend_requests = emb->backend_requests();
    c.cache_hits = emb->cache_hits();
    c.detail = std::to_string(paraphrases.size() + responses.size() + rots.size()) +
               " text(s) embedded at dim " + std::to_string(emb->dim());
    return c;
}

namespace scoring {

struct Group {
    std::vector<std::string> texts;
    std::vector<std::vector<double>> vectors;
};

// question id → group of same-question texts with row-aligned embeddings.
using GroupMap = std::map<std::string, Group>;

}  // namespace scoring

StageCounters PipelineRun::stage_score() {
    std::vector<QuestionRecord> questions = load_records<QuestionRecord>(paths_.questions);
    std::vector<ParaphraseRecord> paraphrases = load_records<ParaphraseRecord>(paths_.paraphrases);
    std::vector<ResponseRecord> responses = load_records<ResponseRecord>(paths_.responses);
    std::vector<RotRecord> rots = load_records<RotRecord>(paths_.rots);
    validate_lineage(paraphrases, questions);
    validate_lineage(responses, paraphrases);
    validate_lineage(rots, responses);

    EmbeddingMatrix emb_p = load_embeddings(paths_.emb_paraphrases);
    EmbeddingMatrix emb_r = load_embeddings(paths_.emb_responses);
    EmbeddingMatrix emb_t = load_embeddings(paths_.emb_rots);
    if (emb_p.rows.size() != paraphrases.size() || emb_r.rows.size() != responses.size() ||
        emb_t.rows.size() != rots.size())
        throw std::runtime_error(
            "embedding row counts do not match record counts; delete " +
            paths_.emb_dir.string() + " and re-run to regenerate");

    // Group texts/vectors per question (QP) and per question+model (Ans/RoT).
    scoring::GroupMap qp_groups;
    std::map<std::string, std::size_t> paraphrase_index;
    for (std::size_t i = 0; i < paraphrases.size(); ++i) {
        paraphrase_index[paraphrases[i].id] = i;
        if (!paraphrases[i].accepted) continue;
        scoring::Group& g = qp_groups[paraphrases[i].question_id];
        g.texts.push_back(paraphrases[i].text);
        g.vectors.push_back(emb_p.rows[i]);
    }

    std::vector<std::string> model_order;
    for (const auto& m : cfg_.response_models) model_order.push_back(m.model_id);
    std::map<std::string, scoring::GroupMap> ans_groups;  // model → qid → group
    std::map<std::string, std::string> response_question;
    for (std::size_t i = 0; i < responses.size(); ++i) {
        const ResponseRecord& r = responses[i];
        const std::string& qid = paraphrases[paraphrase_index.at(r.paraphrase_id)].question_id;
        response_question[r.id] = qid;
        if (std::find(model_order.begin(), model_order.end(), r.model_id) == model_order.end())
            model_order.push_back(r.model_id);
        scoring::Group& g = ans_groups[r.model_id][qid];
        g.texts.push_back(r.text);
        g.vectors.push_back(emb_r.rows[i]);
    }

    std::map<std::string, std::string> response_model;
    for (const ResponseRecord& r : responses) response_model[r.id] = r.model_id;
    std::map<std::string, scoring::GroupMap> rot_groups;
    for (std::size_t i = 0; i < rots.size(); ++i) {
        const RotRecord& t = rots[i];
        const std::string& qid = response_question.at(t.response_id);
        scoring::Group& g = rot_groups[response_model.at(t.response_id)][qid];
        g.texts.push_back(t.text);
        g.vectors.push_back(emb_t.rows[i]);
    }

    std::filesystem::create_directories(paths_.scores_dir);

    struct FileEntry {
        std::string metric;
        std::string variant;
        std::string model;
        std::string path;
    };
    std::vector<FileEntry> entries;
    std::size_t skipped_small = 0;

    auto emit = [&](const std::string& metric, const std::string& variant,
                    const std::string& model, const scoring::GroupMap& groups) {
        std::vector<ScoreRecord> records;
        for (const QuestionRecord& q : questions) {
            auto it = groups.find(q.id);
            if (it == groups.end()) continue;
            if (it->second.texts.size() < 2) {
                ++skipped_small;
                continue;
            }
            records.push_back(
                score_texts(q.id, metric, variant, it->second.texts, it->second.vectors));
        }
        if (records.empty()) return;
        std::string filename = metric + "__" + lower(variant);
        if (!model.empty()) filename += "__" + sanitize_for_filename(model);
        filename += ".jsonl";
        save_scores(records, paths_.scores_dir / filename);
        entries.push_back({metric, variant, model, filename});
    };

    for (const std::string& metric : cfg_.metrics) {
        for (Variant v : cfg_.variants) {
            if (v == Variant::QP) {
                emit(metric, variant_label(v), "", qp_groups);
            } else {
                const auto& by_model = (v == Variant::Ans) ? ans_groups : rot_groups;
                for (const std::string& model : model_order) {
                    auto it = by_model.find(model);
                    if (it != by_model.end()) emit(metric, variant_label(v), model, it->second);
                }
            }
        }
    }
    if (entries.empty()) throw std::runtime_error("no scorable groups (need ≥ 2 texts each)");

    std::sort(entries.begin(), entries.end(),
              [](const FileEntry& a, const FileEntry& b) { return a.path < b.path; });
    json index;
    json files = json::array();
    for (const FileEntry& e : entries)
        files.push_back(
            {{"metric", e.metric}, {"model", e.model}, {"path", e.path}, {"variant", e.variant}});
    index["files"] = files;
    write_text_atomic(paths_.scores_index, index.dump(2) + "\n");

    StageCounters c;
    std::ostringstream detail;
    detail << entries.size() << " score file(s) over " << questions.size() << " question(s)";
    if (skipped_small > 0)
        detail << "; " << skipped_small << " group(s) skipped with fewer than 2 texts";
    c.detail = detail.str();
    return c;
}

bool PipelineRun::scores_complete() const {
    if (!std::filesystem::exists(paths_.scores_index)) return false;
    try {
        std::ifstream in(paths_.scores_index);
        json index = json::parse(in);
        for (const auto& f : index.at("files"))
            if (!std::filesystem::exists(paths_.scores_dir / f.at("path").get<std::string>()))
                return false;
        return true;
    } catch (...) {
        return false;
    }
}

StageCounters PipelineRun::stage_report() {
    std::ifstream in(paths_.scores_index);
    if (!in) throw std::runtime_error("cannot open " + paths_.scores_index.string());
    json index = json::parse(in);

    std::vector<ScoreSeries> series;
    for (const auto& f : index.at("files")) {
        ScoreSeries s;
        s.metric = f.at("metric").get<std::string>();
        s.variant = f.at("variant").get<std::string>();
        s.model = f.at("model").get<std::string>();
        s.records = load_scores(paths_.scores_dir / f.at("path").get<std::string>());
        series.push_back(std::move(s));
    }

    std::vector<ScoreRecord> human;
    if (!cfg_.human_scores.empty()) human = load_scores(cfg_.human_scores);

    std::vector<std::string> footnotes;
    footnotes.push_back(
        "SGE entropy is normalized by log n; the raw natural-log entropy is kept in each score's "
        "breakdown. Final SGE is clamped to [0,1] and degenerate graphs (all texts embedding "
        "identically) score 1.");
    footnotes.push_back("ROUGE variant: ROUGE-L (LCS F1).");
    footnotes.push_back(
        "Per-question consistency aggregates response pairs: BLEU/ROUGE-L average all ordered "
        "pairs, cosine averages unordered pairs of (cos+1)/2.");
    EmbeddingMatrix emb_header = load_embeddings(paths_.emb_responses);
    footnotes.push_back("Embedding backend: " + emb_header.backend_id + ", model " +
                        emb_header.model_id + ", dim " + std::to_string(emb_header.dim) + ".");
    {
        std::ostringstream f;
        f << "Paraphrase gate: reference-free ParaScore (cos+1)/2 + omega*min(nED,tau)/tau with "
          << "omega=" << cfg_.filter.score.omega << ", tau=" << cfg_.filter.score.tau
          << "; accepted iff score > " << cfg_.filter.threshold
          << " (strict); nED is word-token Levenshtein.";
        footnotes.push_back(f.str());
    }
    footnotes.push_back(
        "RoTs are generated by the same model that produced the underlying response.");
    {
        std::ostringstream f;
        f << "Generation temperatures: paraphrases " << cfg_.paraphrase_backend.temperature
          << ", responses/RoTs per model (default 0).";
        footnotes.push_back(f.str());
    }
    if (!human.empty())
        footnotes.push_back(
            "HC columns correlate per-question metric values (pooled by mean across models) with "
            "the supplied human scores: HC-r = Pearson, HC-rho = Spearman (average ranks). "
            "Correlation cells may be negative.");
    if (cfg_.sample_fraction < 1.0) {
        std::ostringstream f;
        f << "Corpus subsampled to fraction " << cfg_.sample_fraction << " with seed " << cfg_.seed
          << " (seeded uniform shuffle).";
        footnotes.push_back(f.str());
    }

    ReportTable table = make_report(series, human, footnotes);
    write_text_atomic(paths_.report_text, render_text(table));
    write_text_atomic(paths_.report_tsv, render_tsv(table));

    StageCounters c;
    c.detail = std::to_string(series.size()) + " series, " +
               std::to_string(table.column_labels.size()) + " column(s)";
    return c;
}

RunManifest PipelineRun::execute() {
    RunManifest manifest;
    manifest.config_echo = cfg_.to_json();

    struct StageDef {
        std::string name;
        std::function<bool()> artifacts_exist;
        std::function<StageCounters()> run;
    };
    auto exists = [](const std::filesystem::path& p) { return std::filesystem::exists(p); };
    std::vector<StageDef> stages = {
        {"ingest", [&] { return exists(paths_.questions); }, [&] { return stage_ingest(); }},
        {"paraphrase", [&] { return exists(paths_.paraphrases_raw); },
         [&] { return stage_paraphrase(); }},
        {"filter", [&] { return exists(paths_.paraphrases); }, [&] { return stage_filter(); }},
        {"respond", [&] { return exists(paths_.responses); }, [&] { return stage_respond(); }},
        {"rot", [&] { return exists(paths_.rots); }, [&] { return stage_rot(); }},
        {"embed",
         [&] {
             return exists(paths_.emb_paraphrases) && exists(paths_.emb_responses) &&
                    exists(paths_.emb_rots);
         },
         [&] { return stage_embed(); }},
        {"score", [&] { return scores_complete(); }, [&] { return stage_score(); }},
        {"report",
         [&] { return exists(paths_.report_text) && exists(paths_.report_tsv); },
         [&] { return stage_report(); }},
    };

    bool upstream_ran = false;
    for (StageDef& stage : stages) {
        StageStatus status;
        status.name = stage.name;
        if (!upstream_ran && stage.artifacts_exist()) {
            status.status = "skipped";
            status.detail = "artifacts already present";
            manifest.stages.push_back(std::move(status));
            continue;
        }
        try {
            StageCounters counters = stage.run();
            status.status = "completed";
            status.backend_requests = counters.backend_requests;
            status.cache_hits = counters.cache_hits;
            status.detail = counters.detail;
            manifest.stages.push_back(std::move(status));
            upstream_ran = true;
        } catch (const std::exception& e) {
            status.status = "failed";
            status.detail = e.what();
            manifest.stages.push_back(std::move(status));
            manifest.status = "failed";
            manifest.failed_stage = stage.name;
            break;
        }
    }

    write_text_atomic(paths_.manifest, manifest.to_json().dump(2) + "\n");
    return manifest;
}

}  // namespace

RunManifest run_pipeline(RunConfig config) {
    config.finalize();
    std::filesystem::create_directories(config.out_dir);
    return PipelineRun(std::move(config)).execute();
}

}  // namespace semcon
