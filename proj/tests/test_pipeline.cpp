#include "doctest.h"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "semcon/pipeline.hpp"
#include "semcon/records.hpp"
#include "semcon/report.hpp"

using namespace semcon;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("semcon-pipeline-" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<QuestionRecord> tiny_corpus() {
    std::vector<QuestionRecord> qs;
    const char* texts[] = {
        "Is it wrong to keep extra change a cashier hands you by mistake?",
        "Should you tell a friend their partner is cheating on them?",
        "Is it acceptable to lie about your availability to avoid a party?",
    };
    for (int i = 0; i < 3; ++i) {
        QuestionRecord q;
        q.id = "q" + std::to_string(i + 1);
        q.text = texts[i];
        qs.push_back(std::move(q));
    }
    return qs;
}

RunConfig mock_config(const fs::path& root) {
    RunConfig c;
    c.corpus = root / "corpus.jsonl";
    c.out_dir = root / "out";
    c.seed = 7;
    c.k_paraphrases = 3;
    c.parallelism = 2;
    c.embedding.kind = "test";
    c.embedding.test_dim = 16;
    c.mock = true;
    save_records(tiny_corpus(), c.corpus);
    return c;
}

std::vector<std::string> ids_of(const std::vector<QuestionRecord>& qs) {
    std::vector<std::string> out;
    for (const auto& q : qs) out.push_back(q.id);
    return out;
}

std::vector<QuestionRecord> numbered_questions(int n) {
    std::vector<QuestionRecord> qs;
    for (int i = 0; i < n; ++i) {
        QuestionRecord q;
        q.id = "q" + std::to_string(i);
        q.text = "question number " + std::to_string(i);
        qs.push_back(std::move(q));
    }
    return qs;
}

}  // namespace

TEST_CASE("sample_questions keeps everything at fraction 1 and respects order") {
    auto qs = numbered_questions(10);
    auto all = sample_questions(qs, 1.0, 42);
    CHECK(ids_of(all) == ids_of(qs));

    auto half = sample_questions(qs, 0.5, 42);
    REQUIRE(half.size() == 5);
    // Determinism under the same seed.
    CHECK(ids_of(sample_questions(qs, 0.5, 42)) == ids_of(half));
    // Kept questions appear in corpus order.
    std::vector<std::string> order = ids_of(qs);
    std::size_t cursor = 0;
    for (const auto& q : half) {
        auto it = std::find(order.begin() + static_cast<long>(cursor), order.end(), q.id);
        REQUIRE(it != order.end());
        cursor = static_cast<std::size_t>(it - order.begin()) + 1;
    }
}

TEST_CASE("sample_questions rounds up and keeps at least one question") {
    auto qs = numbered_questions(10);
    CHECK(sample_questions(qs, 0.34, 1).size() == 4);  // ceil(3.4)
    CHECK(sample_questions(qs, 0.01, 1).size() == 1);
    CHECK(sample_questions(qs, 0.999, 1).size() == 10);
    CHECK_THROWS_AS(sample_questions(qs, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_questions(qs, -0.2, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_questions(qs, 1.5, 1), std::invalid_argument);
}

TEST_CASE("different seeds change the sample") {
    auto qs = numbered_questions(12);
    std::set<std::vector<std::string>> distinct;
    for (std::uint64_t seed = 0; seed < 8; ++seed)
        distinct.insert(ids_of(sample_questions(qs, 0.5, seed)));
    CHECK(distinct.size() > 1);
}

TEST_CASE("config parses from JSON with paths resolved against the base dir") {
    json j = {
        {"corpus", "data/questions.jsonl"},
        {"out_dir", "runs/out"},
        {"seed", 99},
        {"sample_fraction", 0.5},
        {"k_paraphrases", 4},
        {"parallelism", 3},
        {"filter", {{"threshold", 0.9}, {"omega", 0.1}, {"tau", 0.5}}},
        {"metrics", {"sge", "bleu"}},
        {"variants", {"QP", "Ans"}},
        {"mock", true},
    };
    RunConfig c = RunConfig::from_json(j, "/base");
    CHECK(c.corpus == fs::path("/base/data/questions.jsonl"));
    CHECK(c.out_dir == fs::path("/base/runs/out"));
    CHECK(c.seed == 99);
    CHECK(c.sample_fraction == 0.5);
    CHECK(c.k_paraphrases == 4);
    CHECK(c.filter.threshold == 0.9);
    CHECK(c.filter.score.omega == 0.1);
    CHECK(c.filter.score.tau == 0.5);
    CHECK(c.metrics == std::vector<std::string>{"sge", "bleu"});
    REQUIRE(c.variants.size() == 2);
    CHECK(c.variants[0] == Variant::QP);
    CHECK(c.mock);

    c.finalize();
    CHECK(c.cache_dir == fs::path("/base/runs/out/cache"));
    CHECK(c.paraphrase_backend.model_id == "mock-paraphraser");
    CHECK(c.paraphrase_backend.temperature == 0.7);
    REQUIRE(c.response_models.size() == 2);
    CHECK(c.response_models[0].model_id == "model-a");
    CHECK(c.response_models[1].model_id == "model-b");
    CHECK(c.embedding.kind == "test");
}

TEST_CASE("config validation rejects bad values") {
    auto base = [] {
        json j = {{"corpus", "c.jsonl"}, {"out_dir", "out"}, {"mock", true}};
        return j;
    };
    auto expect_throw = [&](json j) {
        RunConfig c = RunConfig::from_json(j, "/base");
        CHECK_THROWS_AS(c.finalize(), std::invalid_argument);
    };
    {
        json j = base();
        j["k_paraphrases"] = 0;
        expect_throw(j);
    }
    {
        json j = base();
        j["parallelism"] = 0;
        expect_throw(j);
    }
    {
        json j = base();
        j["sample_fraction"] = 0.0;
        expect_throw(j);
    }
    {
        json j = base();
        j["metrics"] = json::array({"sge", "wer"});
        expect_throw(j);
    }
    {
        json j = base();
        j["metrics"] = json::array();
        expect_throw(j);
    }
    {
        json j = base();
        j["variants"] = json::array();
        expect_throw(j);
    }
    {
        json j = base();
        j["mock"] = false;  // non-mock without backends
        expect_throw(j);
    }
    {
        json j = base();
        j["response_models"] = json::array(
            {{{"model_id", "m"}}, {{"model_id", "m"}}});  // duplicate ids
        expect_throw(j);
    }
    {
        json j = base();
        j["embedding"] = {{"kind", "test"}, {"dim", 0}};
        expect_throw(j);
    }
    // Synonyms and casing are tolerated; genuinely unknown names fail at
    // parse time.
    {
        json j = base();
        j["variants"] = json::array({"qp", "Answers"});
        RunConfig c = RunConfig::from_json(j, "/base");
        CHECK(c.variants == std::vector<Variant>{Variant::QP, Variant::Ans});
    }
    {
        json j = base();
        j["variants"] = json::array({"summary"});
        CHECK_THROWS_AS(RunConfig::from_json(j, "/base"), std::invalid_argument);
    }
}

TEST_CASE("config load reports unreadable or invalid files as usage errors") {
    fs::path dir = temp_dir("cfgload");
    CHECK_THROWS_AS(RunConfig::load(dir / "absent.json"), std::invalid_argument);
    {
        std::ofstream out(dir / "bad.json");
        out << "{not json";
    }
    CHECK_THROWS_AS(RunConfig::load(dir / "bad.json"), std::invalid_argument);
}

TEST_CASE("mock pipeline run produces every artifact and a completed manifest") {
    fs::path root = temp_dir("e2e");
    RunConfig config = mock_config(root);
    RunManifest manifest = run_pipeline(config);

    CHECK(manifest.status == "completed");
    CHECK(manifest.failed_stage.empty());
    REQUIRE(manifest.stages.size() == 8);
    const char* order[] = {"ingest",  "paraphrase", "filter", "respond",
                           "rot",     "embed",      "score",  "report"};
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(manifest.stages[i].name == order[i]);
        CHECK(manifest.stages[i].status == "completed");
    }
    CHECK(manifest.total_backend_requests() > 0);

    fs::path out = config.out_dir;
    for (const char* rel :
         {"questions.jsonl", "paraphrases_raw.jsonl", "paraphrases.jsonl", "responses.jsonl",
          "rots.jsonl", "embeddings/paraphrases.bin", "embeddings/responses.bin",
          "embeddings/rots.bin", "scores/index.json", "report.txt", "report.tsv",
          "manifest.json"}) {
        INFO(rel);
        CHECK(fs::exists(out / rel));
    }

    auto questions = load_records<QuestionRecord>(out / "questions.jsonl");
    CHECK(questions.size() == 3);
    auto raw = load_records<ParaphraseRecord>(out / "paraphrases_raw.jsonl");
    CHECK(raw.size() == 9);  // 3 questions × k=3
    auto filtered = load_records<ParaphraseRecord>(out / "paraphrases.jsonl");
    CHECK(filtered.size() == 9);
    std::size_t accepted = 0;
    for (const auto& p : filtered) accepted += p.accepted ? 1 : 0;
    CHECK(accepted >= 3);  // at least one survivor per question in practice
    auto responses = load_records<ResponseRecord>(out / "responses.jsonl");
    CHECK(responses.size() == accepted * 2);  // two mock models
    auto rots = load_records<RotRecord>(out / "rots.jsonl");
    CHECK(rots.size() == responses.size());

    // Scores referenced by the index exist, parse, and stay in [0, 1].
    std::ifstream index_in(out / "scores/index.json");
    REQUIRE(index_in);
    json index = json::parse(index_in);
    REQUIRE(index.contains("files"));
    CHECK(index["files"].size() > 0);
    bool saw_qp = false, saw_ans = false, saw_rot = false;
    for (const auto& entry : index["files"]) {
        fs::path p = out / "scores" / entry["path"].get<std::string>();
        INFO(p.string());
        REQUIRE(fs::exists(p));
        auto records = load_scores(p);
        CHECK_FALSE(records.empty());
        for (const auto& r : records) {
            CHECK(r.metric == entry["metric"].get<std::string>());
            CHECK(r.variant == entry["variant"].get<std::string>());
            CHECK(r.value >= 0.0);
            CHECK(r.value <= 1.0);
        }
        std::string variant = entry["variant"].get<std::string>();
        saw_qp |= variant == "QP";
        saw_ans |= variant == "Ans";
        saw_rot |= variant == "RoT";
    }
    CHECK(saw_qp);
    CHECK(saw_ans);
    CHECK(saw_rot);

    // Manifest on disk round-trips as JSON with the documented keys.
    std::ifstream manifest_in(out / "manifest.json");
    json mj = json::parse(manifest_in);
    CHECK(mj["status"] == "completed");
    CHECK(mj["stages"].size() == 8);
    CHECK(mj["config"]["k_paraphrases"] == 3);

    // Report mentions the canonical metrics.
    std::ifstream report_in(out / "report.txt");
    std::string report((std::istreambuf_iterator<char>(report_in)),
                       std::istreambuf_iterator<char>());
    CHECK(report.find("SGE") != std::string::npos);
    CHECK(report.find("BLEU") != std::string::npos);

    SUBCASE("second run skips every stage and touches no backend") {
        RunManifest again = run_pipeline(mock_config(root));
        CHECK(again.status == "completed");
        for (const auto& s : again.stages) {
            INFO(s.name);
            CHECK(s.status == "skipped");
        }
        CHECK(again.total_backend_requests() == 0);
    }

    SUBCASE("removing only the report re-runs only the report stage") {
        fs::remove(out / "report.txt");
        fs::remove(out / "report.tsv");
        RunManifest again = run_pipeline(mock_config(root));
        CHECK(again.status == "completed");
        for (const auto& s : again.stages) {
            INFO(s.name);
            if (s.name == "report")
                CHECK(s.status == "completed");
            else
                CHECK(s.status == "skipped");
        }
        CHECK(again.total_backend_requests() == 0);
        CHECK(fs::exists(out / "report.txt"));
    }

    SUBCASE("removing the scores re-runs scoring and reporting without backends") {
        fs::remove_all(out / "scores");
        RunManifest again = run_pipeline(mock_config(root));
        CHECK(again.status == "completed");
        for (const auto& s : again.stages) {
            INFO(s.name);
            if (s.name == "score" || s.name == "report")
                CHECK(s.status == "completed");
            else
                CHECK(s.status == "skipped");
        }
        CHECK(again.total_backend_requests() == 0);
        CHECK(fs::exists(out / "scores/index.json"));
    }
}

TEST_CASE("disabling the RoT variant writes an empty rot file and no rot scores") {
    fs::path root = temp_dir("norot");
    RunConfig config = mock_config(root);
    config.variants = {Variant::QP, Variant::Ans};
    RunManifest manifest = run_pipeline(config);
    CHECK(manifest.status == "completed");
    auto rots = load_records<RotRecord>(config.out_dir / "rots.jsonl");
    CHECK(rots.empty());
    const StageStatus* rot_stage = manifest.stage("rot");
    REQUIRE(rot_stage != nullptr);
    CHECK(rot_stage->backend_requests == 0);
    std::ifstream index_in(config.out_dir / "scores/index.json");
    json index = json::parse(index_in);
    for (const auto& entry : index["files"])
        CHECK(entry["variant"].get<std::string>() != "RoT");
}

TEST_CASE("a failing backend marks the stage and manifest failed") {
    fs::path root = temp_dir("fail");
    RunConfig config = mock_config(root);
    config.mock = false;
    config.paraphrase_backend.base_url = "http://127.0.0.1:9";  // nothing listens here
    config.paraphrase_backend.model_id = "para";
    config.paraphrase_backend.max_retries = 0;
    config.paraphrase_backend.timeout_seconds = 2;
    GenerationBackendConfig m;
    m.base_url = "http://127.0.0.1:9";
    m.model_id = "resp";
    m.max_retries = 0;
    config.response_models = {m};
    config.embedding.kind = "test";

    RunManifest manifest = run_pipeline(config);
    CHECK(manifest.status == "failed");
    CHECK(manifest.failed_stage == "paraphrase");
    REQUIRE(manifest.stages.size() == 2);  // ingest ran, paraphrase failed, rest skipped
    CHECK(manifest.stages[0].name == "ingest");
    CHECK(manifest.stages[0].status == "completed");
    CHECK(manifest.stages[1].name == "paraphrase");
    CHECK(manifest.stages[1].status == "failed");
    CHECK_FALSE(manifest.stages[1].detail.empty());
    CHECK(fs::exists(config.out_dir / "manifest.json"));
    std::ifstream in(config.out_dir / "manifest.json");
    json mj = json::parse(in);
    CHECK(mj["status"] == "failed");
    CHECK(mj["failed_stage"] == "paraphrase");
}

TEST_CASE("an empty corpus fails the ingest stage") {
    fs::path root = temp_dir("empty");
    RunConfig config = mock_config(root);
    save_records(std::vector<QuestionRecord>{}, config.corpus);
    RunManifest manifest = run_pipeline(config);
    CHECK(manifest.status == "failed");
    CHECK(manifest.failed_stage == "ingest");
}
