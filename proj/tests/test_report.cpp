#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "semcon/baselines.hpp"
#include "semcon/embedder.hpp"
#include "semcon/report.hpp"
#include "semcon/semgraph.hpp"

using namespace semcon;
namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("semcon-report-" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ScoreRecord rec(const std::string& qid, const std::string& metric, const std::string& variant,
                double value) {
    ScoreRecord r;
    r.question_id = qid;
    r.metric = metric;
    r.variant = variant;
    r.value = value;
    return r;
}

ScoreSeries series(const std::string& metric, const std::string& variant,
                   const std::string& model, std::vector<std::pair<std::string, double>> points) {
    ScoreSeries s;
    s.metric = metric;
    s.variant = variant;
    s.model = model;
    for (const auto& [qid, v] : points) s.records.push_back(rec(qid, metric, variant, v));
    return s;
}

}  // namespace

TEST_CASE("score files round-trip and keep the five-field schema in order") {
    fs::path dir = temp_dir("roundtrip");
    std::vector<ScoreRecord> records;
    ScoreRecord r = rec("q1", "sge", "Ans", 0.625);
    r.breakdown = ordered_json{{"n", 3}, {"D", 0.5}};
    records.push_back(r);
    records.push_back(rec("q2", "bleu", "QP", 0.25));
    save_scores(records, dir / "s.jsonl");

    auto loaded = load_scores(dir / "s.jsonl");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].question_id == "q1");
    CHECK(loaded[0].metric == "sge");
    CHECK(loaded[0].variant == "Ans");
    CHECK(loaded[0].value == 0.625);
    CHECK(loaded[0].breakdown["n"] == 3);
    CHECK(loaded[1].breakdown.is_object());
    CHECK(loaded[1].breakdown.empty());

    std::ifstream in(dir / "s.jsonl");
    std::string line;
    std::getline(in, line);
    // Keys appear in schema order on disk.
    CHECK(line.find("\"question_id\"") < line.find("\"metric\""));
    CHECK(line.find("\"metric\"") < line.find("\"variant\""));
    CHECK(line.find("\"variant\"") < line.find("\"value\""));
    CHECK(line.find("\"value\"") < line.find("\"breakdown\""));
    CHECK_FALSE(fs::exists(dir / "s.jsonl.tmp"));
}

TEST_CASE("loading malformed score lines reports the line number") {
    fs::path dir = temp_dir("badscores");
    {
        std::ofstream out(dir / "bad.jsonl");
        out << R"({"question_id":"q1","metric":"sge","variant":"Ans","value":0.5})" << "\n";
        out << "not json\n";
    }
    CHECK_THROWS_WITH_AS(load_scores(dir / "bad.jsonl"), doctest::Contains("line 2"),
                         std::runtime_error);
    {
        std::ofstream out(dir / "nan.jsonl");
        out << R"({"question_id":"q1","metric":"sge","variant":"Ans","value":null})" << "\n";
    }
    CHECK_THROWS_AS(load_scores(dir / "nan.jsonl"), std::runtime_error);
    {
        std::ofstream out(dir / "noid.jsonl");
        out << R"({"question_id":"","metric":"sge","variant":"Ans","value":0.5})" << "\n";
    }
    CHECK_THROWS_AS(load_scores(dir / "noid.jsonl"), std::runtime_error);
    CHECK_THROWS_AS(load_scores(dir / "absent.jsonl"), std::runtime_error);
}

TEST_CASE("score_texts dispatches to each metric and fills its breakdown") {
    std::vector<std::string> texts = {"tell the truth", "always tell the truth",
                                      "never deceive anyone"};
    TestEmbeddingBackend backend(32);
    std::vector<std::vector<double>> vectors;
    for (const auto& t : texts) vectors.push_back(backend.embed_one(t));

    SUBCASE("sge matches sge_from_vectors and lists the documented keys") {
        ScoreRecord r = score_texts("q1", "sge", "Ans", texts, vectors);
        SgeBreakdown b = sge_from_vectors(vectors);
        CHECK(r.value == b.sge);
        CHECK(r.question_id == "q1");
        CHECK(r.variant == "Ans");
        std::vector<std::string> keys;
        for (auto it = r.breakdown.begin(); it != r.breakdown.end(); ++it) keys.push_back(it.key());
        CHECK(keys == std::vector<std::string>{"n", "D", "H", "raw_entropy", "degenerate",
                                               "clamped", "f", "p"});
        CHECK(r.breakdown["n"] == 3);
        CHECK(r.breakdown["f"].size() == 3);
    }

    SUBCASE("identical texts give sge exactly 1 via the degenerate rule") {
        std::vector<std::string> same = {"same words", "same words", "same words"};
        std::vector<std::vector<double>> vs(3, backend.embed_one("same words"));
        ScoreRecord r = score_texts("q1", "sge", "Ans", same, vs);
        CHECK(r.value == 1.0);
        CHECK(r.breakdown["degenerate"] == true);
    }

    SUBCASE("bleu and rouge_l use ordered-pair means and ignore vectors") {
        ScoreRecord b = score_texts("q1", "bleu", "QP", texts, {});
        CHECK(b.value == pairwise_consistency(texts, PairMetric::Bleu));
        CHECK(b.breakdown["n"] == 3);
        CHECK(b.breakdown["ordered_pairs"] == 6);
        ScoreRecord rl = score_texts("q1", "rouge_l", "QP", texts, {});
        CHECK(rl.value == pairwise_consistency(texts, PairMetric::RougeL));
        CHECK(rl.breakdown["ordered_pairs"] == 6);
    }

    SUBCASE("cosine uses unordered pairs") {
        ScoreRecord c = score_texts("q1", "cosine", "RoT", texts, vectors);
        CHECK(c.value == cosine_consistency(vectors));
        CHECK(c.breakdown["unordered_pairs"] == 3);
    }

    SUBCASE("invalid inputs throw") {
        CHECK_THROWS_AS(score_texts("q1", "sge", "Ans", {"one"}, {vectors[0]}),
                        std::invalid_argument);
        CHECK_THROWS_AS(score_texts("q1", "nope", "Ans", texts, vectors), std::invalid_argument);
        CHECK_THROWS_AS(score_texts("q1", "sge", "Ans", texts, {}), std::invalid_argument);
        CHECK_THROWS_AS(score_texts("q1", "cosine", "Ans", texts, {vectors[0]}),
                        std::invalid_argument);
    }
}

TEST_CASE("report cells are plain means over the common questions") {
    auto table = make_report({series("sge", "Ans", "model-a", {{"q1", 0.6}, {"q2", 0.8}})}, {}, {});
    REQUIRE(table.row_labels == std::vector<std::string>{"SGE"});
    REQUIRE(table.column_labels == std::vector<std::string>{"Ans model-a"});
    REQUIRE(table.cells[0][0].has_value());
    CHECK(*table.cells[0][0] == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(table.warnings.empty());
}

TEST_CASE("report lays out QP first, then Ans/RoT per model in first-seen model order") {
    std::vector<ScoreSeries> all = {
        series("cosine", "QP", "", {{"q1", 0.9}}),
        series("sge", "RoT", "model-b", {{"q1", 0.5}}),  // model-b is seen first
        series("sge", "QP", "", {{"q1", 0.95}}),
        series("sge", "Ans", "model-a", {{"q1", 0.7}}),
        series("bleu", "Ans", "model-a", {{"q1", 0.3}}),
        series("sge", "RoT", "model-a", {{"q1", 0.6}}),
    };
    auto table = make_report(all, {}, {});
    CHECK(table.row_labels == std::vector<std::string>{"SGE", "BLEU", "Cosine"});
    CHECK(table.column_labels ==
          std::vector<std::string>{"QP", "RoT model-b", "Ans model-a", "RoT model-a"});
    // SGE row: all four columns filled.
    CHECK(*table.cells[0][0] == doctest::Approx(0.95));
    CHECK(*table.cells[0][1] == doctest::Approx(0.5));
    CHECK(*table.cells[0][2] == doctest::Approx(0.7));
    CHECK(*table.cells[0][3] == doctest::Approx(0.6));
    // BLEU row: only Ans model-a is present.
    CHECK_FALSE(table.cells[1][0].has_value());
    CHECK(*table.cells[1][2] == doctest::Approx(0.3));
    // Cosine row: only QP.
    CHECK(*table.cells[2][0] == doctest::Approx(0.9));
    CHECK_FALSE(table.cells[2][3].has_value());
}

TEST_CASE("human scores add correlation columns pooled across models") {
    // Pooled sge/Ans per question: mean of the two models.
    std::vector<ScoreSeries> all = {
        series("sge", "Ans", "model-a", {{"q1", 0.2}, {"q2", 0.6}, {"q3", 0.4}}),
        series("sge", "Ans", "model-b", {{"q1", 0.4}, {"q2", 0.8}, {"q3", 0.6}}),
    };
    // Human equals the pooled values → perfect correlation.
    std::vector<ScoreRecord> human = {rec("q1", "human", "Ans", 0.3), rec("q2", "human", "Ans", 0.7),
                                      rec("q3", "human", "Ans", 0.5)};
    auto table = make_report(all, human, {});
    REQUIRE(table.column_labels == std::vector<std::string>{"Ans model-a", "Ans model-b",
                                                            "HC-r Ans", "HC-rho Ans"});
    REQUIRE(table.cells[0][2].has_value());
    REQUIRE(table.cells[0][3].has_value());
    CHECK(*table.cells[0][2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*table.cells[0][3] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("anti-correlated human scores give negative HC columns") {
    std::vector<ScoreSeries> all = {
        series("sge", "Ans", "m", {{"q1", 0.1}, {"q2", 0.5}, {"q3", 0.9}})};
    std::vector<ScoreRecord> human = {rec("q1", "human", "Ans", 5.0), rec("q2", "human", "Ans", 3.0),
                                      rec("q3", "human", "Ans", 1.0)};
    auto table = make_report(all, human, {});
    REQUIRE(table.cells[0][1].has_value());
    CHECK(*table.cells[0][1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(*table.cells[0][2] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("constant metric values make HC undefined with a warning, not a crash") {
    std::vector<ScoreSeries> all = {
        series("sge", "Ans", "m", {{"q1", 0.5}, {"q2", 0.5}, {"q3", 0.5}})};
    std::vector<ScoreRecord> human = {rec("q1", "human", "Ans", 1.0), rec("q2", "human", "Ans", 2.0),
                                      rec("q3", "human", "Ans", 3.0)};
    auto table = make_report(all, human, {});
    CHECK_FALSE(table.cells[0][1].has_value());
    bool warned = false;
    for (const auto& w : table.warnings)
        if (w.find("HC") != std::string::npos) warned = true;
    CHECK(warned);
}

TEST_CASE("question ids outside the intersection are dropped with a warning") {
    std::vector<ScoreSeries> all = {
        series("sge", "Ans", "m", {{"q1", 0.2}, {"q2", 0.4}}),
        series("bleu", "Ans", "m", {{"q1", 0.6}, {"q2", 0.8}, {"q3", 1.0}}),
    };
    auto table = make_report(all, {}, {});
    REQUIRE(table.warnings.size() == 1);
    CHECK(table.warnings[0].find("bleu/Ans/m") != std::string::npos);
    CHECK(table.warnings[0].find("covers 3") != std::string::npos);
    // The bleu mean excludes q3: (0.6 + 0.8) / 2.
    CHECK(*table.cells[1][0] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("empty series are omitted with a warning; nothing left is an error") {
    std::vector<ScoreSeries> one_empty = {series("sge", "Ans", "m", {{"q1", 0.5}}),
                                          series("bleu", "QP", "", {})};
    auto table = make_report(one_empty, {}, {});
    REQUIRE(table.warnings.size() == 1);
    CHECK(table.warnings[0].find("bleu/QP is empty") != std::string::npos);
    CHECK(table.column_labels == std::vector<std::string>{"Ans m"});

    CHECK_THROWS_AS(make_report({series("sge", "Ans", "m", {})}, {}, {}), std::invalid_argument);
    std::vector<ScoreSeries> disjoint = {series("sge", "Ans", "m", {{"q1", 0.5}}),
                                         series("bleu", "Ans", "m", {{"q2", 0.5}})};
    CHECK_THROWS_AS(make_report(disjoint, {}, {}), std::runtime_error);
}

TEST_CASE("text rendering shows dashes, warnings, and numbered notes") {
    std::vector<ScoreSeries> all = {series("sge", "QP", "", {{"q1", 0.25}}),
                                    series("bleu", "Ans", "m", {{"q1", 0.5}})};
    auto table = make_report(all, {}, {"first note", "second note"});
    std::string text = render_text(table);
    CHECK(text.find("Consistency report") != std::string::npos);
    CHECK(text.find("QP") != std::string::npos);
    CHECK(text.find("0.2500") != std::string::npos);
    CHECK(text.find("-") != std::string::npos);  // missing bleu/QP cell
    CHECK(text.find("[1] first note") != std::string::npos);
    CHECK(text.find("[2] second note") != std::string::npos);
}

TEST_CASE("tsv rendering is machine-readable with comment-prefixed extras") {
    std::vector<ScoreSeries> all = {series("sge", "QP", "", {{"q1", 0.25}, {"q2", 0.75}}),
                                    series("bleu", "Ans", "m", {{"q1", 0.5}, {"q2", 1.0}})};
    auto table = make_report(all, {}, {"a note"});
    std::string tsv = render_tsv(table);
    std::istringstream lines(tsv);
    std::string header, row1, row2;
    std::getline(lines, header);
    std::getline(lines, row1);
    std::getline(lines, row2);
    CHECK(header == "metric\tQP\tAns m");
    CHECK(row1 == "SGE\t0.500000\t");
    CHECK(row2 == "BLEU\t\t0.750000");
    std::string rest((std::istreambuf_iterator<char>(lines)), std::istreambuf_iterator<char>());
    CHECK(rest.find("# note: a note") != std::string::npos);
}
