#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>

#include "semcon/records.hpp"

using namespace semcon;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("semcon-records-" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("question records round-trip field-for-field") {
    fs::path dir = temp_dir("roundtrip");
    std::vector<QuestionRecord> records = {
        {"q1", "Is it okay to lie?", {{"topic", "honesty"}, {"split", "dev"}}},
        {"q2", "Should you share? Déjà vu — naïve café.", {}},
    };
    save_records(records, dir / "q.jsonl");
    auto loaded = load_records<QuestionRecord>(dir / "q.jsonl");
    CHECK(loaded == records);
}

TEST_CASE("empty record list round-trips to an empty file") {
    fs::path dir = temp_dir("empty");
    save_records(std::vector<RotRecord>{}, dir / "r.jsonl");
    CHECK(load_records<RotRecord>(dir / "r.jsonl").empty());
    CHECK(fs::file_size(dir / "r.jsonl") == 0);
}

TEST_CASE("all four record kinds round-trip") {
    fs::path dir = temp_dir("kinds");
    std::vector<ParaphraseRecord> paras = {{"q1.p0", "q1", "Is lying okay?", 0.93, true},
                                           {"q1.p1", "q1", "ok to lie?", 0.71, false}};
    std::vector<ResponseRecord> resps = {
        {"q1.p0.r-m", "q1.p0", "model-x", "No, honesty matters.", {0.3, 128}}};
    std::vector<RotRecord> rots = {{"q1.p0.r-m.rot", "q1.p0.r-m", "Do not deceive people."}};
    save_records(paras, dir / "p.jsonl");
    save_records(resps, dir / "r.jsonl");
    save_records(rots, dir / "t.jsonl");
    CHECK(load_records<ParaphraseRecord>(dir / "p.jsonl") == paras);
    CHECK(load_records<ResponseRecord>(dir / "r.jsonl") == resps);
    CHECK(load_records<RotRecord>(dir / "t.jsonl") == rots);
}

TEST_CASE("malformed line errors name the line number") {
    fs::path dir = temp_dir("malformed");
    {
        std::ofstream out(dir / "bad.jsonl");
        out << R"({"id":"q1","text":"fine"})" << "\n";
        out << R"({"id":"q2","text")" << "\n";  // truncated
    }
    CHECK_THROWS_WITH_AS(load_records<QuestionRecord>(dir / "bad.jsonl"),
                         doctest::Contains("line 2"), std::runtime_error);
}

TEST_CASE("duplicate ids are rejected") {
    fs::path dir = temp_dir("dupes");
    {
        std::ofstream out(dir / "dup.jsonl");
        out << R"({"id":"q1","text":"one"})" << "\n";
        out << R"({"id":"q1","text":"two"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(load_records<QuestionRecord>(dir / "dup.jsonl"),
                         doctest::Contains("duplicate"), std::runtime_error);
}

TEST_CASE("whitespace-only text is rejected") {
    fs::path dir = temp_dir("blank");
    {
        std::ofstream out(dir / "blank.jsonl");
        out << R"({"id":"q1","text":"   "})" << "\n";
    }
    CHECK_THROWS_AS(load_records<QuestionRecord>(dir / "blank.jsonl"), std::runtime_error);
}

TEST_CASE("missing file errors") {
    CHECK_THROWS_AS(load_records<QuestionRecord>("/nonexistent/nope.jsonl"), std::runtime_error);
}

TEST_CASE("save leaves no partial file behind on success") {
    fs::path dir = temp_dir("atomic");
    std::vector<QuestionRecord> records = {{"q1", "text", {}}};
    save_records(records, dir / "out.jsonl");
    CHECK(fs::exists(dir / "out.jsonl"));
    CHECK_FALSE(fs::exists(dir / "out.jsonl.tmp"));
}

TEST_CASE("lineage validation accepts resolving references and rejects dangling ones") {
    std::vector<QuestionRecord> questions = {{"q1", "text", {}}};
    std::vector<ParaphraseRecord> paras = {{"q1.p0", "q1", "text", 0.9, true}};
    CHECK_NOTHROW(validate_lineage(paras, questions));

    std::vector<ParaphraseRecord> dangling = {{"qX.p0", "qX", "text", 0.9, true}};
    CHECK_THROWS_AS(validate_lineage(dangling, questions), std::runtime_error);

    std::vector<ResponseRecord> resps = {{"r1", "q1.p0", "m", "answer", {}}};
    CHECK_NOTHROW(validate_lineage(resps, paras));
    std::vector<RotRecord> rots = {{"t1", "r-missing", "rule"}};
    CHECK_THROWS_AS(validate_lineage(rots, resps), std::runtime_error);
}

TEST_CASE("gen_params survive the round trip") {
    fs::path dir = temp_dir("genparams");
    std::vector<ResponseRecord> resps = {{"r1", "p1", "m", "answer", {0.7, 64}}};
    save_records(resps, dir / "r.jsonl");
    auto loaded = load_records<ResponseRecord>(dir / "r.jsonl");
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].gen_params.temperature == doctest::Approx(0.7));
    CHECK(loaded[0].gen_params.max_tokens == 64);
}
