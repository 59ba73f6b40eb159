#include "semcon/records.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "semcon/text.hpp"

namespace semcon {

using json = nlohmann::ordered_json;

namespace {

std::string require_string(const json& j, const char* field) {
    if (!j.contains(field) || !j[field].is_string())
        throw std::runtime_error(std::string("missing or non-string field \"") + field + "\"");
    return j[field].get<std::string>();
}

json record_to_json(const QuestionRecord& r) {
    json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["meta"] = r.meta;
    return j;
}

json record_to_json(const ParaphraseRecord& r) {
    json j;
    j["id"] = r.id;
    j["question_id"] = r.question_id;
    j["text"] = r.text;
    j["parascore"] = r.parascore;
    j["accepted"] = r.accepted;
    return j;
}

json record_to_json(const ResponseRecord& r) {
    json j;
    j["id"] = r.id;
    j["paraphrase_id"] = r.paraphrase_id;
    j["model_id"] = r.model_id;
    j["text"] = r.text;
    j["gen_params"] = {{"temperature", r.gen_params.temperature},
                       {"max_tokens", r.gen_params.max_tokens}};
    return j;
}

json record_to_json(const RotRecord& r) {
    json j;
    j["id"] = r.id;
    j["response_id"] = r.response_id;
    j["text"] = r.text;
    return j;
}

void record_from_json(const json& j, QuestionRecord& r) {
    r.id = require_string(j, "id");
    r.text = require_string(j, "text");
    r.meta.clear();
    if (j.contains("meta")) {
        if (!j["meta"].is_object()) throw std::runtime_error("field \"meta\" must be an object");
        for (auto& [k, v] : j["meta"].items()) {
            if (!v.is_string()) throw std::runtime_error("meta values must be strings");
            r.meta[k] = v.get<std::string>();
        }
    }
    if (r.id.empty()) throw std::runtime_error("empty id");
    if (trim(r.text).empty()) throw std::runtime_error("question text empty after trim");
}

void record_from_json(const json& j, ParaphraseRecord& r) {
    r.id = require_string(j, "id");
    r.question_id = require_string(j, "question_id");
    r.text = require_string(j, "text");
    if (!j.contains("parascore") || !j["parascore"].is_number())
        throw std::runtime_error("missing or non-numeric field \"parascore\"");
    r.parascore = j["parascore"].get<double>();
    if (!j.contains("accepted") || !j["accepted"].is_boolean())
        throw std::runtime_error("missing or non-boolean field \"accepted\"");
    r.accepted = j["accepted"].get<bool>();
    if (r.id.empty()) throw std::runtime_error("empty id");
    if (r.question_id.empty()) throw std::runtime_error("empty question_id");
    if (!std::isfinite(r.parascore) || r.parascore < 0.0)
        throw std::runtime_error("parascore must be finite and non-negative");
}

void record_from_json(const json& j, ResponseRecord& r) {
    r.id = require_string(j, "id");
    r.paraphrase_id = require_string(j, "paraphrase_id");
    r.model_id = require_string(j, "model_id");
    r.text = require_string(j, "text");
    r.gen_params = GenParams{};
    if (j.contains("gen_params")) {
        const json& g = j["gen_params"];
        if (!g.is_object()) throw std::runtime_error("field \"gen_params\" must be an object");
        if (g.contains("temperature")) r.gen_params.temperature = g["temperature"].get<double>();
        if (g.contains("max_tokens")) r.gen_params.max_tokens = g["max_tokens"].get<int>();
    }
    if (r.id.empty()) throw std::runtime_error("empty id");
    if (r.paraphrase_id.empty()) throw std::runtime_error("empty paraphrase_id");
    if (r.model_id.empty()) throw std::runtime_error("empty model_id");
}

void record_from_json(const json& j, RotRecord& r) {
    r.id = require_string(j, "id");
    r.response_id = require_string(j, "response_id");
    r.text = require_string(j, "text");
    if (r.id.empty()) throw std::runtime_error("empty id");
    if (r.response_id.empty()) throw std::runtime_error("empty response_id");
    if (trim(r.text).empty()) throw std::runtime_error("rot text empty after trim");
}

}  // namespace

template <typename Record>
std::vector<Record> load_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());

    std::vector<Record> records;
    std::set<std::string> seen_ids;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Record r;
        try {
            json j = json::parse(line);
            record_from_json(j, r);
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
        if (!seen_ids.insert(r.id).second)
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                                     ": duplicate id \"" + r.id + "\"");
        records.push_back(std::move(r));
    }
    return records;
}

template <typename Record>
void save_records(const std::vector<Record>& records, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        for (const Record& r : records) out << record_to_json(r).dump() << '\n';
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

template std::vector<QuestionRecord> load_records<QuestionRecord>(const std::filesystem::path&);
template std::vector<ParaphraseRecord> load_records<ParaphraseRecord>(const std::filesystem::path&);
template std::vector<ResponseRecord> load_records<ResponseRecord>(const std::filesystem::path&);
template std::vector<RotRecord> load_records<RotRecord>(const std::filesystem::path&);

template void save_records<QuestionRecord>(const std::vector<QuestionRecord>&,
                                           const std::filesystem::path&);
template void save_records<ParaphraseRecord>(const std::vector<ParaphraseRecord>&,
                                             const std::filesystem::path&);
template void save_records<ResponseRecord>(const std::vector<ResponseRecord>&,
                                           const std::filesystem::path&);
template void save_records<RotRecord>(const std::vector<RotRecord>&, const std::filesystem::path&);

namespace {

template <typename Child, typename Parent>
void check_refs(const std::vector<Child>& children, const std::vector<Parent>& parents,
                const std::string& (*ref)(const Child&), const char* what) {
    std::set<std::string> ids;
    for (const Parent& p : parents) ids.insert(p.id);
    for (const Child& c : children) {
        if (!ids.count(ref(c)))
            throw std::runtime_error(std::string("record \"") + c.id + "\" references unknown " +
                                     what + " \"" + ref(c) + "\"");
    }
}

}  // namespace

void validate_lineage(const std::vector<ParaphraseRecord>& children,
                      const std::vector<QuestionRecord>& parents) {
    check_refs<ParaphraseRecord, QuestionRecord>(
        children, parents, +[](const ParaphraseRecord& r) -> const std::string& { return r.question_id; },
        "question");
}

void validate_lineage(const std::vector<ResponseRecord>& children,
                      const std::vector<ParaphraseRecord>& parents) {
    check_refs<ResponseRecord, ParaphraseRecord>(
        children, parents, +[](const ResponseRecord& r) -> const std::string& { return r.paraphrase_id; },
        "paraphrase");
}

void validate_lineage(const std::vector<RotRecord>& children,
                      const std::vector<ResponseRecord>& parents) {
    check_refs<RotRecord, ResponseRecord>(
        children, parents, +[](const RotRecord& r) -> const std::string& { return r.response_id; },
        "response");
}

}  // namespace semcon
