#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace semcon {

// Corpus lineage: question -> paraphrase -> response -> rule of thumb.
// Every child record keys its parent by id.

struct QuestionRecord {
    std::string id;
    std::string text;
    std::map<std::string, std::string> meta;
    bool operator==(const QuestionRecord&) const = default;
};

struct ParaphraseRecord {
    std::string id;
    std::string question_id;
    std::string text;
    double parascore = 0.0;
    bool accepted = false;
    bool operator==(const ParaphraseRecord&) const = default;
};

/// Generation-parameter snapshot stored on each response.
struct GenParams {
    double temperature = 0.0;
    int max_tokens = 256;
    bool operator==(const GenParams&) const = default;
};

struct ResponseRecord {
    std::string id;
    std::string paraphrase_id;
    std::string model_id;
    std::string text;
    GenParams gen_params;
    bool operator==(const ResponseRecord&) const = default;
};

struct RotRecord {
    std::string id;
    std::string response_id;
    std::string text;
    bool operator==(const RotRecord&) const = default;
};

/// Loads line-delimited JSON records in file order. Throws std::runtime_error
/// naming the line number on malformed lines, invariant violations, or
/// duplicate ids.
template <typename Record>
std::vector<Record> load_records(const std::filesystem::path& path);

/// Writes one JSON object per line. Atomic: a temp file in the destination
/// directory is renamed over the target, so readers never see a partial file.
template <typename Record>
void save_records(const std::vector<Record>& records, const std::filesystem::path& path);

// Parent-reference validation; throws on a dangling reference.
void validate_lineage(const std::vector<ParaphraseRecord>& children,
                      const std::vector<QuestionRecord>& parents);
void validate_lineage(const std::vector<ResponseRecord>& children,
                      const std::vector<ParaphraseRecord>& parents);
void validate_lineage(const std::vector<RotRecord>& children,
                      const std::vector<ResponseRecord>& parents);

}  // namespace semcon
