#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace semcon {

// One line of a scores JSONL file.
struct ScoreRecord {
    std::string question_id;
    std::string metric;    // "sge" | "bleu" | "rouge_l" | "cosine" | "human" | ...
    std::string variant;   // "Ans" | "RoT" | "QP"
    double value = 0.0;
    nlohmann::ordered_json breakdown = nlohmann::ordered_json::object();
};

std::vector<ScoreRecord> load_scores(const std::filesystem::path& path);
void save_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);

// Scores one question's group of texts with one metric, filling the metric's
// breakdown. `metric` ∈ {sge, bleu, rouge_l, cosine}; `vectors` (row-aligned
// embeddings) are consulted only by sge and cosine and must then match
// `texts` in size. Requires at least two texts.
ScoreRecord score_texts(const std::string& question_id, const std::string& metric,
                        const std::string& variant, const std::vector<std::string>& texts,
                        const std::vector<std::vector<double>>& vectors);

// A scores file plus the attribution that the five-field schema itself does
// not carry: which model (empty for QP) produced the underlying texts.
struct ScoreSeries {
    std::string metric;
    std::string variant;
    std::string model;  // empty for model-independent series (QP)
    std::vector<ScoreRecord> records;
};

struct ReportTable {
    std::vector<std::string> row_labels;     // one per metric
    std::vector<std::string> column_labels;  // QP, per-model Ans/RoT, HC columns
    std::vector<std::vector<std::optional<double>>> cells;  // [row][col]
    std::vector<std::string> footnotes;
    std::vector<std::string> warnings;
};

// Aggregates score series into the table: mean per (metric, variant, model)
// over the intersection of question ids across all series (mismatches are
// warned). Human scores, when present, add Pearson/Spearman columns per
// variant, computed on per-question values pooled by mean across models.
// Throws when the question-id intersection is empty.
ReportTable make_report(const std::vector<ScoreSeries>& series,
                        const std::vector<ScoreRecord>& human_scores,
                        const std::vector<std::string>& footnotes);

std::string render_text(const ReportTable& table);
std::string render_tsv(const ReportTable& table);

}  // namespace semcon
