#include "semcon/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "semcon/baselines.hpp"
#include "semcon/semgraph.hpp"
#include "semcon/stats.hpp"
#include "semcon/text.hpp"

namespace semcon {

using ordered_json = nlohmann::ordered_json;

std::vector<ScoreRecord> load_scores(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<ScoreRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            ordered_json j = ordered_json::parse(line);
            ScoreRecord r;
            r.question_id = j.at("question_id").get<std::string>();
            r.metric = j.at("metric").get<std::string>();
            r.variant = j.at("variant").get<std::string>();
            r.value = j.at("value").get<double>();
            r.breakdown = j.value("breakdown", ordered_json::object());
            if (r.question_id.empty()) throw std::runtime_error("empty question_id");
            if (!std::isfinite(r.value)) throw std::runtime_error("non-finite value");
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    return out;
}

void save_scores(const std::vector<ScoreRecord>& records, const std::filesystem::path& path) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        for (const ScoreRecord& r : records) {
            ordered_json j;
            j["question_id"] = r.question_id;
            j["metric"] = r.metric;
            j["variant"] = r.variant;
            j["value"] = r.value;
            j["breakdown"] = r.breakdown;
            out << j.dump() << '\n';
        }
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

ScoreRecord score_texts(const std::string& question_id, const std::string& metric,
                        const std::string& variant, const std::vector<std::string>& texts,
                        const std::vector<std::vector<double>>& vectors) {
    if (texts.size() < 2)
        throw std::invalid_argument("scoring needs at least two texts per question");
    ScoreRecord r;
    r.question_id = question_id;
    r.metric = metric;
    r.variant = variant;
    const std::size_t n = texts.size();
    if (metric == "sge" || metric == "cosine") {
        if (vectors.size() != texts.size())
            throw std::invalid_argument("metric \"" + metric +
                                        "\" needs one embedding vector per text");
    }
    if (metric == "sge") {
        SgeBreakdown b = sge_from_vectors(vectors);
        r.value = b.sge;
        ordered_json bd;
        bd["n"] = b.n;
        bd["D"] = b.mean_distance;
        bd["H"] = b.entropy;
        bd["raw_entropy"] = b.raw_entropy;
        bd["degenerate"] = b.degenerate;
        bd["clamped"] = b.clamped;
        bd["f"] = b.f;
        bd["p"] = b.p;
        r.breakdown = std::move(bd);
    } else if (metric == "bleu" || metric == "rouge_l") {
        r.value = pairwise_consistency(texts,
                                       metric == "bleu" ? PairMetric::Bleu : PairMetric::RougeL);
        r.breakdown = {{"n", n}, {"ordered_pairs", n * (n - 1)}};
    } else if (metric == "cosine") {
        r.value = cosine_consistency(vectors);
        r.breakdown = {{"n", n}, {"unordered_pairs", n * (n - 1) / 2}};
    } else {
        throw std::invalid_argument("unknown metric \"" + metric + "\"");
    }
    return r;
}

namespace {

std::string metric_display(const std::string& metric) {
    if (metric == "sge") return "SGE";
    if (metric == "bleu") return "BLEU";
    if (metric == "rouge_l") return "ROUGE-L";
    if (metric == "cosine") return "Cosine";
    return metric;
}

std::string format_cell(double v, const char* fmt) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

std::map<std::string, double> series_values(const ScoreSeries& s) {
    std::map<std::string, double> m;
    for (const ScoreRecord& r : s.records) m[r.question_id] = r.value;
    return m;
}

std::string series_label(const ScoreSeries& s) {
    std::string label = s.metric + "/" + s.variant;
    if (!s.model.empty()) label += "/" + s.model;
    return label;
}

}  // namespace

ReportTable make_report(const std::vector<ScoreSeries>& all_series,
                        const std::vector<ScoreRecord>& human_scores,
                        const std::vector<std::string>& footnotes) {
    ReportTable table;
    table.footnotes = footnotes;

    // Empty series carry no question ids and would zero out the intersection;
    // drop them with a warning instead.
    std::vector<ScoreSeries> series;
    for (const ScoreSeries& s : all_series) {
        if (s.records.empty())
            table.warnings.push_back("series " + series_label(s) + " is empty; omitted");
        else
            series.push_back(s);
    }
    if (series.empty()) throw std::invalid_argument("no non-empty score series to report");

    // Question-id universe: intersection across all series, with per-series
    // mismatches surfaced as warnings rather than silent drops.
    std::vector<std::map<std::string, double>> values;
    values.reserve(series.size());
    std::set<std::string> universe;
    for (std::size_t i = 0; i < series.size(); ++i) {
        values.push_back(series_values(series[i]));
        std::set<std::string> ids;
        for (const auto& [qid, _] : values.back()) ids.insert(qid);
        if (i == 0) {
            universe = std::move(ids);
        } else {
            std::set<std::string> inter;
            std::set_intersection(universe.begin(), universe.end(), ids.begin(), ids.end(),
                                  std::inserter(inter, inter.begin()));
            universe = std::move(inter);
        }
    }
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (values[i].size() != universe.size())
            table.warnings.push_back("series " + series_label(series[i]) + " covers " +
                                     std::to_string(values[i].size()) +
                                     " questions; table restricted to the common " +
                                     std::to_string(universe.size()));
    }
    if (universe.empty())
        throw std::runtime_error("score series share no question ids; nothing to report");

    // Row order: canonical metrics first, anything else in first-seen order.
    const std::vector<std::string> canonical = {"sge", "bleu", "rouge_l", "cosine"};
    std::vector<std::string> metrics;
    for (const std::string& m : canonical)
        for (const ScoreSeries& s : series)
            if (s.metric == m && std::find(metrics.begin(), metrics.end(), m) == metrics.end())
                metrics.push_back(m);
    for (const ScoreSeries& s : series)
        if (std::find(metrics.begin(), metrics.end(), s.metric) == metrics.end())
            metrics.push_back(s.metric);

    // Column order: QP, then Ans/RoT per model in first-seen model order.
    std::vector<std::string> models;
    for (const ScoreSeries& s : series)
        if (!s.model.empty() && std::find(models.begin(), models.end(), s.model) == models.end())
            models.push_back(s.model);

    struct Column {
        std::string label;
        std::string variant;
        std::string model;
        bool is_hc = false;
        std::string hc_kind;  // "pearson" | "spearman"
    };
    std::vector<Column> columns;
    bool has_qp = std::any_of(series.begin(), series.end(),
                              [](const ScoreSeries& s) { return s.variant == "QP"; });
    if (has_qp) columns.push_back({"QP", "QP", "", false, ""});
    for (const std::string& model : models) {
        for (const char* variant : {"Ans", "RoT"}) {
            bool present = std::any_of(series.begin(), series.end(), [&](const ScoreSeries& s) {
                return s.variant == variant && s.model == model;
            });
            if (present) columns.push_back({std::string(variant) + " " + model, variant, model,
                                            false, ""});
        }
    }

    std::map<std::string, double> human;
    if (!human_scores.empty()) {
        for (const ScoreRecord& r : human_scores) human[r.question_id] = r.value;
        for (const char* variant : {"Ans", "RoT"}) {
            bool present = std::any_of(series.begin(), series.end(), [&](const ScoreSeries& s) {
                return s.variant == variant;
            });
            if (!present) continue;
            columns.push_back({std::string("HC-r ") + variant, variant, "", true, "pearson"});
            columns.push_back({std::string("HC-rho ") + variant, variant, "", true, "spearman"});
        }
    }

    table.row_labels.reserve(metrics.size());
    for (const std::string& m : metrics) table.row_labels.push_back(metric_display(m));
    for (const Column& c : columns) table.column_labels.push_back(c.label);
    table.cells.assign(metrics.size(),
                       std::vector<std::optional<double>>(columns.size(), std::nullopt));

    // Per-question pooled values for a (metric, variant): mean across models.
    auto pooled = [&](const std::string& metric,
                      const std::string& variant) -> std::map<std::string, double> {
        std::map<std::string, double> sums;
        std::map<std::string, int> counts;
        for (std::size_t i = 0; i < series.size(); ++i) {
            if (series[i].metric != metric || series[i].variant != variant) continue;
            for (const auto& [qid, v] : values[i]) {
                if (!universe.count(qid)) continue;
                sums[qid] += v;
                ++counts[qid];
            }
        }
        std::map<std::string, double> out;
        for (const auto& [qid, sum] : sums) out[qid] = sum / counts[qid];
        return out;
    };

    for (std::size_t row = 0; row < metrics.size(); ++row) {
        const std::string& metric = metrics[row];
        for (std::size_t col = 0; col < columns.size(); ++col) {
            const Column& c = columns[col];
            if (c.is_hc) {
                std::map<std::string, double> mine = pooled(metric, c.variant);
                std::vector<double> xs, ys;
                for (const auto& [qid, v] : mine) {
                    auto it = human.find(qid);
                    if (it == human.end()) continue;
                    xs.push_back(v);
                    ys.push_back(it->second);
                }
                if (xs.size() < 2) continue;
                try {
                    table.cells[row][col] =
                        c.hc_kind == "pearson" ? pearson(xs, ys) : spearman(xs, ys);
                } catch (const std::exception& e) {
                    table.warnings.push_back("HC " + c.hc_kind + " undefined for " + metric + "/" +
                                             c.variant + ": " + e.what());
                }
                continue;
            }
            // Mean cell for one (metric, variant, model) series.
            for (std::size_t i = 0; i < series.size(); ++i) {
                if (series[i].metric != metric || series[i].variant != c.variant ||
                    series[i].model != c.model)
                    continue;
                double sum = 0.0;
                std::size_t n = 0;
                for (const auto& [qid, v] : values[i]) {
                    if (!universe.count(qid)) continue;
                    sum += v;
                    ++n;
                }
                if (n > 0) {
                    double mean = sum / static_cast<double>(n);
                    if (mean < 0.0 || mean > 1.0)
                        table.warnings.push_back("mean cell outside [0,1] for " +
                                                 series_label(series[i]));
                    table.cells[row][col] = mean;
                }
                break;
            }
        }
    }

    std::sort(table.warnings.begin(), table.warnings.end());
    return table;
}

std::string render_text(const ReportTable& table) {
    const std::string row_header = "Metric";
    std::size_t label_width = row_header.size();
    for (const std::string& r : table.row_labels) label_width = std::max(label_width, r.size());

    std::vector<std::size_t> widths;
    for (std::size_t c = 0; c < table.column_labels.size(); ++c) {
        std::size_t w = table.column_labels[c].size();
        for (std::size_t r = 0; r < table.row_labels.size(); ++r)
            if (table.cells[r][c])
                w = std::max(w, format_cell(*table.cells[r][c], "%.4f").size());
        widths.push_back(w);
    }

    std::ostringstream out;
    out << "Consistency report\n";
    out << std::string(18, '=') << "\n\n";
    out << row_header << std::string(label_width - row_header.size(), ' ');
    for (std::size_t c = 0; c < table.column_labels.size(); ++c) {
        out << "  " << std::string(widths[c] - table.column_labels[c].size(), ' ')
            << table.column_labels[c];
    }
    out << '\n';
    out << std::string(label_width, '-');
    for (std::size_t c = 0; c < widths.size(); ++c) out << "  " << std::string(widths[c], '-');
    out << '\n';
    for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
        out << table.row_labels[r] << std::string(label_width - table.row_labels[r].size(), ' ');
        for (std::size_t c = 0; c < widths.size(); ++c) {
            std::string cell = table.cells[r][c] ? format_cell(*table.cells[r][c], "%.4f") : "-";
            out << "  " << std::string(widths[c] - cell.size(), ' ') << cell;
        }
        out << '\n';
    }

    if (!table.warnings.empty()) {
        out << "\nWarnings:\n";
        for (const std::string& w : table.warnings) out << "  ! " << w << '\n';
    }
    if (!table.footnotes.empty()) {
        out << "\nNotes:\n";
        for (std::size_t i = 0; i < table.footnotes.size(); ++i)
            out << "  [" << (i + 1) << "] " << table.footnotes[i] << '\n';
    }
    return out.str();
}

std::string render_tsv(const ReportTable& table) {
    std::ostringstream out;
    out << "metric";
    for (const std::string& c : table.column_labels) out << '\t' << c;
    out << '\n';
    for (std::size_t r = 0; r < table.row_labels.size(); ++r) {
        out << table.row_labels[r];
        for (std::size_t c = 0; c < table.column_labels.size(); ++c) {
            out << '\t';
            if (table.cells[r][c]) out << format_cell(*table.cells[r][c], "%.6f");
        }
        out << '\n';
    }
    for (const std::string& w : table.warnings) out << "# warning: " << w << '\n';
    for (const std::string& f : table.footnotes) out << "# note: " << f << '\n';
    return out.str();
}

}  // namespace semcon
