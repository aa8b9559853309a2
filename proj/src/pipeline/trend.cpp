#include <cstdio>
#include <map>

#include <spdlog/spdlog.h>

#include "trialsent/error.hpp"
#include "trialsent/pipeline.hpp"

namespace trialsent::pipeline {

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string_view key_name(GroupBy g) { return g == GroupBy::Year ? "year" : "field"; }

}  // namespace

GroupBy parse_group_by(std::string_view text) {
    if (text == "year") return GroupBy::Year;
    if (text == "field") return GroupBy::Field;
    throw ConfigError("group-by must be 'year' or 'field', got '" + std::string(text) + "'");
}

std::size_t TrendRow::total() const { return counts[0] + counts[1] + counts[2]; }

std::vector<TrendRow> trend(const std::vector<eval::Prediction>& predictions,
                            const std::vector<ingest::AbstractRecord>& records, GroupBy group_by) {
    std::map<std::string, const ingest::AbstractRecord*> by_pmid;
    for (const auto& r : records) by_pmid[r.pmid] = &r;
    std::map<std::string, TrendRow> groups;
    std::string orphans;
    for (const auto& p : predictions) {
        const auto it = by_pmid.find(p.pmid);
        std::string key;
        if (it != by_pmid.end())
            key = group_by == GroupBy::Year ? (it->second->year > 0 ? std::to_string(it->second->year) : "")
                                            : it->second->field;
        if (key.empty()) {
            orphans += (orphans.empty() ? "" : ", ") + p.pmid;
            continue;
        }
        auto& row = groups[key];
        row.key = key;
        ++row.counts[class_index(p.label)];
    }
    if (!orphans.empty())
        throw InputError("trend: predictions without a matching record or " + std::string(key_name(group_by)) + ": " +
                         orphans);
    std::vector<TrendRow> rows;
    for (auto& [_, row] : groups) {
        const double n = static_cast<double>(row.total());
        for (std::size_t c = 0; c < kNumClasses; ++c) row.fractions[c] = static_cast<double>(row.counts[c]) / n;
        rows.push_back(row);
    }
    return rows;
}

std::string render_trend_csv(const std::vector<TrendRow>& rows, GroupBy group_by) {
    std::string out = std::string(key_name(group_by)) +
                      ",positive,negative,neutral,total,fraction_positive,fraction_negative,fraction_neutral\n";
    for (const auto& r : rows) {
        out += r.key;
        for (auto c : r.counts) out += "," + std::to_string(c);
        out += "," + std::to_string(r.total());
        for (auto f : r.fractions) out += "," + fixed(f, 6);
        out += "\n";
    }
    return out;
}

std::string render_trend_table(const std::vector<TrendRow>& rows, GroupBy group_by) {
    std::size_t width = key_name(group_by).size();
    for (const auto& r : rows) width = std::max(width, r.key.size());
    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(w, s.size()), ' ');
        return s;
    };
    std::string out = pad(std::string(key_name(group_by)), width) + "  " + pad("n", 6) + "  POS %   NEG %   NEU %\n";
    for (const auto& r : rows) {
        out += pad(r.key, width) + "  " + pad(std::to_string(r.total()), 6);
        for (auto f : r.fractions) out += "  " + pad(fixed(100.0 * f, 1), 6);
        out += "\n";
    }
    return out;
}

void trend_stage(const std::filesystem::path& predictions, const std::filesystem::path& records, GroupBy group_by,
                 const std::filesystem::path& out_csv) {
    const auto started = utc_timestamp();
    require_artifact(predictions, "classify");
    require_artifact(records, "fetch");
    const auto rows = trend(eval::read_predictions(predictions), ingest::read_corpus(records), group_by);
    write_text(out_csv, render_trend_csv(rows, group_by));
    spdlog::info("trend by {}:\n{}", key_name(group_by), render_trend_table(rows, group_by));
    write_stage_metadata(out_csv, "trend", 0, {predictions, records}, started);
}

}  // namespace trialsent::pipeline
