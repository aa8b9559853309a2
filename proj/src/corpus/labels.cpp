#include <algorithm>
#include <map>

#include "trialsent/corpus.hpp"
#include "trialsent/error.hpp"

namespace trialsent::corpus {

Json to_json(const RaterAnnotation& a) {
    return Json{{"rater", a.rater_id}, {"pmid", a.pmid}, {"label", to_string(a.label)}};
}

RaterAnnotation annotation_from_json(const Json& row) {
    try {
        return {row.at("rater").get<std::string>(), row.at("pmid").get<std::string>(),
                parse_real_label(row.at("label").get<std::string>())};
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed annotation row: ") + e.what());
    }
}

std::vector<RaterAnnotation> read_annotations(const std::filesystem::path& path) {
    std::vector<RaterAnnotation> out;
    for (const auto& row : read_jsonl(path)) out.push_back(annotation_from_json(row));
    return out;
}

void write_annotations(const std::filesystem::path& path, const std::vector<RaterAnnotation>& rows) {
    std::vector<Json> docs;
    for (const auto& a : rows) docs.push_back(to_json(a));
    write_jsonl(path, docs);
}

Json to_json(const GoldLabel& g) {
    Json votes = Json::object();
    for (auto c : kRealClasses) votes[std::string(to_string(c))] = g.vote_counts[class_index(c)];
    return Json{{"pmid", g.pmid},
                {"label", g.label ? Json(to_string(*g.label)) : Json(nullptr)},
                {"votes", std::move(votes)},
                {"resolved", g.resolved}};
}

GoldLabel gold_from_json(const Json& row) {
    try {
        GoldLabel g;
        g.pmid = row.at("pmid").get<std::string>();
        g.resolved = row.value("resolved", true);
        if (const auto& l = row.at("label"); !l.is_null()) g.label = parse_real_label(l.get<std::string>());
        if (row.contains("votes"))
            for (auto c : kRealClasses)
                g.vote_counts[class_index(c)] = row["votes"].value(std::string(to_string(c)), 0);
        if (g.resolved != g.label.has_value())
            throw InputError("gold row " + g.pmid + ": resolved flag disagrees with label");
        return g;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed gold row: ") + e.what());
    }
}

std::vector<GoldLabel> read_gold(const std::filesystem::path& path) {
    std::vector<GoldLabel> out;
    for (const auto& row : read_jsonl(path)) out.push_back(gold_from_json(row));
    return out;
}

void write_gold(const std::filesystem::path& path, const std::vector<GoldLabel>& rows) {
    std::vector<Json> docs;
    for (const auto& g : rows) docs.push_back(to_json(g));
    write_jsonl(path, docs);
}

std::unordered_map<std::string, SentimentLabel> read_label_map(const std::filesystem::path& path) {
    std::unordered_map<std::string, SentimentLabel> out;
    for (const auto& row : read_jsonl(path)) {
        if (!row.contains("pmid") || !row.contains("label"))
            throw ParseError(path.string() + ": rows need pmid and label");
        if (row["label"].is_null()) continue;
        const auto label = parse_label(row["label"].get<std::string>());
        if (!is_real(label)) continue;
        const auto pmid = row["pmid"].get<std::string>();
        const auto [it, inserted] = out.emplace(pmid, label);
        if (!inserted && it->second != label)
            throw InputError(path.string() + ": conflicting labels for pmid " + pmid);
    }
    return out;
}

GoldLabel majority_label(std::span<const RaterAnnotation> annotations) {
    if (annotations.size() != 3)
        throw InputError("majority_label needs exactly 3 annotations, got " +
                         std::to_string(annotations.size()));
    GoldLabel g;
    g.pmid = annotations[0].pmid;
    std::set<std::string> raters;
    for (const auto& a : annotations) {
        if (a.pmid != g.pmid) throw InputError("majority_label: mixed pmids " + g.pmid + "/" + a.pmid);
        if (!raters.insert(a.rater_id).second)
            throw InputError("majority_label: duplicate rater " + a.rater_id + " for " + g.pmid);
        if (!is_real(a.label)) throw InputError("majority_label: UNK_UNK annotation for " + g.pmid);
        ++g.vote_counts[class_index(a.label)];
    }
    const auto best = std::max_element(g.vote_counts.begin(), g.vote_counts.end());
    // With three votes a strict plurality exists iff some class has >= 2.
    if (*best >= 2) {
        g.resolved = true;
        g.label = kRealClasses[static_cast<std::size_t>(best - g.vote_counts.begin())];
    }
    return g;
}

Aggregation aggregate(const std::vector<RaterAnnotation>& annotations,
                      const std::set<std::string>& gold_raters) {
    if (gold_raters.size() != 3) throw ConfigError("exactly three gold raters must be designated");
    std::map<std::string, std::vector<RaterAnnotation>> by_pmid;
    Aggregation out;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& a : annotations) {
        if (!seen.emplace(a.rater_id, a.pmid).second)
            throw InputError("duplicate annotation by " + a.rater_id + " for " + a.pmid);
        if (gold_raters.count(a.rater_id))
            by_pmid[a.pmid].push_back(a);
        else
            out.held_out.push_back(a);
    }
    std::string incomplete;
    for (const auto& [pmid, rows] : by_pmid) {
        if (rows.size() != 3) {
            incomplete += (incomplete.empty() ? "" : ", ") + pmid;
            continue;
        }
        auto g = majority_label(rows);
        if (!g.resolved) out.unresolved.push_back(g);
        out.gold.push_back(std::move(g));
    }
    if (!incomplete.empty())
        throw InputError("pmids lacking a full set of gold-rater annotations: " + incomplete);
    return out;
}

}  // namespace trialsent::corpus
