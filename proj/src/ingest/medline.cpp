#include <algorithm>
#include <cctype>
#include <sstream>

#include <spdlog/spdlog.h>

#include "trialsent/error.hpp"
#include "trialsent/ingest.hpp"

namespace trialsent::ingest {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

bool iequals_at(const std::string& text, std::size_t pos, const std::string& word) {
    if (pos + word.size() > text.size()) return false;
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (std::toupper(static_cast<unsigned char>(text[pos + i])) !=
            std::toupper(static_cast<unsigned char>(word[i])))
            return false;
    }
    return true;
}

// A heading may start the text or follow sentence-final punctuation.
bool heading_boundary(const std::string& text, std::size_t pos) {
    if (pos == 0) return true;
    if (!std::isspace(static_cast<unsigned char>(text[pos - 1]))) return false;
    std::size_t j = pos;
    while (j > 0 && std::isspace(static_cast<unsigned char>(text[j - 1]))) --j;
    if (j == 0) return true;
    const char prev = text[j - 1];
    return prev == '.' || prev == '!' || prev == '?' || prev == ':' || prev == ')';
}

std::string first_line(const std::string& text) {
    const auto nl = text.find('\n');
    return trim(text.substr(0, std::min<std::size_t>(nl, 80)));
}

}  // namespace

void FieldQuery::validate() const {
    if (field_name.empty()) throw InputError("field query: field name must be non-empty");
    if (max_records < 1) throw InputError("field query: max_records must be >= 1");
    if (date_range && date_range->from > date_range->to)
        throw InputError("field query: date range start after end");
}

HeadingLexicon HeadingLexicon::defaults() {
    return {{"BACKGROUND", "INTRODUCTION", "OBJECTIVE", "OBJECTIVES", "AIM", "AIMS", "PURPOSE",
             "DESIGN", "SETTING", "PARTICIPANTS", "PATIENTS", "INTERVENTION", "INTERVENTIONS",
             "MAIN OUTCOME MEASURES", "METHODS", "MATERIALS AND METHODS", "METHODS AND RESULTS",
             "RESULTS", "FINDINGS", "CONCLUSION", "CONCLUSIONS", "CONCLUSIONS AND RELEVANCE",
             "INTERPRETATION", "TRIAL REGISTRATION", "CLINICAL TRIAL REGISTRATION"}};
}

Json to_json(const AbstractRecord& record) {
    Json sections = Json::array();
    for (const auto& s : record.sections) sections.push_back(Json::array({s.heading, s.text}));
    return Json{{"pmid", record.pmid},         {"title", record.title},
                {"journal_id", record.journal_id}, {"field", record.field},
                {"year", record.year},         {"abstract", record.abstract_text},
                {"structured", record.is_structured}, {"sections", std::move(sections)}};
}

AbstractRecord record_from_json(const Json& row) {
    try {
        AbstractRecord r;
        r.pmid = row.at("pmid").get<std::string>();
        r.title = row.value("title", "");
        r.journal_id = row.value("journal_id", "");
        r.field = row.value("field", "");
        r.year = row.value("year", 0);
        r.abstract_text = row.at("abstract").get<std::string>();
        r.is_structured = row.value("structured", false);
        for (const auto& s : row.value("sections", Json::array()))
            r.sections.push_back({s.at(0).get<std::string>(), s.at(1).get<std::string>()});
        if (r.pmid.empty()) throw ParseError("corpus row with empty pmid");
        return r;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed corpus row: ") + e.what());
    }
}

std::vector<AbstractRecord> read_corpus(const std::filesystem::path& path) {
    std::vector<AbstractRecord> records;
    std::set<std::string> seen;
    for (const auto& row : read_jsonl(path)) {
        auto r = record_from_json(row);
        if (!seen.insert(r.pmid).second)
            throw InputError("duplicate pmid " + r.pmid + " in " + path.string());
        records.push_back(std::move(r));
    }
    return records;
}

void write_corpus(const std::filesystem::path& path, const std::vector<AbstractRecord>& records) {
    std::vector<Json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(to_json(r));
    write_jsonl(path, rows);
}

std::vector<RawMedlineRecord> split_medline(const std::string& text) {
    std::vector<RawMedlineRecord> out;
    std::istringstream in(text);
    std::string line, current;
    auto flush = [&] {
        if (current.find_first_not_of(" \t\r\n") != std::string::npos) out.push_back({current});
        current.clear();
    };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) {
            flush();
            continue;
        }
        current += line;
        current += '\n';
    }
    flush();
    return out;
}

std::vector<Section> split_sections(const std::string& abstract, const HeadingLexicon& lexicon) {
    auto headings = lexicon.headings;
    std::sort(headings.begin(), headings.end(),
              [](const auto& a, const auto& b) { return a.size() > b.size(); });

    struct Hit {
        std::size_t pos, len;
        const std::string* heading;
    };
    std::vector<Hit> hits;
    for (std::size_t i = 0; i < abstract.size(); ++i) {
        if (!heading_boundary(abstract, i)) continue;
        for (const auto& h : headings) {
            if (iequals_at(abstract, i, h) && i + h.size() < abstract.size() &&
                abstract[i + h.size()] == ':') {
                hits.push_back({i, h.size(), &h});
                i += h.size();
                break;
            }
        }
    }
    std::vector<Section> sections;
    if (hits.empty()) return sections;
    const auto lead = trim(std::string_view(abstract).substr(0, hits.front().pos));
    if (!lead.empty()) sections.push_back({"", lead});
    for (std::size_t k = 0; k < hits.size(); ++k) {
        const auto body_start = hits[k].pos + hits[k].len + 1;
        const auto body_end = k + 1 < hits.size() ? hits[k + 1].pos : abstract.size();
        sections.push_back({*hits[k].heading,
                            trim(std::string_view(abstract).substr(body_start, body_end - body_start))});
    }
    return sections;
}

std::optional<AbstractRecord> parse_medline_record(const RawMedlineRecord& raw,
                                                   const HeadingLexicon& lexicon,
                                                   const std::string& field) {
    std::vector<std::pair<std::string, std::string>> tags;
    std::istringstream in(raw.record_text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.size() >= 6 && line.compare(0, 6, "      ") == 0) {
            if (!tags.empty()) {
                tags.back().second += ' ';
                tags.back().second += trim(line);
            }
            continue;
        }
        if (line.size() >= 5 && line[4] == '-') {
            tags.emplace_back(trim(line.substr(0, 4)), trim(line.substr(5)));
        }
    }
    auto tag = [&](std::string_view name) -> std::optional<std::string> {
        for (const auto& [k, v] : tags)
            if (k == name) return v;
        return std::nullopt;
    };

    AbstractRecord record;
    const auto pmid = tag("PMID");
    if (!pmid || pmid->empty())
        throw ParseError("MEDLINE record without PMID: '" + first_line(raw.record_text) + "'");
    record.pmid = *pmid;

    const auto abstract = tag("AB");
    if (!abstract || abstract->empty()) {
        spdlog::warn("skipping PMID {}: no abstract", record.pmid);
        return std::nullopt;
    }
    record.abstract_text = *abstract;
    record.title = tag("TI").value_or("");
    record.journal_id = tag("JID").value_or("");
    record.field = field;
    for (const char* date_tag : {"DP", "DEP", "EDAT"}) {
        const auto dp = tag(date_tag);
        if (dp && dp->size() >= 4 && std::all_of(dp->begin(), dp->begin() + 4, ::isdigit)) {
            record.year = std::stoi(dp->substr(0, 4));
            break;
        }
    }
    record.sections = split_sections(record.abstract_text, lexicon);
    record.is_structured = !record.sections.empty();
    return record;
}

}  // namespace trialsent::ingest
