#include "trialsent/tokens.hpp"

#include "trialsent/error.hpp"

namespace trialsent {

std::size_t TokenSequence::content_length() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
}

Json to_json(const Example& example) {
    Json mask = Json::array();
    for (auto m : example.tokens.mask) mask.push_back(static_cast<int>(m));
    return Json{{"pmid", example.pmid},
                {"ids", example.tokens.ids},
                {"mask", std::move(mask)},
                {"label", to_string(example.label)}};
}

Example example_from_json(const Json& row) {
    try {
        Example e;
        e.pmid = row.at("pmid").get<std::string>();
        e.tokens.ids = row.at("ids").get<std::vector<std::int32_t>>();
        for (const auto& m : row.at("mask")) {
            const int v = m.get<int>();
            if (v != 0 && v != 1) throw InputError("mask values must be 0 or 1 (pmid " + e.pmid + ")");
            e.tokens.mask.push_back(static_cast<std::uint8_t>(v));
        }
        if (e.tokens.ids.size() != e.tokens.mask.size())
            throw ShapeError("ids/mask length mismatch for pmid " + e.pmid);
        e.label = parse_label(row.value("label", "UNK_UNK"));
        return e;
    } catch (const Json::exception& ex) {
        throw ParseError(std::string("malformed token row: ") + ex.what());
    }
}

std::vector<Example> read_examples(const std::filesystem::path& path) {
    std::vector<Example> out;
    for (const auto& row : read_jsonl(path)) out.push_back(example_from_json(row));
    return out;
}

void write_examples(const std::filesystem::path& path, const std::vector<Example>& examples) {
    std::vector<Json> rows;
    rows.reserve(examples.size());
    for (const auto& e : examples) rows.push_back(to_json(e));
    write_jsonl(path, rows);
}

}  // namespace trialsent
