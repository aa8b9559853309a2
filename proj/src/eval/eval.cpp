#include "trialsent/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "trialsent/error.hpp"

namespace trialsent::eval {

std::size_t ConfusionMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : counts)
        for (auto v : row) n += v;
    return n;
}

std::size_t ConfusionMatrix::trace() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) n += counts[i][i];
    return n;
}

ConfusionMatrix confusion(std::span<const LabelPair> pairs) {
    ConfusionMatrix m;
    for (const auto& [gold, pred] : pairs) {
        if (!is_real(gold) || !is_real(pred))
            throw InputError("confusion: UNK_UNK is not a valid gold or predicted label");
        ++m.counts[class_index(gold)][class_index(pred)];
    }
    return m;
}

EvalReport metrics(const ConfusionMatrix& matrix) {
    EvalReport r;
    r.matrix = matrix;
    r.n = matrix.total();
    if (r.n == 0) throw InputError("metrics: confusion matrix is empty");
    r.accuracy = static_cast<double>(matrix.trace()) / static_cast<double>(r.n);
    double f1_sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::size_t predicted = 0, actual = 0;
        for (std::size_t k = 0; k < kNumClasses; ++k) {
            predicted += matrix.counts[k][c];
            actual += matrix.counts[c][k];
        }
        const auto tp = static_cast<double>(matrix.counts[c][c]);
        r.precision[c] = predicted ? tp / static_cast<double>(predicted) : 0.0;
        r.recall[c] = actual ? tp / static_cast<double>(actual) : 0.0;
        const double denom = r.precision[c] + r.recall[c];
        r.per_class_f1[c] = denom > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / denom : 0.0;
        f1_sum += r.per_class_f1[c];
    }
    r.macro_f1 = f1_sum / static_cast<double>(kNumClasses);
    return r;
}

Json to_json(const Prediction& p) {
    return Json{{"pmid", p.pmid}, {"label", to_string(p.label)}, {"probs", p.probs}};
}

Prediction prediction_from_json(const Json& row) {
    try {
        Prediction p;
        p.pmid = row.at("pmid").get<std::string>();
        p.label = parse_real_label(row.at("label").get<std::string>());
        const auto probs = row.at("probs").get<std::vector<double>>();
        if (probs.size() != kNumClasses) throw ShapeError("prediction " + p.pmid + ": probs must have 3 entries");
        std::copy(probs.begin(), probs.end(), p.probs.begin());
        return p;
    } catch (const Json::exception& e) {
        throw ParseError(std::string("malformed prediction row: ") + e.what());
    }
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
    std::vector<Prediction> out;
    for (const auto& row : read_jsonl(path)) out.push_back(prediction_from_json(row));
    return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& rows) {
    std::vector<Json> docs;
    for (const auto& p : rows) docs.push_back(to_json(p));
    write_jsonl(path, docs);
}

EvalReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                const std::vector<std::pair<std::string, SentimentLabel>>& gold) {
    std::map<std::string, SentimentLabel> by_pmid;
    for (const auto& p : predictions) by_pmid[p.pmid] = p.label;
    std::vector<LabelPair> pairs;
    std::string missing;
    for (const auto& [pmid, label] : gold) {
        const auto it = by_pmid.find(pmid);
        if (it == by_pmid.end()) {
            missing += (missing.empty() ? "" : ", ") + pmid;
            continue;
        }
        pairs.emplace_back(label, it->second);
    }
    if (!missing.empty()) throw InputError("no prediction for gold pmids: " + missing);
    return metrics(confusion(pairs));
}

EvalReport compare_rater(const std::vector<corpus::RaterAnnotation>& rater,
                         const std::vector<corpus::GoldLabel>& gold) {
    std::map<std::string, SentimentLabel> labels;
    for (const auto& a : rater) labels[a.pmid] = a.label;
    std::vector<LabelPair> pairs;
    std::string gaps;
    for (const auto& g : gold) {
        if (!g.resolved) continue;
        const auto it = labels.find(g.pmid);
        if (it == labels.end()) {
            gaps += (gaps.empty() ? "" : ", ") + g.pmid;
            continue;
        }
        pairs.emplace_back(*g.label, it->second);
    }
    if (!gaps.empty()) throw InputError("rater file does not cover gold pmids: " + gaps);
    return metrics(confusion(pairs));
}

Json to_json(const EvalReport& report) {
    Json matrix = Json::array();
    for (const auto& row : report.matrix.counts) matrix.push_back(row);
    return Json{{"matrix", std::move(matrix)},
                {"classes", {"POSITIVE", "NEGATIVE", "NEUTRAL"}},
                {"accuracy", report.accuracy},
                {"precision", report.precision},
                {"recall", report.recall},
                {"per_class_f1", report.per_class_f1},
                {"macro_f1", report.macro_f1},
                {"n", report.n}};
}

namespace {

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string render_table(const std::vector<ComparisonRow>& rows) {
    const std::vector<std::string> header{"Classifier", "Classes", "n", "Accuracy", "Macro F1"};
    std::vector<std::vector<std::string>> cells{header};
    for (const auto& r : rows)
        cells.push_back({r.classifier, r.classes, std::to_string(r.report.n),
                         fixed(100.0 * r.report.accuracy, 1) + "%", fixed(r.report.macro_f1, 3)});
    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : cells)
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    std::string out;
    auto rule = [&] {
        std::size_t total = 0;
        for (auto w : width) total += w + 2;
        out += std::string(total - 2, '-') + "\n";
    };
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t i = 0; i < cells[r].size(); ++i) {
            const bool last = i + 1 == cells[r].size();
            out += last ? cells[r][i] : pad(cells[r][i], width[i] + 2);
        }
        out += '\n';
        if (r == 0) rule();
    }
    return out;
}

std::string render_matrix(const ConfusionMatrix& matrix) {
    std::string out = pad("gold \\ pred", 12);
    for (auto c : kRealClasses) out += pad(std::string(to_string(c)), 10);
    out += '\n';
    for (auto g : kRealClasses) {
        out += pad(std::string(to_string(g)), 12);
        for (auto p : kRealClasses)
            out += pad(std::to_string(matrix.counts[class_index(g)][class_index(p)]), 10);
        out += '\n';
    }
    return out;
}

}  // namespace trialsent::eval
