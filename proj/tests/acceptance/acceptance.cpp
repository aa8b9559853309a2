// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "cli.hpp"
#include "fixtures.hpp"
#include "gan_cases.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"
#include "trialsent/corpus.hpp"
#include "trialsent/eval.hpp"
#include "trialsent/ingest.hpp"
#include "trialsent/preprocess.hpp"
#include "trialsent/ssgan.hpp"

using namespace trialsent;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
    return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
    const auto start = Clock::now();
    const std::size_t configs = 100;
    std::array<double, 4> worst{};
    for (std::uint64_t seed = 0; seed < configs; ++seed) {
        auto c = testing::random_gan_case(1000 + seed);
        const auto e = testing::gradient_errors(c, 1e-5);
        for (std::size_t t = 0; t < 4; ++t) worst[t] = std::max(worst[t], e[t]);
    }
    const double elapsed = seconds_since(start);
    const double max_err = *std::max_element(worst.begin(), worst.end());
    return {max_err <= 1e-4 && elapsed < 120.0,
            fmt("%zu configs, max rel err d_sup=%.2e d_unsup=%.2e g_fm=%.2e g_unsup=%.2e, %.1fs", configs, worst[0],
                worst[1], worst[2], worst[3], elapsed)};
}

Outcome masking_exactness() {
    std::size_t checked = 0, violations = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto c = testing::random_gan_case(5000 + seed);
        const auto losses = c.net->forward(c.batch, nullptr, nullptr);
        const auto grads = testing::flat_gradients(c, {1, 1, 1, 1});
        for (auto relabel : kRealClasses) {
            for (std::size_t i = 0; i < c.batch.labels.size(); ++i)
                if (c.batch.provenance[i] == ssgan::Provenance::Unlabeled) c.batch.labels[i] = relabel;
            ++checked;
            if (!(c.net->forward(c.batch, nullptr, nullptr) == losses)) ++violations;
            if (testing::flat_gradients(c, {1, 1, 1, 1}) != grads) ++violations;
        }
        // fake rows: moving them leaves d_sup unchanged and gives the generator no d_sup gradient
        const double d_sup = losses.d_sup;
        c.batch.noise.array() += 0.75;
        if (c.net->forward(c.batch, nullptr, nullptr).d_sup != d_sup) ++violations;
        testing::flat_gradients(c, {1, 0, 0, 0});
        for (auto* p : c.net->generator_parameters())
            if (!p->grad.isZero(0.0)) ++violations;
    }
    return {violations == 0, fmt("%zu relabelings over 50 batches, %zu violations", checked, violations)};
}

Outcome additivity() {
    testing::SyntheticOptions o;
    o.labeled_per_class = 10;
    o.unlabeled = 120;
    o.seed = 17;
    const auto data = testing::make_synthetic_corpus(o);
    ssgan::GanConfig config;
    config.noise_dim = 16;
    config.epochs = 50;
    config.batch_size = 8;
    config.learning_rate_d = 2e-3;
    config.learning_rate_g = 2e-3;
    config.track_train_accuracy = false;
    std::size_t steps = 0;
    double worst = 0.0;
    ssgan::TrainHooks hooks;
    hooks.on_step = [&](std::size_t, std::size_t, const ssgan::LossBreakdown& l) {
        ++steps;
        worst = std::max({worst, std::abs(l.d_total - (l.d_sup + l.d_unsup)),
                          std::abs(l.g_total - (l.g_fm + l.g_unsup))});
    };
    ssgan::train(data.train, std::make_unique<encoder::TinyEncoder>(64, 16, 3), config, nullptr, hooks);
    return {steps > 0 && worst <= 1e-9, fmt("%zu steps over 50 epochs, max deviation %.1e", steps, worst)};
}

std::vector<Example> labeled_counts(std::size_t pos, std::size_t neg, std::size_t neu) {
    std::vector<Example> out;
    std::size_t serial = 0;
    for (auto [label, n] : {std::pair{SentimentLabel::Positive, pos}, std::pair{SentimentLabel::Negative, neg},
                            std::pair{SentimentLabel::Neutral, neu}})
        for (std::size_t i = 0; i < n; ++i) out.push_back({"b" + std::to_string(serial++), {{2, 3}, {1, 1}}, label});
    return out;
}

Outcome balancing() {
    const auto fixed = corpus::class_counts(corpus::balance_classes(labeled_counts(26, 69, 13), 42));
    bool ok = fixed == std::array<std::size_t, 3>{26, 26, 26};
    Rng rng(77);
    std::uniform_int_distribution<std::size_t> size(1, 80);
    std::size_t failures = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::array<std::size_t, 3> counts{size(rng), size(rng), size(rng)};
        auto sorted = counts;
        std::sort(sorted.begin(), sorted.end());
        const auto input = labeled_counts(counts[0], counts[1], counts[2]);
        std::map<std::string, SentimentLabel> source;
        for (const auto& e : input) source[e.pmid] = e.label;
        const auto out = corpus::balance_classes(input, static_cast<std::uint64_t>(trial));
        bool good = corpus::class_counts(out) == std::array<std::size_t, 3>{sorted[1], sorted[1], sorted[1]};
        for (const auto& e : out) good = good && source.count(e.pmid) && source[e.pmid] == e.label;
        failures += !good;
    }
    ok = ok && failures == 0;
    return {ok, fmt("{26,69,13} -> {%zu,%zu,%zu} (total %zu); 500 random triples, %zu failures", fixed[0], fixed[1],
                    fixed[2], fixed[0] + fixed[1] + fixed[2], failures)};
}

Outcome trailing_fraction() {
    static const char* kWords[] = {"alpha", "beta", "gamma", "delta", "omega"};
    std::size_t mismatches = 0;
    for (std::size_t s = 1; s <= 1000; ++s) {
        ingest::AbstractRecord r;
        r.pmid = "t" + std::to_string(s);
        for (std::size_t i = 0; i < s; ++i) {
            if (i) r.abstract_text += ' ';
            r.abstract_text += std::string("Finding ") + kWords[i % 5] + " holds in group " + kWords[(i / 5) % 5] + ".";
        }
        const auto expected = testing::oracle_trailing_count(s);
        const auto got = preprocess::extract_conclusion(r);
        const bool good = preprocess::trailing_sentence_count(s) == expected && got.n_sentences == expected &&
                          got.source_rule == preprocess::ConclusionRule::TrailingFraction &&
                          preprocess::segment_sentences(got.text).total() == expected;
        mismatches += !good;
    }
    // structured fixtures with a conclusion heading take that section verbatim
    const auto lexicon = ingest::HeadingLexicon::defaults();
    std::size_t structured = 0, misrouted = 0;
    for (const auto& raw : ingest::split_medline(read_text(testing::fixture_path("medline/anesthesiology.txt")))) {
        const auto rec = ingest::parse_medline_record(raw, lexicon);
        if (!rec || !rec->is_structured) continue;
        bool has_conclusion = false;
        for (const auto& s : rec->sections)
            for (const auto& h : preprocess::ConclusionOptions{}.conclusion_headings)
                if (s.heading == h) has_conclusion = true;
        if (!has_conclusion) continue;
        ++structured;
        if (preprocess::extract_conclusion(*rec).source_rule != preprocess::ConclusionRule::StructuredHeading) ++misrouted;
    }
    return {mismatches == 0 && misrouted == 0 && structured > 0,
            fmt("sentences 1..1000: %zu mismatches; %zu structured fixtures, %zu not routed by heading", mismatches,
                structured, misrouted)};
}

Outcome majority_vote() {
    std::size_t agree = 0, ties = 0, total = 0;
    for (auto a : kRealClasses)
        for (auto b : kRealClasses)
            for (auto c : kRealClasses) {
                const std::vector<corpus::RaterAnnotation> votes{{"r1", "p", a}, {"r2", "p", b}, {"r3", "p", c}};
                const auto g = corpus::majority_label(votes);
                const auto o = testing::oracle_majority(a, b, c);
                ++total;
                agree += g.label == o && g.resolved == o.has_value();
                ties += !g.resolved;
            }
    return {total == 27 && agree == 27 && ties == 6, fmt("%zu/27 triples agree with oracle, %zu unresolved ties", agree, ties)};
}

Outcome metrics() {
    Rng rng(2718);
    std::uniform_int_distribution<std::size_t> cell(0, 50);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        eval::ConfusionMatrix m;
        for (auto& row : m.counts)
            for (auto& v : row) v = cell(rng);
        if (m.total() == 0) m.counts[1][1] = 1;
        const auto got = eval::metrics(m);
        const auto want = testing::oracle_metrics(m);
        worst = std::max({worst, std::abs(got.accuracy - want.accuracy), std::abs(got.macro_f1 - want.macro_f1)});
        for (std::size_t c = 0; c < kNumClasses; ++c) worst = std::max(worst, std::abs(got.per_class_f1[c] - want.f1[c]));
    }
    std::vector<corpus::RaterAnnotation> rater;
    std::vector<corpus::GoldLabel> gold;
    for (int i = 0; i < 100; ++i) {
        corpus::GoldLabel g;
        g.pmid = std::to_string(i);
        g.label = kRealClasses[i % 3];
        g.resolved = true;
        gold.push_back(g);
        rater.push_back({"r4", g.pmid, i < 62 ? *g.label : kRealClasses[(i + 2) % 3]});
    }
    const double acc = eval::compare_rater(rater, gold).accuracy;
    return {worst <= 1e-9 && std::abs(acc - 0.62) <= 1e-12,
            fmt("1000 matrices, max deviation %.1e; rater 62/100 accuracy %.4f", worst, acc)};
}

ssgan::GanConfig e2e_config(std::uint64_t seed, std::size_t epochs) {
    ssgan::GanConfig c;
    c.noise_dim = 16;
    c.epochs = epochs;
    c.batch_size = 8;
    c.learning_rate_d = 2e-3;
    c.learning_rate_g = 2e-3;
    c.seed = seed;
    return c;
}

Outcome end_to_end() {
    testing::SyntheticOptions o;
    o.labeled_per_class = 20;
    o.unlabeled = 600;
    o.validation_per_class = 40;
    o.seed = 11;
    const auto data = testing::make_synthetic_corpus(o);
    const auto start = Clock::now();
    auto run = [&] {
        return ssgan::train(data.train, std::make_unique<encoder::TinyEncoder>(o.vocab_size, 16, 5), e2e_config(5, 200),
                            &data.validation);
    };
    const auto a = run();
    const double elapsed = seconds_since(start);
    const auto b = run();
    std::size_t reached = 0;
    double train_acc = 0.0, val_acc = 0.0;
    for (const auto& rec : a.history())
        if (rec.train_accuracy && rec.validation && *rec.train_accuracy >= 0.95 && rec.validation->accuracy >= 0.90) {
            reached = rec.epoch;
            train_acc = *rec.train_accuracy;
            val_acc = rec.validation->accuracy;
            break;
        }
    bool identical = a.history().size() == b.history().size();
    for (std::size_t i = 0; identical && i < a.history().size(); ++i)
        identical = a.history()[i].to_json().dump() == b.history()[i].to_json().dump() &&
                    a.history()[i].losses == b.history()[i].losses;
    const auto& last = a.history().back();
    return {reached > 0 && elapsed < 300.0 && identical,
            reached ? fmt("train %.3f / val %.3f at epoch %zu (final %.3f / %.3f), %.1fs per run, histories %s", train_acc,
                          val_acc, reached, *last.train_accuracy, last.validation->accuracy, elapsed,
                          identical ? "bit-identical" : "DIFFER")
                    : fmt("thresholds not reached in 200 epochs (final train %.3f / val %.3f), %.1fs, histories %s",
                          *last.train_accuracy, last.validation->accuracy, elapsed, identical ? "bit-identical" : "DIFFER")};
}

Outcome semi_supervision() {
    const std::size_t seeds = 10;
    double gan_sum = 0.0, sup_sum = 0.0;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        testing::SyntheticOptions o;
        o.labeled_per_class = 4;
        o.unlabeled = 600;
        o.validation_per_class = 100;
        o.seed = 300 + s;
        const auto data = testing::make_synthetic_corpus(o);
        auto final_val = [&](bool gan) {
            auto c = e2e_config(s, 200);
            c.gan_enabled = gan;
            c.track_train_accuracy = false;
            const auto model = ssgan::train(data.train, std::make_unique<encoder::TinyEncoder>(o.vocab_size, 16, 50 + s),
                                            c, &data.validation);
            return model.history().back().validation->accuracy;
        };
        gan_sum += final_val(true);
        sup_sum += final_val(false);
    }
    const double gan = gan_sum / seeds, sup = sup_sum / seeds;
    return {gan >= sup, fmt("mean validation accuracy over %zu seeds: GAN %.4f, supervised-only %.4f", seeds, gan, sup)};
}

// Every file under `dir` except stage metadata timestamps, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), dir).string();
        auto body = read_text(entry.path());
        if (rel.ends_with(".meta.json")) {
            auto doc = Json::parse(body);
            doc.erase("started_at");
            doc.erase("finished_at");
            body = doc.dump();
        }
        out[rel] = body;
    }
    return out;
}

Outcome pipeline() {
    const auto config = testing::fixture_path("pipeline/config.json");
    const std::string stages = "fetch,preprocess,aggregate,balance,split,train,evaluate,classify,trend";
    std::vector<std::map<std::string, std::string>> runs;
    const auto dir = testing::scratch_dir("acceptance_pipeline");
    for (int i = 0; i < 2; ++i) {
        // an unroutable proxy makes any attempted network access fail loudly
        const auto r = testing::run_command(
            "/usr/bin/env", "https_proxy=http://127.0.0.1:9 http_proxy=http://127.0.0.1:9 '" + std::string(TRIALSENT_CLI) +
                                "' --config '" + config.string() + "' --run-dir '" + dir.string() +
                                "' run --stages " + stages);
        if (r.exit_code != 0) return {false, fmt("run %d exited %d: %s", i + 1, r.exit_code, r.output.c_str())};
        runs.push_back(snapshot(dir));
    }
    std::size_t differing = 0;
    for (const auto& [name, body] : runs[0]) {
        const auto it = runs[1].find(name);
        differing += it == runs[1].end() || it->second != body;
    }
    differing += runs[0].size() != runs[1].size();
    const bool has_report = runs[0].count("report.json") && runs[0].count("trend.csv");
    return {differing == 0 && has_report,
            fmt("%zu artifacts, %zu differ between reruns (metadata timestamps excluded)", runs[0].size(), differing)};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::off);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient-oracle", gradient_oracle},
        {"masking-exactness", masking_exactness},
        {"loss-additivity", additivity},
        {"median-balancing", balancing},
        {"trailing-fraction-oracle", trailing_fraction},
        {"majority-vote", majority_vote},
        {"metrics-oracle", metrics},
        {"end-to-end-training", end_to_end},
        {"semi-supervision", semi_supervision},
        {"offline-pipeline", pipeline},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        const auto start = Clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %-26s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), seconds_since(start));
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
