#include <doctest.h>

#include <fstream>

#include "cli.hpp"
#include "fixtures.hpp"
#include "trialsent/jsonl.hpp"

using trialsent::testing::run_command;

namespace {

std::string quoted(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run_command(TRIALSENT_CLI, "").exit_code == 1);
    CHECK(run_command(TRIALSENT_CLI, "frobnicate").exit_code == 1);
    CHECK(run_command(TRIALSENT_CLI, "train --epochs-typo 3").exit_code == 1);
    CHECK(run_command(TRIALSENT_CLI, "run").exit_code == 1);
    CHECK(run_command(TRIALSENT_CLI, "--help").exit_code == 0);
}

TEST_CASE("config errors exit 1") {
    const auto dir = trialsent::testing::scratch_dir("cli_config");
    std::ofstream(dir / "bad.json") << "{\"sede\": 3}";
    const auto r = run_command(TRIALSENT_CLI, "--config " + quoted(dir / "bad.json") + " --run-dir " + quoted(dir) +
                                                  " run --stages fetch");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("config.sede") != std::string::npos);
    CHECK(run_command(TRIALSENT_CLI, "--run-dir " + quoted(dir) + " run --stages deploy").exit_code == 1);
}

TEST_CASE("missing prerequisites exit 1 and name the stage to run") {
    const auto dir = trialsent::testing::scratch_dir("cli_missing");
    const auto r = run_command(TRIALSENT_CLI, "--run-dir " + quoted(dir) + " preprocess --vocab " +
                                                  quoted(trialsent::testing::fixture_path("vocab/toy_vocab.txt")));
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("run fetch first") != std::string::npos);
}

TEST_CASE("bad data exits 2") {
    const auto dir = trialsent::testing::scratch_dir("cli_data");
    std::ofstream(dir / "annotations.jsonl") << "{\"rater\":\"r1\",\"pmid\":\"1\",\"label\":\"GREAT\"}\n";
    const auto r = run_command(TRIALSENT_CLI, "labels aggregate --gold-raters r1,r2,r3 --in " +
                                                  quoted(dir / "annotations.jsonl") + " --out " + quoted(dir / "gold.jsonl"));
    CHECK(r.exit_code == 2);
}

TEST_CASE("unrecorded requests exit 3") {
    const auto dir = trialsent::testing::scratch_dir("cli_transport");
    const auto r = run_command(TRIALSENT_CLI, "fetch --field Cardiology --max 5 --fixtures " +
                                                  quoted(trialsent::testing::fixture_path("eutils")) + " --out " +
                                                  quoted(dir / "records.jsonl"));
    CHECK(r.exit_code == 3);
}

TEST_CASE("stage verbs chain through a run directory") {
    const auto dir = trialsent::testing::scratch_dir("cli_chain");
    const auto cfg = "--config " + quoted(trialsent::testing::fixture_path("pipeline/config.json")) + " --run-dir " +
                     quoted(dir) + " ";
    for (const char* verb : {"fetch", "preprocess", "labels aggregate", "corpus balance", "corpus split", "train",
                             "classify"}) {
        const auto r = run_command(TRIALSENT_CLI, cfg + verb);
        CHECK_MESSAGE(r.exit_code == 0, verb, ": ", r.output);
    }
    auto r = run_command(TRIALSENT_CLI, cfg + "trend --group-by field");
    CHECK(r.exit_code == 0);
    CHECK(trialsent::read_text(dir / "trend.csv").rfind("field,", 0) == 0);
    r = run_command(TRIALSENT_CLI, cfg + "evaluate --rater " + quoted(dir / "held_out.jsonl") + " --gold " +
                                       quoted(dir / "gold.jsonl"));
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("accuracy") != std::string::npos);
}
