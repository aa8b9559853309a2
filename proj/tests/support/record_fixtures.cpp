// Regenerates tests/fixtures/eutils: replays the simulated E-utilities
// service through a recording transport using the pipeline's fetch
// settings.

#include <iostream>

#include "sim_eutils.hpp"
#include "trialsent/pipeline.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: record_eutils_fixtures <out-dir>\n";
        return 1;
    }
    const std::filesystem::path out = argv[1];
    std::filesystem::remove_all(out);
    auto sim = trialsent::testing::fixture_eutils();
    trialsent::pipeline::FetchSettings settings;
    settings.field = "Anesthesiology";
    settings.max_records = 50;
    settings.api_key_env.clear();
    trialsent::ingest::EntrezOptions options;
    options.requests_per_second = 1000;
    {
        trialsent::ingest::RecordingTransport recorder(sim, out);
        trialsent::pipeline::fetch_stage(settings, recorder, out / "records.jsonl", options);
    }
    std::filesystem::remove(out / "records.jsonl");
    std::filesystem::remove(out / "records.jsonl.meta.json");
    std::cout << "recorded " << sim.calls() << " responses into " << out << "\n";
    return 0;
}
