#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "vrsim/hevc.hpp"
#include "vrsim/scenario.hpp"

namespace {

int cmd_run(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
            const std::string& out_dir, double sim_time, bool has_sim_time, bool digest) {
    vrsim::ScenarioConfig cfg = config_path.empty()
                                    ? vrsim::load_scenario_json("{}")
                                    : vrsim::load_scenario_file(config_path);
    if (has_seed) cfg.seed = seed_override;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (has_sim_time) cfg.sim_time_s = sim_time;
    vrsim::throw_if_invalid(vrsim::validate_scenario(cfg));

    vrsim::RunResult result = vrsim::run_scenario(cfg);
    vrsim::write_summary_csv(std::cout, result.summaries);
    if (digest)
        std::cout << "digest=" << std::hex << vrsim::result_digest(result) << std::dec
                  << '\n';
    std::cerr << "events processed=" << result.kernel_summary.processed
              << " cancelled=" << result.kernel_summary.cancelled
              << " cu=" << vrsim::format_double(result.cu) << '\n';
    return 0;
}

int cmd_sweep(const std::string& sweep_path, int jobs, const std::string& out_dir) {
    vrsim::SweepSpec spec = vrsim::load_sweep_file(sweep_path);
    if (!out_dir.empty()) spec.out_dir = out_dir;
    vrsim::SweepResult result = vrsim::run_sweep(spec, jobs);
    if (spec.out_dir.empty())
        std::cout << result.aggregate_csv;
    else
        std::cout << "points=" << result.runs.size() << " failures="
                  << result.failures.size() << " out=" << spec.out_dir << '\n';
    for (const auto& f : result.failures) std::cerr << "failed: " << f << '\n';
    return result.failures.empty() ? 0 : 2;
}

int cmd_trace(const std::string& in_path, const std::string& out_path, int fps) {
    std::vector<std::uint8_t> bytes = vrsim::read_file_bytes(in_path);
    std::vector<vrsim::NalUnit> nals = vrsim::scan_nals(bytes);
    std::vector<vrsim::AccessUnit> aus = vrsim::group_access_units(nals);
    if (out_path.empty() || out_path == "-") {
        vrsim::emit_trace(std::cout, aus, fps);
    } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("trace: cannot write " + out_path);
        vrsim::emit_trace(out, aus, fps);
    }
    std::int64_t i_count = 0;
    for (const auto& au : aus)
        if (au.is_i) ++i_count;
    std::cerr << "nal_units=" << nals.size() << " access_units=" << aus.size()
              << " i_frames=" << i_count << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic VR-over-WiFi streaming simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, sweep_path, trace_in, trace_out;
    std::uint64_t seed = 0;
    double sim_time = 0.0;
    int jobs = 1;
    int fps = 60;
    bool digest = false;

    CLI::App* run = app.add_subcommand("run", "Run one scenario");
    run->add_option("config", config_path, "Scenario JSON (defaults when omitted)");
    CLI::Option* seed_opt = run->add_option("--seed", seed, "Override the master seed");
    run->add_option("--out-dir", out_dir, "Write per-user CSVs into this directory");
    CLI::Option* time_opt =
        run->add_option("--sim-time", sim_time, "Override sim_time_s");
    run->add_flag("--digest", digest, "Print a determinism digest of all outputs");

    CLI::App* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
    sweep->add_option("spec", sweep_path, "Sweep JSON spec")->required();
    sweep->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    sweep->add_option("--out-dir", out_dir, "Override the sweep output directory");

    CLI::App* trace = app.add_subcommand("trace", "Convert an HEVC Annex-B file to a CSV trace");
    trace->add_option("input", trace_in, "Annex-B elementary stream")->required();
    trace->add_option("output", trace_out, "Output CSV ('-' for stdout)");
    trace->add_option("--fps", fps, "Native frame rate recorded in the trace")
        ->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return cmd_run(config_path, seed, seed_opt->count() > 0, out_dir, sim_time,
                           time_opt->count() > 0, digest);
        if (sweep->parsed()) return cmd_sweep(sweep_path, jobs, out_dir);
        if (trace->parsed()) return cmd_trace(trace_in, trace_out, fps);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
