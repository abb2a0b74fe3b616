// reconstruct: command-line front end for the nnsurf pipeline.
//
//   reconstruct run   --config <path> [--out <dir>] [--seed <u64>]
//   reconstruct bench --suite <path> --csv <path> [--workers <n>]
//   reconstruct gen   --shape torus|scurve|cone --noise <sigma> --out <xyz>
//
// Exit codes: 0 success, 1 stage failure, 2 configuration or usage error.
// RECONSTRUCT_LOG sets the log level (trace, debug, info, warn, error, off).

#include "nnsurf/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitStage = 1;
constexpr int kExitConfig = 2;

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("reconstruct");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("RECONSTRUCT_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level == spdlog::level::off && std::string(env) != "off")
            spdlog::warn("unknown RECONSTRUCT_LOG level '{}', keeping info", env);
        else
            spdlog::set_level(level);
    }
}

nnsurf::LogFn pipeline_logger()
{
    return [](const std::string& msg) { spdlog::info("{}", msg); };
}

int cmd_run(const std::string& config_path, const std::optional<std::string>& out_dir,
            const std::optional<std::uint64_t>& seed)
{
    nnsurf::PipelineConfig cfg = nnsurf::load_config(config_path);
    if (out_dir)
        cfg.output_dir = *out_dir;
    if (seed)
        cfg.seed = *seed;
    spdlog::debug("config {} seed {}", config_path, cfg.seed);

    const nnsurf::RunArtifacts art = nnsurf::run(cfg, pipeline_logger());
    const auto files = nnsurf::write_artifacts(art, cfg, cfg.output_dir);
    for (const auto& f : files)
        spdlog::debug("wrote {}/{}", cfg.output_dir, f);

    const auto& m = art.metrics;
    std::cout << "dataset    " << m.dataset << " (" << m.points << " points)\n"
              << "topology   " << nnsurf::describe(m.topology) << " after " << m.candidates << " candidate(s)\n"
              << "fit mse    " << nnsurf::format_double(m.fit_mse) << '\n';
    if (m.truth_mse)
        std::cout << "truth mse  " << nnsurf::format_double(*m.truth_mse) << '\n';
    if (cfg.mesh)
        std::cout << "mesh       " << m.mesh_vertices << " vertices, " << m.mesh_triangles << " triangles\n";
    std::cout << "output     " << cfg.output_dir << '\n';
    if (art.boundary.report.budget_exhausted)
        spdlog::warn("boundary spline stopped at its knot budget above the smoothing bound; "
                     "consider a larger spline.lambda");
    if (art.rings.exhausted)
        spdlog::warn("cloud ran out of points before boundary depth {}", cfg.boundary.depth);
    return kExitOk;
}

int cmd_bench(const std::string& suite_path, const std::string& csv_path, const std::optional<std::size_t>& workers)
{
    nnsurf::BenchmarkSuite suite = nnsurf::load_suite(suite_path);
    if (workers)
        suite.workers = std::max<std::size_t>(1, *workers);
    spdlog::info("{} row(s) on {} worker(s)", suite.configs.size(), suite.workers);

    const auto rows = nnsurf::benchmark(suite.configs, suite.workers,
                                        [](const std::string& msg) { spdlog::debug("{}", msg); });
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv)
        throw nnsurf::ConfigError("cannot write " + csv_path);
    nnsurf::write_metrics_csv(csv, rows);
    nnsurf::write_metrics_table(std::cout, rows);

    const auto failed = static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.failed(); }));
    if (failed)
        spdlog::warn("{} of {} row(s) failed", failed, rows.size());
    return failed == rows.size() ? kExitStage : kExitOk;
}

struct GenOptions
{
    std::string shape;
    double noise = 0.0;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t points = 400;
    std::size_t grid = 10;
};

int cmd_gen(const GenOptions& opt)
{
    nnsurf::PipelineConfig cfg;
    cfg.seed = opt.seed;
    cfg.dataset.shape = nnsurf::shape_from_string(opt.shape);
    if (cfg.dataset.shape == nnsurf::DatasetShape::xyz)
        throw nnsurf::ConfigError("gen needs a synthetic shape");
    cfg.dataset.noise = opt.noise;
    cfg.dataset.points = opt.points;
    cfg.dataset.theta_samples = opt.grid;
    cfg.dataset.gamma_samples = opt.grid;
    cfg.dataset.side = opt.grid;
    nnsurf::validate(cfg);

    nnsurf::GeneratedCloud cloud;
    try {
        cloud = nnsurf::load_dataset(cfg);
    } catch (const nnsurf::ConfigError&) {
        throw;
    } catch (const nnsurf::Error& e) {
        throw nnsurf::ConfigError(e.what());
    }
    nnsurf::save_xyz(cloud.points, opt.out);
    spdlog::info("wrote {} points to {}", cloud.points.size(), opt.out);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    setup_logging();

    CLI::App app{"Mesh reconstruction from point clouds through a learned 2D parameterisation"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "Reconstruct a mesh from one config");
    run->add_option("--config", config_path, "TOML config file")->required();
    run->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    run->add_option("--seed", seed, "Seed (overrides the config)");

    std::string suite_path, csv_path;
    std::optional<std::size_t> workers;
    auto* bench = app.add_subcommand("bench", "Run a benchmark suite and write a CSV");
    bench->add_option("--suite", suite_path, "TOML suite file")->required();
    bench->add_option("--csv", csv_path, "CSV output path")->required();
    bench->add_option("--workers", workers, "Parallel rows (overrides the suite)");

    GenOptions gen_opt;
    auto* gen = app.add_subcommand("gen", "Write a synthetic point cloud");
    gen->add_option("--shape", gen_opt.shape, "torus, scurve or cone")
        ->required()
        ->check(CLI::IsMember({"torus", "scurve", "cone"}));
    gen->add_option("--noise", gen_opt.noise, "Gaussian noise sigma")->required();
    gen->add_option("--out", gen_opt.out, "XYZ output path")->required();
    gen->add_option("--seed", gen_opt.seed, "Seed for sampling and noise");
    gen->add_option("--points", gen_opt.points, "S-curve sample count")->capture_default_str();
    gen->add_option("--grid", gen_opt.grid, "Torus/cone samples per side")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*run)
            return cmd_run(config_path, out_dir, seed);
        if (*bench)
            return cmd_bench(suite_path, csv_path, workers);
        return cmd_gen(gen_opt);
    } catch (const nnsurf::ConfigError& e) {
        spdlog::error("config: {}", e.what());
        return kExitConfig;
    } catch (const nnsurf::StageError& e) {
        spdlog::error("{}", e.what());
        return kExitStage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitStage;
    }
}
