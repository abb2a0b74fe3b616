#pragma once

// End-to-end reconstruction: configuration, the staged run, artifact
// output, ground-truth evaluation and the benchmark harness.

#include "nnsurf/boundary.hpp"
#include "nnsurf/embedding.hpp"
#include "nnsurf/error.hpp"
#include "nnsurf/mesh.hpp"
#include "nnsurf/neuralnet.hpp"
#include "nnsurf/pointcloud.hpp"
#include "nnsurf/random.hpp"
#include "nnsurf/spline.hpp"

#include <json.hpp>
#include <toml.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace nnsurf {

enum class DatasetShape { torus, scurve, cone, xyz };

inline std::string_view to_string(DatasetShape s)
{
    switch (s) {
    case DatasetShape::torus: return "torus";
    case DatasetShape::scurve: return "scurve";
    case DatasetShape::cone: return "cone";
    case DatasetShape::xyz: return "xyz";
    }
    return "?";
}

inline DatasetShape shape_from_string(std::string_view name)
{
    if (name == "torus")
        return DatasetShape::torus;
    if (name == "scurve")
        return DatasetShape::scurve;
    if (name == "cone")
        return DatasetShape::cone;
    if (name == "xyz")
        return DatasetShape::xyz;
    throw ConfigError("unknown dataset shape '" + std::string(name) + "' (torus, scurve, cone, xyz)");
}

struct DatasetConfig
{
    DatasetShape shape = DatasetShape::torus;
    std::string name;  // row label; defaults to the shape name
    std::string path;  // xyz input
    double noise = 0.0;
    std::size_t points = 400;  // scurve sample count
    std::size_t theta_samples = 10;
    std::size_t gamma_samples = 10;
    double major_radius = 2.0;
    double minor_radius = 1.0;
    Interval theta{0.0, 0.5 * std::numbers::pi};
    Interval gamma{0.0, 0.5 * std::numbers::pi};
    std::size_t side = 10;  // cone grid

    std::string label() const { return name.empty() ? std::string(to_string(shape)) : name; }
};

struct PipelineConfig
{
    DatasetConfig dataset;
    std::size_t k = 12;
    ShortestPathMethod path_method = ShortestPathMethod::dijkstra;
    TrainConfig train;
    /// Fixed hidden layer widths. Empty runs the adaptive search.
    std::vector<std::size_t> hidden;
    bool retrain = false;
    RingOptions boundary;
    bool boundary_k_set = false;  // otherwise boundary.k follows k
    double lambda = 2.4;
    SmoothingOptions spline;
    bool mesh = true;
    std::optional<double> spacing;
    std::optional<std::size_t> polygon_samples;
    bool write_embedding = true;
    bool write_rings = true;
    std::string output_dir = "out";
    std::uint64_t seed = 0;

    std::string method() const { return retrain ? "isomap-retrain" : "isomap"; }
};

// ---------------------------------------------------------------------------
// TOML schema

namespace detail {

inline std::string key_path(std::string_view table, std::string_view key)
{
    return table.empty() ? std::string(key) : std::string(table) + "." + std::string(key);
}

inline double toml_double(const toml::node& n, const std::string& where)
{
    if (auto v = n.value_exact<double>())
        return *v;
    if (auto v = n.value_exact<std::int64_t>())
        return static_cast<double>(*v);
    throw ConfigError(where + " must be a number");
}

inline std::size_t toml_size(const toml::node& n, const std::string& where)
{
    const auto v = n.value_exact<std::int64_t>();
    if (!v || *v < 0)
        throw ConfigError(where + " must be a non-negative integer");
    return static_cast<std::size_t>(*v);
}

inline std::uint64_t toml_u64(const toml::node& n, const std::string& where)
{
    return static_cast<std::uint64_t>(toml_size(n, where));
}

inline bool toml_bool(const toml::node& n, const std::string& where)
{
    const auto v = n.value_exact<bool>();
    if (!v)
        throw ConfigError(where + " must be true or false");
    return *v;
}

inline std::string toml_string(const toml::node& n, const std::string& where)
{
    const auto v = n.value_exact<std::string>();
    if (!v)
        throw ConfigError(where + " must be a string");
    return *v;
}

inline Interval toml_interval(const toml::node& n, const std::string& where)
{
    const auto* arr = n.as_array();
    if (!arr || arr->size() != 2)
        throw ConfigError(where + " must be a two-element array [lo, hi]");
    Interval out{toml_double(*arr->get(0), where), toml_double(*arr->get(1), where)};
    if (out.empty())
        throw ConfigError(where + " must satisfy lo < hi");
    return out;
}

inline std::vector<std::size_t> toml_sizes(const toml::node& n, const std::string& where)
{
    const auto* arr = n.as_array();
    if (!arr)
        throw ConfigError(where + " must be an array of integers");
    std::vector<std::size_t> out;
    for (const auto& e : *arr)
        out.push_back(toml_size(e, where));
    return out;
}

inline const toml::table& toml_table(const toml::node& n, const std::string& where)
{
    const auto* t = n.as_table();
    if (!t)
        throw ConfigError(where + " must be a table");
    return *t;
}

inline Activation toml_activation(const toml::node& n, const std::string& where)
{
    try {
        return activation_from_string(toml_string(n, where));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

inline void apply_dataset(const toml::table& t, DatasetConfig& d)
{
    for (const auto& [k, node] : t) {
        const std::string key(k.str());
        const std::string where = key_path("dataset", key);
        if (key == "shape")
            d.shape = shape_from_string(toml_string(node, where));
        else if (key == "name")
            d.name = toml_string(node, where);
        else if (key == "path")
            d.path = toml_string(node, where);
        else if (key == "noise")
            d.noise = toml_double(node, where);
        else if (key == "points")
            d.points = toml_size(node, where);
        else if (key == "theta_samples")
            d.theta_samples = toml_size(node, where);
        else if (key == "gamma_samples")
            d.gamma_samples = toml_size(node, where);
        else if (key == "major_radius")
            d.major_radius = toml_double(node, where);
        else if (key == "minor_radius")
            d.minor_radius = toml_double(node, where);
        else if (key == "theta")
            d.theta = toml_interval(node, where);
        else if (key == "gamma")
            d.gamma = toml_interval(node, where);
        else if (key == "side")
            d.side = toml_size(node, where);
        else
            throw ConfigError("unknown key " + where);
    }
}

inline void apply_network(const toml::table& t, PipelineConfig& cfg)
{
    auto& tc = cfg.train;
    for (const auto& [k, node] : t) {
        const std::string key(k.str());
        const std::string where = key_path("network", key);
        if (key == "max_layers")
            tc.max_layers = toml_size(node, where);
        else if (key == "max_neurons")
            tc.max_neurons = toml_size(node, where);
        else if (key == "epochs")
            tc.epochs = toml_size(node, where);
        else if (key == "patience")
            tc.early_stop_patience = toml_size(node, where);
        else if (key == "learning_rate")
            tc.learning_rate = toml_double(node, where);
        else if (key == "train_fraction")
            tc.train_fraction = toml_double(node, where);
        else if (key == "test_fraction")
            tc.test_fraction = toml_double(node, where);
        else if (key == "validation_fraction")
            tc.validation_fraction = toml_double(node, where);
        else if (key == "train_weight")
            tc.train_weight = toml_double(node, where);
        else if (key == "test_weight")
            tc.test_weight = toml_double(node, where);
        else if (key == "convergence_tolerance")
            tc.convergence_tolerance = toml_double(node, where);
        else if (key == "hidden_activation")
            tc.hidden_activation = toml_activation(node, where);
        else if (key == "output_activation")
            tc.output_activation = toml_activation(node, where);
        else if (key == "update") {
            const auto mode = toml_string(node, where);
            if (mode == "per_sample")
                tc.update = UpdateMode::per_sample;
            else if (mode == "full_batch")
                tc.update = UpdateMode::full_batch;
            else
                throw ConfigError(where + " must be per_sample or full_batch");
        } else if (key == "warm_start")
            tc.warm_start = toml_bool(node, where);
        else if (key == "hidden")
            cfg.hidden = toml_sizes(node, where);
        else if (key == "retrain")
            cfg.retrain = toml_bool(node, where);
        else
            throw ConfigError("unknown key " + where);
    }
}

inline void apply_boundary(const toml::table& t, PipelineConfig& cfg)
{
    for (const auto& [k, node] : t) {
        const std::string key(k.str());
        const std::string where = key_path("boundary", key);
        if (key == "corners")
            cfg.boundary.corners = toml_size(node, where);
        else if (key == "depth")
            cfg.boundary.depth = toml_size(node, where);
        else if (key == "c1")
            cfg.boundary.weights.c1 = toml_double(node, where);
        else if (key == "c2")
            cfg.boundary.weights.c2 = toml_double(node, where);
        else if (key == "k") {
            cfg.boundary.k = toml_size(node, where);
            cfg.boundary_k_set = true;
        } else if (key == "margin")
            cfg.boundary.margin_fraction = toml_double(node, where);
        else
            throw ConfigError("unknown key " + where);
    }
}

inline void apply_spline(const toml::table& t, PipelineConfig& cfg)
{
    for (const auto& [k, node] : t) {
        const std::string key(k.str());
        const std::string where = key_path("spline", key);
        if (key == "lambda")
            cfg.lambda = toml_double(node, where);
        else if (key == "initial_spans")
            cfg.spline.closed_initial_spans = toml_size(node, where);
        else if (key == "max_knots")
            cfg.spline.max_interior_knots = toml_size(node, where);
        else if (key == "penalty_weight")
            cfg.spline.penalty_weight = toml_double(node, where);
        else
            throw ConfigError("unknown key " + where);
    }
}

inline void apply_mesh(const toml::table& t, PipelineConfig& cfg)
{
    for (const auto& [k, node] : t) {
        const std::string key(k.str());
        const std::string where = key_path("mesh", key);
        if (key == "enabled")
            cfg.mesh = toml_bool(node, where);
        else if (key == "spacing")
            cfg.spacing = toml_double(node, where);
        else if (key == "polygon_samples")
            cfg.polygon_samples = toml_size(node, where);
        else
            throw ConfigError("unknown key " + where);
    }
}

inline void apply_output(const toml::table& t, PipelineConfig& cfg)
{
    for (const auto& [k, node] : t) {
        const std::string key(k.str());
        const std::string where = key_path("output", key);
        if (key == "dir")
            cfg.output_dir = toml_string(node, where);
        else if (key == "embedding")
            cfg.write_embedding = toml_bool(node, where);
        else if (key == "rings")
            cfg.write_rings = toml_bool(node, where);
        else
            throw ConfigError("unknown key " + where);
    }
}

}  // namespace detail

inline void validate(const PipelineConfig& cfg)
{
    const auto& d = cfg.dataset;
    if (!(d.noise >= 0.0) || !std::isfinite(d.noise))
        throw ConfigError("dataset.noise must be >= 0");
    if (d.shape == DatasetShape::xyz && d.path.empty())
        throw ConfigError("dataset.path is required for shape = \"xyz\"");
    if (d.shape == DatasetShape::torus && !(d.minor_radius > 0.0 && d.major_radius > d.minor_radius))
        throw ConfigError("torus radii must satisfy major_radius > minor_radius > 0");
    if (cfg.k < 1)
        throw ConfigError("embedding.k must be >= 1");
    validate(cfg.train);
    for (const auto w : cfg.hidden)
        if (w < 1)
            throw ConfigError("network.hidden widths must be >= 1");
    if (cfg.boundary.depth < 1 || cfg.boundary.corners < 3)
        throw ConfigError("boundary.depth must be >= 1 and boundary.corners >= 3");
    if (cfg.boundary.k < 1)
        throw ConfigError("boundary.k must be >= 1");
    try {
        validate(cfg.boundary.weights);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda))
        throw ConfigError("spline.lambda must be >= 0");
    if (cfg.spline.closed_initial_spans < 4)
        throw ConfigError("spline.initial_spans must be >= 4");
    if (cfg.spacing && !(*cfg.spacing > 0.0))
        throw ConfigError("mesh.spacing must be > 0");
    if (cfg.polygon_samples && *cfg.polygon_samples < 16)
        throw ConfigError("mesh.polygon_samples must be >= 16");
}

/// Applies every key of `root` on top of `cfg`. Unknown keys are errors.
inline void apply_config(const toml::table& root, PipelineConfig& cfg)
{
    for (const auto& [k, node] : root) {
        const std::string key(k.str());
        if (key == "seed")
            cfg.seed = detail::toml_u64(node, key);
        else if (key == "dataset")
            detail::apply_dataset(detail::toml_table(node, key), cfg.dataset);
        else if (key == "embedding") {
            for (const auto& [ek, en] : detail::toml_table(node, key)) {
                const std::string sub(ek.str());
                const std::string where = detail::key_path("embedding", sub);
                if (sub == "k")
                    cfg.k = detail::toml_size(en, where);
                else if (sub == "paths") {
                    const auto m = detail::toml_string(en, where);
                    if (m == "dijkstra")
                        cfg.path_method = ShortestPathMethod::dijkstra;
                    else if (m == "floyd_warshall")
                        cfg.path_method = ShortestPathMethod::floyd_warshall;
                    else
                        throw ConfigError(where + " must be dijkstra or floyd_warshall");
                } else
                    throw ConfigError("unknown key " + where);
            }
        } else if (key == "network")
            detail::apply_network(detail::toml_table(node, key), cfg);
        else if (key == "boundary")
            detail::apply_boundary(detail::toml_table(node, key), cfg);
        else if (key == "spline")
            detail::apply_spline(detail::toml_table(node, key), cfg);
        else if (key == "mesh")
            detail::apply_mesh(detail::toml_table(node, key), cfg);
        else if (key == "output")
            detail::apply_output(detail::toml_table(node, key), cfg);
        else
            throw ConfigError("unknown key " + key);
    }
    if (!cfg.boundary_k_set)
        cfg.boundary.k = cfg.k;
}

inline toml::table parse_toml(std::string_view text, const std::string& source)
{
    try {
        return toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << source << ":" << e.source().begin.line << ": " << e.description();
        throw ConfigError(msg.str());
    }
}

inline PipelineConfig parse_config(std::string_view text, const std::string& source = "config")
{
    PipelineConfig cfg;
    apply_config(parse_toml(text, source), cfg);
    validate(cfg);
    return cfg;
}

inline std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Relative dataset paths resolve against the config file's directory.
inline PipelineConfig load_config(const std::string& path)
{
    PipelineConfig cfg = parse_config(read_text_file(path), path);
    if (!cfg.dataset.path.empty() && std::filesystem::path(cfg.dataset.path).is_relative())
        cfg.dataset.path = (std::filesystem::path(path).parent_path() / cfg.dataset.path).string();
    return cfg;
}

// ---------------------------------------------------------------------------
// Run

/// Sub-seed streams derived from the config seed.
enum SeedStream : std::uint64_t { kSeedGenerator = 1, kSeedNoise = 2, kSeedTraining = 3 };

struct Metrics
{
    std::string dataset;
    std::string method;
    std::size_t points = 0;
    std::optional<double> truth_mse;  // generators only
    double fit_mse = 0.0;  // against the (possibly noisy) input points
    Topology topology;
    std::size_t epochs = 0;  // configured cap
    std::size_t candidates = 0;
    double embedding_stress = 0.0;
    std::size_t interior_knots = 0;
    std::size_t mesh_vertices = 0;
    std::size_t mesh_triangles = 0;
    double seconds = 0.0;
};

struct RunArtifacts
{
    GeneratedCloud input;  // points as fed to the embedding; truth holds clean points
    Embedding2D embedding;
    SearchResult search;
    Network network;  // copied or retrained
    RingSampling rings;
    BoundaryBand band;
    SmoothingFit<2> boundary;
    Polygon polygon;
    TriMesh2 mesh2;
    TriMesh3 mesh3;
    Metrics metrics;
};

using LogFn = std::function<void(const std::string&)>;

namespace detail {

template <class F>
auto stage(const std::string& name, const std::string& hint, F&& body) -> decltype(body())
{
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        std::string msg = e.what();
        if (!hint.empty())
            msg += " (" + hint + ")";
        throw StageError(name, msg);
    }
}

inline void log(const LogFn& fn, const std::string& msg)
{
    if (fn)
        fn(msg);
}

}  // namespace detail

inline GeneratedCloud load_dataset(const PipelineConfig& cfg)
{
    const auto& d = cfg.dataset;
    GeneratedCloud clean;
    switch (d.shape) {
    case DatasetShape::torus:
        clean = gen_torus(d.major_radius, d.minor_radius, d.theta, d.gamma, d.theta_samples, d.gamma_samples);
        break;
    case DatasetShape::scurve:
        clean = gen_scurve(d.points, derive_seed(cfg.seed, kSeedGenerator));
        break;
    case DatasetShape::cone:
        clean = gen_cone(d.side);
        break;
    case DatasetShape::xyz:
        clean.points = load_xyz(d.path);
        break;
    }
    require_cloud(clean.points);
    GeneratedCloud out = std::move(clean);
    out.points = add_noise(out.points, {d.noise, derive_seed(cfg.seed, kSeedNoise)});
    return out;
}

inline std::vector<Sample> training_pairs(const PointCloud2& coords, const PointCloud3& points)
{
    if (coords.size() != points.size())
        throw Error("embedding and point cloud sizes differ");
    std::vector<Sample> pairs;
    pairs.reserve(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i)
        pairs.push_back({coords[i], points[i]});
    return pairs;
}

/// Per-scalar MSE between the network's output at each embedded point and
/// the matching clean surface point.
inline double evaluate_vs_truth(const Network& net, const PointCloud2& coords,
                                std::span<const GroundTruthSample> truth)
{
    if (coords.size() != truth.size())
        throw Error("embedding has " + std::to_string(coords.size()) + " points but truth has "
                    + std::to_string(truth.size()));
    if (coords.empty())
        throw Error("nothing to evaluate");
    double sum = 0.0;
    for (std::size_t i = 0; i < coords.size(); ++i)
        sum += squared_distance(forward(net, coords[i]), truth[i].point);
    return sum / (3.0 * static_cast<double>(coords.size()));
}

inline double median_nearest_distance(const PointCloud2& pts)
{
    if (pts.size() < 2)
        throw Error("need at least 2 points for a spacing estimate");
    std::vector<double> nearest(pts.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const double d = distance(pts[i], pts[j]);
            nearest[i] = std::min(nearest[i], d);
            nearest[j] = std::min(nearest[j], d);
        }
    const auto mid = nearest.begin() + static_cast<std::ptrdiff_t>(nearest.size() / 2);
    std::nth_element(nearest.begin(), mid, nearest.end());
    return *mid;
}

inline SearchResult fit_network(const std::vector<Sample>& pairs, const PipelineConfig& cfg, Network& final_net)
{
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, kSeedTraining);
    SearchResult res = cfg.hidden.empty() ? adaptive_search(pairs, tc) : train_fixed(pairs, cfg.hidden, tc);
    final_net = finalize(res.network, res.report, pairs, cfg.retrain, tc);
    return res;
}

inline void extract_boundary(const PointCloud2& coords, const PipelineConfig& cfg, RunArtifacts& art)
{
    art.rings = sample_rings(coords, cfg.boundary);
    art.band = merge_rings(coords, art.rings);
    art.boundary = fit_closed_parametric(art.band.points, art.band.params, cfg.lambda, cfg.spline);
}

inline void build_mesh(const PointCloud2& coords, const PipelineConfig& cfg, RunArtifacts& art)
{
    const std::size_t samples = cfg.polygon_samples.value_or(
        std::max<std::size_t>(16, 8 * art.boundary.curve.unique_control_count()));
    art.polygon = sample_polygon(art.boundary.curve, samples);
    const double spacing = cfg.spacing.value_or(median_nearest_distance(coords));
    const PointCloud2 grid = resample_interior(art.polygon, spacing);
    art.mesh2 = trim(delaunay(grid), art.polygon);
    art.mesh3 = lift(art.mesh2, art.network);
}

/// Runs every stage in memory. Nothing is written to disk.
inline RunArtifacts run(const PipelineConfig& cfg, const LogFn& log = {})
{
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    RunArtifacts art;

    art.input = detail::stage("dataset", "check the dataset section", [&] { return load_dataset(cfg); });
    detail::log(log, "dataset " + cfg.dataset.label() + ": " + std::to_string(art.input.points.size()) + " points");

    art.embedding = detail::stage("embedding", "raise embedding.k if the graph is disconnected",
                                  [&] { return isomap(art.input.points, cfg.k, cfg.path_method); });
    detail::log(log, "embedding stress " + format_double(art.embedding.stress));

    art.search = detail::stage("network", "lower network.learning_rate if training diverges", [&] {
        return fit_network(training_pairs(art.embedding.coords, art.input.points), cfg, art.network);
    });
    detail::log(log, "network " + describe(art.network.topology) + " after "
                         + std::to_string(art.search.report.records.size()) + " candidate(s)");

    if (cfg.mesh) {
        detail::stage("boundary", "try a larger boundary.k or fewer boundary.corners",
                      [&] { extract_boundary(art.embedding.coords, cfg, art); });
        detail::log(log, "boundary spline with " + std::to_string(art.boundary.report.interior_knots)
                             + " interior knots");
        detail::stage("mesh", "adjust mesh.spacing or spline.lambda",
                      [&] { build_mesh(art.embedding.coords, cfg, art); });
        detail::log(log, "mesh " + std::to_string(art.mesh3.vertices.size()) + " vertices, "
                             + std::to_string(art.mesh3.triangles.size()) + " triangles");
    }

    auto& m = art.metrics;
    m.dataset = cfg.dataset.label();
    m.method = cfg.method();
    m.points = art.input.points.size();
    m.fit_mse = mse(art.network, training_pairs(art.embedding.coords, art.input.points));
    if (!art.input.truth.empty())
        m.truth_mse = evaluate_vs_truth(art.network, art.embedding.coords, art.input.truth);
    m.topology = art.network.topology;
    m.epochs = cfg.train.epochs;
    m.candidates = art.search.report.records.size();
    m.embedding_stress = art.embedding.stress;
    m.interior_knots = art.boundary.report.interior_knots;
    m.mesh_vertices = art.mesh3.vertices.size();
    m.mesh_triangles = art.mesh3.triangles.size();
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return art;
}

// ---------------------------------------------------------------------------
// Artifact output

/// Everything except wall time, so the file is reproducible.
inline nlohmann::json to_json(const Metrics& m)
{
    nlohmann::json j;
    j["dataset"] = m.dataset;
    j["method"] = m.method;
    j["points"] = m.points;
    j["truth_mse"] = m.truth_mse ? nlohmann::json(*m.truth_mse) : nlohmann::json(nullptr);
    j["fit_mse"] = m.fit_mse;
    j["topology"] = describe(m.topology);
    j["epochs"] = m.epochs;
    j["candidates"] = m.candidates;
    j["embedding_stress"] = m.embedding_stress;
    j["interior_knots"] = m.interior_knots;
    j["mesh_vertices"] = m.mesh_vertices;
    j["mesh_triangles"] = m.mesh_triangles;
    return j;
}

inline nlohmann::json to_json(const TrainReport& r)
{
    nlohmann::json j;
    j["best_index"] = r.best_index;
    j["final_mse"] = r.final_mse;
    j["layer_best_neurons"] = r.layer_best_neurons;
    auto& recs = j["candidates"] = nlohmann::json::array();
    for (const auto& c : r.records)
        recs.push_back({{"topology", describe(c.topology)},
                        {"train_mse", c.train_mse},
                        {"test_mse", c.test_mse},
                        {"weighted", c.weighted},
                        {"epochs_run", c.epochs_run}});
    return j;
}

namespace detail {

template <class Writer>
void write_artifact(const std::filesystem::path& path, Writer writer)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path.string());
    writer(out);
    out.flush();
    if (!out)
        throw Error("write failed for " + path.string());
}

}  // namespace detail

/// Writes the run's artifacts into `dir` and returns the file names written.
inline std::vector<std::string> write_artifacts(const RunArtifacts& art, const PipelineConfig& cfg,
                                                const std::string& dir)
{
    return detail::stage("output", "check that the output directory is writable", [&] {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        const fs::path root(dir);
        std::vector<std::string> written;
        auto put = [&](const std::string& name, auto writer) {
            detail::write_artifact(root / name, writer);
            written.push_back(name);
        };
        put("input.xyz", [&](std::ostream& o) { write_xyz(o, art.input.points); });
        if (cfg.write_embedding)
            put("embedding.csv", [&](std::ostream& o) { write_embedding_csv(o, art.embedding); });
        put("network.json", [&](std::ostream& o) { o << to_json(art.network).dump(2) << '\n'; });
        put("search.json", [&](std::ostream& o) { o << to_json(art.search.report).dump(2) << '\n'; });
        if (cfg.mesh) {
            if (cfg.write_rings)
                put("rings.csv", [&](std::ostream& o) { write_rings_csv(o, art.rings); });
            put("boundary.json", [&](std::ostream& o) { o << to_json(art.boundary.curve).dump(2) << '\n'; });
            put("mesh.obj", [&](std::ostream& o) { write_obj(o, art.mesh3); });
            put("mesh.ply", [&](std::ostream& o) { write_ply(o, art.mesh3); });
        }
        put("metrics.json", [&](std::ostream& o) { o << to_json(art.metrics).dump(2) << '\n'; });
        return written;
    });
}

// ---------------------------------------------------------------------------
// Benchmark

struct MetricsRow
{
    std::string dataset;
    std::string method;
    std::size_t points = 0;
    double mse = std::numeric_limits<double>::quiet_NaN();
    std::size_t layers = 0;
    std::size_t neurons = 0;  // widest hidden layer
    std::size_t epochs = 0;
    double seconds = 0.0;
    std::string error;  // non-empty for failed rows

    bool failed() const { return !error.empty(); }
};

/// Ground-truth MSE for generated datasets, otherwise MSE against the input.
inline MetricsRow to_row(const Metrics& m)
{
    MetricsRow row;
    row.dataset = m.dataset;
    row.method = m.method;
    row.points = m.points;
    row.mse = m.truth_mse.value_or(m.fit_mse);
    row.layers = m.topology.hidden.size();
    row.neurons = m.topology.hidden.empty() ? 0 : *std::max_element(m.topology.hidden.begin(), m.topology.hidden.end());
    row.epochs = m.epochs;
    row.seconds = m.seconds;
    return row;
}

/// Runs every config on up to `workers` threads. Rows keep config order and
/// a failing config yields a failed row.
inline std::vector<MetricsRow> benchmark(const std::vector<PipelineConfig>& configs, std::size_t workers = 1,
                                         const LogFn& log = {})
{
    if (configs.empty())
        throw Error("benchmark needs at least one config");
    std::vector<MetricsRow> rows(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            const auto& cfg = configs[i];
            const auto t0 = std::chrono::steady_clock::now();
            try {
                rows[i] = to_row(run(cfg).metrics);
            } catch (const std::exception& e) {
                rows[i].dataset = cfg.dataset.label();
                rows[i].method = cfg.method();
                rows[i].epochs = cfg.train.epochs;
                rows[i].error = e.what();
                rows[i].seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, configs.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();
    for (std::size_t i = 0; i < rows.size(); ++i)
        detail::log(log, "row " + std::to_string(i + 1) + " " + rows[i].dataset
                             + (rows[i].failed() ? " failed: " + rows[i].error : " mse " + format_double(rows[i].mse)));
    return rows;
}

inline constexpr std::string_view kCsvHeader = "dataset,method,points,mse,layers,neurons,epochs,seconds";

namespace detail {

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string fixed(double v, int digits)
{
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

}  // namespace detail

/// Failed rows carry "nan" in the mse column.
inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows)
{
    out << kCsvHeader << '\n';
    for (const auto& r : rows)
        out << detail::csv_field(r.dataset) << ',' << detail::csv_field(r.method) << ',' << r.points << ','
            << (r.failed() ? std::string("nan") : format_double(r.mse)) << ',' << r.layers << ',' << r.neurons
            << ',' << r.epochs << ',' << detail::fixed(r.seconds, 3) << '\n';
}

inline void write_metrics_table(std::ostream& out, const std::vector<MetricsRow>& rows)
{
    const std::vector<std::string> head{"dataset", "method", "points", "mse", "layers", "neurons", "epochs", "seconds"};
    std::vector<std::vector<std::string>> cells{head};
    for (const auto& r : rows) {
        std::vector<std::string> c{r.dataset, r.method, std::to_string(r.points),
                                   r.failed() ? "FAILED" : detail::fixed(r.mse, 6), std::to_string(r.layers),
                                   std::to_string(r.neurons), std::to_string(r.epochs), detail::fixed(r.seconds, 2)};
        cells.push_back(std::move(c));
    }
    std::vector<std::size_t> width(head.size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c)
            width[c] = std::max(width[c], row[c].size());
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            const bool text = c < 2;
            out << (c ? "  " : "") << (text ? std::left : std::right) << std::setw(static_cast<int>(width[c]))
                << row[c];
        }
        out << std::right << '\n';
    }
    for (const auto& r : rows)
        if (r.failed())
            out << "failed " << r.dataset << " (" << r.method << "): " << r.error << '\n';
}

struct BenchmarkSuite
{
    std::vector<PipelineConfig> configs;
    std::size_t workers = 1;
};

/// Suite file: optional `workers`, a `[defaults]` table in the config schema,
/// and `[[row]]` tables applied over the defaults. A row's `seeds` array
/// expands it into one row per seed.
inline BenchmarkSuite parse_suite(std::string_view text, const std::string& source = "suite")
{
    const toml::table root = parse_toml(text, source);
    BenchmarkSuite suite;
    PipelineConfig base;
    base.mesh = false;
    const toml::array* rows = nullptr;
    for (const auto& [k, node] : root) {
        const std::string key(k.str());
        if (key == "workers")
            suite.workers = std::max<std::size_t>(1, detail::toml_size(node, key));
        else if (key == "defaults")
            apply_config(detail::toml_table(node, key), base);
        else if (key == "row") {
            rows = node.as_array();
            if (!rows)
                throw ConfigError("row must be an array of tables ([[row]])");
        } else
            throw ConfigError("unknown key " + key);
    }
    if (!rows || rows->empty())
        throw ConfigError(source + " defines no [[row]] entries");
    for (const auto& node : *rows) {
        toml::table row = detail::toml_table(node, "row");
        std::vector<std::uint64_t> seeds;
        if (const auto* s = row.get("seeds")) {
            for (const auto v : detail::toml_sizes(*s, "row.seeds"))
                seeds.push_back(v);
            row.erase("seeds");
        }
        PipelineConfig cfg = base;
        cfg.boundary_k_set = base.boundary_k_set;
        apply_config(row, cfg);
        if (seeds.empty()) {
            validate(cfg);
            suite.configs.push_back(cfg);
        }
        for (const auto seed : seeds) {
            cfg.seed = seed;
            validate(cfg);
            suite.configs.push_back(cfg);
        }
    }
    return suite;
}

inline BenchmarkSuite load_suite(const std::string& path)
{
    BenchmarkSuite suite = parse_suite(read_text_file(path), path);
    for (auto& cfg : suite.configs)
        if (!cfg.dataset.path.empty() && std::filesystem::path(cfg.dataset.path).is_relative())
            cfg.dataset.path = (std::filesystem::path(path).parent_path() / cfg.dataset.path).string();
    return suite;
}

}  // namespace nnsurf
