#include "nnsurf/pipeline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace nnsurf;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string num(double v)
{
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

PipelineConfig trend_config(DatasetShape shape, std::uint64_t seed)
{
    PipelineConfig cfg;
    cfg.dataset.shape = shape;
    cfg.dataset.points = 400;
    cfg.dataset.noise = 0.0;
    cfg.k = 12;
    cfg.boundary.k = 12;
    cfg.train.max_layers = 3;
    cfg.train.max_neurons = 6;
    cfg.train.epochs = 20;
    cfg.train.early_stop_patience = 3;
    cfg.mesh = false;
    cfg.seed = seed;
    return cfg;
}

Outcome table_trend(DatasetShape shape, double limit, double time_limit)
{
    std::vector<double> mses;
    double slowest = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto art = run(trend_config(shape, seed));
        slowest = std::max(slowest, seconds_since(t0));
        mses.push_back(art.metrics.truth_mse.value());
    }
    const double m = median(mses);
    return {m <= limit && slowest <= time_limit,
            "median truth MSE " + num(m) + " (limit " + num(limit) + "), slowest seed " + num(slowest) + " s"};
}

Outcome criterion1() { return table_trend(DatasetShape::scurve, 0.25, 120.0); }

Outcome criterion2() { return table_trend(DatasetShape::torus, 0.07, 120.0); }

Outcome criterion3()
{
    int good = 0;
    std::string values;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        PipelineConfig cfg = trend_config(DatasetShape::torus, seed);
        cfg.hidden = {6};
        cfg.train.epochs = 100;
        cfg.train.early_stop_patience = 100;
        const double m = run(cfg).metrics.truth_mse.value();
        good += m <= 0.01;
        values += (values.empty() ? "" : " ") + num(m);
    }
    return {good >= 3, std::to_string(good) + "/5 seeds <= 0.01 (" + values + ")"};
}

Outcome criterion4()
{
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(4004);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::uniform_int_distribution<int> width(1, 6), depth(1, 3), batch_size(1, 10), act(0, 2);
    const Activation acts[] = {Activation::sigmoid, Activation::tanh, Activation::linear};
    const double h = 1e-5;
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        Topology t;
        t.hidden.clear();
        for (int l = depth(rng); l > 0; --l)
            t.hidden.push_back(static_cast<std::size_t>(width(rng)));
        t.hidden_activation = acts[act(rng)];
        t.output_activation = acts[act(rng)];
        Network net = make_network(t, static_cast<std::uint64_t>(draw) + 1);
        std::vector<Sample> batch;
        for (int b = batch_size(rng); b > 0; --b)
            batch.push_back({{d(rng), d(rng)}, {d(rng), d(rng), d(rng)}});
        const Gradient g = backprop_gradient(net, batch);
        auto check = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = training_loss(net, batch);
            param = keep - h;
            const double down = training_loss(net, batch);
            param = keep;
            const double numeric = (up - down) / (2 * h);
            const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(analytic - numeric) / scale);
        };
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            auto& layer = net.layers[l];
            for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                    check(layer.weights(r, c), g.weights[l](r, c));
                check(layer.bias(r), g.bias[l](r));
            }
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst < 1e-4 && elapsed < 10.0,
            "max relative error " + num(worst) + " over 100 draws in " + num(elapsed) + " s"};
}

double brute_force_path(const NeighborGraph& g, std::size_t i, std::size_t j)
{
    double best = std::numeric_limits<double>::infinity();
    std::vector<bool> used(g.size(), false);
    auto walk = [&](auto&& self, std::size_t u, double sum) -> void {
        if (u == j) {
            best = std::min(best, sum);
            return;
        }
        for (const auto& e : g.neighbors(u))
            if (!used[e.target]) {
                used[e.target] = true;
                self(self, e.target, sum + e.weight);
                used[e.target] = false;
            }
    };
    used[i] = true;
    walk(walk, i, 0.0);
    return best;
}

Outcome criterion5()
{
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(5005);
    std::uniform_real_distribution<double> weight(0.1, 10.0);
    std::bernoulli_distribution extra(0.4);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 8)(rng);
        NeighborGraph g(n);
        for (std::size_t v = 1; v < n; ++v)
            g.add_edge(v, std::uniform_int_distribution<std::size_t>(0, v - 1)(rng), weight(rng));
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                if (!g.has_edge(a, b) && extra(rng))
                    g.add_edge(a, b, weight(rng));
        const auto d = shortest_paths(g);
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = static_cast<Eigen::Index>(i);
            mismatches += d(a, a) != 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const auto b = static_cast<Eigen::Index>(j);
                const double want = brute_force_path(g, i, j);
                mismatches += d(a, b) != want || d(b, a) != want;
            }
        }
    }
    const double elapsed = seconds_since(t0);
    return {mismatches == 0 && elapsed < 5.0,
            std::to_string(mismatches) + " mismatching pairs over 200 graphs in " + num(elapsed) + " s"};
}

Outcome criterion6()
{
    Rng rng(6006);
    std::uniform_real_distribution<double> coord(-5.0, 5.0);
    double worst_distance = 0.0;
    double worst_stress = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 30)(rng);
        PointCloud2 pts(n);
        for (auto& p : pts)
            p = {coord(rng), coord(rng)};
        const auto d = pairwise_distances(pts);
        const auto e = classical_mds(d);
        worst_distance = std::max(worst_distance, (pairwise_distances(e.coords) - d).cwiseAbs().maxCoeff());
        worst_stress = std::max(worst_stress, e.stress);
    }
    return {worst_distance < 1e-8 && worst_stress < 1e-8,
            "max distance error " + num(worst_distance) + ", max stress " + num(worst_stress)};
}

std::vector<double> random_clamped_knots(Rng& rng, int degree)
{
    std::uniform_int_distribution<int> count(0, 8);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    std::vector<double> interior(static_cast<std::size_t>(count(rng)));
    for (auto& x : interior)
        x = d(rng);
    std::sort(interior.begin(), interior.end());
    return clamped_knots(0.0, 1.0, interior, degree);
}

std::vector<double> uniform_sites(std::size_t m)
{
    std::vector<double> x(m);
    for (std::size_t i = 0; i < m; ++i)
        x[i] = static_cast<double>(i) / static_cast<double>(m - 1);
    return x;
}

Outcome criterion7()
{
    Rng rng(7007);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::string> failed;

    double unity = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        const int degree = 1 + trial % 3;
        const auto t = random_clamped_knots(rng, degree);
        const std::size_t n = t.size() - static_cast<std::size_t>(degree) - 1;
        for (int s = 0; s < 1000; ++s) {
            const double x = s == 0 ? 1.0 : u(rng);
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                sum += basis(i, degree, t, x);
            unity = std::max(unity, std::abs(sum - 1.0));
        }
    }
    if (!(unity < 1e-12))
        failed.push_back("partition of unity " + num(unity));

    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    double cubic = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const double a = coef(rng), b = coef(rng), c = coef(rng), e = coef(rng);
        FitInput<1> in;
        for (const double x : uniform_sites(25)) {
            in.x.push_back(x);
            in.y.push_back({a + b * x + c * x * x + e * x * x * x});
        }
        const auto fit = lsq_fit_fixed_knots<1>(in, random_clamped_knots(rng, 3), 3);
        double scale = 0.0;
        for (const auto& y : in.y)
            scale += y[0] * y[0];
        cubic = std::max(cubic, fit.delta / scale);
    }
    if (!(cubic < 1e-16))
        failed.push_back("cubic reproduction " + num(cubic));

    std::uniform_int_distribution<int> size(12, 50), inner(0, 4);
    double dense = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
        const auto m = static_cast<std::size_t>(size(rng));
        const auto g = static_cast<std::size_t>(inner(rng));
        FitInput<2> in;
        in.x = uniform_sites(m);
        for (std::size_t r = 0; r < m; ++r) {
            in.x[r] += r > 0 && r + 1 < m ? (u(rng) - 0.5) * 0.5 / static_cast<double>(m) : 0.0;
            in.y.push_back({u(rng), u(rng)});
            in.w.push_back(0.5 + u(rng));
        }
        std::vector<double> interior;
        for (std::size_t j = 1; j <= g; ++j)
            interior.push_back(static_cast<double>(j) / static_cast<double>(g + 1));
        const auto knots = clamped_knots(0.0, 1.0, interior, 3);
        const auto fit = lsq_fit_fixed_knots<2>(in, knots, 3);
        const std::size_t n = knots.size() - 4;
        Eigen::MatrixXd A(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t i = 0; i < n; ++i)
                A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = in.w[r] * basis(i, 3, knots, in.x[r]);
        const Eigen::MatrixXd pinv = A.completeOrthogonalDecomposition().pseudoInverse();
        double delta = 0.0;
        for (std::size_t a = 0; a < 2; ++a) {
            Eigen::VectorXd b(static_cast<Eigen::Index>(m));
            for (std::size_t r = 0; r < m; ++r)
                b(static_cast<Eigen::Index>(r)) = in.w[r] * in.y[r][a];
            const Eigen::VectorXd p = pinv * b;
            delta += (A * p - b).squaredNorm();
            for (std::size_t i = 0; i < n; ++i)
                dense = std::max(dense, std::abs(p(static_cast<Eigen::Index>(i)) - fit.control[i][a]));
        }
        dense = std::max(dense, std::abs(delta - fit.delta));
    }
    if (!(dense < 1e-9))
        failed.push_back("banded vs dense " + num(dense));

    const double penalty = knot_penalty(std::vector<double>{0, 0.25, 0.5, 0.75, 1});
    if (penalty != 16.0)
        failed.push_back("knot penalty " + num(penalty));

    std::vector<Vec<2>> y;
    for (int i = 0; i < 40; ++i)
        y.push_back({u(rng), 3.0 * u(rng) - 1.0});
    auto doubled = y;
    for (auto& v : doubled)
        v[1] *= 2.0;
    const auto s = smoothing_bound<2>(y, 0.7);
    const auto s2 = smoothing_bound<2>(doubled, 0.7);
    if (s2[1] != 4.0 * s[1] || s2[0] != s[0])
        failed.push_back("variance homogeneity " + num(s2[1] / s[1]));

    std::string detail = "unity " + num(unity) + ", cubic " + num(cubic) + ", dense " + num(dense) + ", penalty "
                         + num(penalty) + ", bound ratio " + num(s2[1] / s[1]);
    for (const auto& f : failed)
        detail += "; failed " + f;
    return {failed.empty(), detail};
}

// Strict interior test from the explicit circumcentre, independent of the
// triangulator's predicate.
bool strictly_inside_circumcircle(Point2 a, Point2 b, Point2 c, Point2 p)
{
    const double d = 2.0 * (a.u * (b.v - c.v) + b.u * (c.v - a.v) + c.u * (a.v - b.v));
    const double a2 = a.u * a.u + a.v * a.v, b2 = b.u * b.u + b.v * b.v, c2 = c.u * c.u + c.v * c.v;
    const Point2 o{(a2 * (b.v - c.v) + b2 * (c.v - a.v) + c2 * (a.v - b.v)) / d,
                   (a2 * (c.u - b.u) + b2 * (a.u - c.u) + c2 * (b.u - a.u)) / d};
    const double r = distance(o, a);
    return distance(o, p) < r * (1.0 - 1e-9);
}

Outcome criterion8()
{
    Rng rng(8008);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::size_t violations = 0;
    std::size_t empty = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Point2> pts(25);
        for (auto& p : pts)
            p = {d(rng), d(rng)};
        const auto mesh = delaunay(pts);
        empty += mesh.triangles.empty();
        for (const auto& t : mesh.triangles)
            for (std::size_t q = 0; q < pts.size(); ++q)
                if (q != t[0] && q != t[1] && q != t[2])
                    violations += strictly_inside_circumcircle(pts[t[0]], pts[t[1]], pts[t[2]], pts[q]);
    }
    const std::vector<Point2> square{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    auto centred = square;
    centred.push_back({0.5, 0.5});
    const std::size_t sq = delaunay(square).triangles.size();
    const std::size_t sc = delaunay(centred).triangles.size();
    return {violations == 0 && empty == 0 && sq == 2 && sc == 4,
            std::to_string(violations) + " circumcircle violations, square " + std::to_string(sq)
                + " triangles, square+centre " + std::to_string(sc)};
}

std::vector<Point2> regular_polygon(std::size_t n, double r, double phase = 0.0)
{
    std::vector<Point2> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = phase + 2 * pi * static_cast<double>(i) / static_cast<double>(n);
        out.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return out;
}

std::set<std::size_t> members(const BoundaryRing& ring)
{
    return {ring.indices.begin(), ring.indices.end()};
}

Outcome criterion9()
{
    const std::set<std::size_t> outer{0, 1, 2, 3, 4, 5, 6, 7};
    const std::set<std::size_t> inner_ids{8, 9, 10, 11, 12, 13, 14, 15};

    const auto oct = regular_polygon(8, 1.0);
    const auto corners = select_corners(oct, 8);
    const bool corners_ok = corners == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7};
    auto with_centre = oct;
    with_centre.push_back({0.0, 0.0});
    const auto hull = sample_rings(with_centre, 1, 8, PathWeights{}, 4);
    const bool octagon_ok = corners_ok && hull.rings.size() == 1 && members(hull.rings[0]) == outer
                            && hull.rings[0].indices.size() == 8;

    auto nested = regular_polygon(8, 2.0);
    const auto inner = regular_polygon(8, 1.0, pi / 8);
    nested.insert(nested.end(), inner.begin(), inner.end());
    const auto rings = sample_rings(nested, 2, 8, PathWeights{}, 12);
    const bool nested_ok = rings.rings.size() == 2 && members(rings.rings[0]) == outer
                           && members(rings.rings[1]) == inner_ids && rings.rings[0].indices.size() == 8
                           && rings.rings[1].indices.size() == 8;

    RingOptions opt;
    opt.depth = 2;
    opt.corners = 32;
    double sum = 0.0;
    const int seeds = 20;
    for (int seed = 1; seed <= seeds; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        std::normal_distribution<double> noise(0.0, 0.05);
        auto pts = regular_polygon(200, 1.0);
        for (auto& p : pts)
            p = {p.u + noise(rng), p.v + noise(rng)};
        const auto sampled = sample_rings(pts, opt);
        std::vector<std::size_t> order(pts.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return norm(pts[a]) > norm(pts[b]); });
        std::set<std::size_t> in_ring;
        for (const auto& r : sampled.rings)
            in_ring.insert(r.indices.begin(), r.indices.end());
        const std::size_t top = pts.size() / 10;
        std::size_t hit = 0;
        for (std::size_t i = 0; i < top; ++i)
            hit += in_ring.count(order[i]);
        sum += static_cast<double>(hit) / static_cast<double>(top);
    }
    const double capture = sum / seeds;
    return {octagon_ok && nested_ok && capture >= 0.9,
            std::string("octagon ") + (octagon_ok ? "ok" : "wrong") + ", concentric " + (nested_ok ? "ok" : "wrong")
                + ", mean band capture " + num(capture) + " (32 corners, 20 seeds)"};
}

std::string obj_bytes(const PipelineConfig& cfg)
{
    std::ostringstream out;
    write_obj(out, run(cfg).mesh3);
    return out.str();
}

Outcome criterion10()
{
    PipelineConfig cfg;
    cfg.seed = 42;
    cfg.dataset.noise = 0.02;
    cfg.boundary.corners = 16;
    const std::string a = obj_bytes(cfg);
    const std::string b = obj_bytes(cfg);
    return {!a.empty() && a == b, std::to_string(a.size()) + " OBJ bytes, " + (a == b ? "identical" : "different")};
}

Outcome criterion11()
{
    double copied = 0.0;
    double retrained = 0.0;
    const int seeds = 10;
    for (int seed = 1; seed <= seeds; ++seed) {
        PipelineConfig cfg = trend_config(DatasetShape::torus, static_cast<std::uint64_t>(seed));
        cfg.train.epochs = 200;
        cfg.train.early_stop_patience = 200;
        copied += run(cfg).metrics.truth_mse.value();
        cfg.retrain = true;
        retrained += run(cfg).metrics.truth_mse.value();
    }
    copied /= seeds;
    retrained /= seeds;
    return {retrained >= copied, "mean retrained " + num(retrained) + ", mean copied " + num(copied)};
}

}  // namespace

int main()
{
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3},  {4, criterion4},   {5, criterion5},  {6, criterion6},
        {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10}, {11, criterion11},
    };
    int failures = 0;
    for (const auto& [id, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
