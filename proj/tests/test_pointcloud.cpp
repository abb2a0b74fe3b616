#include "nnsurf/pointcloud.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <sstream>

using namespace nnsurf;

namespace {

constexpr double pi = std::numbers::pi;

std::filesystem::path temp_file(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("nnsurf_pc_" + name);
}

}  // namespace

TEST(Torus, ParametricIdentities)
{
    const Point3 a = torus_point(2, 1, 0, 0);
    EXPECT_DOUBLE_EQ(a.x, 3.0);
    EXPECT_DOUBLE_EQ(a.y, 0.0);
    EXPECT_DOUBLE_EQ(a.z, 0.0);

    const Point3 b = torus_point(2, 1, pi / 2, 0);
    EXPECT_NEAR(b.x, 2.0, 1e-15);
    EXPECT_NEAR(b.y, 0.0, 1e-15);
    EXPECT_NEAR(b.z, 1.0, 1e-15);
}

TEST(Torus, GridCardinalityAndPairing)
{
    const auto g = gen_torus(2, 1, {0, pi / 2}, {0, pi / 2}, 10, 10);
    ASSERT_EQ(g.points.size(), 100u);
    ASSERT_EQ(g.truth.size(), 100u);
    for (std::size_t i = 0; i < g.points.size(); ++i) {
        EXPECT_EQ(g.points[i], g.truth[i].point);
        EXPECT_EQ(g.truth[i].point, torus_point(2, 1, g.truth[i].theta, g.truth[i].gamma));
    }
    EXPECT_EQ(g.truth.front().theta, 0.0);
    EXPECT_DOUBLE_EQ(g.truth.back().theta, pi / 2);
    EXPECT_DOUBLE_EQ(g.truth.back().gamma, pi / 2);
}

TEST(Torus, RejectsInvalidArguments)
{
    EXPECT_THROW(gen_torus(1, 1, {0, 1}, {0, 1}, 4, 4), Error);
    EXPECT_THROW(gen_torus(2, 0, {0, 1}, {0, 1}, 4, 4), Error);
    EXPECT_THROW(gen_torus(2, 1, {1, 1}, {0, 1}, 4, 4), Error);
    EXPECT_THROW(gen_torus(2, 1, {0, 1}, {0, 1}, 1, 4), Error);
}

TEST(SCurve, CountsAndSurfaceMembership)
{
    EXPECT_EQ(gen_scurve(4).points.size(), 4u);
    const auto g = gen_scurve(400, 7);
    ASSERT_EQ(g.points.size(), 400u);
    for (std::size_t i = 0; i < g.points.size(); ++i) {
        const double t = g.truth[i].theta;
        const double v = g.truth[i].gamma;
        EXPECT_GE(t, -1.5 * pi);
        EXPECT_LE(t, 1.5 * pi);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 2.0);
        const Point3 want{std::sin(t), v, (t > 0 ? 1.0 : -1.0) * (std::cos(t) - 1.0)};
        EXPECT_LT(distance(g.points[i], want), 1e-12);
        EXPECT_TRUE(is_finite(g.points[i]));
    }
    EXPECT_THROW(gen_scurve(3), Error);
}

TEST(SCurve, DeterministicPerSeed)
{
    EXPECT_EQ(gen_scurve(50, 3).points, gen_scurve(50, 3).points);
    EXPECT_NE(gen_scurve(50, 3).points, gen_scurve(50, 4).points);
}

TEST(Cone, TableCardinalities)
{
    EXPECT_EQ(gen_cone(6).points.size(), 36u);
    EXPECT_EQ(gen_cone(12).points.size(), 144u);
    EXPECT_THROW(gen_cone(2), Error);
}

TEST(Cone, ApexAdjacentSampleHasSmallestRadius)
{
    const auto g = gen_cone(6);
    auto radius = [](const Point3& p) { return std::hypot(p.x, p.y); };
    double smallest = radius(g.points.front());
    for (const auto& p : g.points)
        EXPECT_GE(radius(p), smallest - 1e-15);
    for (const auto& t : g.truth)
        EXPECT_NEAR(radius(t.point), t.gamma * std::tan(pi / 6), 1e-12);
}

TEST(Noise, ZeroSigmaIsIdentity)
{
    const auto g = gen_torus(2, 1, {0, 1}, {0, 1}, 5, 5);
    EXPECT_EQ(add_noise(g.points, {0.0, 9}), g.points);
}

TEST(Noise, DeterministicPerSeed)
{
    const auto g = gen_torus(2, 1, {0, 1}, {0, 1}, 5, 5);
    EXPECT_EQ(add_noise(g.points, {0.1, 9}), add_noise(g.points, {0.1, 9}));
    EXPECT_NE(add_noise(g.points, {0.1, 9}), add_noise(g.points, {0.1, 10}));
}

TEST(Noise, SampleStandardDeviation)
{
    const PointCloud3 zeros(10000, Point3{0, 0, 0});
    const auto noisy = add_noise(zeros, {0.05, 1});
    double sx = 0, sy = 0, sz = 0;
    for (const auto& p : noisy) {
        sx += p.x * p.x;
        sy += p.y * p.y;
        sz += p.z * p.z;
    }
    const double n = static_cast<double>(noisy.size());
    EXPECT_NEAR(std::sqrt(sx / n), 0.05, 0.05 * 0.05);
    EXPECT_NEAR(std::sqrt(sy / n), 0.05, 0.05 * 0.05);
    EXPECT_NEAR(std::sqrt(sz / n), 0.05, 0.05 * 0.05);
}

TEST(Noise, Unbiased)
{
    const double sigma = 0.2;
    const PointCloud3 point(10000, Point3{1, 2, 3});
    const auto noisy = add_noise(point, {sigma, 5});
    Point3 mean{0, 0, 0};
    for (const auto& p : noisy)
        mean = {mean.x + p.x - 1, mean.y + p.y - 2, mean.z + p.z - 3};
    const double n = static_cast<double>(noisy.size());
    const double tol = 3 * sigma / std::sqrt(n);
    EXPECT_LT(std::abs(mean.x / n), tol);
    EXPECT_LT(std::abs(mean.y / n), tol);
    EXPECT_LT(std::abs(mean.z / n), tol);
}

TEST(Noise, RejectsNegativeSigma)
{
    EXPECT_THROW(add_noise({{0, 0, 0}}, {-1.0, 0}), Error);
}

TEST(Xyz, ParsesPointsAndComments)
{
    std::istringstream in("0 0 0\n1 2 3");
    EXPECT_EQ(parse_xyz(in).size(), 2u);

    std::istringstream commented("# header\n\n1 2 3  # trailing\n\t4 5 6\n");
    const auto c = parse_xyz(commented);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[1], (Point3{4, 5, 6}));
}

TEST(Xyz, MalformedLineReportsLineNumber)
{
    std::istringstream in("0 0 0\n1 2\n");
    try {
        parse_xyz(in);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::istringstream bad("# c\n1 x 3\n");
    EXPECT_THROW(parse_xyz(bad), ParseError);
}

TEST(Xyz, RoundTripOfTorus)
{
    const auto g = gen_torus(2, 1, {0, pi / 2}, {0, pi / 2}, 10, 10);
    const auto path = temp_file("torus.xyz");
    save_xyz(g.points, path.string());
    const auto back = load_xyz(path.string());
    std::filesystem::remove(path);
    ASSERT_EQ(back.size(), g.points.size());
    double worst = 0;
    for (std::size_t i = 0; i < back.size(); ++i)
        worst = std::max({worst, std::abs(back[i].x - g.points[i].x), std::abs(back[i].y - g.points[i].y),
                          std::abs(back[i].z - g.points[i].z)});
    EXPECT_LT(worst, 1e-9);
    EXPECT_EQ(back, g.points);
}

TEST(Xyz, MissingFile)
{
    EXPECT_THROW(load_xyz("/nonexistent/nope.xyz"), Error);
}

TEST(Cloud, RequireCloud)
{
    EXPECT_THROW(require_cloud({{0, 0, 0}}), Error);
    EXPECT_THROW(require_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, NAN}}), Error);
    EXPECT_NO_THROW(require_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
}
