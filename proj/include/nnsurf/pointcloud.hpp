#pragma once

// Point types, XYZ text I/O, and synthetic surfaces with known parameterisations.

#include "nnsurf/error.hpp"
#include "nnsurf/random.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace nnsurf {

struct Point3
{
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend bool operator==(const Point3&, const Point3&) = default;
};

struct Point2
{
    double u = 0.0;
    double v = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.u + b.u, a.v + b.v}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.u - b.u, a.v - b.v}; }
inline Point2 operator*(double s, Point2 p) { return {s * p.u, s * p.v}; }
inline double dot(Point2 a, Point2 b) { return a.u * b.u + a.v * b.v; }
inline double cross(Point2 a, Point2 b) { return a.u * b.v - a.v * b.u; }
inline double norm(Point2 p) { return std::hypot(p.u, p.v); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

inline double distance(const Point3& a, const Point3& b)
{
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double squared_distance(const Point3& a, const Point3& b)
{
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

inline bool is_finite(const Point3& p)
{
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

inline bool is_finite(Point2 p) { return std::isfinite(p.u) && std::isfinite(p.v); }

/// Ordered 3D samples. Index i is preserved by every derived 2D embedding.
using PointCloud3 = std::vector<Point3>;
using PointCloud2 = std::vector<Point2>;

/// Exact surface point together with the parameters that produced it.
/// For the torus and cone, (theta, gamma) are the two surface angles/heights;
/// for the S-curve they hold (t, v).
struct GroundTruthSample
{
    double theta = 0.0;
    double gamma = 0.0;
    Point3 point;
};

struct GeneratedCloud
{
    PointCloud3 points;
    std::vector<GroundTruthSample> truth;
};

struct NoiseSpec
{
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

struct Interval
{
    double lo = 0.0;
    double hi = 0.0;

    bool empty() const { return !(hi > lo); }
};

inline void require_cloud(const PointCloud3& cloud, std::size_t min_points = 4)
{
    if (cloud.size() < min_points)
        throw Error("point cloud needs at least " + std::to_string(min_points) + " points, got "
                    + std::to_string(cloud.size()));
    for (std::size_t i = 0; i < cloud.size(); ++i)
        if (!is_finite(cloud[i]))
            throw Error("point " + std::to_string(i) + " has a non-finite coordinate");
}

// ---------------------------------------------------------------------------
// Parametric surfaces

inline Point3 torus_point(double R, double r, double theta, double gamma)
{
    const double ring = R + r * std::cos(theta);
    return {ring * std::cos(gamma), ring * std::sin(gamma), r * std::sin(theta)};
}

/// S-curve: (sin t, v, sign(t)(cos t - 1)), t in [-3pi/2, 3pi/2], v in [0, 2].
inline Point3 scurve_point(double t, double v)
{
    const double sign = t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0);
    return {std::sin(t), v, sign * (std::cos(t) - 1.0)};
}

inline constexpr double kConeHalfAngle = std::numbers::pi / 6.0;

/// Cone with apex at the origin, axis +z, half-angle 30 degrees.
/// phi is the azimuth, h the height along the axis.
inline Point3 cone_point(double phi, double h)
{
    const double radius = h * std::tan(kConeHalfAngle);
    return {radius * std::cos(phi), radius * std::sin(phi), h};
}

/// Regular n_theta x n_gamma grid on a torus patch. theta is the tube angle,
/// gamma the angle around the main axis. Points are ordered gamma-major.
inline GeneratedCloud gen_torus(double R, double r, Interval theta_range, Interval gamma_range,
                                std::size_t n_theta, std::size_t n_gamma)
{
    if (!(r > 0.0) || !(R > r))
        throw Error("torus radii must satisfy R > r > 0");
    if (theta_range.empty() || gamma_range.empty())
        throw Error("torus parameter ranges must be non-empty");
    if (n_theta < 2 || n_gamma < 2)
        throw Error("torus grid needs at least 2 samples per direction");

    GeneratedCloud out;
    out.points.reserve(n_theta * n_gamma);
    out.truth.reserve(n_theta * n_gamma);
    const double dtheta = (theta_range.hi - theta_range.lo) / static_cast<double>(n_theta - 1);
    const double dgamma = (gamma_range.hi - gamma_range.lo) / static_cast<double>(n_gamma - 1);
    for (std::size_t j = 0; j < n_gamma; ++j) {
        const double gamma = gamma_range.lo + dgamma * static_cast<double>(j);
        for (std::size_t i = 0; i < n_theta; ++i) {
            const double theta = theta_range.lo + dtheta * static_cast<double>(i);
            const Point3 p = torus_point(R, r, theta, gamma);
            out.points.push_back(p);
            out.truth.push_back({theta, gamma, p});
        }
    }
    return out;
}

/// n uniformly random samples of the S-curve, reproducible from `seed`.
inline GeneratedCloud gen_scurve(std::size_t n, std::uint64_t seed = 0)
{
    if (n < 4)
        throw Error("S-curve needs at least 4 points");
    Rng rng(seed);
    std::uniform_real_distribution<double> t_dist(-1.5 * std::numbers::pi, 1.5 * std::numbers::pi);
    std::uniform_real_distribution<double> v_dist(0.0, 2.0);

    GeneratedCloud out;
    out.points.reserve(n);
    out.truth.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t_dist(rng);
        const double v = v_dist(rng);
        const Point3 p = scurve_point(t, v);
        out.points.push_back(p);
        out.truth.push_back({t, v, p});
    }
    return out;
}

/// n_side x n_side grid on a quarter cone patch: heights (j+1)/n_side for
/// j < n_side (apex excluded so samples stay distinct), azimuth in [0, pi/2].
inline GeneratedCloud gen_cone(std::size_t n_side)
{
    if (n_side < 3)
        throw Error("cone grid needs at least 3 samples per side");
    GeneratedCloud out;
    out.points.reserve(n_side * n_side);
    out.truth.reserve(n_side * n_side);
    const double dphi = 0.5 * std::numbers::pi / static_cast<double>(n_side - 1);
    for (std::size_t j = 0; j < n_side; ++j) {
        const double h = static_cast<double>(j + 1) / static_cast<double>(n_side);
        for (std::size_t i = 0; i < n_side; ++i) {
            const double phi = dphi * static_cast<double>(i);
            const Point3 p = cone_point(phi, h);
            out.points.push_back(p);
            out.truth.push_back({phi, h, p});
        }
    }
    return out;
}

/// Isotropic Gaussian perturbation of every coordinate.
inline PointCloud3 add_noise(const PointCloud3& cloud, const NoiseSpec& spec)
{
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma))
        throw Error("noise sigma must be finite and >= 0");
    for (const auto& p : cloud)
        if (!is_finite(p))
            throw Error("cannot add noise to a cloud with non-finite points");
    if (spec.sigma == 0.0)
        return cloud;

    Rng rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, spec.sigma);
    PointCloud3 out;
    out.reserve(cloud.size());
    for (const auto& p : cloud) {
        const double dx = gauss(rng);
        const double dy = gauss(rng);
        const double dz = gauss(rng);
        out.push_back({p.x + dx, p.y + dy, p.z + dz});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text formatting helpers shared by the writers

/// Shortest decimal text that parses back to exactly `value`.
inline std::string format_double(double value)
{
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s)
{
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r'))
            ++i;
        const std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r')
            ++i;
        if (i > start)
            out.push_back(s.substr(start, i - start));
    }
    return out;
}

inline bool parse_double(std::string_view token, double& out)
{
    if (!token.empty() && token.front() == '+')
        token.remove_prefix(1);
    const auto res = std::from_chars(token.data(), token.data() + token.size(), out);
    return res.ec == std::errc{} && res.ptr == token.data() + token.size();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// XYZ files: one "x y z" triple per line, '#' comments and blank lines ignored.

inline PointCloud3 parse_xyz(std::istream& in)
{
    PointCloud3 cloud;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos)
            view = view.substr(0, hash);
        view = detail::trim(view);
        if (view.empty())
            continue;
        const auto tokens = detail::split_ws(view);
        if (tokens.size() != 3)
            throw ParseError("expected 3 coordinates, found " + std::to_string(tokens.size()), line_no);
        Point3 p;
        if (!detail::parse_double(tokens[0], p.x) || !detail::parse_double(tokens[1], p.y)
            || !detail::parse_double(tokens[2], p.z))
            throw ParseError("invalid number in \"" + std::string(view) + "\"", line_no);
        if (!is_finite(p))
            throw ParseError("non-finite coordinate", line_no);
        cloud.push_back(p);
    }
    return cloud;
}

inline PointCloud3 load_xyz(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path);
    return parse_xyz(in);
}

inline void write_xyz(std::ostream& out, const PointCloud3& cloud)
{
    for (const auto& p : cloud)
        out << format_double(p.x) << ' ' << format_double(p.y) << ' ' << format_double(p.z) << '\n';
}

inline void save_xyz(const PointCloud3& cloud, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path);
    write_xyz(out, cloud);
    if (!out)
        throw Error("write failed for " + path);
}

}  // namespace nnsurf
