#pragma once

// Interior resampling, Delaunay triangulation, boundary trimming, and
// lifting of the planar mesh through the trained network.

#include "nnsurf/error.hpp"
#include "nnsurf/neuralnet.hpp"
#include "nnsurf/pointcloud.hpp"
#include "nnsurf/spline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace nnsurf {

using Triangle = std::array<std::size_t, 3>;

struct Polygon
{
    std::vector<Point2> vertices;  // closed implicitly
};

struct TriMesh2
{
    std::vector<Point2> vertices;
    std::vector<Triangle> triangles;  // counterclockwise
};

struct TriMesh3
{
    std::vector<Point3> vertices;
    std::vector<Triangle> triangles;
};

inline double signed_area(const Polygon& poly)
{
    const auto& v = poly.vertices;
    double a = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        a += cross(v[i], v[(i + 1) % v.size()]);
    return 0.5 * a;
}

inline double perimeter(const Polygon& poly)
{
    const auto& v = poly.vertices;
    double p = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
        p += distance(v[i], v[(i + 1) % v.size()]);
    return p;
}

namespace detail {

inline bool segments_cross(Point2 a, Point2 b, Point2 c, Point2 d)
{
    const double d1 = cross(b - a, c - a);
    const double d2 = cross(b - a, d - a);
    const double d3 = cross(d - c, a - c);
    const double d4 = cross(d - c, b - c);
    return ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0));
}

}  // namespace detail

/// True when two non-adjacent edges properly cross. O(n^2).
inline bool self_intersects(const Polygon& poly)
{
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1)
                continue;
            if (detail::segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]))
                return true;
        }
    return false;
}

/// Closed polyline through the curve at n uniform parameter steps.
inline Polygon sample_polygon(const BSplineCurve<2>& curve, std::size_t n_samples)
{
    if (!curve.closed)
        throw Error("only closed curves can be sampled as a polygon");
    if (n_samples < 16)
        throw Error("polygon needs at least 16 samples");
    Polygon poly;
    poly.vertices.reserve(n_samples);
    const double lo = curve.domain_lo();
    const double hi = curve.domain_hi();
    for (std::size_t i = 0; i < n_samples; ++i)
        poly.vertices.push_back(
            eval_point(curve, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_samples)));
    double extent = 0.0;
    for (const auto& p : poly.vertices)
        extent = std::max(extent, distance(p, poly.vertices.front()));
    if (!(std::abs(signed_area(poly)) > 1e-12 * std::max(extent * extent, 1e-300)))
        throw Error("curve samples enclose no area");
    return poly;
}

/// Distance from p to segment ab.
inline double segment_distance(Point2 p, Point2 a, Point2 b)
{
    const Point2 ab = b - a;
    const double len2 = dot(ab, ab);
    const double f = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
    return distance(p, a + f * ab);
}

/// Even-odd containment. Points within `tol` of an edge count as inside.
inline bool point_in_polygon(Point2 p, const Polygon& poly, double tol = 1e-12)
{
    const auto& v = poly.vertices;
    const std::size_t n = v.size();
    if (n < 3)
        throw Error("polygon needs at least 3 vertices");
    bool inside = false;
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        if (segment_distance(p, v[j], v[i]) <= tol)
            return true;
        if ((v[i].v > p.v) != (v[j].v > p.v)) {
            const double x = v[j].u + (p.v - v[j].v) * (v[i].u - v[j].u) / (v[i].v - v[j].v);
            if (p.u < x)
                inside = !inside;
        }
    }
    return inside;
}

/// Grid nodes of pitch `spacing` inside the polygon, followed by the polygon vertices.
inline PointCloud2 resample_interior(const Polygon& poly, double spacing)
{
    if (!(spacing > 0.0) || !std::isfinite(spacing))
        throw Error("grid spacing must be positive");
    if (poly.vertices.size() < 3)
        throw Error("polygon needs at least 3 vertices");
    double u0 = poly.vertices[0].u, u1 = u0, v0 = poly.vertices[0].v, v1 = v0;
    for (const auto& p : poly.vertices) {
        u0 = std::min(u0, p.u);
        u1 = std::max(u1, p.u);
        v0 = std::min(v0, p.v);
        v1 = std::max(v1, p.v);
    }
    if (spacing > u1 - u0 || spacing > v1 - v0)
        throw Error("grid spacing exceeds the polygon's bounding box");

    const double slack = 1e-9 * spacing;
    const auto nu = static_cast<std::size_t>(std::floor((u1 - u0) / spacing + 1e-9));
    const auto nv = static_cast<std::size_t>(std::floor((v1 - v0) / spacing + 1e-9));
    PointCloud2 out;
    for (std::size_t j = 0; j <= nv; ++j)
        for (std::size_t i = 0; i <= nu; ++i) {
            const Point2 p{u0 + spacing * static_cast<double>(i), v0 + spacing * static_cast<double>(j)};
            if (point_in_polygon(p, poly, slack))
                out.push_back(p);
        }
    out.insert(out.end(), poly.vertices.begin(), poly.vertices.end());
    return out;
}

// ---------------------------------------------------------------------------
// Delaunay triangulation

inline constexpr double kPredicateEpsilon = 1e-10;

/// > 0 when c lies left of ab, scaled by a relative error bound.
inline int orientation(Point2 a, Point2 b, Point2 c)
{
    const double l = (b.u - a.u) * (c.v - a.v);
    const double r = (b.v - a.v) * (c.u - a.u);
    const double det = l - r;
    const double bound = kPredicateEpsilon * (std::abs(l) + std::abs(r));
    if (det > bound)
        return 1;
    if (det < -bound)
        return -1;
    return 0;
}

/// True when d lies strictly inside the circumcircle of the counterclockwise
/// triangle abc, beyond a tolerance relative to the magnitude of the terms.
inline bool in_circumcircle(Point2 a, Point2 b, Point2 c, Point2 d)
{
    const double adx = a.u - d.u, ady = a.v - d.v;
    const double bdx = b.u - d.u, bdy = b.v - d.v;
    const double cdx = c.u - d.u, cdy = c.v - d.v;
    const double alift = adx * adx + ady * ady;
    const double blift = bdx * bdx + bdy * bdy;
    const double clift = cdx * cdx + cdy * cdy;
    const double bc = bdx * cdy - cdx * bdy;
    const double ca = cdx * ady - adx * cdy;
    const double ab = adx * bdy - bdx * ady;
    const double det = alift * bc + blift * ca + clift * ab;
    const double permanent = alift * (std::abs(bdx * cdy) + std::abs(cdx * bdy))
        + blift * (std::abs(cdx * ady) + std::abs(adx * cdy)) + clift * (std::abs(adx * bdy) + std::abs(bdx * ady));
    return det > kPredicateEpsilon * permanent;
}

/// Bowyer-Watson incremental triangulation. Points coinciding with an
/// earlier point are left out of every triangle.
inline TriMesh2 delaunay(std::span<const Point2> points)
{
    const std::size_t n = points.size();
    if (n < 3)
        throw Error("triangulation needs at least 3 points");
    double u0 = points[0].u, u1 = u0, v0 = points[0].v, v1 = v0;
    for (const auto& p : points) {
        if (!is_finite(p))
            throw Error("triangulation input must be finite");
        u0 = std::min(u0, p.u);
        u1 = std::max(u1, p.u);
        v0 = std::min(v0, p.v);
        v1 = std::max(v1, p.v);
    }
    const double scale = std::max(u1 - u0, v1 - v0);
    if (!(scale > 0.0))
        throw Error("all points coincide");
    bool collinear = true;
    for (std::size_t i = 2; i < n && collinear; ++i)
        for (std::size_t j = 1; j < i && collinear; ++j)
            if (orientation(points[0], points[j], points[i]) != 0)
                collinear = false;
    if (collinear)
        throw Error("all points are collinear");

    // work in unit-box coordinates
    const Point2 origin{0.5 * (u0 + u1), 0.5 * (v0 + v1)};
    std::vector<Point2> pts;
    pts.reserve(n + 3);
    for (const auto& p : points)
        pts.push_back((1.0 / scale) * (p - origin));
    constexpr double big = 1e4;
    pts.push_back({-3.0 * big, -3.0 * big});
    pts.push_back({3.0 * big, 0.0});
    pts.push_back({0.0, 3.0 * big});

    struct Tri
    {
        Triangle v;
        bool alive = true;
    };
    std::vector<Tri> tris{{{n, n + 1, n + 2}}};
    std::vector<Point2> inserted;

    for (std::size_t p = 0; p < n; ++p) {
        const Point2 q = pts[p];
        bool duplicate = false;
        for (const auto& tri : tris) {
            if (!tri.alive)
                continue;
            for (const auto vi : tri.v)
                if (vi < n && distance(pts[vi], q) <= 1e-12)
                    duplicate = true;
        }
        if (duplicate)
            continue;

        std::vector<std::size_t> bad;
        for (std::size_t t = 0; t < tris.size(); ++t) {
            if (!tris[t].alive)
                continue;
            const auto& v = tris[t].v;
            if (in_circumcircle(pts[v[0]], pts[v[1]], pts[v[2]], q))
                bad.push_back(t);
        }
        if (bad.empty()) {
            // on a circumcircle boundary: fall back to the containing triangle
            for (std::size_t t = 0; t < tris.size(); ++t) {
                if (!tris[t].alive)
                    continue;
                const auto& v = tris[t].v;
                if (orientation(pts[v[0]], pts[v[1]], q) >= 0 && orientation(pts[v[1]], pts[v[2]], q) >= 0
                    && orientation(pts[v[2]], pts[v[0]], q) >= 0) {
                    bad.push_back(t);
                    break;
                }
            }
        }
        // boundary of the cavity: edges used by exactly one bad triangle
        std::map<std::pair<std::size_t, std::size_t>, int> edge_count;
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (const auto t : bad) {
            const auto& v = tris[t].v;
            for (int e = 0; e < 3; ++e) {
                const std::size_t a = v[static_cast<std::size_t>(e)];
                const std::size_t b = v[static_cast<std::size_t>((e + 1) % 3)];
                edges.emplace_back(a, b);
                ++edge_count[{std::min(a, b), std::max(a, b)}];
            }
            tris[t].alive = false;
        }
        for (const auto& [a, b] : edges) {
            if (edge_count[{std::min(a, b), std::max(a, b)}] != 1)
                continue;
            Triangle t{a, b, p};
            const int o = orientation(pts[a], pts[b], q);
            if (o == 0)
                continue;
            if (o < 0)
                std::swap(t[0], t[1]);
            tris.push_back({t});
        }
        if (tris.size() > 4 * (n + 3) + 64) {
            std::erase_if(tris, [](const Tri& t) { return !t.alive; });
        }
    }

    TriMesh2 mesh;
    mesh.vertices.assign(points.begin(), points.end());
    for (const auto& t : tris)
        if (t.alive && t.v[0] < n && t.v[1] < n && t.v[2] < n)
            mesh.triangles.push_back(t.v);
    std::sort(mesh.triangles.begin(), mesh.triangles.end());
    return mesh;
}

inline double triangle_area(const TriMesh2& mesh, const Triangle& t)
{
    return 0.5 * cross(mesh.vertices[t[1]] - mesh.vertices[t[0]], mesh.vertices[t[2]] - mesh.vertices[t[0]]);
}

inline Point2 triangle_centroid(const TriMesh2& mesh, const Triangle& t)
{
    const auto& v = mesh.vertices;
    return {(v[t[0]].u + v[t[1]].u + v[t[2]].u) / 3.0, (v[t[0]].v + v[t[1]].v + v[t[2]].v) / 3.0};
}

/// Keeps triangles whose centroid lies inside the polygon and drops
/// vertices no kept triangle uses. Vertex order is preserved.
inline TriMesh2 trim(const TriMesh2& mesh, const Polygon& poly)
{
    std::vector<Triangle> kept;
    for (const auto& t : mesh.triangles)
        if (point_in_polygon(triangle_centroid(mesh, t), poly))
            kept.push_back(t);
    if (kept.empty())
        throw Error("trimming removed every triangle; boundary and points are inconsistent");

    constexpr auto unused = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> remap(mesh.vertices.size(), unused);
    for (const auto& t : kept)
        for (const auto v : t)
            remap[v] = 0;
    TriMesh2 out;
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        if (remap[i] != unused) {
            remap[i] = out.vertices.size();
            out.vertices.push_back(mesh.vertices[i]);
        }
    for (const auto& t : kept)
        out.triangles.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
    return out;
}

inline TriMesh3 lift(const TriMesh2& mesh, const Network& net)
{
    TriMesh3 out;
    out.vertices.reserve(mesh.vertices.size());
    for (const auto& p : mesh.vertices)
        out.vertices.push_back(forward(net, p));
    out.triangles = mesh.triangles;
    return out;
}

/// Number of distinct undirected edges.
inline std::size_t edge_count(std::span<const Triangle> triangles)
{
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (const auto& t : triangles)
        for (int e = 0; e < 3; ++e) {
            const auto a = t[static_cast<std::size_t>(e)];
            const auto b = t[static_cast<std::size_t>((e + 1) % 3)];
            edges.emplace_back(std::min(a, b), std::max(a, b));
        }
    std::sort(edges.begin(), edges.end());
    return static_cast<std::size_t>(std::unique(edges.begin(), edges.end()) - edges.begin());
}

// ---------------------------------------------------------------------------
// Export

inline void write_obj(std::ostream& out, const TriMesh3& mesh)
{
    for (const auto& v : mesh.vertices)
        out << "v " << format_double(v.x) << ' ' << format_double(v.y) << ' ' << format_double(v.z) << '\n';
    for (const auto& t : mesh.triangles)
        out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void write_ply(std::ostream& out, const TriMesh3& mesh)
{
    out << "ply\n"
        << "format ascii 1.0\n"
        << "element vertex " << mesh.vertices.size() << '\n'
        << "property double x\n"
        << "property double y\n"
        << "property double z\n"
        << "element face " << mesh.triangles.size() << '\n'
        << "property list uchar int vertex_indices\n"
        << "end_header\n";
    for (const auto& v : mesh.vertices)
        out << format_double(v.x) << ' ' << format_double(v.y) << ' ' << format_double(v.z) << '\n';
    for (const auto& t : mesh.triangles)
        out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

namespace detail {

template <class Writer>
void write_file(const std::string& path, const TriMesh3& mesh, Writer writer)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("cannot write " + path);
    writer(out, mesh);
    out.flush();
    if (!out)
        throw Error("write failed for " + path);
}

}  // namespace detail

/// Reads the "v" and "f" records of an OBJ file. Faces must be triangles;
/// "i/j/k" style references keep only the vertex index.
inline TriMesh3 parse_obj(std::istream& in)
{
    TriMesh3 mesh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto tokens = detail::split_ws(detail::trim(line));
        if (tokens.empty() || tokens[0].starts_with('#'))
            continue;
        if (tokens[0] == "v") {
            Point3 p;
            if (tokens.size() < 4 || !detail::parse_double(tokens[1], p.x) || !detail::parse_double(tokens[2], p.y)
                || !detail::parse_double(tokens[3], p.z))
                throw ParseError("malformed vertex", line_no);
            mesh.vertices.push_back(p);
        } else if (tokens[0] == "f") {
            if (tokens.size() != 4)
                throw ParseError("only triangular faces are supported", line_no);
            Triangle t{};
            for (std::size_t c = 0; c < 3; ++c) {
                double idx = 0.0;
                const auto ref = tokens[c + 1].substr(0, tokens[c + 1].find('/'));
                if (!detail::parse_double(ref, idx) || idx < 1.0 || idx != std::floor(idx))
                    throw ParseError("bad face index", line_no);
                t[c] = static_cast<std::size_t>(idx) - 1;
            }
            mesh.triangles.push_back(t);
        }
    }
    for (const auto& t : mesh.triangles)
        for (const auto v : t)
            if (v >= mesh.vertices.size())
                throw Error("face references a missing vertex");
    return mesh;
}

inline TriMesh3 load_obj(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path);
    return parse_obj(in);
}

inline void export_obj(const TriMesh3& mesh, const std::string& path)
{
    detail::write_file(path, mesh, [](std::ostream& o, const TriMesh3& m) { write_obj(o, m); });
}

inline void export_ply(const TriMesh3& mesh, const std::string& path)
{
    detail::write_file(path, mesh, [](std::ostream& o, const TriMesh3& m) { write_ply(o, m); });
}

}  // namespace nnsurf
