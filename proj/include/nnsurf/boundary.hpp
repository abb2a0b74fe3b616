#pragma once

// Multi-depth boundary sampling of a 2D point set.
//
// Per depth: pick the farthest-from-centroid point in each of m angular
// sectors, join consecutive corners by a cheapest path through the points
// lying between them, then strip the resulting ring from the working set.

#include "nnsurf/embedding.hpp"
#include "nnsurf/error.hpp"
#include "nnsurf/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <istream>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <vector>

namespace nnsurf {

/// Edge cost p -> q is c1 * |p - q| + c2 * |q - centroid|.
struct PathWeights
{
    double c1 = 1.0;
    double c2 = 0.05;
};

inline void validate(const PathWeights& w)
{
    if (!(w.c1 >= 0.0) || !(w.c2 >= 0.0) || !(w.c1 + w.c2 > 0.0))
        throw ConfigError("path weights need c1, c2 >= 0 and c1 + c2 > 0");
}

struct BoundaryRing
{
    std::size_t depth = 1;
    std::vector<std::size_t> indices;  // closed loop, first point not repeated
};

struct RingSampling
{
    std::vector<BoundaryRing> rings;
    bool exhausted = false;  // fewer rings than requested
};

inline Point2 centroid(std::span<const Point2> cloud)
{
    if (cloud.empty())
        throw Error("centroid of an empty point set");
    double su = 0.0;
    double sv = 0.0;
    for (const auto& p : cloud) {
        su += p.u;
        sv += p.v;
    }
    const auto n = static_cast<double>(cloud.size());
    return {su / n, sv / n};
}

/// Angle of p around c in [0, 2 pi).
inline double polar_angle(Point2 p, Point2 c)
{
    double a = std::atan2(p.v - c.v, p.u - c.u);
    if (a < 0.0)
        a += 2.0 * std::numbers::pi;
    return a >= 2.0 * std::numbers::pi ? 0.0 : a;
}

/// Sector of p among m equal sectors starting at angle 0. Angles within a
/// relative 1e-9 below a sector edge are assigned to the next sector.
inline std::size_t sector_of(Point2 p, Point2 c, std::size_t m)
{
    const double pos = polar_angle(p, c) / (2.0 * std::numbers::pi) * static_cast<double>(m);
    return static_cast<std::size_t>(std::floor(pos + 1e-9)) % m;
}

/// Farthest point from the centroid in each non-empty sector, in angular order.
/// Ties go to the lower index; points at the centroid belong to no sector.
inline std::vector<std::size_t> select_corners(std::span<const Point2> cloud, std::size_t m = 8)
{
    if (m < 3)
        throw Error("need at least 3 sectors");
    if (cloud.empty())
        throw Error("cannot select corners of an empty point set");
    const Point2 c = centroid(cloud);
    constexpr auto none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> best(m, none);
    std::vector<double> best_r(m, -1.0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const double r = distance(cloud[i], c);
        if (!(r > 0.0))
            continue;
        const std::size_t s = sector_of(cloud[i], c, m);
        if (r > best_r[s]) {
            best_r[s] = r;
            best[s] = i;
        }
    }
    std::vector<std::size_t> corners;
    for (const auto i : best)
        if (i != none && std::find(corners.begin(), corners.end(), i) == corners.end())
            corners.push_back(i);
    if (corners.size() < 3)
        throw Error("fewer than 3 non-empty sectors around the centroid");
    return corners;
}

/// Indices of points inside the bounding rectangle of a and b, expanded on
/// every side by `margin_fraction` of the rectangle's diagonal.
inline std::vector<std::size_t> corner_region(std::span<const Point2> cloud, std::size_t a, std::size_t b,
                                              double margin_fraction = 0.1)
{
    const Point2 pa = cloud[a];
    const Point2 pb = cloud[b];
    const double margin = margin_fraction * distance(pa, pb);
    const double u0 = std::min(pa.u, pb.u) - margin;
    const double u1 = std::max(pa.u, pb.u) + margin;
    const double v0 = std::min(pa.v, pb.v) - margin;
    const double v1 = std::max(pa.v, pb.v) + margin;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud[i];
        if (p.u >= u0 && p.u <= u1 && p.v >= v0 && p.v <= v1)
            out.push_back(i);
    }
    return out;
}

/// Cheapest path a -> b over the k-NN graph of the points in the corner
/// region. Edge p -> q costs c1 * |p - q| + c2 * |q - center|.
inline std::vector<std::size_t> corner_path(std::span<const Point2> cloud, std::size_t a, std::size_t b,
                                            const PathWeights& weights, std::size_t k, Point2 center,
                                            double margin_fraction = 0.1)
{
    validate(weights);
    if (a == b)
        throw Error("corner path endpoints must differ");
    if (a >= cloud.size() || b >= cloud.size())
        throw Error("corner index out of range");
    if (k < 1)
        throw Error("corner path needs k >= 1");

    const auto region = corner_region(cloud, a, b, margin_fraction);
    const std::size_t n = region.size();
    std::vector<Point2> local;
    local.reserve(n);
    std::size_t la = n, lb = n;
    for (std::size_t i = 0; i < n; ++i) {
        local.push_back(cloud[region[i]]);
        if (region[i] == a)
            la = i;
        if (region[i] == b)
            lb = i;
    }

    // union-symmetrized k-NN adjacency within the region
    std::vector<std::vector<std::size_t>> adj(n);
    const std::size_t kk = std::min(k, n - 1);
    const auto sq = [](Point2 p, Point2 q) { return dot(p - q, p - q); };
    for (std::size_t i = 0; i < n; ++i)
        for (const auto j : nearest_indices<Point2>(local, i, kk, sq)) {
            adj[i].push_back(j);
            adj[j].push_back(i);
        }
    for (auto& list : adj) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, inf);
    std::vector<std::size_t> prev(n, n);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[la] = 0.0;
    heap.emplace(0.0, la);
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u])
            continue;
        if (u == lb)
            break;
        for (const auto v : adj[u]) {
            const double cost = weights.c1 * distance(local[u], local[v]) + weights.c2 * distance(local[v], center);
            const double nd = d + cost;
            if (nd < dist[v]) {
                dist[v] = nd;
                prev[v] = u;
                heap.emplace(nd, v);
            }
        }
    }
    if (dist[lb] == inf)
        throw Error("corners " + std::to_string(a) + " and " + std::to_string(b)
                    + " are not connected inside their region; increase k or the margin");

    std::vector<std::size_t> path;
    for (std::size_t v = lb; v != n; v = prev[v])
        path.push_back(region[v]);
    std::reverse(path.begin(), path.end());
    return path;
}

inline std::vector<std::size_t> corner_path(std::span<const Point2> cloud, std::size_t a, std::size_t b,
                                            const PathWeights& weights, std::size_t k)
{
    return corner_path(cloud, a, b, weights, k, centroid(cloud));
}

/// Cost of a path under the corner-path edge cost.
inline double path_cost(std::span<const Point2> cloud, std::span<const std::size_t> path,
                        const PathWeights& weights, Point2 center)
{
    double cost = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i)
        cost += weights.c1 * distance(cloud[path[i - 1]], cloud[path[i]])
            + weights.c2 * distance(cloud[path[i]], center);
    return cost;
}

struct RingOptions
{
    std::size_t depth = 2;
    std::size_t corners = 8;
    PathWeights weights;
    std::size_t k = 12;
    double margin_fraction = 0.1;
};

/// Concatenates corner paths into one closed ring. Shared endpoints appear
/// once; a point reached by two paths keeps its first position.
inline std::vector<std::size_t> join_paths(const std::vector<std::vector<std::size_t>>& paths)
{
    std::vector<std::size_t> ring;
    for (const auto& path : paths)
        for (const auto i : path)
            if (std::find(ring.begin(), ring.end(), i) == ring.end())
                ring.push_back(i);
    return ring;
}

inline RingSampling sample_rings(std::span<const Point2> cloud, const RingOptions& opt)
{
    if (opt.depth < 1)
        throw Error("ring depth must be >= 1");
    validate(opt.weights);

    RingSampling out;
    std::vector<std::size_t> working(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i)
        working[i] = i;

    for (std::size_t depth = 1; depth <= opt.depth; ++depth) {
        std::vector<Point2> sub;
        sub.reserve(working.size());
        for (const auto i : working)
            sub.push_back(cloud[i]);
        if (sub.size() < 3) {
            out.exhausted = true;
            break;
        }

        std::vector<std::size_t> corners;
        try {
            corners = select_corners(sub, opt.corners);
        } catch (const Error&) {
            out.exhausted = true;
            break;
        }
        const Point2 center = centroid(sub);
        std::vector<std::vector<std::size_t>> paths;
        for (std::size_t c = 0; c < corners.size(); ++c) {
            const auto a = corners[c];
            const auto b = corners[(c + 1) % corners.size()];
            paths.push_back(corner_path(sub, a, b, opt.weights, opt.k, center, opt.margin_fraction));
        }
        const auto local_ring = join_paths(paths);
        if (local_ring.size() < 3) {
            out.exhausted = true;
            break;
        }

        BoundaryRing ring;
        ring.depth = depth;
        for (const auto i : local_ring)
            ring.indices.push_back(working[i]);
        std::vector<bool> taken(sub.size(), false);
        for (const auto i : local_ring)
            taken[i] = true;
        std::vector<std::size_t> next;
        for (std::size_t i = 0; i < working.size(); ++i)
            if (!taken[i])
                next.push_back(working[i]);
        working = std::move(next);
        out.rings.push_back(std::move(ring));
    }
    return out;
}

inline RingSampling sample_rings(std::span<const Point2> cloud, std::size_t depth, std::size_t m,
                                 const PathWeights& weights, std::size_t k)
{
    RingOptions opt;
    opt.depth = depth;
    opt.corners = m;
    opt.weights = weights;
    opt.k = k;
    return sample_rings(cloud, opt);
}

/// Ring points of every depth on one closed parameter range.
struct BoundaryBand
{
    std::vector<Point2> points;
    std::vector<double> params;  // ascending in [0, 1)
};

/// Places every ring point at the normalised arc-length position of its
/// closest point on the outermost ring. Outer ring points keep their own
/// position, so a single ring gets plain chord-length parameters.
inline BoundaryBand merge_rings(std::span<const Point2> cloud, const RingSampling& sampling)
{
    if (sampling.rings.empty())
        throw Error("no boundary rings to merge");
    const auto& outer = sampling.rings.front().indices;
    const std::size_t n = outer.size();
    if (n < 3)
        throw Error("outer ring needs at least 3 points");
    std::vector<double> start(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        start[i + 1] = start[i] + distance(cloud[outer[i]], cloud[outer[(i + 1) % n]]);
    const double total = start[n];
    if (!(total > 0.0))
        throw Error("outer ring has zero length");

    auto position = [&](Point2 p) {
        double best_d = std::numeric_limits<double>::infinity();
        double best_s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const Point2 a = cloud[outer[i]];
            const Point2 ab = cloud[outer[(i + 1) % n]] - a;
            const double len2 = dot(ab, ab);
            const double f = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
            const double d = distance(p, a + f * ab);
            if (d < best_d) {
                best_d = d;
                best_s = start[i] + f * std::sqrt(len2);
            }
        }
        return best_s;
    };

    std::vector<std::pair<double, std::size_t>> keyed;
    for (std::size_t r = 0; r < sampling.rings.size(); ++r)
        for (std::size_t j = 0; j < sampling.rings[r].indices.size(); ++j) {
            const auto i = sampling.rings[r].indices[j];
            double t = (r == 0 ? start[j] : position(cloud[i])) / total;
            if (t >= 1.0)
                t -= 1.0;
            keyed.emplace_back(t, i);
        }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    BoundaryBand band;
    band.points.reserve(keyed.size());
    band.params.reserve(keyed.size());
    for (const auto& [t, i] : keyed) {
        band.points.push_back(cloud[i]);
        band.params.push_back(t);
    }
    return band;
}

/// One "depth,index" line per ring point, in ring order.
inline void write_rings_csv(std::ostream& out, const RingSampling& rings)
{
    out << "depth,index\n";
    for (const auto& r : rings.rings)
        for (const auto i : r.indices)
            out << r.depth << ',' << i << '\n';
}

inline RingSampling parse_rings_csv(std::istream& in)
{
    RingSampling out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = detail::trim(line);
        if (t.empty() || (line_no == 1 && t == "depth,index"))
            continue;
        const auto comma = t.find(',');
        double depth = 0.0, index = 0.0;
        if (comma == std::string_view::npos || !detail::parse_double(t.substr(0, comma), depth)
            || !detail::parse_double(t.substr(comma + 1), index) || depth < 1.0 || index < 0.0
            || depth != std::floor(depth) || index != std::floor(index))
            throw ParseError("expected 'depth,index'", line_no);
        const auto d = static_cast<std::size_t>(depth);
        if (out.rings.empty() || out.rings.back().depth != d) {
            if (!out.rings.empty() && d != out.rings.back().depth + 1)
                throw ParseError("ring depths must be consecutive", line_no);
            if (out.rings.empty() && d != 1)
                throw ParseError("first ring must have depth 1", line_no);
            out.rings.push_back({d, {}});
        }
        out.rings.back().indices.push_back(static_cast<std::size_t>(index));
    }
    return out;
}

}  // namespace nnsurf
