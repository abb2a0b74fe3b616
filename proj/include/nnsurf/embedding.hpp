#pragma once

// Isomap: k-NN graph -> geodesic distances -> classical MDS.

#include "nnsurf/error.hpp"
#include "nnsurf/pointcloud.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace nnsurf {

/// Weight given to the edge between two coincident points.
inline constexpr double kCoincidentEdgeWeight = 1e-12;

struct GraphEdge
{
    std::size_t target = 0;
    double weight = 0.0;
};

/// Undirected weighted graph stored as sorted adjacency lists.
class NeighborGraph
{
public:
    explicit NeighborGraph(std::size_t n = 0) : adjacency_(n) {}

    std::size_t size() const { return adjacency_.size(); }

    /// Inserts (i, j) and (j, i). A repeated insertion keeps the existing weight.
    void add_edge(std::size_t i, std::size_t j, double weight)
    {
        if (i == j)
            throw Error("self-loop at vertex " + std::to_string(i));
        if (i >= size() || j >= size())
            throw Error("edge endpoint out of range");
        if (!(weight > 0.0) || !std::isfinite(weight))
            throw Error("edge weights must be finite and positive");
        insert(i, j, weight);
        insert(j, i, weight);
    }

    std::span<const GraphEdge> neighbors(std::size_t i) const { return adjacency_[i]; }

    bool has_edge(std::size_t i, std::size_t j) const
    {
        const auto& adj = adjacency_[i];
        return std::binary_search(adj.begin(), adj.end(), j,
                                  [](const auto& a, const auto& b) { return key(a) < key(b); });
    }

    /// Every directed edge (i, j, w), i-major.
    std::vector<std::tuple<std::size_t, std::size_t, double>> edges() const
    {
        std::vector<std::tuple<std::size_t, std::size_t, double>> out;
        for (std::size_t i = 0; i < size(); ++i)
            for (const auto& e : adjacency_[i])
                out.emplace_back(i, e.target, e.weight);
        return out;
    }

    /// Connected component label per vertex, labels numbered by first vertex.
    std::vector<std::size_t> components() const
    {
        constexpr auto unset = std::numeric_limits<std::size_t>::max();
        std::vector<std::size_t> label(size(), unset);
        std::size_t next = 0;
        std::vector<std::size_t> stack;
        for (std::size_t s = 0; s < size(); ++s) {
            if (label[s] != unset)
                continue;
            label[s] = next;
            stack.push_back(s);
            while (!stack.empty()) {
                const auto u = stack.back();
                stack.pop_back();
                for (const auto& e : adjacency_[u])
                    if (label[e.target] == unset) {
                        label[e.target] = next;
                        stack.push_back(e.target);
                    }
            }
            ++next;
        }
        return label;
    }

    std::size_t component_count() const
    {
        const auto labels = components();
        return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    }

private:
    static std::size_t key(const GraphEdge& e) { return e.target; }
    static std::size_t key(std::size_t v) { return v; }

    void insert(std::size_t i, std::size_t j, double w)
    {
        auto& adj = adjacency_[i];
        auto it = std::lower_bound(adj.begin(), adj.end(), j,
                                   [](const GraphEdge& e, std::size_t t) { return e.target < t; });
        if (it != adj.end() && it->target == j)
            return;
        adj.insert(it, GraphEdge{j, w});
    }

    std::vector<std::vector<GraphEdge>> adjacency_;
};

/// Symmetric n x n matrix of pairwise distances with zero diagonal.
using DistanceMatrix = Eigen::MatrixXd;

struct Embedding2D
{
    PointCloud2 coords;
    double stress = 0.0;
};

/// Indices of the k nearest points to `query` among `points`, ties by lower index.
template <class PointT, class DistFn>
std::vector<std::size_t> nearest_indices(std::span<const PointT> points, std::size_t query,
                                         std::size_t k, DistFn dist)
{
    std::vector<std::pair<double, std::size_t>> cand;
    cand.reserve(points.size());
    for (std::size_t j = 0; j < points.size(); ++j)
        if (j != query)
            cand.emplace_back(dist(points[query], points[j]), j);
    k = std::min(k, cand.size());
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i)
        out[i] = cand[i].second;
    return out;
}

/// Union-symmetrized k-NN graph weighted by Euclidean distance.
inline NeighborGraph knn_graph(const PointCloud3& cloud, std::size_t k)
{
    const std::size_t n = cloud.size();
    if (k < 1 || k >= n)
        throw Error("k must satisfy 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n)
                    + ")");
    NeighborGraph g(n);
    const std::span<const Point3> pts(cloud);
    for (std::size_t i = 0; i < n; ++i) {
        const auto nn = nearest_indices<Point3>(pts, i, k, squared_distance);
        for (const auto j : nn) {
            const double d = distance(cloud[i], cloud[j]);
            g.add_edge(i, j, d > 0.0 ? d : kCoincidentEdgeWeight);
        }
    }
    return g;
}

inline DisconnectedGraphError disconnected_error(const NeighborGraph& g, const std::string& hint = {})
{
    const auto count = g.component_count();
    std::string msg = "neighbor graph is disconnected (" + std::to_string(count) + " components)";
    if (!hint.empty())
        msg += "; " + hint;
    return DisconnectedGraphError(msg, count);
}

/// Single-source Dijkstra. Distances accumulate edge by edge from the source.
inline std::vector<double> dijkstra(const NeighborGraph& g, std::size_t source)
{
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(g.size(), inf);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    dist[source] = 0.0;
    heap.emplace(0.0, source);
    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (d > dist[u])
            continue;
        for (const auto& e : g.neighbors(u)) {
            const double nd = d + e.weight;
            if (nd < dist[e.target]) {
                dist[e.target] = nd;
                heap.emplace(nd, e.target);
            }
        }
    }
    return dist;
}

enum class ShortestPathMethod { dijkstra, floyd_warshall };

inline constexpr std::size_t kFloydWarshallMaxSize = 512;

/// All-pairs geodesic distances. Entry (i, j) for i < j is taken from the
/// search rooted at i and mirrored, so the result is exactly symmetric.
inline DistanceMatrix shortest_paths(const NeighborGraph& g,
                                     ShortestPathMethod method = ShortestPathMethod::dijkstra)
{
    const std::size_t n = g.size();
    if (n == 0)
        return {};
    if (g.component_count() > 1)
        throw disconnected_error(g);

    DistanceMatrix d(n, n);
    if (method == ShortestPathMethod::dijkstra) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = dijkstra(g, i);
            for (std::size_t j = i; j < n; ++j) {
                d(i, j) = row[j];
                d(j, i) = row[j];
            }
        }
        return d;
    }

    if (n > kFloydWarshallMaxSize)
        throw Error("Floyd-Warshall is limited to " + std::to_string(kFloydWarshallMaxSize)
                    + " vertices");
    d.setConstant(std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (const auto& e : g.neighbors(i))
            d(i, e.target) = e.weight;
    }
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t i = 0; i < n; ++i) {
            const double dik = d(i, k);
            for (std::size_t j = 0; j < n; ++j)
                d(i, j) = std::min(d(i, j), dik + d(k, j));
        }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            d(j, i) = d(i, j);
    return d;
}

/// tau(D) = -1/2 J (D o D) J, the double-centred squared-distance matrix.
inline Eigen::MatrixXd inner_products(const DistanceMatrix& d)
{
    const Eigen::MatrixXd sq = d.array().square().matrix();
    const Eigen::VectorXd row_mean = sq.rowwise().mean();
    const Eigen::VectorXd col_mean = sq.colwise().mean().transpose();
    const double total = sq.mean();
    Eigen::MatrixXd b = sq;
    b.colwise() -= row_mean;
    b.rowwise() -= col_mean.transpose();
    b.array() += total;
    return -0.5 * b;
}

/// Euclidean distance matrix of a 2D point set.
inline DistanceMatrix pairwise_distances(const PointCloud2& pts)
{
    const auto n = static_cast<Eigen::Index>(pts.size());
    DistanceMatrix d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = distance(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)]);
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

/// Stress E = ||tau(D_G) - tau(D_Y)||, Frobenius norm.
inline double embedding_stress(const DistanceMatrix& source, const PointCloud2& coords)
{
    return (inner_products(source) - inner_products(pairwise_distances(coords))).norm();
}

/// Classical MDS into two dimensions. Eigenvector signs are fixed so that the
/// first non-negligible component of each vector is positive.
inline Embedding2D classical_mds(const DistanceMatrix& d, std::size_t dim = 2)
{
    if (dim != 2)
        throw Error("only 2D embeddings are supported");
    const auto n = d.rows();
    if (n != d.cols() || n < 3)
        throw Error("distance matrix must be square with at least 3 points");
    if (!d.allFinite())
        throw Error("distance matrix has non-finite entries");

    const Eigen::MatrixXd b = inner_products(d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
    if (eig.info() != Eigen::Success)
        throw Error("eigendecomposition failed");

    // eigenvalues ascending
    const Eigen::VectorXd& values = eig.eigenvalues();
    const double largest = std::max(values(n - 1), 0.0);
    const double tol = std::max(largest, 1.0) * 1e-12 * static_cast<double>(n);
    Embedding2D out;
    out.coords.assign(static_cast<std::size_t>(n), Point2{});
    for (std::size_t axis = 0; axis < dim; ++axis) {
        const Eigen::Index col = n - 1 - static_cast<Eigen::Index>(axis);
        const double lambda = values(col);
        if (!(lambda > tol))
            throw Error("degenerate geometry: fewer than 2 positive eigenvalues in MDS");
        Eigen::VectorXd vec = eig.eigenvectors().col(col);
        const double vmax = vec.cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < n; ++i)
            if (std::abs(vec(i)) > 1e-8 * vmax) {
                if (vec(i) < 0.0)
                    vec = -vec;
                break;
            }
        const double scale = std::sqrt(lambda);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& p = out.coords[static_cast<std::size_t>(i)];
            (axis == 0 ? p.u : p.v) = vec(i) * scale;
        }
    }
    out.stress = embedding_stress(d, out.coords);
    return out;
}

/// Smallest k in [1, n-1] whose k-NN graph is connected (connectivity is monotone in k).
inline std::size_t smallest_connecting_k(const PointCloud3& cloud)
{
    std::size_t lo = 1;
    std::size_t hi = cloud.size() - 1;
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (knn_graph(cloud, mid).component_count() == 1)
            hi = mid;
        else
            lo = mid + 1;
    }
    return lo;
}

inline Embedding2D isomap(const PointCloud3& cloud, std::size_t k,
                          ShortestPathMethod method = ShortestPathMethod::dijkstra)
{
    require_cloud(cloud);
    const NeighborGraph g = knn_graph(cloud, k);
    if (g.component_count() > 1)
        throw disconnected_error(g, "smallest connecting k is " + std::to_string(smallest_connecting_k(cloud)));
    return classical_mds(shortest_paths(g, method));
}

inline void write_embedding_csv(std::ostream& out, const Embedding2D& emb)
{
    out << "u,v\n";
    for (const auto& p : emb.coords)
        out << format_double(p.u) << ',' << format_double(p.v) << '\n';
}

inline PointCloud2 parse_embedding_csv(std::istream& in)
{
    PointCloud2 out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::trim(line);
        if (view.empty() || (line_no == 1 && view == "u,v"))
            continue;
        const auto comma = view.find(',');
        Point2 p;
        if (comma == std::string_view::npos || !detail::parse_double(view.substr(0, comma), p.u)
            || !detail::parse_double(view.substr(comma + 1), p.v))
            throw ParseError("expected \"u,v\"", line_no);
        out.push_back(p);
    }
    return out;
}

}  // namespace nnsurf
