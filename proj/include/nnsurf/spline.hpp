#pragma once

// B-spline curves and penalised least-squares fitting with free knots.
//
// Open curves use clamped knot vectors (degree+1 repeated end knots).
// Closed curves use a periodic knot vector on [0, 1): the breakpoints
// u_0 = 0 < u_1 < ... < u_{L-1} are extended by period 1 on both sides and
// the first `degree` control points are repeated at the end.

#include "nnsurf/error.hpp"
#include "nnsurf/pointcloud.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace nnsurf {

template <std::size_t Dim>
using Vec = std::array<double, Dim>;

template <std::size_t Dim>
struct BSplineCurve
{
    int degree = 3;
    std::vector<double> knots;
    std::vector<Vec<Dim>> control;
    bool closed = false;

    double domain_lo() const { return knots[static_cast<std::size_t>(degree)]; }
    double domain_hi() const { return knots[knots.size() - 1 - static_cast<std::size_t>(degree)]; }

    /// Number of distinct control points (the wrapped copies of a closed curve excluded).
    std::size_t unique_control_count() const
    {
        return closed ? control.size() - static_cast<std::size_t>(degree) : control.size();
    }
};

// ---------------------------------------------------------------------------
// Knot vectors

/// Clamped knot vector on [a, b] with the given interior knots.
inline std::vector<double> clamped_knots(double a, double b, std::span<const double> interior, int degree)
{
    std::vector<double> t(static_cast<std::size_t>(degree + 1), a);
    t.insert(t.end(), interior.begin(), interior.end());
    t.insert(t.end(), static_cast<std::size_t>(degree + 1), b);
    return t;
}

/// Periodic extension of breakpoints u_0 < ... < u_{L-1} in [u_0, u_0 + 1).
inline std::vector<double> periodic_knots(std::span<const double> breakpoints, int degree)
{
    const auto L = static_cast<long>(breakpoints.size());
    const long k = degree;
    std::vector<double> t;
    t.reserve(static_cast<std::size_t>(L + 2 * k + 1));
    for (long j = 0; j <= L + 2 * k; ++j) {
        const long idx = j - k;
        const long wraps = idx >= 0 ? idx / L : -((-idx + L - 1) / L);
        const long local = idx - wraps * L;
        t.push_back(breakpoints[static_cast<std::size_t>(local)] + static_cast<double>(wraps));
    }
    return t;
}

/// Distinct breakpoints of a knot vector over its domain [t_k, t_{n}].
inline std::vector<double> breakpoints_of(std::span<const double> knots, int degree, bool closed)
{
    const auto k = static_cast<std::size_t>(degree);
    std::vector<double> out;
    const std::size_t last = knots.size() - 1 - k;
    for (std::size_t i = k; i <= last; ++i)
        if (out.empty() || knots[i] > out.back())
            out.push_back(knots[i]);
    if (closed)
        out.pop_back();  // u_0 + 1 is the same point as u_0
    return out;
}

inline void validate_knots(std::span<const double> t, int degree)
{
    if (degree < 1)
        throw Error("spline degree must be >= 1");
    if (t.size() < static_cast<std::size_t>(2 * degree + 2))
        throw Error("knot vector too short for degree " + std::to_string(degree));
    for (std::size_t i = 0; i + 1 < t.size(); ++i) {
        if (!std::isfinite(t[i]) || t[i + 1] < t[i])
            throw Error("knot vector must be finite and non-decreasing");
    }
}

// ---------------------------------------------------------------------------
// Basis functions

/// B_i^k(x) by the Cox-de Boor recursion. The right end of the domain is
/// assigned to the last non-empty span so that clamped bases sum to one there.
inline double basis(std::size_t i, int k, std::span<const double> t, double x)
{
    if (k == 0) {
        if (t[i] <= x && x < t[i + 1])
            return 1.0;
        if (x == t.back() && t[i] < t[i + 1] && t[i + 1] == t.back())
            return 1.0;
        return 0.0;
    }
    double value = 0.0;
    const double left = t[i + static_cast<std::size_t>(k)] - t[i];
    if (left > 0.0)
        value += (x - t[i]) / left * basis(i, k - 1, t, x);
    const double right = t[i + static_cast<std::size_t>(k) + 1] - t[i + 1];
    if (right > 0.0)
        value += (t[i + static_cast<std::size_t>(k) + 1] - x) / right * basis(i + 1, k - 1, t, x);
    return value;
}

/// Span index s with t_s <= x < t_{s+1}, restricted to [degree, n_control - 1].
inline std::size_t find_span(std::span<const double> t, int degree, std::size_t n_control, double x)
{
    const auto k = static_cast<std::size_t>(degree);
    const std::size_t hi = n_control - 1;
    if (x >= t[n_control]) {
        std::size_t s = hi;
        while (s > k && !(t[s] < t[s + 1]))
            --s;
        return s;
    }
    if (x <= t[k])
        return k;
    const auto it = std::upper_bound(t.begin() + static_cast<std::ptrdiff_t>(k),
                                     t.begin() + static_cast<std::ptrdiff_t>(n_control + 1), x);
    return static_cast<std::size_t>(it - t.begin()) - 1;
}

/// The degree+1 basis values that are non-zero on span s, for B_{s-k} .. B_s.
inline std::vector<double> nonzero_basis(std::span<const double> t, int degree, std::size_t s, double x)
{
    const auto k = static_cast<std::size_t>(degree);
    std::vector<double> n(k + 1, 0.0), left(k + 1, 0.0), right(k + 1, 0.0);
    n[0] = 1.0;
    for (std::size_t j = 1; j <= k; ++j) {
        left[j] = x - t[s + 1 - j];
        right[j] = t[s + j] - x;
        double saved = 0.0;
        for (std::size_t r = 0; r < j; ++r) {
            const double denom = right[r + 1] + left[j - r];
            const double tmp = denom != 0.0 ? n[r] / denom : 0.0;
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    return n;
}

inline double wrap_unit(double t)
{
    const double w = t - std::floor(t);
    return w >= 1.0 ? 0.0 : w;
}

template <std::size_t Dim>
void validate(const BSplineCurve<Dim>& c)
{
    validate_knots(c.knots, c.degree);
    if (c.control.size() + static_cast<std::size_t>(c.degree) + 1 != c.knots.size())
        throw Error("control point count must equal knot count - degree - 1");
    for (const auto& p : c.control)
        for (const double v : p)
            if (!std::isfinite(v))
                throw Error("control points must be finite");
}

/// de Boor evaluation. Closed curves are evaluated at t modulo 1.
template <std::size_t Dim>
Vec<Dim> eval(const BSplineCurve<Dim>& c, double t)
{
    if (c.closed) {
        t = c.domain_lo() + wrap_unit(t - c.domain_lo());
    } else {
        const double lo = c.domain_lo();
        const double hi = c.domain_hi();
        const double tol = 1e-12 * std::max(1.0, hi - lo);
        if (t < lo - tol || t > hi + tol)
            throw Error("parameter " + format_double(t) + " outside the curve domain");
        t = std::clamp(t, lo, hi);
    }
    const auto k = static_cast<std::size_t>(c.degree);
    const std::size_t s = find_span(c.knots, c.degree, c.control.size(), t);
    std::vector<Vec<Dim>> d(k + 1);
    for (std::size_t j = 0; j <= k; ++j)
        d[j] = c.control[j + s - k];
    for (std::size_t r = 1; r <= k; ++r)
        for (std::size_t j = k; j >= r; --j) {
            const double lo = c.knots[j + s - k];
            const double denom = c.knots[j + 1 + s - r] - lo;
            const double alpha = denom > 0.0 ? (t - lo) / denom : 0.0;
            for (std::size_t a = 0; a < Dim; ++a)
                d[j][a] = (1.0 - alpha) * d[j - 1][a] + alpha * d[j][a];
        }
    return d[k];
}

inline Point2 eval_point(const BSplineCurve<2>& c, double t)
{
    const auto v = eval(c, t);
    return {v[0], v[1]};
}

// ---------------------------------------------------------------------------
// Least squares with fixed knots

template <std::size_t Dim>
struct FitInput
{
    std::vector<double> x;
    std::vector<Vec<Dim>> y;
    std::vector<double> w;  // empty means unit weights

    double weight(std::size_t r) const { return w.empty() ? 1.0 : w[r]; }
};

template <std::size_t Dim>
void validate(const FitInput<Dim>& in, bool closed)
{
    if (in.x.size() != in.y.size() || (!in.w.empty() && in.w.size() != in.x.size()))
        throw Error("fit input arrays have mismatched lengths");
    for (std::size_t r = 0; r < in.x.size(); ++r) {
        if (!std::isfinite(in.x[r]))
            throw Error("fit sites must be finite");
        for (const double v : in.y[r])
            if (!std::isfinite(v))
                throw Error("fit values must be finite");
        if (!(in.weight(r) > 0.0))
            throw Error("fit weights must be positive");
        if (r > 0 && !(in.x[r] > in.x[r - 1]) && !(closed && in.x[r] == in.x[r - 1]))
            throw Error(closed ? "closed fit sites must be non-decreasing" : "fit sites must be strictly increasing");
    }
    if (closed && !in.x.empty() && (in.x.front() < 0.0 || in.x.back() >= 1.0))
        throw Error("closed fit sites must lie in [0, 1)");
}

template <std::size_t Dim>
struct LsqFit
{
    std::vector<Vec<Dim>> control;  // wrapped for closed curves
    Vec<Dim> delta_axis{};
    double delta = 0.0;  // sum over axes
};

namespace detail {

/// Column indices and values of the design matrix row for site x.
struct DesignRow
{
    std::vector<std::size_t> cols;
    std::vector<double> values;
};

inline DesignRow design_row(std::span<const double> t, int degree, std::size_t n_ext, std::size_t n_unique,
                            double x)
{
    const auto k = static_cast<std::size_t>(degree);
    const std::size_t s = find_span(t, degree, n_ext, x);
    const auto n = nonzero_basis(t, degree, s, x);
    DesignRow row;
    for (std::size_t j = 0; j <= k; ++j) {
        row.cols.push_back((s - k + j) % n_unique);
        row.values.push_back(n[j]);
    }
    return row;
}

/// In-place Cholesky of a symmetric positive definite band matrix stored as
/// band[i][d] = A(i, i + d), 0 <= d <= bw. Returns the first failing row or -1.
inline long band_cholesky(std::vector<std::vector<double>>& band, std::size_t bw)
{
    const std::size_t n = band.size();
    for (std::size_t i = 0; i < n; ++i) {
        double diag = band[i][0];
        for (std::size_t p = (i > bw ? i - bw : 0); p < i; ++p) {
            const double l = band[p][i - p];
            diag -= l * l;
        }
        if (!(diag > 0.0))
            return static_cast<long>(i);
        const double root = std::sqrt(diag);
        band[i][0] = root;
        for (std::size_t d = 1; d <= bw && i + d < n; ++d) {
            const std::size_t j = i + d;
            double v = band[i][d];
            for (std::size_t p = (j > bw ? j - bw : 0); p < i; ++p)
                v -= band[p][i - p] * band[p][j - p];
            band[i][d] = v / root;
        }
    }
    return -1;
}

inline void band_solve(const std::vector<std::vector<double>>& chol, std::size_t bw, std::vector<double>& b)
{
    const std::size_t n = chol.size();
    for (std::size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (std::size_t p = (i > bw ? i - bw : 0); p < i; ++p)
            v -= chol[p][i - p] * b[p];
        b[i] = v / chol[i][0];
    }
    for (std::size_t i = n; i-- > 0;) {
        double v = b[i];
        for (std::size_t d = 1; d <= bw && i + d < n; ++d)
            v -= chol[i][d] * b[i + d];
        b[i] = v / chol[i][0];
    }
}

}  // namespace detail

/// Minimises sum_r (w_r y_r - sum_i p_i w_r B_i(x_r))^2 per axis through the
/// normal equations. Open curves use a banded Cholesky factorisation; closed
/// curves fold the wrapped basis functions, which couples the first and last
/// columns, and use a dense LDL^T factorisation.
template <std::size_t Dim>
LsqFit<Dim> lsq_fit_fixed_knots(const FitInput<Dim>& in, std::span<const double> knots, int degree,
                                bool closed = false)
{
    validate_knots(knots, degree);
    validate(in, closed);
    const auto k = static_cast<std::size_t>(degree);
    const std::size_t n_ext = knots.size() - k - 1;
    const std::size_t n_unique = closed ? n_ext - k : n_ext;
    if (closed && n_unique < k + 1)
        throw Error("closed spline needs at least degree+1 spans");
    const std::size_t m = in.x.size();
    if (m < n_unique)
        throw Error("need at least " + std::to_string(n_unique) + " data points for "
                    + std::to_string(n_unique) + " coefficients, got " + std::to_string(m));
    if (!closed) {
        const double tol = 1e-12 * std::max(1.0, knots.back() - knots.front());
        if (in.x.front() < knots[k] - tol || in.x.back() > knots[n_ext] + tol)
            throw Error("data sites fall outside the knot domain");
    }

    std::vector<detail::DesignRow> rows;
    rows.reserve(m);
    std::vector<std::size_t> support(n_unique, 0);
    for (std::size_t r = 0; r < m; ++r) {
        rows.push_back(detail::design_row(knots, degree, n_ext, n_unique, in.x[r]));
        for (std::size_t j = 0; j < rows.back().cols.size(); ++j)
            if (rows.back().values[j] > 0.0)
                ++support[rows.back().cols[j]];
    }
    for (std::size_t i = 0; i < n_unique; ++i)
        if (support[i] == 0) {
            const double lo = knots[i];
            const double hi = knots[i + k + 1];
            throw Error("rank deficient: basis " + std::to_string(i) + " on [" + format_double(lo) + ", "
                        + format_double(hi) + ") has no data sites");
        }

    LsqFit<Dim> out;
    std::vector<std::vector<double>> rhs(Dim, std::vector<double>(n_unique, 0.0));
    if (!closed) {
        std::vector<std::vector<double>> band(n_unique, std::vector<double>(k + 1, 0.0));
        for (std::size_t r = 0; r < m; ++r) {
            const double w2 = in.weight(r) * in.weight(r);
            const auto& row = rows[r];
            for (std::size_t a = 0; a < row.cols.size(); ++a) {
                const std::size_t i = row.cols[a];
                for (std::size_t b = a; b < row.cols.size(); ++b)
                    band[i][row.cols[b] - i] += w2 * row.values[a] * row.values[b];
                for (std::size_t ax = 0; ax < Dim; ++ax)
                    rhs[ax][i] += w2 * row.values[a] * in.y[r][ax];
            }
        }
        if (const long bad = detail::band_cholesky(band, k); bad >= 0)
            throw Error("rank deficient normal equations at coefficient " + std::to_string(bad));
        for (auto& b : rhs)
            detail::band_solve(band, k, b);
    } else {
        Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_unique),
                                                       static_cast<Eigen::Index>(n_unique));
        for (std::size_t r = 0; r < m; ++r) {
            const double w2 = in.weight(r) * in.weight(r);
            const auto& row = rows[r];
            for (std::size_t a = 0; a < row.cols.size(); ++a) {
                for (std::size_t b = 0; b < row.cols.size(); ++b)
                    normal(static_cast<Eigen::Index>(row.cols[a]), static_cast<Eigen::Index>(row.cols[b])) +=
                        w2 * row.values[a] * row.values[b];
                for (std::size_t ax = 0; ax < Dim; ++ax)
                    rhs[ax][row.cols[a]] += w2 * row.values[a] * in.y[r][ax];
            }
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()
            || ldlt.vectorD().minCoeff() <= 1e-14 * ldlt.vectorD().maxCoeff())
            throw Error("rank deficient normal equations for the closed fit");
        for (auto& b : rhs) {
            const Eigen::VectorXd sol = ldlt.solve(Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(n_unique)));
            b.assign(sol.data(), sol.data() + sol.size());
        }
    }

    out.control.resize(n_ext);
    for (std::size_t i = 0; i < n_ext; ++i)
        for (std::size_t ax = 0; ax < Dim; ++ax)
            out.control[i][ax] = rhs[ax][i % n_unique];

    for (std::size_t r = 0; r < m; ++r) {
        const auto& row = rows[r];
        for (std::size_t ax = 0; ax < Dim; ++ax) {
            double fit = 0.0;
            for (std::size_t a = 0; a < row.cols.size(); ++a)
                fit += row.values[a] * rhs[ax][row.cols[a]];
            const double res = in.weight(r) * (in.y[r][ax] - fit);
            out.delta_axis[ax] += res * res;
        }
    }
    out.delta = std::accumulate(out.delta_axis.begin(), out.delta_axis.end(), 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Smoothing fit

/// P(t) = sum over consecutive breakpoints of 1 / (t_{i+1} - t_i).
inline double knot_penalty(std::span<const double> breakpoints)
{
    if (breakpoints.size() < 2)
        throw Error("knot penalty needs at least two breakpoints");
    double p = 0.0;
    for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i) {
        const double gap = breakpoints[i + 1] - breakpoints[i];
        if (!(gap > 0.0))
            throw Error("coinciding knots at index " + std::to_string(i));
        p += 1.0 / gap;
    }
    return p;
}

/// Population variance sum (y - mean)^2 / |y| of one axis.
template <std::size_t Dim>
double axis_variance(std::span<const Vec<Dim>> y, std::size_t axis)
{
    if (y.empty())
        return 0.0;
    double mean = 0.0;
    for (const auto& v : y)
        mean += v[axis];
    mean /= static_cast<double>(y.size());
    double acc = 0.0;
    for (const auto& v : y)
        acc += (v[axis] - mean) * (v[axis] - mean);
    return acc / static_cast<double>(y.size());
}

/// Residual bound s = lambda * Var(y), evaluated per axis.
template <std::size_t Dim>
Vec<Dim> smoothing_bound(std::span<const Vec<Dim>> y, double lambda)
{
    Vec<Dim> s{};
    for (std::size_t a = 0; a < Dim; ++a)
        s[a] = lambda * axis_variance<Dim>(y, a);
    return s;
}

struct SmoothingOptions
{
    int degree = 3;
    bool closed = false;
    /// Weight p of the knot penalty. Unset: p = delta_0 / P_0 from the starting knots.
    std::optional<double> penalty_weight;
    /// Interior knot budget. 0 selects max(4, m / 3).
    std::size_t max_interior_knots = 0;
    /// Spans of the starting periodic knot vector for closed fits.
    std::size_t closed_initial_spans = 4;
    /// A knot is only placed where both new spans keep this many data sites.
    std::size_t min_span_sites = 3;
    /// Golden-section iterations per inserted knot.
    int golden_iterations = 40;
};

struct FitReport
{
    double delta = 0.0;  // weighted residual, summed over axes
    std::vector<double> delta_axis;
    double penalty = 0.0;  // P(t)
    double penalty_weight = 0.0;  // p
    double objective = 0.0;  // delta + p P(t)
    std::vector<double> bound;  // s per axis
    std::size_t interior_knots = 0;
    bool budget_exhausted = false;  // stopped with delta > s
    std::vector<double> delta_history;  // residual after each knot configuration
};

template <std::size_t Dim>
struct SmoothingFit
{
    BSplineCurve<Dim> curve;
    FitReport report;
};

namespace detail {

template <std::size_t Dim>
bool within_bound(const Vec<Dim>& delta, const Vec<Dim>& bound, double floor)
{
    for (std::size_t a = 0; a < Dim; ++a)
        if (delta[a] > bound[a] && delta[a] > floor)
            return false;
    return true;
}

inline std::vector<double> knots_from_breakpoints(const std::vector<double>& bp, int degree, bool closed)
{
    if (closed)
        return periodic_knots(bp, degree);
    const std::span<const double> interior(bp.data() + 1, bp.size() - 2);
    return clamped_knots(bp.front(), bp.back(), interior, degree);
}

inline std::vector<double> penalised_breakpoints(const std::vector<double>& bp, bool closed)
{
    std::vector<double> out = bp;
    if (closed)
        out.push_back(bp.front() + 1.0);
    return out;
}

}  // namespace detail

/// Least-squares spline whose residual satisfies delta <= lambda Var(y) per
/// axis. Knots are inserted one at a time into the span with the largest
/// residual that can still be split into two spans of `min_span_sites`
/// sites; the new position minimises delta + p P(t) by golden-section search.
template <std::size_t Dim>
SmoothingFit<Dim> fit_smoothing(const FitInput<Dim>& in, double lambda, const SmoothingOptions& opt = {})
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw Error("lambda must be finite and >= 0");
    validate(in, opt.closed);
    const int k = opt.degree;
    const std::size_t m = in.x.size();

    std::vector<double> bp;
    if (opt.closed) {
        const std::size_t spans = std::max<std::size_t>(opt.closed_initial_spans, static_cast<std::size_t>(k + 1));
        for (std::size_t i = 0; i < spans; ++i)
            bp.push_back(static_cast<double>(i) / static_cast<double>(spans));
    } else {
        if (m < static_cast<std::size_t>(k + 1))
            throw Error("need at least degree+1 data points");
        bp = {in.x.front(), in.x.back()};
    }
    // open breakpoints include both ends; periodic ones include u_0 only
    const auto interior_count = [&](const std::vector<double>& breaks) {
        return opt.closed ? breaks.size() - 1 : breaks.size() - 2;
    };
    const std::size_t initial_interior = interior_count(bp);
    const std::size_t budget = std::max(initial_interior,
                                        opt.max_interior_knots ? opt.max_interior_knots
                                                               : std::max<std::size_t>(4, m / 3));

    const Vec<Dim> bound = smoothing_bound<Dim>(in.y, lambda);
    double scale = 0.0;
    for (std::size_t r = 0; r < m; ++r)
        for (const double v : in.y[r])
            scale += in.weight(r) * in.weight(r) * v * v;
    const double floor = 1e-24 * (scale + 1.0);

    auto fit_with = [&](const std::vector<double>& breaks) {
        const auto knots = detail::knots_from_breakpoints(breaks, k, opt.closed);
        return lsq_fit_fixed_knots<Dim>(in, knots, k, opt.closed);
    };
    auto penalty_of = [&](const std::vector<double>& breaks) {
        return knot_penalty(detail::penalised_breakpoints(breaks, opt.closed));
    };

    LsqFit<Dim> current = fit_with(bp);
    FitReport report;
    report.delta_history.push_back(current.delta);
    const double p0 = penalty_of(bp);
    const double p = opt.penalty_weight ? *opt.penalty_weight : (p0 > 0.0 ? current.delta / p0 : 0.0);

    while (!detail::within_bound<Dim>(current.delta_axis, bound, floor)) {
        if (interior_count(bp) >= budget) {
            report.budget_exhausted = true;
            break;
        }
        // residual contribution of each span, axes scaled by their bounds
        const std::size_t n_spans = opt.closed ? bp.size() : bp.size() - 1;
        const auto knots = detail::knots_from_breakpoints(bp, k, opt.closed);
        BSplineCurve<Dim> probe{k, knots, current.control, opt.closed};
        std::vector<double> span_res(n_spans, 0.0);
        std::vector<std::vector<double>> span_sites(n_spans);
        for (std::size_t r = 0; r < m; ++r) {
            const auto span = static_cast<std::size_t>(
                std::upper_bound(bp.begin(), bp.end(), in.x[r]) - bp.begin()) - 1;
            const std::size_t sidx = std::min(span, n_spans - 1);
            const auto fit = eval(probe, in.x[r]);
            for (std::size_t a = 0; a < Dim; ++a) {
                const double res = in.weight(r) * (in.y[r][a] - fit[a]);
                span_res[sidx] += res * res / std::max(bound[a], floor);
            }
            span_sites[sidx].push_back(in.x[r]);
        }
        std::vector<std::size_t> order(n_spans);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return span_res[a] > span_res[b]; });

        bool inserted = false;
        for (const auto sidx : order) {
            const auto& sites = span_sites[sidx];
            const std::size_t q = std::max<std::size_t>(1, opt.min_span_sites);
            if (sites.size() < 2 * q)
                continue;
            // both new spans keep at least q sites
            const double lo = std::max(sites[q - 1], bp[sidx]);
            const double hi = sites[sites.size() - q];
            if (!(hi > lo))
                continue;

            auto objective = [&](double tau) {
                std::vector<double> trial = bp;
                trial.insert(trial.begin() + static_cast<std::ptrdiff_t>(sidx) + 1, tau);
                try {
                    const auto f = fit_with(trial);
                    return f.delta + p * penalty_of(trial);
                } catch (const Error&) {
                    return std::numeric_limits<double>::infinity();
                }
            };
            const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
            double a = lo, b = hi;
            double c = b - phi * (b - a), d = a + phi * (b - a);
            double fc = objective(c), fd = objective(d);
            for (int it = 0; it < opt.golden_iterations; ++it) {
                if (fc <= fd) {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - phi * (b - a);
                    fc = objective(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + phi * (b - a);
                    fd = objective(d);
                }
            }
            const double tau = fc <= fd ? c : d;
            if (!std::isfinite(std::min(fc, fd)))
                continue;
            std::vector<double> trial = bp;
            trial.insert(trial.begin() + static_cast<std::ptrdiff_t>(sidx) + 1, tau);
            current = fit_with(trial);
            bp = std::move(trial);
            report.delta_history.push_back(current.delta);
            inserted = true;
            break;
        }
        if (!inserted) {
            report.budget_exhausted = true;
            break;
        }
    }

    SmoothingFit<Dim> out;
    out.curve = BSplineCurve<Dim>{k, detail::knots_from_breakpoints(bp, k, opt.closed), current.control, opt.closed};
    report.delta = current.delta;
    report.delta_axis.assign(current.delta_axis.begin(), current.delta_axis.end());
    report.bound.assign(bound.begin(), bound.end());
    report.penalty = penalty_of(bp);
    report.penalty_weight = p;
    report.objective = report.delta + p * report.penalty;
    report.interior_knots = interior_count(bp);
    out.report = std::move(report);
    return out;
}

/// Closed smoothing fit through points with caller-supplied parameters,
/// ascending in [0, 1). Several points may share a parameter.
inline SmoothingFit<2> fit_closed_parametric(std::span<const Point2> points, std::span<const double> params,
                                             double lambda, SmoothingOptions opt = {})
{
    if (points.size() != params.size())
        throw Error("boundary points and parameters differ in length");
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!is_finite(points[i]) || !(params[i] >= 0.0 && params[i] < 1.0))
            throw Error("boundary points must be finite with parameters in [0, 1)");
        if (i > 0 && params[i] < params[i - 1])
            throw Error("boundary parameters must be ascending");
        if (i == 0 || params[i] > params[i - 1])
            ++distinct;
    }
    if (distinct < 4)
        throw Error("boundary needs at least 4 distinct parameters");

    FitInput<2> in;
    for (std::size_t i = 0; i < points.size(); ++i) {
        in.x.push_back(params[i]);
        in.y.push_back({points[i].u, points[i].v});
    }
    opt.closed = true;
    if (opt.max_interior_knots == 0)
        opt.max_interior_knots = std::max<std::size_t>(4, distinct / 3);
    return fit_smoothing<2>(in, lambda, opt);
}

/// Closed smoothing fit through a ring, parameterised by chord length.
inline SmoothingFit<2> fit_closed_boundary(std::span<const Point2> ring, double lambda, SmoothingOptions opt = {})
{
    std::vector<Point2> pts;
    for (const auto& p : ring) {
        if (!is_finite(p))
            throw Error("boundary ring has non-finite points");
        if (pts.empty() || !(p == pts.back()))
            pts.push_back(p);
    }
    while (pts.size() > 1 && pts.front() == pts.back())
        pts.pop_back();
    if (pts.size() < 4)
        throw Error("boundary ring needs at least 4 distinct points");

    std::vector<double> cum(pts.size(), 0.0);
    for (std::size_t i = 1; i < pts.size(); ++i)
        cum[i] = cum[i - 1] + distance(pts[i - 1], pts[i]);
    const double total = cum.back() + distance(pts.back(), pts.front());
    if (!(total > 0.0))
        throw Error("boundary ring has zero length");
    for (auto& c : cum)
        c /= total;
    return fit_closed_parametric(pts, cum, lambda, opt);
}

// ---------------------------------------------------------------------------
// Serialisation

template <std::size_t Dim>
nlohmann::json to_json(const BSplineCurve<Dim>& c)
{
    return {{"format", "nnsurf-bspline"},
            {"version", 1},
            {"degree", c.degree},
            {"closed", c.closed},
            {"knots", c.knots},
            {"control", c.control}};
}

template <std::size_t Dim>
BSplineCurve<Dim> curve_from_json(const nlohmann::json& j)
{
    try {
        if (j.at("format").get<std::string>() != "nnsurf-bspline")
            throw Error("not a spline document");
        BSplineCurve<Dim> c;
        c.degree = j.at("degree").get<int>();
        c.closed = j.at("closed").get<bool>();
        c.knots = j.at("knots").get<std::vector<double>>();
        c.control = j.at("control").get<std::vector<Vec<Dim>>>();
        validate(c);
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed spline document: ") + e.what());
    }
}

/// "x,y" samples at `n` uniform parameter steps over the domain.
inline void write_polyline_csv(std::ostream& out, const BSplineCurve<2>& c, std::size_t n)
{
    if (n < 2)
        throw Error("polyline needs at least 2 samples");
    out << "x,y\n";
    const double lo = c.domain_lo();
    const double hi = c.domain_hi();
    const double steps = static_cast<double>(c.closed ? n : n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = eval(c, lo + (hi - lo) * static_cast<double>(i) / steps);
        out << format_double(p[0]) << ',' << format_double(p[1]) << '\n';
    }
}

}  // namespace nnsurf
