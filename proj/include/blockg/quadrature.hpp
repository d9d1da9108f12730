#pragma once
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <vector>

namespace blockg {

struct QuadResult {
    double value{0};
    double error{0};
    long evaluations{0};
    bool converged{false};
};

namespace detail {

inline constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                   0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                   0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                   0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                   0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                   0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                   0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                  0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

// QUADPACK-style error from the Kronrod/Gauss pair.
inline double gk_error(double resk, double resg, double resabs, double resasc, double h) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    double err = std::abs((resk - resg) * h);
    resasc *= std::abs(h);
    resabs *= std::abs(h);
    if (resasc != 0 && err != 0) err = resasc * std::min(1.0, std::pow(200 * err / resasc, 1.5));
    if (resabs > std::numeric_limits<double>::min() / (50 * eps)) err = std::max(50 * eps * resabs, err);
    return err;
}

template <class F>
void gk15(F& f, double a, double b, double& value, double& error) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double fv1[7], fv2[7];
    const double fc = f(c);
    double resg = fc * kWg[3], resk = fc * kWgk[7], resabs = std::abs(resk);
    for (int j = 0; j < 3; ++j) {
        const int jtw = 2 * j + 1;
        const double x = h * kXgk[jtw];
        const double f1 = f(c - x), f2 = f(c + x);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        resg += kWg[j] * (f1 + f2);
        resk += kWgk[jtw] * (f1 + f2);
        resabs += kWgk[jtw] * (std::abs(f1) + std::abs(f2));
    }
    for (int j = 0; j < 4; ++j) {
        const int jtwm1 = 2 * j;
        const double x = h * kXgk[jtwm1];
        const double f1 = f(c - x), f2 = f(c + x);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        resk += kWgk[jtwm1] * (f1 + f2);
        resabs += kWgk[jtwm1] * (std::abs(f1) + std::abs(f2));
    }
    const double reskh = 0.5 * resk;
    double resasc = kWgk[7] * std::abs(fc - reskh);
    for (int j = 0; j < 7; ++j) resasc += kWgk[j] * (std::abs(fv1[j] - reskh) + std::abs(fv2[j] - reskh));
    value = resk * h;
    error = gk_error(resk, resg, resabs, resasc, h);
}

}  // namespace detail

// Globally adaptive Gauss-Kronrod (7/15) over [breaks.front(), breaks.back()], starting
// from the given breakpoints.
template <class F>
QuadResult integrate(F&& f, std::vector<double> breaks, double rel_tol, double abs_tol = 0.0,
                     long max_evals = 200000) {
    struct Seg {
        double a, b, value, error;
        bool operator<(const Seg& o) const { return error < o.error; }
    };
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    QuadResult out;
    std::priority_queue<Seg> heap;
    long double total = 0, total_err = 0;
    double frozen_err = 0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        Seg s{breaks[i], breaks[i + 1], 0, 0};
        detail::gk15(f, s.a, s.b, s.value, s.error);
        out.evaluations += 15;
        total += s.value;
        total_err += s.error;
        heap.push(s);
    }
    while (true) {
        const double tol = std::max(abs_tol, rel_tol * std::abs(static_cast<double>(total)));
        if (static_cast<double>(total_err) <= tol) {
            out.converged = true;
            break;
        }
        if (heap.empty() || out.evaluations >= max_evals) break;
        Seg s = heap.top();
        heap.pop();
        const double mid = 0.5 * (s.a + s.b);
        if (!(mid > s.a && mid < s.b)) {
            frozen_err += s.error;  // cannot split further; keep its error on the books
            continue;
        }
        Seg l{s.a, mid, 0, 0}, r{mid, s.b, 0, 0};
        detail::gk15(f, l.a, l.b, l.value, l.error);
        detail::gk15(f, r.a, r.b, r.value, r.error);
        out.evaluations += 30;
        total += l.value + r.value - s.value;
        total_err += l.error + r.error - s.error;
        heap.push(l);
        heap.push(r);
    }
    // Re-sum from the segments to shed accumulated rounding in the running totals.
    long double v = 0, e = frozen_err;
    while (!heap.empty()) {
        v += heap.top().value;
        e += heap.top().error;
        heap.pop();
    }
    out.value = static_cast<double>(v);
    out.error = static_cast<double>(e);
    return out;
}

template <class F>
QuadResult integrate(F&& f, double lo, double hi, double rel_tol, double abs_tol = 0.0, long max_evals = 200000) {
    return integrate(std::forward<F>(f), std::vector<double>{lo, hi}, rel_tol, abs_tol, max_evals);
}

// Vector-valued integrand over a box: writes ncomp values for the point x.
using VectorIntegrand = std::function<void(const double* x, double* out)>;

struct CubatureOptions {
    double rel_tol{1e-9};
    double abs_tol{0.0};
    long max_evals{1'000'000};
};

struct CubatureResult {
    std::vector<double> value;
    std::vector<double> error;
    long evaluations{0};
    bool converged{false};
};

// Adaptive cubature: Gauss-Kronrod in one dimension, the Genz-Malik 7/5 rule otherwise.
// breaks[d] optionally seeds the initial tensor grid along dimension d.
CubatureResult adaptive_cubature(const VectorIntegrand& f, int ncomp, const std::vector<double>& lo,
                                 const std::vector<double>& hi, const CubatureOptions& opts,
                                 const std::vector<std::vector<double>>& breaks = {});

// Sobol sequence with Joe-Kuo direction numbers.
class Sobol {
public:
    static constexpr int kMaxDim = 17;
    explicit Sobol(int dim);
    int dim() const { return dim_; }
    // Next point of the unshifted sequence as 32-bit integers (Gray-code order).
    void next(std::uint32_t* out);

private:
    int dim_;
    std::uint64_t index_{0};
    std::vector<std::uint32_t> state_;
    std::vector<std::array<std::uint32_t, 32>> v_;
};

struct QmcOptions {
    int log2_points{14};
    int randomizations{32};
    std::uint64_t seed{0};
};

struct QmcResult {
    std::vector<double> value;
    std::vector<double> std_error;
    long evaluations{0};
};

// Mean of f over the unit cube from independently digitally shifted Sobol point sets;
// the spread of the per-shift means gives the standard error.
QmcResult qmc_integrate(const VectorIntegrand& f, int dim, int ncomp, const QmcOptions& opts);

}  // namespace blockg
