#include "blockg/special_fn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "blockg/core.hpp"
#include "blockg/quadrature.hpp"

namespace blockg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAgreement = 1e-8;
constexpr double kNear1Cutoff = 1e-12;
constexpr double kCheapSeries = 4000;

}  // namespace

void validate(const Hyp2F1Params& p) {
    if (!(p.a > 0) || !(p.b > 0) || !(p.c > p.b) || !std::isfinite(p.a) || !std::isfinite(p.c))
        throw DomainError("hyp2f1: need a > 0 and c > b > 0");
    if (!(p.z >= 0) || !(p.z < 1)) throw DomainError("hyp2f1: need 0 <= z < 1");
}

namespace detail {

double series_terms_estimate(double a, double b, double c, double z) {
    if (z <= 0) return 1;
    if (!(z < 1)) return std::numeric_limits<double>::infinity();
    // Largest k where the term ratio is still >= 1 solves a quadratic in k.
    const double A = 1 - z, B = c + 1 - z * (a + b), C = c - z * a * b;
    double peak = 0;
    const double disc = B * B - 4 * A * C;
    if (disc > 0) peak = std::max(0.0, (-B + std::sqrt(disc)) / (2 * A));
    return 2 * peak + 40 / (-std::log(z)) + 50;
}

double log_hyp2f1_series(double a, double b, double c, double z, long max_terms) {
    if (z == 0) return 0;
    long double t = 1, s = 1, comp = 0, offset = 0;
    constexpr long double kRescale = 1e4000L;
    for (long k = 0; k < max_terms; ++k) {
        const long double r = static_cast<long double>(z) * (a + k) * (b + k) / ((c + k) * (k + 1.0L));
        t *= r;
        const long double y = t - comp;
        const long double u = s + y;
        comp = (u - s) - y;
        s = u;
        if (s > kRescale) {
            t /= s;
            comp /= s;
            offset += std::log(s);
            s = 1;
        }
        if (t == 0) return static_cast<double>(offset + std::log(s));
        const long double rn = static_cast<long double>(z) * (a + k + 1) * (b + k + 1) / ((c + k + 1) * (k + 2.0L));
        if (k > 2 && rn < 1) {
            const long double rho = std::max(rn, static_cast<long double>(z));
            if (t * rho / (1 - rho) <= 1e-19L * s) return static_cast<double>(offset + std::log(s));
        }
    }
    throw NoConvergence("hyp2f1 series: term budget exhausted");
}

double log_euler_integral(double alpha, double beta, double gamma, double w, double rel_tol) {
    if (!(alpha > 0) || !(beta > 0) || !(w >= 0)) throw DomainError("euler integral: bad exponents");
    if (w == 0) {
        // Integrand reduces to t^(alpha-1) (1-t)^(beta-gamma-1).
        if (beta - gamma <= 0) return kInf;
        return log_beta(alpha, beta - gamma);
    }
    // Two halves: x = t on the left, x = 1 - t on the right. On each half the singular
    // power x^(e0-1) is removed by s = x^e0 when e0 < 1.
    struct Side {
        double e0, e1;
        bool right;
        bool power() const { return e0 < 1; }
        double x_of(double s) const { return power() ? std::pow(s, 1 / e0) : s; }
        double s_of(double x) const { return power() ? std::pow(x, e0) : x; }
    };
    const Side sides[2] = {{alpha, beta, false}, {beta, alpha, true}};
    auto log_f = [&](const Side& sd, double s) {
        const double x = sd.x_of(s);
        if (x <= 0) return sd.power() ? -std::log(sd.e0) - gamma * (sd.right ? std::log(w) : 0.0)
                                      : (sd.e0 > 1 ? -kInf : -gamma * (sd.right ? std::log(w) : 0.0));
        const double kernel = sd.right ? x + (1 - x) * w : 1 - x * (1 - w);
        double v = (sd.e1 - 1) * std::log1p(-x) - gamma * std::log(kernel);
        v += sd.power() ? -std::log(sd.e0) : (sd.e0 - 1) * std::log(x);
        return v;
    };

    std::vector<double> brk[2];
    for (int i = 0; i < 2; ++i) {
        const Side& sd = sides[i];
        std::vector<double> xs = {0.0, 0.5};
        for (double f : {0.1, 0.2, 0.3, 0.4}) xs.push_back(f);
        for (int j = -1; j <= 30; ++j) {
            const double x = 1e-8 * std::pow(10.0, 0.5 * j);
            if (x < 0.5) xs.push_back(x);
        }
        if (sd.right)
            for (int j = -6; j <= 12; ++j) {
                const double x = w * std::pow(10.0, 0.5 * j);
                if (x > 0 && x < 0.5) xs.push_back(x);
            }
        for (double x : xs) brk[i].push_back(sd.s_of(x));
        std::sort(brk[i].begin(), brk[i].end());
        brk[i].erase(std::unique(brk[i].begin(), brk[i].end()), brk[i].end());
    }
    double peak = -kInf;
    for (int i = 0; i < 2; ++i)
        for (std::size_t j = 0; j + 1 < brk[i].size(); ++j) {
            const double lo = brk[i][j], hi = brk[i][j + 1];
            for (double s : {lo, 0.5 * (lo + hi), hi})
                if (s > 0) peak = std::max(peak, log_f(sides[i], s));
        }
    if (!std::isfinite(peak)) throw NoConvergence("euler integral: cannot locate integrand scale");
    long double total = 0;
    for (int i = 0; i < 2; ++i) {
        auto f = [&](double s) { return std::exp(log_f(sides[i], s) - peak); };
        const QuadResult q = integrate(f, brk[i], rel_tol, 0.0, 400000);
        if (!q.converged && q.error > 1e-10 * std::abs(q.value))
            throw NoConvergence("euler integral: quadrature did not converge");
        total += q.value;
    }
    if (!(total > 0)) throw NoConvergence("euler integral: vanishing integral");
    return peak + std::log(static_cast<double>(total));
}

double log_hyp2f1_euler(double a, double b, double c, double w) {
    return log_euler_integral(b, c - b, a, w) - log_beta(b, c - b);
}

double log_hyp2f1_euler_transformed(double a, double b, double c, double w) {
    return log_euler_integral(c - b, b, c - a, w) - log_beta(c - b, b);
}

}  // namespace detail

double log_hyp2f1(double a, double b, double c, double z, double w) {
    if (w == 0) {
        if (a + b - c >= 0) return kInf;
        return std::lgamma(c) + std::lgamma(c - a - b) - std::lgamma(c - a) - std::lgamma(c - b);
    }
    if (z == 0) return 0;
    if (detail::series_terms_estimate(a, b, c, z) <= kCheapSeries) return detail::log_hyp2f1_series(a, b, c, z);
    if (a + b - c > 0) return detail::log_hyp2f1_euler_transformed(a, b, c, w) + (c - a - b) * std::log(w);
    return detail::log_hyp2f1_euler(a, b, c, w);
}

double log_hyp2f1_near1_scaled(double a, double b, double c, double z, double w) {
    if (!(a + b - c > 0)) throw DomainError("hyp2f1_near1_scaled: need a + b - c > 0");
    if (w == 0) return std::lgamma(a + b - c) + std::lgamma(c) - std::lgamma(a) - std::lgamma(b);
    if (z == 0) return 0;
    if (detail::series_terms_estimate(a, b, c, z) <= kCheapSeries)
        return detail::log_hyp2f1_series(a, b, c, z) + (a + b - c) * std::log(w);
    return detail::log_hyp2f1_euler_transformed(a, b, c, w);
}

double hyp2f1(const Hyp2F1Params& p) {
    validate(p);
    if (p.z == 0) return 1;
    const double w = 1 - p.z;
    const bool divergent = p.a + p.b - p.c > 0;
    if (divergent && w < kNear1Cutoff)
        throw NoConvergence("hyp2f1: z too close to 1 in the divergent regime; use hyp2f1_near1_scaled");
    double primary, check;
    if (detail::series_terms_estimate(p.a, p.b, p.c, p.z) <= 2e6) {
        primary = detail::log_hyp2f1_series(p.a, p.b, p.c, p.z);
        check = detail::log_hyp2f1_euler(p.a, p.b, p.c, w);
    } else {
        primary = detail::log_hyp2f1_euler(p.a, p.b, p.c, w);
        check = detail::log_hyp2f1_euler_transformed(p.a, p.b, p.c, w) + (p.c - p.a - p.b) * std::log(w);
    }
    if (std::abs(std::expm1(check - primary)) > kAgreement)
        throw NoConvergence("hyp2f1: series and integral disagree");
    if (primary > std::log(std::numeric_limits<double>::max())) throw NoConvergence("hyp2f1: overflow");
    return std::exp(primary);
}

double hyp2f1_near1_scaled(const Hyp2F1Params& p) {
    validate(p);
    return std::exp(log_hyp2f1_near1_scaled(p.a, p.b, p.c, p.z, 1 - p.z));
}

double log_lower_inc_gamma(double s, double x) {
    if (!(s > 0) || !(x >= 0) || std::isnan(x)) throw DomainError("lower_inc_gamma: need s > 0, x >= 0");
    if (x == 0) return -kInf;
    if (std::isinf(x)) return std::lgamma(s);
    const long double ls = s, lx = x;
    if (x < s + 1) {
        // x^s e^-x sum_k x^k / (s (s+1) ... (s+k))
        long double term = 1 / ls, sum = term;
        for (int k = 1; k < 100000; ++k) {
            term *= lx / (ls + k);
            sum += term;
            if (term < sum * 1e-21L) break;
        }
        return static_cast<double>(ls * std::log(lx) - lx + std::log(sum));
    }
    // Upper tail by the modified Lentz continued fraction, then gamma = Gamma - upper.
    constexpr long double tiny = 1e-4000L;
    long double bb = lx + 1 - ls, cc = 1 / tiny, dd = 1 / bb, h = dd;
    for (int i = 1; i < 100000; ++i) {
        const long double an = -i * (i - ls);
        bb += 2;
        dd = an * dd + bb;
        if (std::abs(dd) < tiny) dd = tiny;
        cc = bb + an / cc;
        if (std::abs(cc) < tiny) cc = tiny;
        dd = 1 / dd;
        const long double del = dd * cc;
        h *= del;
        if (std::abs(del - 1) < 1e-20L) break;
    }
    const long double log_upper = ls * std::log(lx) - lx + std::log(h);
    const long double lg = std::lgamma(ls);
    const long double q = std::exp(log_upper - lg);
    return static_cast<double>(lg + std::log1p(-q));
}

double lower_inc_gamma(double s, double x) {
    if (x == 0 && s > 0) return 0;
    return std::exp(log_lower_inc_gamma(s, x));
}

}  // namespace blockg
