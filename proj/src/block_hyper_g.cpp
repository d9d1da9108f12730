#include "blockg/block_hyper_g.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "blockg/quadrature.hpp"
#include "blockg/special_fn.hpp"

namespace blockg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

// Blocks with R_i^2 > 0. In y_i = log(1 - t_i) the integrand is
//   exp(sum c_i y_i - m log(rho + sum e_i e^{y_i})),  c_i = (a + p_i)/2 - 1,
// which is log-concave on y <= 0.
struct Active {
    std::vector<int> index;
    std::vector<double> c, e;
    double rho{1};
    double m{0};

    int dim() const { return static_cast<int>(c.size()); }
    double csum() const { return std::accumulate(c.begin(), c.end(), 0.0); }

    double denom(const double* y) const {
        double d = rho;
        for (int i = 0; i < dim(); ++i) d += e[i] * std::exp(y[i]);
        return d;
    }
    double h(const double* y) const {
        double v = 0;
        for (int i = 0; i < dim(); ++i) v += c[i] * y[i];
        return v - m * std::log(denom(y));
    }
};

double block_c(double a, int p) { return 0.5 * (a + p) - 1; }

Active active_part(const BlockStats& s) {
    Active A;
    A.rho = s.rho;
    A.m = 0.5 * (s.n - 1);
    for (int i = 0; i < static_cast<int>(s.p_blocks.size()); ++i)
        if (s.e(i) > 0) {
            A.index.push_back(i);
            A.c.push_back(block_c(s.a, s.p_blocks[i]));
            A.e.push_back(s.e(i));
        }
    return A;
}

void check_finite(const Active& A) {
    if (A.rho == 0 && A.m >= A.csum())
        throw IntegralDiverges("block integral diverges: exact fit with n >= k(a-2) + p + 1");
}

// Exact coordinate ascent in v = e^y on v <= 1, holding coordinate `fixed` (if any).
void ascend(const Active& A, std::vector<double>& v, int fixed, double tol, int max_sweeps) {
    const int k = A.dim();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double change = 0;
        for (int i = 0; i < k; ++i) {
            if (i == fixed) continue;
            double rest = A.rho;
            for (int j = 0; j < k; ++j)
                if (j != i) rest += A.e[j] * v[j];
            const double nv = A.m <= A.c[i] ? 1.0 : std::min(1.0, A.c[i] * rest / ((A.m - A.c[i]) * A.e[i]));
            if (!(nv > 0)) throw NoConvergence("block mode collapsed to the boundary");
            change = std::max(change, std::abs(std::log(nv / v[i])));
            v[i] = nv;
        }
        if (change < tol) break;
    }
}

// Maximizer of h over y <= 0.
std::vector<double> find_mode(const Active& A) {
    const int k = A.dim();
    const double C = A.csum();
    std::vector<double> v(k, 1.0);
    bool interior = A.rho > 0 && A.m > C;
    if (interior)
        for (int i = 0; i < k; ++i) {
            v[i] = A.c[i] * A.rho / (A.e[i] * (A.m - C));
            if (!(v[i] < 1)) interior = false;
        }
    if (!interior) {
        std::fill(v.begin(), v.end(), 1.0);
        ascend(A, v, -1, 1e-13, 200000);
    }
    std::vector<double> y(k);
    for (int i = 0; i < k; ++i) y[i] = std::log(v[i]);
    return y;
}

struct Box {
    std::vector<double> mode, scale, lo;
    std::vector<std::vector<double>> breaks;
    double h_star{0};
};

Box integration_box(const Active& A) {
    Box b;
    const int k = A.dim();
    b.mode = find_mode(A);
    b.h_star = A.h(b.mode.data());
    const double D = A.denom(b.mode.data());
    const double C = A.csum();
    b.scale.resize(k);
    b.lo.resize(k);
    b.breaks.resize(k);
    for (int i = 0; i < k; ++i) {
        const double w = A.e[i] * std::exp(b.mode[i]) / D;
        const double slope = A.c[i] - A.m * w;
        b.scale[i] = 1.0 / std::max({std::sqrt(A.m * w * (1 - w)), slope, 1e-3});
        const double decay = A.rho > 0 ? A.c[i] : std::min(A.c[i], C - A.m);
        double lo = b.mode[i] - 20 * b.scale[i];
        if (A.rho > 0) lo = std::min(lo, std::log(A.rho / A.e[i]));
        b.lo[i] = std::min(lo, 0.0) - 40 / decay;
        for (double f : {-18.0, -6.0, -2.0, 0.0, 2.0, 6.0, 18.0}) {
            const double y = b.mode[i] + f * b.scale[i];
            if (y > b.lo[i] && y < 0) b.breaks[i].push_back(y);
        }
        if (A.rho > 0) {
            const double y = std::log(A.rho / A.e[i]);
            if (y > b.lo[i] && y < 0) b.breaks[i].push_back(y);
        }
    }
    return b;
}

// Integrand components: [1, v_1..v_k, D / D*] scaled by exp(-h*).
VectorIntegrand make_integrand(const Active& A, const Box& b, double d_star) {
    return [&A, &b, d_star](const double* y, double* out) {
        const int k = A.dim();
        double d = A.rho, lin = 0;
        for (int i = 0; i < k; ++i) {
            d += A.e[i] * std::exp(y[i]);
            lin += A.c[i] * y[i];
        }
        const double f = std::exp(lin - A.m * std::log(d) - b.h_star);
        out[0] = f;
        for (int i = 0; i < k; ++i) out[1 + i] = f * std::exp(y[i]);
        out[1 + k] = f * (d / d_star);
    };
}

struct ActiveResult {
    double log_integral{0};
    std::vector<double> mean_v;
    double mean_d{0};
    double rel_error{0};
    long evaluations{0};
    IntegrationMethod method{IntegrationMethod::quadrature};
};

ActiveResult by_quadrature(const Active& A, const IntegrationOptions& opts) {
    const Box b = integration_box(A);
    const int k = A.dim();
    const double d_star = A.denom(b.mode.data());
    CubatureOptions co;
    co.rel_tol = opts.rel_tol;
    co.max_evals = opts.max_evals;
    const CubatureResult r =
        adaptive_cubature(make_integrand(A, b, d_star), k + 2, b.lo, std::vector<double>(k, 0.0), co, b.breaks);
    ActiveResult out;
    out.evaluations = r.evaluations;
    for (int j = 0; j < k + 2; ++j) {
        if (!(r.value[j] > 0)) throw NoConvergence("block quadrature produced a non-positive integral");
        out.rel_error = std::max(out.rel_error, r.error[j] / r.value[j]);
    }
    if (out.rel_error > opts.max_rel_error) throw NoConvergence("block quadrature error above tolerance");
    out.log_integral = b.h_star + std::log(r.value[0]);
    for (int i = 0; i < k; ++i) out.mean_v.push_back(r.value[1 + i] / r.value[0]);
    out.mean_d = d_star * r.value[1 + k] / r.value[0];
    return out;
}

// One-dimensional proposal: tempered profile of h (maximized over the other coordinates),
// mixed with a uniform floor and interpolated linearly so the importance weight is continuous.
struct Profile {
    std::vector<double> grid, cdf, dens;  // dens at grid nodes, cdf at nodes

    double sample(double u, double& log_density) const {
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        const std::size_t cells = grid.size() - 1;
        const std::size_t j = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - cdf.begin(), 1) - 1, cells - 1);
        const double dx = grid[j + 1] - grid[j];
        const double slope = (dens[j + 1] - dens[j]) / dx;
        const double r = std::max(0.0, u - cdf[j]);
        // Solve dens_j s + slope s^2 / 2 = r in the cancellation-free form.
        const double disc = std::max(0.0, dens[j] * dens[j] + 2 * slope * r);
        const double step = std::clamp(2 * r / (dens[j] + std::sqrt(disc)), 0.0, dx);
        log_density = std::log(dens[j] + slope * step);
        return grid[j] + step;
    }
};

Profile build_profile(const Active& A, const Box& b, int i, double temper, double floor) {
    Profile pr;
    const double lo = b.lo[i], mode = b.mode[i], s = b.scale[i];
    const double c_lo = std::max(lo, mode - 30 * s), c_hi = std::min(0.0, mode + 30 * s);
    auto add = [&](double from, double to, int cells) {
        if (!(to > from)) return;
        for (int j = 0; j < cells; ++j) pr.grid.push_back(from + (to - from) * j / cells);
    };
    add(lo, c_lo, 256);
    add(c_lo, c_hi, 1024);
    add(c_hi, 0.0, 256);
    pr.grid.push_back(0.0);
    std::vector<double> q(pr.grid.size()), v(A.dim()), y(A.dim());
    for (int j = 0; j < A.dim(); ++j) v[j] = std::exp(b.mode[j]);
    const std::vector<double> v_mode = v;
    // Sweep outward from the mode so each profile point warm-starts from its neighbor.
    const auto mid = static_cast<std::ptrdiff_t>(std::lower_bound(pr.grid.begin(), pr.grid.end(), mode) - pr.grid.begin());
    auto profile_at = [&](std::ptrdiff_t j) {
        v[i] = std::exp(pr.grid[j]);
        if (A.dim() > 1) ascend(A, v, i, 1e-9, 500);
        for (int l = 0; l < A.dim(); ++l) y[l] = std::log(v[l]);
        q[j] = std::exp(temper * (A.h(y.data()) - b.h_star));
    };
    for (std::ptrdiff_t j = mid; j < static_cast<std::ptrdiff_t>(q.size()); ++j) profile_at(j);
    v = v_mode;
    for (std::ptrdiff_t j = mid - 1; j >= 0; --j) profile_at(j);
    const std::size_t cells = pr.grid.size() - 1;
    double total = 0;
    for (std::size_t j = 0; j < cells; ++j) total += 0.5 * (q[j] + q[j + 1]) * (pr.grid[j + 1] - pr.grid[j]);
    const double width = 0.0 - lo;
    pr.dens.resize(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) pr.dens[j] = (1 - floor) * q[j] / total + floor / width;
    pr.cdf.assign(q.size(), 0.0);
    for (std::size_t j = 0; j < cells; ++j)
        pr.cdf[j + 1] = pr.cdf[j] + 0.5 * (pr.dens[j] + pr.dens[j + 1]) * (pr.grid[j + 1] - pr.grid[j]);
    // The trapezoid masses already sum to one up to rounding.
    const double norm = pr.cdf.back();
    for (double& v : pr.cdf) v /= norm;
    for (double& v : pr.dens) v /= norm;
    return pr;
}

ActiveResult by_qmc(const Active& A, const IntegrationOptions& opts) {
    const Box b = integration_box(A);
    const int k = A.dim();
    if (k > Sobol::kMaxDim) throw DomainError("too many active blocks for the QMC rule");
    const double d_star = A.denom(b.mode.data());
    std::vector<Profile> prof;
    for (int i = 0; i < k; ++i) prof.push_back(build_profile(A, b, i, 0.55, 0.02));
    const VectorIntegrand inner = make_integrand(A, b, d_star);
    VectorIntegrand f = [&](const double* u, double* out) {
        double y[Sobol::kMaxDim];
        double log_q = 0;
        for (int i = 0; i < k; ++i) {
            double ld;
            y[i] = prof[i].sample(u[i], ld);
            log_q += ld;
        }
        inner(y, out);
        const double inv = std::exp(-log_q);
        for (int j = 0; j < k + 2; ++j) out[j] *= inv;
    };
    QmcOptions qo;
    qo.log2_points = opts.qmc_log2_points;
    qo.randomizations = opts.qmc_randomizations;
    qo.seed = opts.seed;
    if ((1L << qo.log2_points) * static_cast<long>(qo.randomizations) > opts.max_evals)
        throw BudgetExceeded("QMC point count exceeds the evaluation budget");
    const QmcResult r = qmc_integrate(f, k, k + 2, qo);
    ActiveResult out;
    out.method = IntegrationMethod::qmc;
    out.evaluations = r.evaluations;
    for (int j = 0; j < k + 2; ++j) {
        if (!(r.value[j] > 0)) throw NoConvergence("QMC produced a non-positive integral");
        out.rel_error = std::max(out.rel_error, r.std_error[j] / r.value[j]);
    }
    if (out.rel_error > opts.max_rel_error) throw NoConvergence("QMC error above tolerance");
    out.log_integral = b.h_star + std::log(r.value[0]);
    for (int i = 0; i < k; ++i) out.mean_v.push_back(r.value[1 + i] / r.value[0]);
    out.mean_d = d_star * r.value[1 + k] / r.value[0];
    return out;
}

// Laplace's method in y. With w_i = c_i/m at the interior mode, the Hessian is
// -m (diag(w) - w w'), and the third and fourth derivatives are -m times the joint
// cumulants of a one-hot vector with cell probabilities w.
double laplace_y(const Active& A, bool second_order, double* correction) {
    const int k = A.dim();
    const double C = A.csum();
    if (!(A.rho > 0) || !(A.m > C)) throw OutOfInterior("Laplace: mode is not interior");
    std::vector<double> w(k), y(k);
    double W = C / A.m;
    for (int i = 0; i < k; ++i) {
        w[i] = A.c[i] / A.m;
        y[i] = std::log(A.c[i] * A.rho / (A.e[i] * (A.m - C)));
    }
    Matrix S(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) S(i, j) = ((i == j ? 1 / w[i] : 0.0) + 1 / (1 - W)) / A.m;
    // Each v_i is close to Gamma(c_i) with mean v_i*; its mass beyond v = 1 is cut off by the domain.
    for (int i = 0; i < k; ++i) {
        const double v = std::exp(y[i]);
        const double tail = -std::expm1(log_lower_inc_gamma(A.c[i], A.c[i] / v) - std::lgamma(A.c[i]));
        if (!(v < 1) || !(tail < 1e-5)) throw OutOfInterior("Laplace: mode too close to t = 0");
    }
    double h_star = -A.m * std::log(A.rho * A.m / (A.m - C));
    double logdet = k * std::log(A.m) + std::log1p(-W);
    for (int i = 0; i < k; ++i) {
        h_star += A.c[i] * y[i];
        logdet += std::log(w[i]);
    }
    double out = h_star + 0.5 * k * kLog2Pi - 0.5 * logdet;
    double corr = 0;
    if (second_order) {
        auto d = [](int i, int j) { return i == j ? 1.0 : 0.0; };
        std::vector<double> K3(k * k * k), K4(k * k * k * k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                for (int l = 0; l < k; ++l) {
                    const double wi = w[i], wj = w[j], wl = w[l];
                    K3[(i * k + j) * k + l] = d(i, j) * d(j, l) * wi - d(i, j) * wi * wl - d(i, l) * wi * wj -
                                              d(j, l) * wi * wj + 2 * wi * wj * wl;
                    for (int q = 0; q < k; ++q) {
                        const double wq = w[q];
                        double v = d(i, j) * d(j, l) * d(l, q) * wi - d(i, j) * d(j, l) * wi * wq;
                        v += -d(i, j) * d(j, q) * wi * wl - d(i, j) * d(l, q) * wi * wl + 2 * d(i, j) * wi * wl * wq;
                        v += -d(i, l) * d(l, q) * wi * wj - d(i, l) * d(j, q) * wi * wj + 2 * d(i, l) * wi * wj * wq;
                        v += -d(j, l) * d(l, q) * wi * wj - d(j, l) * d(i, q) * wi * wj + 2 * d(j, l) * wi * wj * wq;
                        v += 2 * (d(i, q) + d(j, q) + d(l, q)) * wi * wj * wl - 6 * wi * wj * wl * wq;
                        K4[((i * k + j) * k + l) * k + q] = v;
                    }
                }
        const double m = A.m;
        double t4 = 0, t33a = 0, t33b = 0;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                for (int l = 0; l < k; ++l)
                    for (int q = 0; q < k; ++q) t4 += -m * K4[((i * k + j) * k + l) * k + q] * S(i, j) * S(l, q);
        // Contract h3 with one covariance first to keep the sextic sums cheap.
        std::vector<double> u(k, 0.0);
        for (int l = 0; l < k; ++l)
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) u[l] += -m * K3[(i * k + j) * k + l] * S(i, j);
        for (int l = 0; l < k; ++l)
            for (int q = 0; q < k; ++q) t33a += u[l] * u[q] * S(l, q);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                for (int l = 0; l < k; ++l) {
                    const double a3 = -m * K3[(i * k + j) * k + l];
                    if (a3 == 0) continue;
                    for (int i2 = 0; i2 < k; ++i2)
                        for (int j2 = 0; j2 < k; ++j2)
                            for (int l2 = 0; l2 < k; ++l2)
                                t33b += a3 * -m * K3[(i2 * k + j2) * k + l2] * S(i, i2) * S(j, j2) * S(l, l2);
                }
        corr = t4 / 8 + t33a / 8 + t33b / 12;
        if (!(1 + corr > 0.5)) throw OutOfInterior("Laplace: correction too large for the expansion");
        out += std::log1p(corr);
    }
    if (correction) *correction = corr;
    return out;
}

// Exact factor for blocks with R_i^2 = 0: int_0^1 v^(c-1) dv = 1/c.
double inactive_log_factor(const BlockStats& s) {
    double v = 0;
    for (int i = 0; i < static_cast<int>(s.p_blocks.size()); ++i)
        if (!(s.e(i) > 0)) v -= std::log(block_c(s.a, s.p_blocks[i]));
    return v;
}

ActiveResult by_laplace(const Active& A) {
    ActiveResult out;
    out.method = IntegrationMethod::laplace;
    double corr = 0;
    out.log_integral = laplace_y(A, true, &corr);
    // The omitted next term is of the order of corr^2 (about twice the observed error).
    out.rel_error = corr * corr;
    for (int i = 0; i < A.dim(); ++i) {
        Active B = A;
        B.c[i] += 1;
        out.mean_v.push_back(std::exp(laplace_y(B, true, nullptr) - out.log_integral));
    }
    Active B = A;
    B.m -= 1;
    out.mean_d = std::exp(laplace_y(B, true, nullptr) - out.log_integral);
    out.evaluations = 0;
    return out;
}

bool laplace_suitable(const Active& A, const BlockStats& s, const IntegrationOptions& opts) {
    if (A.dim() < 2 || s.n < opts.laplace_min_n || !(A.rho > 0)) return false;
    const double C = A.csum();
    if (!(A.m > C + 1)) return false;
    for (int i = 0; i < A.dim(); ++i) {
        const double t = 1 - A.c[i] * A.rho / (A.e[i] * (A.m - C));
        if (!(t > 0.02 && t < 0.98)) return false;
    }
    return true;
}

}  // namespace

void BlockHyperGPrior::validate() const {
    if (!(a > 2) || !(a <= 4)) throw DomainError("block hyper-g prior needs 2 < a <= 4");
}

std::string to_string(IntegrationMethod m) {
    switch (m) {
        case IntegrationMethod::automatic: return "auto";
        case IntegrationMethod::quadrature: return "quadrature";
        case IntegrationMethod::qmc: return "qmc";
        case IntegrationMethod::laplace: return "laplace";
    }
    return "unknown";
}

IntegrationMethod integration_method_from_string(const std::string& s) {
    if (s == "auto") return IntegrationMethod::automatic;
    if (s == "quadrature") return IntegrationMethod::quadrature;
    if (s == "qmc") return IntegrationMethod::qmc;
    if (s == "laplace") return IntegrationMethod::laplace;
    throw ConfigError("unknown integration method: " + s);
}

BlockStats block_stats(const BlockHyperGPrior& prior, const FitSummary& fit) {
    prior.validate();
    if (prior.partition.k() > 0 && prior.partition.sizes() != fit.p_blocks)
        throw DimensionMismatch("prior partition does not match the fit");
    if (!fit.block_orthogonal)
        throw NotBlockOrthogonal("design is not block orthogonal; apply block_orthogonalize first");
    BlockStats s;
    s.a = prior.a;
    s.n = fit.n;
    s.p_blocks = fit.p_blocks;
    s.e = fit.r2_blocks;
    s.rho = fit.one_minus_r2;
    s.tss = fit.tss;
    return s;
}

ShrinkagePosterior block_posterior(const BlockStats& s, const IntegrationOptions& opts) {
    if (!(s.a > 2) || !(s.a <= 4)) throw DomainError("block hyper-g prior needs 2 < a <= 4");
    const int k = static_cast<int>(s.p_blocks.size());
    if (s.e.size() != k) throw DimensionMismatch("one R^2 per block required");
    if (!(s.rho >= 0) || !(s.rho <= 1) || (s.e.array() < 0).any()) throw DomainError("R^2 values out of range");
    const Active A = active_part(s);
    check_finite(A);

    ShrinkagePosterior post;
    post.t_mean = Vector::Zero(k);
    post.one_minus_t_mean = Vector::Zero(k);
    double log_i = inactive_log_factor(s);
    double mean_d = s.rho;  // with no active block D = rho identically

    if (A.dim() > 0) {
        ActiveResult r;
        IntegrationMethod method = opts.method;
        if (method == IntegrationMethod::automatic) {
            method = A.dim() <= 3 ? IntegrationMethod::quadrature : IntegrationMethod::qmc;
            if (laplace_suitable(A, s, opts)) {
                try {
                    ActiveResult lap = by_laplace(A);
                    if (lap.rel_error <= opts.max_rel_error) {
                        r = std::move(lap);
                        method = IntegrationMethod::laplace;
                    }
                } catch (const OutOfInterior&) {
                }
            }
        }
        switch (method) {
            case IntegrationMethod::quadrature: r = by_quadrature(A, opts); break;
            case IntegrationMethod::qmc: r = by_qmc(A, opts); break;
            case IntegrationMethod::laplace:
                if (r.mean_v.empty()) r = by_laplace(A);
                break;
            default: break;
        }
        post.method = r.method;
        post.error_estimate = r.rel_error;
        post.evaluations = r.evaluations;
        log_i += r.log_integral;
        for (int j = 0; j < A.dim(); ++j) {
            post.one_minus_t_mean(A.index[j]) = r.mean_v[j];
            post.t_mean(A.index[j]) = 1 - r.mean_v[j];
        }
        mean_d = r.mean_d;
    }
    for (int i = 0; i < k; ++i)
        if (!(s.e(i) > 0)) {
            const double c = block_c(s.a, s.p_blocks[i]);
            post.one_minus_t_mean(i) = c / (c + 1);
            post.t_mean(i) = 1 / (c + 1);
        }
    post.log_bf_null = k * std::log((s.a - 2) / 2) + log_i;
    post.sigma2_mean = s.n > 3 ? s.tss * mean_d / (s.n - 3) : kInf;
    return post;
}

ShrinkagePosterior bf_block_hyper_g(const BlockHyperGPrior& prior, const FitSummary& fit,
                                    const IntegrationOptions& opts) {
    return block_posterior(block_stats(prior, fit), opts);
}

ShrinkagePosterior block_shrinkage(const BlockHyperGPrior& prior, const FitSummary& fit,
                                   const IntegrationOptions& opts) {
    return block_posterior(block_stats(prior, fit), opts);
}

Vector posterior_mean_block(const BlockHyperGPrior& prior, const FitSummary& fit, const IntegrationOptions& opts) {
    const ShrinkagePosterior post = block_shrinkage(prior, fit, opts);
    Vector out = fit.beta_hat_ls;
    for (int i = 0; i < fit.k(); ++i)
        for (int j : fit.partition.blocks[i]) out(j) *= post.t_mean(i);
    return out;
}

LaplacePoint laplace_t_star(const Vector& b, const Vector& r, double m) {
    const int k = static_cast<int>(b.size());
    if (r.size() != k || k == 0) throw DimensionMismatch("laplace_t_star: b and r sizes differ");
    if ((b.array() <= 0).any() || (r.array() < 0).any()) throw DomainError("laplace_t_star: need b_i > 0, r_i >= 0");
    const double bs = b.sum(), rs = r.sum();
    if (!(rs < 1) || !(m > bs)) throw DomainError("laplace_t_star: need sum r < 1 and m > sum b");
    LaplacePoint lp;
    lp.t_star.resize(k);
    for (int i = 0; i < k; ++i) {
        lp.t_star(i) = 1 - b(i) * (1 - rs) / (r(i) * (m - bs));
        if (!(lp.t_star(i) > 0 && lp.t_star(i) < 1)) throw OutOfInterior("laplace_t_star: maximizer outside (0,1)^k");
    }
    const double f = (m - bs) * (m - bs) / ((1 - rs) * (1 - rs));
    lp.hessian.resize(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            lp.hessian(i, j) = i == j ? -f * r(i) * r(i) * (1 / b(i) - 1 / m) : f * r(i) * r(j) / m;
    double h = 0, dot = 0;
    for (int i = 0; i < k; ++i) {
        h += b(i) * std::log1p(-lp.t_star(i));
        dot += lp.t_star(i) * r(i);
    }
    lp.log_height = h - m * std::log1p(-dot);
    return lp;
}

double laplace_log_integral(const BlockStats& s, LaplaceForm form, double* correction) {
    const Active A = active_part(s);
    if (form != LaplaceForm::t_space) {
        const double inactive = inactive_log_factor(s);
        if (A.dim() == 0) return inactive;
        return inactive + laplace_y(A, form == LaplaceForm::second_order, correction);
    }
    const int k = static_cast<int>(s.p_blocks.size());
    if (k == 0) return 0;
    Vector b(k), r(k);
    std::vector<bool> bumped(k, false);
    for (int i = 0; i < k; ++i) {
        const double a_p = s.a + s.p_blocks[i];
        if (a_p == 4) throw OutOfInterior("Laplace: b_i = 0 boundary is left to quadrature");
        bumped[i] = a_p < 4;
        b(i) = 0.5 * (a_p + (bumped[i] ? 1 : 0)) - 2;
        r(i) = s.e(i);
    }
    const LaplacePoint lp = laplace_t_star(b, r, 0.5 * (s.n - 1));
    const Eigen::LLT<Matrix> llt(-lp.hessian);
    if (llt.info() != Eigen::Success) throw OutOfInterior("Laplace: Hessian not negative definite");
    double logdet = 0;
    for (int i = 0; i < k; ++i) logdet += 2 * std::log(llt.matrixL()(i, i));
    double out = lp.log_height + 0.5 * k * kLog2Pi - 0.5 * logdet;
    for (int i = 0; i < k; ++i)
        if (bumped[i]) out -= 0.5 * std::log1p(-lp.t_star(i));
    if (correction) *correction = 0;
    return out;
}

double log_bf_laplace(const BlockHyperGPrior& prior, const FitSummary& fit_gamma, const FitSummary& fit_T,
                      LaplaceForm form) {
    prior.validate();
    if (fit_gamma.n != fit_T.n) throw DimensionMismatch("models must share n");
    BlockHyperGPrior pg{prior.a, fit_gamma.partition}, pt{prior.a, fit_T.partition};
    const BlockStats sg = block_stats(pg, fit_gamma), st = block_stats(pt, fit_T);
    if (sg.p_blocks == st.p_blocks && sg.e == st.e && sg.rho == st.rho) return 0;
    const double kg = static_cast<double>(sg.p_blocks.size()), kt = static_cast<double>(st.p_blocks.size());
    return (kg - kt) * std::log((prior.a - 2) / 2) + laplace_log_integral(sg, form) - laplace_log_integral(st, form);
}

double bf_laplace(const BlockHyperGPrior& prior, const FitSummary& fit_gamma, const FitSummary& fit_T,
                  LaplaceForm form) {
    return std::exp(log_bf_laplace(prior, fit_gamma, fit_T, form));
}

ShrinkageBracket shrinkage_bracket(const BlockHyperGPrior& prior, const FitSummary& fit) {
    const BlockStats s = block_stats(prior, fit);
    const int k = static_cast<int>(s.p_blocks.size());
    const HyperGPrior hg(s.a);
    ShrinkageBracket br{Vector(k), Vector(k), Vector(k)};
    for (int i = 0; i < k; ++i) {
        const int p = s.p_blocks[i];
        br.floor(i) = 2 / (s.a + p);
        // 1 - R_i^2 summed from the other parts keeps precision when R_i^2 is near 1.
        double rest = s.rho;
        for (int j = 0; j < k; ++j)
            if (j != i) rest += s.e(j);
        br.lower(i) = shrinkage_hyper_g(hg, s.n, p, std::min(1.0, rest));
        // kappa_i = e_i / (rho + e_i), so 1 - kappa_i = rho / (rho + e_i).
        const double denom = s.rho + s.e(i);
        br.upper(i) = denom > 0 ? shrinkage_hyper_g(hg, s.n, p, s.rho / denom) : br.floor(i);
    }
    return br;
}

double lemma_f2_mean(const BlockStats& s, int m_block, int j_block, const IntegrationOptions& opts) {
    const int k = static_cast<int>(s.p_blocks.size());
    if (m_block < 0 || m_block >= k || j_block < 0 || j_block >= k) throw DomainError("block index out of range");
    BlockStats f2 = s;
    f2.e = Vector::Zero(k);
    f2.e(j_block) = s.e(j_block);
    f2.rho = 1 - s.e(j_block);
    IntegrationOptions o = opts;
    o.method = IntegrationMethod::quadrature;
    return block_posterior(f2, o).t_mean(m_block);
}

Sigma2Density sigma2_density_block(const BlockHyperGPrior& prior, const FitSummary& fit) {
    const BlockStats s = block_stats(prior, fit);
    std::vector<double> c, ess;
    for (int i = 0; i < fit.k(); ++i) {
        c.push_back(block_c(s.a, s.p_blocks[i]));
        ess.push_back(fit.ess_blocks(i));
    }
    return Sigma2Density(fit.n, fit.rss, c, ess);
}

Sigma2Density sigma2_density_limit_block(const BlockHyperGPrior& prior, const FitSummary& fit) {
    const BlockStats s = block_stats(prior, fit);
    const int k = fit.k();
    if (!(fit.n > k * (s.a - 2) + fit.p + 1)) throw DomainError("sigma^2 limit needs n > k(a-2) + p + 1");
    std::vector<double> c, ess;
    for (int i = 0; i < k; ++i) {
        c.push_back(block_c(s.a, s.p_blocks[i]));
        ess.push_back(i == 0 ? kInf : fit.ess_blocks(i));
    }
    return Sigma2Density(fit.n, fit.rss, c, ess);
}

double sigma2_mean_bound_block(const BlockHyperGPrior& prior, const FitSummary& fit) {
    const BlockStats s = block_stats(prior, fit);
    const double denom = fit.n - 1 - s.a - s.p_blocks.at(0);
    if (!(denom > 0)) throw DomainError("sigma^2 mean bound needs n > a + p_1 + 1");
    double num = fit.rss;
    for (int i = 1; i < fit.k(); ++i) num += fit.ess_blocks(i);
    return num / denom;
}

double clp_lower_bound(double a, int p2) {
    if (!(a > 2) || !(a <= 4) || p2 < 1) throw DomainError("clp_lower_bound needs 2 < a <= 4 and p2 >= 1");
    return (a - 2) / (a + p2 - 2);
}

}  // namespace blockg
