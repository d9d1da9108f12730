#include "blockg/quadrature.hpp"

#include <random>
#include <stdexcept>

#include "blockg/core.hpp"

namespace blockg {
namespace {

struct Region {
    std::vector<double> center, half;
    std::vector<double> value, error;
    int split_dim{0};
    double key{0};
};

struct RegionLess {
    bool operator()(const Region& a, const Region& b) const { return a.key < b.key; }
};

class RuleEvaluator {
public:
    RuleEvaluator(const VectorIntegrand& f, int dim, int ncomp) : f_(f), dim_(dim), ncomp_(ncomp) {
        x_.resize(dim);
        buf_.resize(ncomp);
        const double n = dim;
        w1_ = (12824.0 - 9120.0 * n + 400.0 * n * n) / 19683.0;
        w2_ = 980.0 / 6561.0;
        w3_ = (1820.0 - 400.0 * n) / 19683.0;
        w4_ = 200.0 / 19683.0;
        w5_ = 6859.0 / 19683.0 / std::ldexp(1.0, dim);
        e1_ = (729.0 - 950.0 * n + 50.0 * n * n) / 729.0;
        e2_ = 245.0 / 486.0;
        e3_ = (265.0 - 100.0 * n) / 1458.0;
        e4_ = 25.0 / 729.0;
    }

    long evaluations() const { return evals_; }

    void evaluate(Region& r) {
        if (dim_ == 1)
            gauss_kronrod(r);
        else
            genz_malik(r);
    }

private:
    void call(double* out) {
        f_(x_.data(), out);
        ++evals_;
    }

    void gauss_kronrod(Region& r) {
        const double c = r.center[0], h = r.half[0];
        std::vector<double> fc(ncomp_), f1(ncomp_), f2(ncomp_);
        std::vector<std::array<double, 7>> v1(ncomp_), v2(ncomp_);
        x_[0] = c;
        call(fc.data());
        std::vector<double> resg(ncomp_), resk(ncomp_), resabs(ncomp_);
        for (int j = 0; j < ncomp_; ++j) {
            resg[j] = fc[j] * detail::kWg[3];
            resk[j] = fc[j] * detail::kWgk[7];
            resabs[j] = std::abs(resk[j]);
        }
        for (int i = 0; i < 7; ++i) {
            const double dx = h * detail::kXgk[i];
            x_[0] = c - dx;
            call(f1.data());
            x_[0] = c + dx;
            call(f2.data());
            for (int j = 0; j < ncomp_; ++j) {
                v1[j][i] = f1[j];
                v2[j][i] = f2[j];
                if (i % 2 == 1) resg[j] += detail::kWg[i / 2] * (f1[j] + f2[j]);
                resk[j] += detail::kWgk[i] * (f1[j] + f2[j]);
                resabs[j] += detail::kWgk[i] * (std::abs(f1[j]) + std::abs(f2[j]));
            }
        }
        r.value.assign(ncomp_, 0.0);
        r.error.assign(ncomp_, 0.0);
        for (int j = 0; j < ncomp_; ++j) {
            const double reskh = 0.5 * resk[j];
            double resasc = detail::kWgk[7] * std::abs(fc[j] - reskh);
            for (int i = 0; i < 7; ++i)
                resasc += detail::kWgk[i] * (std::abs(v1[j][i] - reskh) + std::abs(v2[j][i] - reskh));
            r.value[j] = resk[j] * h;
            r.error[j] = detail::gk_error(resk[j], resg[j], resabs[j], resasc, h);
        }
        r.split_dim = 0;
    }

    void genz_malik(Region& r) {
        static const double l2 = std::sqrt(9.0 / 70.0), l4 = std::sqrt(9.0 / 10.0), l5 = std::sqrt(9.0 / 19.0);
        static const double ratio = (l2 * l2) / (l4 * l4);
        const int n = dim_, m = ncomp_;
        std::vector<double> f1(m), s2(m, 0.0), s3(m, 0.0), s4(m, 0.0), s5(m, 0.0);
        std::vector<double> a(m), b(m), c(m), d(m);
        x_ = r.center;
        call(f1.data());
        std::vector<double> diff(n, 0.0);
        for (int i = 0; i < n; ++i) {
            x_ = r.center;
            x_[i] = r.center[i] - l2 * r.half[i];
            call(a.data());
            x_[i] = r.center[i] + l2 * r.half[i];
            call(b.data());
            x_[i] = r.center[i] - l4 * r.half[i];
            call(c.data());
            x_[i] = r.center[i] + l4 * r.half[i];
            call(d.data());
            for (int j = 0; j < m; ++j) {
                s2[j] += a[j] + b[j];
                s3[j] += c[j] + d[j];
                const double scale = std::abs(f1[j]) + 1e-300;
                diff[i] += std::abs(a[j] + b[j] - 2 * f1[j] - ratio * (c[j] + d[j] - 2 * f1[j])) / scale;
            }
        }
        for (int i = 0; i < n; ++i)
            for (int k = i + 1; k < n; ++k)
                for (int si = -1; si <= 1; si += 2)
                    for (int sk = -1; sk <= 1; sk += 2) {
                        x_ = r.center;
                        x_[i] += si * l4 * r.half[i];
                        x_[k] += sk * l4 * r.half[k];
                        call(a.data());
                        for (int j = 0; j < m; ++j) s4[j] += a[j];
                    }
        for (unsigned corner = 0; corner < (1u << n); ++corner) {
            for (int i = 0; i < n; ++i)
                x_[i] = r.center[i] + ((corner >> i) & 1u ? l5 : -l5) * r.half[i];
            call(a.data());
            for (int j = 0; j < m; ++j) s5[j] += a[j];
        }
        double vol = 1.0;
        for (int i = 0; i < n; ++i) vol *= 2.0 * r.half[i];
        r.value.assign(m, 0.0);
        r.error.assign(m, 0.0);
        for (int j = 0; j < m; ++j) {
            const double i7 = w1_ * f1[j] + w2_ * s2[j] + w3_ * s3[j] + w4_ * s4[j] + w5_ * s5[j];
            const double i5 = e1_ * f1[j] + e2_ * s2[j] + e3_ * s3[j] + e4_ * s4[j];
            r.value[j] = vol * i7;
            r.error[j] = vol * std::abs(i7 - i5);
        }
        // Split where the fourth difference is largest; near-ties go to the widest side.
        int best = 0;
        for (int i = 1; i < n; ++i) {
            const double gap = diff[i] - diff[best];
            if (gap > 1e-10 * diff[best] || (std::abs(gap) <= 1e-10 * diff[best] && r.half[i] > r.half[best]))
                best = i;
        }
        r.split_dim = best;
    }

    const VectorIntegrand& f_;
    int dim_, ncomp_;
    std::vector<double> x_, buf_;
    long evals_{0};
    double w1_, w2_, w3_, w4_, w5_, e1_, e2_, e3_, e4_;
};

}  // namespace

CubatureResult adaptive_cubature(const VectorIntegrand& f, int ncomp, const std::vector<double>& lo,
                                 const std::vector<double>& hi, const CubatureOptions& opts,
                                 const std::vector<std::vector<double>>& breaks) {
    const int dim = static_cast<int>(lo.size());
    if (dim < 1 || hi.size() != lo.size() || ncomp < 1) throw DomainError("adaptive_cubature: bad dimensions");
    if (dim > 15) throw DomainError("adaptive_cubature: dimension too large for the Genz-Malik rule");

    std::vector<std::vector<double>> grid(dim);
    for (int d = 0; d < dim; ++d) {
        grid[d] = {lo[d], hi[d]};
        if (d < static_cast<int>(breaks.size()))
            for (double b : breaks[d])
                if (b > lo[d] && b < hi[d]) grid[d].push_back(b);
        std::sort(grid[d].begin(), grid[d].end());
        grid[d].erase(std::unique(grid[d].begin(), grid[d].end()), grid[d].end());
    }

    RuleEvaluator rule(f, dim, ncomp);
    std::vector<Region> regions;
    std::vector<std::size_t> idx(dim, 0);
    while (true) {
        Region r;
        r.center.resize(dim);
        r.half.resize(dim);
        for (int d = 0; d < dim; ++d) {
            r.center[d] = 0.5 * (grid[d][idx[d]] + grid[d][idx[d] + 1]);
            r.half[d] = 0.5 * (grid[d][idx[d] + 1] - grid[d][idx[d]]);
        }
        rule.evaluate(r);
        regions.push_back(std::move(r));
        int d = 0;
        while (d < dim && ++idx[d] + 1 >= grid[d].size()) idx[d++] = 0;
        if (d == dim) break;
    }

    std::vector<long double> total(ncomp, 0), total_err(ncomp, 0);
    for (const auto& r : regions)
        for (int j = 0; j < ncomp; ++j) {
            total[j] += r.value[j];
            total_err[j] += r.error[j];
        }
    std::vector<double> scale(ncomp);
    for (int j = 0; j < ncomp; ++j) scale[j] = std::max(std::abs(static_cast<double>(total[j])), 1e-300);
    auto keyed = [&](Region& r) {
        double k = 0;
        for (int j = 0; j < ncomp; ++j) k = std::max(k, r.error[j] / scale[j]);
        r.key = k;
    };
    for (auto& r : regions) keyed(r);
    std::make_heap(regions.begin(), regions.end(), RegionLess{});

    CubatureResult out;
    auto done = [&]() {
        for (int j = 0; j < ncomp; ++j) {
            const double tol = std::max(opts.abs_tol, opts.rel_tol * std::abs(static_cast<double>(total[j])));
            if (static_cast<double>(total_err[j]) > tol) return false;
        }
        return true;
    };
    long since_rescale = 0;
    while (!(out.converged = done())) {
        if (rule.evaluations() >= opts.max_evals) break;
        std::pop_heap(regions.begin(), regions.end(), RegionLess{});
        Region parent = std::move(regions.back());
        regions.pop_back();
        const int s = parent.split_dim;
        if (!(parent.half[s] > 0) || parent.center[s] + 0.5 * parent.half[s] == parent.center[s]) {
            // Degenerate width: the region cannot be refined any further.
            parent.key = 0;
            regions.push_back(std::move(parent));
            std::push_heap(regions.begin(), regions.end(), RegionLess{});
            break;
        }
        Region left, right;
        left.center = right.center = parent.center;
        left.half = right.half = parent.half;
        left.half[s] = right.half[s] = 0.5 * parent.half[s];
        left.center[s] = parent.center[s] - left.half[s];
        right.center[s] = parent.center[s] + right.half[s];
        rule.evaluate(left);
        rule.evaluate(right);
        for (int j = 0; j < ncomp; ++j) {
            total[j] += left.value[j] + right.value[j] - parent.value[j];
            total_err[j] += left.error[j] + right.error[j] - parent.error[j];
        }
        keyed(left);
        keyed(right);
        regions.push_back(std::move(left));
        std::push_heap(regions.begin(), regions.end(), RegionLess{});
        regions.push_back(std::move(right));
        std::push_heap(regions.begin(), regions.end(), RegionLess{});
        if (++since_rescale == 256) {
            since_rescale = 0;
            std::fill(total.begin(), total.end(), 0.0L);
            std::fill(total_err.begin(), total_err.end(), 0.0L);
            for (const auto& r : regions)
                for (int j = 0; j < ncomp; ++j) {
                    total[j] += r.value[j];
                    total_err[j] += r.error[j];
                }
        }
    }
    std::fill(total.begin(), total.end(), 0.0L);
    std::fill(total_err.begin(), total_err.end(), 0.0L);
    for (const auto& r : regions)
        for (int j = 0; j < ncomp; ++j) {
            total[j] += r.value[j];
            total_err[j] += r.error[j];
        }
    out.value.resize(ncomp);
    out.error.resize(ncomp);
    for (int j = 0; j < ncomp; ++j) {
        out.value[j] = static_cast<double>(total[j]);
        out.error[j] = static_cast<double>(total_err[j]);
    }
    out.evaluations = rule.evaluations();
    return out;
}

namespace {

// Joe-Kuo (new-joe-kuo-6.21201) primitive polynomials and initial direction numbers for
// dimensions 2..17; dimension 1 is the van der Corput sequence.
struct JoeKuo {
    int s;
    unsigned a;
    unsigned m[6];
};
constexpr JoeKuo kJoeKuo[] = {
    {1, 0, {1}},
    {2, 1, {1, 3}},
    {3, 1, {1, 3, 1}},
    {3, 2, {1, 1, 1}},
    {4, 1, {1, 1, 3, 3}},
    {4, 4, {1, 3, 5, 13}},
    {5, 2, {1, 1, 5, 5, 17}},
    {5, 4, {1, 1, 5, 5, 5}},
    {5, 7, {1, 1, 7, 11, 19}},
    {5, 11, {1, 1, 5, 1, 1}},
    {5, 13, {1, 1, 1, 3, 11}},
    {5, 14, {1, 3, 5, 5, 31}},
    {6, 1, {1, 3, 3, 9, 7, 49}},
    {6, 13, {1, 1, 1, 15, 21, 21}},
    {6, 16, {1, 3, 1, 13, 27, 49}},
    {6, 19, {1, 1, 1, 15, 7, 5}},
};

}  // namespace

Sobol::Sobol(int dim) : dim_(dim), state_(dim, 0u), v_(dim) {
    if (dim < 1 || dim > kMaxDim) throw DomainError("Sobol: unsupported dimension");
    for (int k = 0; k < 32; ++k) v_[0][k] = 1u << (31 - k);
    for (int d = 1; d < dim; ++d) {
        const JoeKuo& jk = kJoeKuo[d - 1];
        auto& v = v_[d];
        for (int k = 0; k < jk.s; ++k) v[k] = jk.m[k] << (31 - k);
        for (int k = jk.s; k < 32; ++k) {
            std::uint32_t x = v[k - jk.s] ^ (v[k - jk.s] >> jk.s);
            for (int j = 1; j < jk.s; ++j)
                if ((jk.a >> (jk.s - 1 - j)) & 1u) x ^= v[k - j];
            v[k] = x;
        }
    }
}

void Sobol::next(std::uint32_t* out) {
    if (index_ > 0) {
        std::uint64_t c = 0, n = index_ - 1;
        while (n & 1u) {
            n >>= 1;
            ++c;
        }
        if (c >= 32) throw DomainError("Sobol: sequence exhausted");
        for (int d = 0; d < dim_; ++d) state_[d] ^= v_[d][c];
    }
    ++index_;
    for (int d = 0; d < dim_; ++d) out[d] = state_[d];
}

QmcResult qmc_integrate(const VectorIntegrand& f, int dim, int ncomp, const QmcOptions& opts) {
    if (opts.randomizations < 2) throw DomainError("qmc_integrate: need at least two randomizations");
    if (opts.log2_points < 1 || opts.log2_points > 30) throw DomainError("qmc_integrate: bad point count");
    const long npts = 1L << opts.log2_points;
    const int R = opts.randomizations;
    std::vector<std::vector<double>> means(R, std::vector<double>(ncomp, 0.0));
    std::vector<std::uint32_t> u(dim), shift(dim);
    std::vector<double> x(dim), val(ncomp);
    for (int r = 0; r < R; ++r) {
        std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(r)));
        for (int d = 0; d < dim; ++d) shift[d] = static_cast<std::uint32_t>(rng() >> 32);
        Sobol sob(dim);
        std::vector<long double> acc(ncomp, 0.0L);
        for (long i = 0; i < npts; ++i) {
            sob.next(u.data());
            for (int d = 0; d < dim; ++d) x[d] = (static_cast<double>(u[d] ^ shift[d]) + 0.5) * 0x1p-32;
            f(x.data(), val.data());
            for (int j = 0; j < ncomp; ++j) acc[j] += val[j];
        }
        for (int j = 0; j < ncomp; ++j) means[r][j] = static_cast<double>(acc[j] / npts);
    }
    QmcResult out;
    out.value.assign(ncomp, 0.0);
    out.std_error.assign(ncomp, 0.0);
    for (int j = 0; j < ncomp; ++j) {
        long double m = 0, ss = 0;
        for (int r = 0; r < R; ++r) m += means[r][j];
        m /= R;
        for (int r = 0; r < R; ++r) ss += (means[r][j] - m) * (means[r][j] - m);
        out.value[j] = static_cast<double>(m);
        out.std_error[j] = static_cast<double>(std::sqrt(ss / (R - 1) / R));
    }
    out.evaluations = npts * R;
    return out;
}

}  // namespace blockg
