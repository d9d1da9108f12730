#include <doctest.h>

#include <cmath>
#include <set>

#include "blockg/quadrature.hpp"

using namespace blockg;

TEST_CASE("gauss-kronrod integrates smooth and endpoint-singular functions") {
    auto q = integrate([](double x) { return std::pow(x, 20); }, 0.0, 1.0, 1e-13);
    CHECK(q.converged);
    CHECK(q.value == doctest::Approx(1.0 / 21).epsilon(1e-14));
    auto s = integrate([](double x) { return 1 / std::sqrt(x); }, 0.0, 1.0, 1e-10);
    CHECK(s.value == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("genz-malik rule is exact for degree-7 polynomials on one region") {
    for (int dim = 2; dim <= 4; ++dim) {
        std::vector<double> lo(dim, -0.5), hi(dim, 1.5);
        VectorIntegrand f = [dim](const double* x, double* out) {
            double v = std::pow(x[0], 3) * std::pow(x[1], 4);
            for (int i = 2; i < dim; ++i) v += x[i] * x[i] * x[0];
            out[0] = v;
            out[1] = std::pow(x[1], 7);
        };
        CubatureOptions o;
        o.max_evals = 1;
        auto r = adaptive_cubature(f, 2, lo, hi, o);
        const double vol_rest = std::pow(2.0, dim - 2);
        const double ix3 = (std::pow(1.5, 4) - std::pow(-0.5, 4)) / 4, iy4 = (std::pow(1.5, 5) + std::pow(0.5, 5)) / 5;
        const double ix = (1.5 * 1.5 - 0.25) / 2, ix2 = (std::pow(1.5, 3) + std::pow(0.5, 3)) / 3;
        double expect = ix3 * iy4 * vol_rest;
        if (dim > 2) expect += (dim - 2) * ix * ix2 * 2.0 * std::pow(2.0, dim - 3);
        CHECK(r.value[0] == doctest::Approx(expect).epsilon(1e-13));
        const double iy7 = (std::pow(1.5, 8) - std::pow(0.5, 8)) / 8;
        CHECK(r.value[1] == doctest::Approx(iy7 * 2.0 * vol_rest).epsilon(1e-13));
    }
}

TEST_CASE("adaptive cubature converges on a peaked Gaussian") {
    VectorIntegrand f = [](const double* x, double* out) {
        double q = 0;
        for (int i = 0; i < 3; ++i) q += (x[i] - 0.3) * (x[i] - 0.3);
        out[0] = std::exp(-q / (2 * 0.01));
    };
    CubatureOptions o;
    o.rel_tol = 1e-7;
    auto r = adaptive_cubature(f, 1, {0, 0, 0}, {1, 1, 1}, o);
    const double one = std::sqrt(2 * M_PI) * 0.1 * 0.5 * (std::erf(0.7 / (0.1 * std::sqrt(2.0))) + std::erf(0.3 / (0.1 * std::sqrt(2.0))));
    CHECK(r.converged);
    CHECK(std::abs(r.value[0] - one * one * one) <= r.error[0]);
    CHECK(r.value[0] == doctest::Approx(one * one * one).epsilon(1e-8));
}

TEST_CASE("sobol points stratify each axis and form a (0,m,2)-net in the first two") {
    const int m = 10, npts = 1 << m;
    Sobol s(Sobol::kMaxDim);
    std::vector<std::vector<std::uint32_t>> pts(npts, std::vector<std::uint32_t>(Sobol::kMaxDim));
    for (int i = 0; i < npts; ++i) s.next(pts[i].data());
    for (int d = 0; d < Sobol::kMaxDim; ++d) {
        std::set<std::uint32_t> cells;
        for (auto& p : pts) cells.insert(p[d] >> (32 - m));
        CHECK(cells.size() == static_cast<std::size_t>(npts));
    }
    for (int a = 0; a <= m; ++a) {
        std::set<std::uint64_t> cells;
        for (auto& p : pts) {
            const std::uint64_t cx = a == 0 ? 0 : p[0] >> (32 - a);
            const std::uint64_t cy = a == m ? 0 : p[1] >> (32 - (m - a));
            cells.insert((cx << 32) | cy);
        }
        CHECK(cells.size() == static_cast<std::size_t>(npts));
    }
}

TEST_CASE("randomized qmc estimates a product integral with an honest error") {
    VectorIntegrand f = [](const double* x, double* out) {
        double v = 1;
        for (int i = 0; i < 6; ++i) v *= 2 * x[i];
        out[0] = v;
    };
    QmcOptions o;
    o.log2_points = 12;
    o.randomizations = 16;
    o.seed = 7;
    auto r = qmc_integrate(f, 6, 1, o);
    CHECK(std::abs(r.value[0] - 1.0) < 5 * r.std_error[0] + 1e-12);
    CHECK(r.std_error[0] < 1e-2);
    auto again = qmc_integrate(f, 6, 1, o);
    CHECK(again.value[0] == r.value[0]);
}
