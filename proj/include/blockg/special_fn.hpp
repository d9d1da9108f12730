#pragma once
#include <cmath>

namespace blockg {

// Parameters of 2F1(a, b; c; z) in the regime c > b > 0, 0 <= z < 1.
struct Hyp2F1Params {
    double a{1};
    double b{1};
    double c{2};
    double z{0};
};

void validate(const Hyp2F1Params& p);

// 2F1(a, b; c; z), evaluated twice (series and Euler integral) and cross-checked.
double hyp2f1(const Hyp2F1Params& p);

// (1 - z)^(a+b-c) 2F1(a, b; c; z); requires a + b - c > 0.
double hyp2f1_near1_scaled(const Hyp2F1Params& p);

// Lower incomplete gamma function and its logarithm.
double lower_inc_gamma(double s, double x);
double log_lower_inc_gamma(double s, double x);

// Log of 2F1(a, b; c; z) with w = 1 - z supplied separately so that z close to 1 keeps
// full relative precision in w. Returns +inf at w = 0 when the series diverges there.
double log_hyp2f1(double a, double b, double c, double z, double w);

// Log of (1 - z)^(a+b-c) 2F1(a, b; c; z); finite at w = 0 when a + b - c > 0.
double log_hyp2f1_near1_scaled(double a, double b, double c, double z, double w);

namespace detail {

// Rough count of series terms needed to reach double precision.
double series_terms_estimate(double a, double b, double c, double z);

// log 2F1 by direct summation; throws NoConvergence when max_terms is exceeded.
double log_hyp2f1_series(double a, double b, double c, double z, long max_terms = 2'000'000);

// log of  int_0^1 t^(alpha-1) (1-t)^(beta-1) ((1-t) + t w)^(-gamma) dt.
double log_euler_integral(double alpha, double beta, double gamma, double w, double rel_tol = 1e-13);

// log 2F1 from the Euler integral in its plain form.
double log_hyp2f1_euler(double a, double b, double c, double w);

// log 2F1(c-a, c-b; c; z) = log[(1-z)^(a+b-c) 2F1(a, b; c; z)] from the Euler integral.
double log_hyp2f1_euler_transformed(double a, double b, double c, double w);

inline double log_beta(double x, double y) { return std::lgamma(x) + std::lgamma(y) - std::lgamma(x + y); }

}  // namespace detail

}  // namespace blockg

