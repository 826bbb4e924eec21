#include "postnet/special.hpp"

#include <cmath>

#include "postnet/errors.hpp"

namespace postnet {

double digamma(double x) {
    if (!(x > 0.0)) throw InvalidArgument("digamma: argument must be > 0");
    double acc = 0.0;
    while (x < 6.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    // psi(x) ~ ln x - 1/(2x) - sum B_2n / (2n x^2n)
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = std::log(x) - 0.5 * inv;
    double p = inv2;
    series -= p / 12.0;          // B2 term
    p *= inv2;
    series += p / 120.0;         // B4
    p *= inv2;
    series -= p / 252.0;         // B6
    p *= inv2;
    series += p / 240.0;         // B8
    p *= inv2;
    series -= p / 132.0;         // B10
    p *= inv2;
    series += p * 691.0 / 32760.0;  // B12
    p *= inv2;
    series -= p / 12.0;          // B14
    return acc + series;
}

double trigamma(double x) {
    if (!(x > 0.0)) throw InvalidArgument("trigamma: argument must be > 0");
    double acc = 0.0;
    while (x < 6.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    // psi'(x) ~ 1/x + 1/(2x^2) + sum B_2n / x^(2n+1)
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = inv + 0.5 * inv2;
    double p = inv2 * inv;
    series += p / 6.0;           // B2
    p *= inv2;
    series -= p / 30.0;          // B4
    p *= inv2;
    series += p / 42.0;          // B6
    p *= inv2;
    series -= p / 30.0;          // B8
    p *= inv2;
    series += p * 5.0 / 66.0;    // B10
    p *= inv2;
    series -= p * 691.0 / 2730.0;  // B12
    p *= inv2;
    series += p * 7.0 / 6.0;     // B14
    return acc + series;
}

double log_gamma(double x) {
    if (!(x > 0.0)) throw InvalidArgument("log_gamma: argument must be > 0");
    return std::lgamma(x);
}

double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double softplus_inv(double y) {
    if (!(y > 0.0)) throw InvalidArgument("softplus_inv: argument must be > 0");
    // x = log(exp(y) - 1) = y + log(1 - exp(-y))
    return y + std::log(-std::expm1(-y));
}

}  // namespace postnet
