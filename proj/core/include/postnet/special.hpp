#pragma once

namespace postnet {

// Digamma / trigamma via argument-shift recurrence plus the asymptotic
// Bernoulli series; dependency-free and accurate to ~1e-12 over the
// positive reals, which is what Dirichlet losses on small alpha need.
double digamma(double x);
double trigamma(double x);

// Gamma-family helpers used by the Dirichlet closed forms. x > 0 required.
double log_gamma(double x);

// Numerically stable log(1 + exp(x)).
double softplus(double x);

// Inverse of softplus, y > 0.
double softplus_inv(double y);

}  // namespace postnet
