#pragma once

// Exact information quantities on finite alphabets.
//
// A DiscreteModel carries the true joint P(C, X), a stochastic encoder
// P(U | X) and the variational tables Q. The joint over (C, X, U) factorises
// as p(c, x) p(u | x). Natural logarithms throughout, with 0 log 0 = 0.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vibgmm/errors.hpp"
#include "vibgmm/rng.hpp"
#include "vibgmm/tensor.hpp"

namespace vibgmm::discrete {

inline constexpr double kPmfTolerance = 1e-12;
inline constexpr std::size_t kMaxJointSize = 512;

struct DiscreteModel {
  Tensor p_cx;         // [C x X], sums to 1
  Tensor p_u_given_x;  // [X x U], rows sum to 1
  Tensor q_x_given_u;  // [U x X]
  Tensor q_u;          // [U]
  Tensor q_c;          // [C]
  Tensor q_u_given_c;  // [C x U]
  Tensor q_c_given_u;  // [U x C]

  std::size_t num_c() const { return p_cx.rows(); }
  std::size_t num_x() const { return p_cx.cols(); }
  std::size_t num_u() const { return p_u_given_x.cols(); }
};

namespace detail {

// p log(p / q) with the 0 log 0 = 0 and 0 log(0/0) = 0 conventions.
inline double plogpq(double p, double q) {
  if (p == 0.0) return 0.0;
  if (q == 0.0) return std::numeric_limits<double>::infinity();
  return p * std::log(p / q);
}

inline double plogq(double p, double q) {
  if (p == 0.0) return 0.0;
  if (q == 0.0) return -std::numeric_limits<double>::infinity();
  return p * std::log(q);
}

inline void check_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* name) {
  if (t.rows() != rows || t.cols() != cols) {
    throw ValidationError(std::string(name) + " has shape " + shape_string(t.shape()) +
                          ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

inline void check_nonnegative(const Tensor& t, const char* name) {
  for (double v : t.data()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string(name) + " has a negative or non-finite entry");
    }
  }
}

inline void check_rows_sum_to_one(const Tensor& t, const char* name) {
  check_nonnegative(t, name);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < t.cols(); ++c) s += t.at(r, c);
    if (std::abs(s - 1.0) > kPmfTolerance) {
      throw ValidationError(std::string(name) + " row " + std::to_string(r) + " sums to " +
                            std::to_string(s) + ", not 1");
    }
  }
}

}  // namespace detail

/// Checks every table's shape, non-negativity and normalisation.
inline void validate(const DiscreteModel& m) {
  const std::size_t nc = m.num_c(), nx = m.num_x(), nu = m.num_u();
  if (nc * nx * nu > kMaxJointSize) {
    throw ValidationError("alphabet product |C||X||U| = " + std::to_string(nc * nx * nu) +
                          " exceeds " + std::to_string(kMaxJointSize));
  }
  detail::check_shape(m.p_u_given_x, nx, nu, "p_u_given_x");
  detail::check_shape(m.q_x_given_u, nu, nx, "q_x_given_u");
  detail::check_shape(m.q_u, 1, nu, "q_u");
  detail::check_shape(m.q_c, 1, nc, "q_c");
  detail::check_shape(m.q_u_given_c, nc, nu, "q_u_given_c");
  detail::check_shape(m.q_c_given_u, nu, nc, "q_c_given_u");

  detail::check_nonnegative(m.p_cx, "p_cx");
  double total = 0.0;
  for (double v : m.p_cx.data()) total += v;
  if (std::abs(total - 1.0) > kPmfTolerance) {
    throw ValidationError("p_cx sums to " + std::to_string(total) + ", not 1");
  }
  detail::check_rows_sum_to_one(m.p_u_given_x, "p_u_given_x");
  detail::check_rows_sum_to_one(m.q_x_given_u, "q_x_given_u");
  detail::check_rows_sum_to_one(m.q_u, "q_u");
  detail::check_rows_sum_to_one(m.q_c, "q_c");
  detail::check_rows_sum_to_one(m.q_u_given_c, "q_u_given_c");
  detail::check_rows_sum_to_one(m.q_c_given_u, "q_c_given_u");
}

/// Checks q(u) = sum_c q(c) q(u|c) and q(c|u) = q(c) q(u|c) / q(u).
inline void validate_mixture(const DiscreteModel& m) {
  validate(m);
  const std::size_t nc = m.num_c(), nu = m.num_u();
  for (std::size_t u = 0; u < nu; ++u) {
    double qu = 0.0;
    for (std::size_t c = 0; c < nc; ++c) qu += m.q_c[c] * m.q_u_given_c.at(c, u);
    if (std::abs(qu - m.q_u[u]) > kPmfTolerance) {
      throw ValidationError("mixture consistency q(u) = sum_c q(c) q(u|c) violated at u=" +
                            std::to_string(u));
    }
    for (std::size_t c = 0; c < nc; ++c) {
      const double expect = qu > 0.0 ? m.q_c[c] * m.q_u_given_c.at(c, u) / qu : 0.0;
      if (std::abs(expect - m.q_c_given_u.at(u, c)) > kPmfTolerance) {
        throw ValidationError("Bayes consistency q(c|u) = q(c) q(u|c) / q(u) violated at u=" +
                              std::to_string(u) + ", c=" + std::to_string(c));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Marginals

inline std::vector<double> p_x(const DiscreteModel& m) {
  std::vector<double> out(m.num_x(), 0.0);
  for (std::size_t c = 0; c < m.num_c(); ++c)
    for (std::size_t x = 0; x < m.num_x(); ++x) out[x] += m.p_cx.at(c, x);
  return out;
}

inline std::vector<double> p_c(const DiscreteModel& m) {
  std::vector<double> out(m.num_c(), 0.0);
  for (std::size_t c = 0; c < m.num_c(); ++c)
    for (std::size_t x = 0; x < m.num_x(); ++x) out[c] += m.p_cx.at(c, x);
  return out;
}

/// p(x, u) as [X x U].
inline Tensor p_xu(const DiscreteModel& m) {
  const auto px = p_x(m);
  Tensor out(Shape{m.num_x(), m.num_u()});
  for (std::size_t x = 0; x < m.num_x(); ++x)
    for (std::size_t u = 0; u < m.num_u(); ++u) out.at(x, u) = px[x] * m.p_u_given_x.at(x, u);
  return out;
}

inline std::vector<double> p_u(const DiscreteModel& m) {
  const Tensor j = p_xu(m);
  std::vector<double> out(m.num_u(), 0.0);
  for (std::size_t x = 0; x < m.num_x(); ++x)
    for (std::size_t u = 0; u < m.num_u(); ++u) out[u] += j.at(x, u);
  return out;
}

/// p(c, u) = sum_x p(c, x) p(u | x), as [C x U].
inline Tensor p_cu(const DiscreteModel& m) {
  Tensor out(Shape{m.num_c(), m.num_u()});
  for (std::size_t c = 0; c < m.num_c(); ++c)
    for (std::size_t x = 0; x < m.num_x(); ++x)
      for (std::size_t u = 0; u < m.num_u(); ++u)
        out.at(c, u) += m.p_cx.at(c, x) * m.p_u_given_x.at(x, u);
  return out;
}

/// p(c | x) as [X x C]; rows with p(x) = 0 are uniform.
inline Tensor p_c_given_x(const DiscreteModel& m) {
  const auto px = p_x(m);
  Tensor out(Shape{m.num_x(), m.num_c()});
  for (std::size_t x = 0; x < m.num_x(); ++x)
    for (std::size_t c = 0; c < m.num_c(); ++c)
      out.at(x, c) = px[x] > 0.0 ? m.p_cx.at(c, x) / px[x] : 1.0 / static_cast<double>(m.num_c());
  return out;
}

/// p(x | u) as [U x X]; rows with p(u) = 0 are uniform.
inline Tensor p_x_given_u(const DiscreteModel& m) {
  const Tensor j = p_xu(m);
  const auto pu = p_u(m);
  Tensor out(Shape{m.num_u(), m.num_x()});
  for (std::size_t u = 0; u < m.num_u(); ++u)
    for (std::size_t x = 0; x < m.num_x(); ++x)
      out.at(u, x) = pu[u] > 0.0 ? j.at(x, u) / pu[u] : 1.0 / static_cast<double>(m.num_x());
  return out;
}

// ---------------------------------------------------------------------------
// Entropies and mutual informations

inline double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) h -= detail::plogq(v, v);
  return h;
}

inline double entropy_x(const DiscreteModel& m) { return entropy(p_x(m)); }
inline double entropy_u(const DiscreteModel& m) { return entropy(p_u(m)); }

/// H(U | X) = -sum_{x,u} p(x,u) log p(u|x).
inline double entropy_u_given_x(const DiscreteModel& m) {
  const Tensor j = p_xu(m);
  double h = 0.0;
  for (std::size_t x = 0; x < m.num_x(); ++x)
    for (std::size_t u = 0; u < m.num_u(); ++u) h -= detail::plogq(j.at(x, u), m.p_u_given_x.at(x, u));
  return h;
}

/// H(X | U) = -sum_{x,u} p(x,u) log p(x|u).
inline double entropy_x_given_u(const DiscreteModel& m) {
  const Tensor j = p_xu(m);
  const auto pu = p_u(m);
  double h = 0.0;
  for (std::size_t x = 0; x < m.num_x(); ++x)
    for (std::size_t u = 0; u < m.num_u(); ++u) {
      if (j.at(x, u) > 0.0) h -= j.at(x, u) * std::log(j.at(x, u) / pu[u]);
    }
  return h;
}

inline double mutual_information_xu(const DiscreteModel& m) {
  return entropy_u(m) - entropy_u_given_x(m);
}

/// I(C; U) = sum_{c,u} p(c,u) log(p(c,u) / (p(c) p(u))).
inline double mutual_information_cu(const DiscreteModel& m) {
  const Tensor j = p_cu(m);
  const auto pc = p_c(m);
  const auto pu = p_u(m);
  double i = 0.0;
  for (std::size_t c = 0; c < m.num_c(); ++c)
    for (std::size_t u = 0; u < m.num_u(); ++u) i += detail::plogpq(j.at(c, u), pc[c] * pu[u]);
  return i;
}

inline double mutual_information_cx(const DiscreteModel& m) {
  const auto pc = p_c(m);
  const auto px = p_x(m);
  double i = 0.0;
  for (std::size_t c = 0; c < m.num_c(); ++c)
    for (std::size_t x = 0; x < m.num_x(); ++x) i += detail::plogpq(m.p_cx.at(c, x), pc[c] * px[x]);
  return i;
}

// ---------------------------------------------------------------------------
// Objectives

/// I(C; U) - s I(X; U).
inline double ib_lagrangian(const DiscreteModel& m, double s) {
  validate(m);
  return mutual_information_cu(m) - s * mutual_information_xu(m);
}

/// I(X; U) - s I(X; U): the relaxation that replaces I(C;U) by I(X;U).
inline double relaxed_objective(const DiscreteModel& m, double s) {
  validate(m);
  return (1.0 - s) * mutual_information_xu(m);
}

/// -H(X|U) - s [H(U) - H(U|X)].
inline double upper_bound_objective(const DiscreteModel& m, double s) {
  validate(m);
  return -entropy_x_given_u(m) - s * (entropy_u(m) - entropy_u_given_x(m));
}

/// E_x[ E_{u|x}[log q(x|u)] - s KL(P(U|x) || Q(U)) ].
inline double variational_bound(const DiscreteModel& m, double s) {
  validate(m);
  const auto px = p_x(m);
  double total = 0.0;
  for (std::size_t x = 0; x < m.num_x(); ++x) {
    double recon = 0.0, kl = 0.0;
    for (std::size_t u = 0; u < m.num_u(); ++u) {
      const double puxv = m.p_u_given_x.at(x, u);
      recon += detail::plogq(puxv, m.q_x_given_u.at(u, x));
      kl += detail::plogpq(puxv, m.q_u[u]);
    }
    total += px[x] * (recon - s * kl);
  }
  return total;
}

/// E_x[ E_{u|x}[log q(x|u)] - s KL(P(C|x) || Q(C)) - s E_{c|x}[KL(P(U|x) || Q(U|c))] ].
inline double vade_bound(const DiscreteModel& m, double s) {
  validate(m);
  const auto px = p_x(m);
  const Tensor pcx = p_c_given_x(m);
  double total = 0.0;
  for (std::size_t x = 0; x < m.num_x(); ++x) {
    double recon = 0.0;
    for (std::size_t u = 0; u < m.num_u(); ++u) {
      recon += detail::plogq(m.p_u_given_x.at(x, u), m.q_x_given_u.at(u, x));
    }
    double kl_c = 0.0, kl_u = 0.0;
    for (std::size_t c = 0; c < m.num_c(); ++c) {
      kl_c += detail::plogpq(pcx.at(x, c), m.q_c[c]);
      double inner = 0.0;
      for (std::size_t u = 0; u < m.num_u(); ++u) {
        inner += detail::plogpq(m.p_u_given_x.at(x, u), m.q_u_given_c.at(c, u));
      }
      kl_u += pcx.at(x, c) * inner;
    }
    total += px[x] * (recon - s * kl_c - s * kl_u);
  }
  return total;
}

/// E_x E_{u|x}[ KL(P(C|x) || Q(C|u)) ].
inline double expected_assignment_kl(const DiscreteModel& m) {
  const auto px = p_x(m);
  const Tensor pcx = p_c_given_x(m);
  double total = 0.0;
  for (std::size_t x = 0; x < m.num_x(); ++x)
    for (std::size_t u = 0; u < m.num_u(); ++u) {
      double kl = 0.0;
      for (std::size_t c = 0; c < m.num_c(); ++c) kl += detail::plogpq(pcx.at(x, c), m.q_c_given_u.at(u, c));
      if (m.p_u_given_x.at(x, u) > 0.0) total += px[x] * m.p_u_given_x.at(x, u) * kl;
    }
  return total;
}

/// L_VB - L_VaDE - s E[KL(P(C|X) || Q(C|U))]; zero for mixture-consistent Q.
inline double vade_identity_gap(const DiscreteModel& m, double s) {
  validate_mixture(m);
  return variational_bound(m, s) - vade_bound(m, s) - s * expected_assignment_kl(m);
}

// ---------------------------------------------------------------------------
// Construction helpers

/// Flat Dirichlet(1) draw of length n (all entries strictly positive).
inline std::vector<double> random_pmf(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& v : p) {
    v = e(rng) + 1e-12;
    s += v;
  }
  for (auto& v : p) v /= s;
  return p;
}

inline Tensor random_stochastic(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto p = random_pmf(cols, rng);
    for (std::size_t c = 0; c < cols; ++c) t.at(r, c) = p[c];
  }
  return t;
}

/// Sets q(u) and q(c|u) from q(c) and q(u|c).
inline void complete_mixture(DiscreteModel& m) {
  const std::size_t nc = m.num_c(), nu = m.num_u();
  m.q_u = Tensor(Shape{nu});
  m.q_c_given_u = Tensor(Shape{nu, nc});
  for (std::size_t u = 0; u < nu; ++u) {
    for (std::size_t c = 0; c < nc; ++c) m.q_u[u] += m.q_c[c] * m.q_u_given_c.at(c, u);
    for (std::size_t c = 0; c < nc; ++c) {
      m.q_c_given_u.at(u, c) = m.q_u[u] > 0.0 ? m.q_c[c] * m.q_u_given_c.at(c, u) / m.q_u[u]
                                              : 1.0 / static_cast<double>(nc);
    }
  }
}

/// Random mixture-consistent variational tables for the model's alphabets.
inline void randomize_q(DiscreteModel& m, Rng& rng) {
  m.q_x_given_u = random_stochastic(m.num_u(), m.num_x(), rng);
  m.q_c = Tensor::vector(random_pmf(m.num_c(), rng));
  m.q_u_given_c = random_stochastic(m.num_c(), m.num_u(), rng);
  complete_mixture(m);
}

inline DiscreteModel random_model(std::size_t nc, std::size_t nx, std::size_t nu, Rng& rng) {
  DiscreteModel m;
  m.p_cx = Tensor(Shape{nc, nx}, random_pmf(nc * nx, rng));
  m.p_u_given_x = random_stochastic(nx, nu, rng);
  randomize_q(m, rng);
  return m;
}

/// Replaces Q(X|U) and Q(U) by the marginals induced by P; the remaining Q
/// tables are left untouched.
inline DiscreteModel with_induced_q(DiscreteModel m) {
  m.q_x_given_u = p_x_given_u(m);
  m.q_u = Tensor::vector(p_u(m));
  return m;
}

/// U = X through the identity encoder, with every Q table taken from the true
/// joint, so that Q(C|U=x) = P(C|X=x).
inline DiscreteModel identity_encoder_model(const Tensor& p_cx) {
  DiscreteModel m;
  m.p_cx = p_cx;
  const std::size_t nc = p_cx.rows(), nx = p_cx.cols();
  m.p_u_given_x = Tensor(Shape{nx, nx});
  m.q_x_given_u = Tensor(Shape{nx, nx});
  for (std::size_t x = 0; x < nx; ++x) {
    m.p_u_given_x.at(x, x) = 1.0;
    m.q_x_given_u.at(x, x) = 1.0;
  }
  m.q_c = Tensor::vector(p_c(m));
  m.q_u_given_c = Tensor(Shape{nc, nx});
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t x = 0; x < nx; ++x) m.q_u_given_c.at(c, x) = p_cx.at(c, x) / m.q_c[c];
  complete_mixture(m);
  return m;
}

}  // namespace vibgmm::discrete
