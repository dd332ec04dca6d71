#pragma once

// Randomised property suite over exact discrete models: the variational
// bound, its maximiser, the VaDE decomposition and the data-processing
// ordering of the IB objectives.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "vibgmm/discrete.hpp"
#include "vibgmm/rng.hpp"

namespace vibgmm::discrete {

inline constexpr double kIdentityTolerance = 1e-12;

enum class OracleFault {
  none,
  q_normalization,  // scales one row of Q(X|U) so it no longer sums to one
};

struct OracleSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 200;          // random models per property
  std::size_t q_per_model = 10;      // random Q draws per model for the bound checks
  std::size_t max_c = 4, max_x = 6, max_u = 5;
  std::vector<double> vade_s{0.5, 1.0, 2.0};
  OracleFault fault = OracleFault::none;
};

struct PropertyResult {
  std::string name;
  bool passed = true;
  std::size_t checks = 0;
  double worst = 0.0;  // largest violation margin; <= 0 means every check held
  std::string message;
  std::optional<DiscreteModel> counterexample;
};

namespace detail {

class PropertyTracker {
 public:
  explicit PropertyTracker(std::string name) { r_.name = std::move(name); }

  // Records a check whose violation must not exceed zero.
  void check(double violation, const DiscreteModel& m, const std::string& what) {
    ++r_.checks;
    if (r_.checks == 1 || violation > r_.worst) r_.worst = violation;
    if (violation > 0.0 && r_.passed) fail(m, what);
  }

  void fail(const DiscreteModel& m, const std::string& what) {
    r_.passed = false;
    r_.message = what;
    r_.counterexample = m;
  }

  PropertyResult result() && { return std::move(r_); }
  PropertyResult& raw() { return r_; }

 private:
  PropertyResult r_;
};

inline DiscreteModel draw_model(const OracleSuiteOptions& o, Rng& rng) {
  auto size = [&rng](std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(2, std::max<std::size_t>(hi, 2))(rng);
  };
  const auto nc = size(o.max_c);
  const auto nx = size(o.max_x);
  const auto nu = size(o.max_u);
  DiscreteModel m = random_model(nc, nx, nu, rng);
  if (o.fault == OracleFault::q_normalization) {
    for (std::size_t x = 0; x < nx; ++x) m.q_x_given_u.at(0, x) *= 1.5;
  }
  return m;
}

}  // namespace detail

inline std::vector<PropertyResult> run_oracle_suite(const OracleSuiteOptions& o) {
  Rng rng = make_rng(o.seed, Stream::oracle);
  detail::PropertyTracker validation("pmf_validation");
  detail::PropertyTracker vb_bound("variational_bound_below_upper");
  detail::PropertyTracker vb_equal("variational_bound_tight_at_induced_q");
  detail::PropertyTracker vb_strict("variational_bound_strict_for_random_q");
  detail::PropertyTracker dpi("relaxed_objective_upper_bounds_ib");
  detail::PropertyTracker gap("vade_identity_gap_zero");
  detail::PropertyTracker vade_lb("vade_below_variational_bound");
  detail::PropertyTracker tight("vade_tight_when_assignments_match");
  detail::PropertyTracker nonneg("information_nonnegative");
  std::uniform_real_distribution<double> s_dist(0.0, 3.0);

  for (std::size_t t = 0; t < o.trials; ++t) {
    DiscreteModel m = detail::draw_model(o, rng);
    try {
      validate_mixture(m);
      ++validation.raw().checks;
    } catch (const ValidationError& e) {
      ++validation.raw().checks;
      if (validation.raw().passed) validation.fail(m, e.what());
      continue;
    }

    const double s = s_dist(rng);
    const double upper = upper_bound_objective(m, s);
    vb_equal.check(std::abs(variational_bound(with_induced_q(m), s) - upper) - kIdentityTolerance,
                      m, "variational bound differs from L' at the induced Q");
    for (std::size_t q = 0; q < o.q_per_model; ++q) {
      randomize_q(m, rng);
      const double vb = variational_bound(m, s);
      vb_bound.check(vb - upper - kIdentityTolerance, m, "variational bound exceeds L'");
      // s may be 0, where only the decoder term drives the gap; a random
      // decoder is still almost surely different from P(X|U).
      const double slack = upper - vb;
      vb_strict.check(slack > 0.0 ? -slack : 1.0, m, "random Q attains L' exactly");
    }

    const double ib = ib_lagrangian(m, s);
    const double relaxed = relaxed_objective(m, s);
    dpi.check(ib - relaxed - kIdentityTolerance, m, "I(C;U) exceeds I(X;U)");
    nonneg.check(-mutual_information_xu(m) - kIdentityTolerance, m, "I(X;U) < 0");
    nonneg.check(-mutual_information_cu(m) - kIdentityTolerance, m, "I(C;U) < 0");
    nonneg.check(-entropy_u_given_x(m) - kIdentityTolerance, m, "H(U|X) < 0");
    nonneg.check(-entropy_x_given_u(m) - kIdentityTolerance, m, "H(X|U) < 0");
    nonneg.check(-expected_assignment_kl(m) - kIdentityTolerance, m, "E[KL(P(C|X)||Q(C|U))] < 0");

    for (double sv : o.vade_s) {
      gap.check(std::abs(vade_identity_gap(m, sv)) - kIdentityTolerance, m,
                "VB != VaDE + s E[KL] at s=" + std::to_string(sv));
      vade_lb.check(vade_bound(m, sv) - variational_bound(m, sv) - kIdentityTolerance, m,
                    "VaDE bound exceeds VB at s=" + std::to_string(sv));
    }

    const DiscreteModel id = identity_encoder_model(m.p_cx);
    for (double sv : o.vade_s) {
      tight.check(std::abs(variational_bound(id, sv) - vade_bound(id, sv)) - kIdentityTolerance, id,
                  "VaDE bound not tight with Q(C|U) = P(C|X) at s=" + std::to_string(sv));
    }
  }

  std::vector<PropertyResult> out;
  for (auto* tr : {&validation, &vb_bound, &vb_equal, &vb_strict, &dpi, &gap, &vade_lb,
                   &tight, &nonneg}) {
    out.push_back(std::move(*tr).result());
  }
  return out;
}

inline bool all_passed(const std::vector<PropertyResult>& results) {
  return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.passed; });
}

}  // namespace vibgmm::discrete
