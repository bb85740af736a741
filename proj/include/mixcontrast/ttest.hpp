#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <vector>

#include "mixcontrast/errors.hpp"
#include "mixcontrast/expression_matrix.hpp"

namespace mixcontrast {

struct TTestResult {
  Eigen::VectorXd t;  // +-inf sentinel on zero pooled variance
  Eigen::VectorXd p;
  bool degenerate = false;  // some feature had zero pooled variance
};

// Equal-variance pooled two-sample t per feature (class 1 minus class 2),
// two-sided P on p1 + p2 - 2 degrees of freedom.
inline TTestResult pooled_t(const ExpressionMatrix& data) {
  if (data.num_classes() != 2) throw DomainError("pooled t-test requires exactly 2 classes");
  const std::vector<int> sizes = data.class_sizes();
  const double p1 = sizes[0], p2 = sizes[1];
  if (p1 < 2 || p2 < 2) throw DomainError("both classes need at least 2 samples");
  const double df = p1 + p2 - 2.0;
  const boost::math::students_t dist(df);

  TTestResult out;
  out.t.resize(data.n());
  out.p.resize(data.n());
  for (Eigen::Index j = 0; j < data.n(); ++j) {
    double m1 = 0.0, m2 = 0.0;
    for (Eigen::Index s = 0; s < data.p(); ++s) {
      (data.class_of_sample[static_cast<std::size_t>(s)] == 1 ? m1 : m2) += data.values(j, s);
    }
    m1 /= p1;
    m2 /= p2;
    double ss = 0.0;
    for (Eigen::Index s = 0; s < data.p(); ++s) {
      const double mu = data.class_of_sample[static_cast<std::size_t>(s)] == 1 ? m1 : m2;
      const double d = data.values(j, s) - mu;
      ss += d * d;
    }
    const double sp2 = ss / df;
    if (sp2 <= 0.0) {
      const double diff = m1 - m2;
      out.t[j] = diff == 0.0 ? 0.0
                             : std::copysign(std::numeric_limits<double>::infinity(), diff);
      out.p[j] = diff == 0.0 ? 1.0 : 0.0;
      out.degenerate = true;
      continue;
    }
    const double se = std::sqrt(sp2 * (1.0 / p1 + 1.0 / p2));
    out.t[j] = (m1 - m2) / se;
    out.p[j] = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t[j])));
  }
  return out;
}

}  // namespace mixcontrast
