#include "snv/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "snv/error.hpp"
#include "snv/rng.hpp"

namespace snv {

SimplexResult nelder_mead(const Objective& f, const std::vector<double>& x0,
                          const std::vector<double>& lower, const std::vector<double>& upper,
                          const SimplexOptions& opts, std::uint64_t seed) {
  const std::size_t n = x0.size();
  if (lower.size() != n || upper.size() != n) throw InputError("simplex: bound sizes differ");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(lower[i] < upper[i])) throw InputError("simplex: bounds must be ordered");
    if (x0[i] < lower[i] || x0[i] > upper[i]) throw InputError("simplex: start outside bounds");
  }
  using Point = std::vector<double>;
  auto to_x = [&](const Point& u) {
    Point x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = lower[i] + std::clamp(u[i], 0.0, 1.0) * (upper[i] - lower[i]);
    return x;
  };
  Point u0(n);
  for (std::size_t i = 0; i < n; ++i) u0[i] = (x0[i] - lower[i]) / (upper[i] - lower[i]);

  SimplexResult res;
  auto eval = [&](Point& u) {
    for (double& v : u) v = std::clamp(v, 0.0, 1.0);
    ++res.evaluations;
    const double v = f(to_x(u));
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  Point best = u0;
  double fbest = eval(best);
  res.accepted_log.push_back(fbest);
  if (n == 0) {
    res.x = to_x(best);
    res.f = fbest;
    res.converged = true;
    return res;
  }

  Rng rng(seed);
  bool converged = false;
  for (int start = 0; start <= opts.restarts; ++start) {
    std::vector<Point> s(n + 1, best);
    std::vector<double> fs(n + 1, fbest);
    for (std::size_t i = 0; i < n; ++i) {
      double step = opts.initial_step;
      if (start > 0 && (rng() & 1)) step = -step;
      if (s[i + 1][i] + step > 1.0 || s[i + 1][i] + step < 0.0) step = -step;
      s[i + 1][i] += step;
      fs[i + 1] = eval(s[i + 1]);
    }
    const int budget_end = res.evaluations + opts.max_evaluations;
    converged = false;
    std::vector<std::size_t> order(n + 1);
    while (res.evaluations < budget_end) {
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto a, auto b) { return fs[a] < fs[b]; });
      const std::size_t lo = order.front(), hi = order.back(), nh = order[n - 1];

      double diam = 0.0;
      for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = 0; i < n; ++i) diam = std::max(diam, std::abs(s[k][i] - s[lo][i]));
      if (fs[hi] - fs[lo] <= opts.f_tolerance || diam <= opts.x_tolerance) {
        converged = true;
        break;
      }

      Point c(n, 0.0);
      for (std::size_t k = 0; k <= n; ++k)
        if (k != hi)
          for (std::size_t i = 0; i < n; ++i) c[i] += s[k][i] / n;
      auto along = [&](double t) {
        Point p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = c[i] + t * (s[hi][i] - c[i]);
        return p;
      };

      Point r = along(-1.0);
      const double fr = eval(r);
      if (fr < fs[lo]) {
        Point e = along(-2.0);
        const double fe = eval(e);
        if (fe < fr) {
          s[hi] = e;
          fs[hi] = fe;
        } else {
          s[hi] = r;
          fs[hi] = fr;
        }
      } else if (fr < fs[nh]) {
        s[hi] = r;
        fs[hi] = fr;
      } else {
        const bool outside = fr < fs[hi];
        Point k = along(outside ? -0.5 : 0.5);
        const double fk = eval(k);
        if (fk < std::min(fr, fs[hi])) {
          s[hi] = k;
          fs[hi] = fk;
        } else {
          for (std::size_t j = 0; j <= n; ++j) {
            if (j == lo) continue;
            for (std::size_t i = 0; i < n; ++i) s[j][i] = s[lo][i] + 0.5 * (s[j][i] - s[lo][i]);
            fs[j] = eval(s[j]);
          }
        }
      }
      const auto m = std::min_element(fs.begin(), fs.end());
      if (*m < fbest) {
        fbest = *m;
        best = s[m - fs.begin()];
      }
      res.accepted_log.push_back(fbest);
    }
  }
  res.x = to_x(best);
  res.f = fbest;
  res.converged = converged;
  return res;
}

}  // namespace snv
