#pragma once

// Distribution function of a linear combination of independent (non-central)
// chi-square variables by numerical inversion of the characteristic function
// (Davies 1980, Applied Statistics algorithm AS 155). Same control flow as the
// reference implementation; state lives in an object instead of globals.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace hjrobust::detail {

struct DaviesResult {
  double value = -1.0;
  int fault = 0;  // 0 ok, 1 accuracy not reached, 2 round-off, 3 invalid, 4 parameters not located
  double error_bound = 0.0;
  int terms = 0;
};

class Davies {
 public:
  Davies(std::vector<double> weights, std::vector<int> dof, std::vector<double> noncentrality,
         double sigma = 0.0)
      : lb_(std::move(weights)), n_(std::move(dof)), nc_(std::move(noncentrality)), sigma_(sigma) {}

  explicit Davies(std::vector<double> weights)
      : lb_(std::move(weights)), n_(lb_.size(), 1), nc_(lb_.size(), 0.0), sigma_(0.0) {}

  DaviesResult evaluate(double c, double acc = 1e-8, int lim = 1'000'000) {
    try {
      return run(c, acc, lim);
    } catch (const CounterExceeded&) {
      DaviesResult out;
      out.fault = 4;
      return out;
    }
  }

 private:
  struct CounterExceeded {};

  static constexpr double pi = std::numbers::pi;
  static constexpr double log28 = 0.0866;  // log(2) / 8

  static double exp1(double x) { return x < -50.0 ? 0.0 : std::exp(x); }
  static double sq(double x) { return x * x; }

  void counter() {
    if (++count_ > lim_) throw CounterExceeded{};
  }

  // log(1 + x), or log(1 + x) - x when first is false.
  static double log1(double x, bool first) {
    if (std::fabs(x) > 0.1) return first ? std::log1p(x) : std::log1p(x) - x;
    double y = x / (2.0 + x);
    double term = 2.0 * y * y * y;
    double k = 3.0;
    double s = (first ? 2.0 : -x) * y;
    y = y * y;
    for (double s1 = s + term / k; s1 != s; s1 = s + term / k) {
      k += 2.0;
      term *= y;
      s = s1;
    }
    return s;
  }

  void order() {
    const int r = static_cast<int>(lb_.size());
    th_.assign(static_cast<std::size_t>(r), 0);
    for (int j = 0; j < r; ++j) {
      const double lj = std::fabs(lb_[static_cast<std::size_t>(j)]);
      int k = j - 1;
      for (; k >= 0; --k) {
        if (lj > std::fabs(lb_[static_cast<std::size_t>(th_[static_cast<std::size_t>(k)])]))
          th_[static_cast<std::size_t>(k + 1)] = th_[static_cast<std::size_t>(k)];
        else
          break;
      }
      th_[static_cast<std::size_t>(k + 1)] = j;
    }
    ndtsrt_ = false;
  }

  // Bound on the tail probability and the associated cutoff.
  double errbd(double u, double* cx) {
    counter();
    double xconst = u * sigsq_;
    double sum1 = u * xconst;
    u *= 2.0;
    for (int j = static_cast<int>(lb_.size()) - 1; j >= 0; --j) {
      const auto jj = static_cast<std::size_t>(j);
      const double nj = n_[jj], lj = lb_[jj], ncj = nc_[jj];
      const double x = u * lj, y = 1.0 - x;
      xconst += lj * (ncj / y + nj) / y;
      sum1 += ncj * sq(x / y) + nj * (sq(x) / y + log1(-x, false));
    }
    *cx = xconst;
    return exp1(-0.5 * sum1);
  }

  // Find ctff so that P(Q > ctff) < accx if upn > 0, P(Q < ctff) < accx otherwise.
  double ctff(double accx, double* upn) {
    double u2 = *upn, u1 = 0.0, c1 = mean_, c2 = 0.0, xconst = 0.0;
    const double rb = 2.0 * (u2 > 0.0 ? lmax_ : lmin_);
    for (double u = u2 / (1.0 + u2 * rb); errbd(u, &c2) > accx; u = u2 / (1.0 + u2 * rb)) {
      u1 = u2;
      c1 = c2;
      u2 *= 2.0;
    }
    for (double u = (c1 - mean_) / (c2 - mean_); u < 0.9; u = (c1 - mean_) / (c2 - mean_)) {
      u = (u1 + u2) / 2.0;
      if (errbd(u / (1.0 + u * rb), &xconst) > accx) {
        u1 = u;
        c1 = xconst;
      } else {
        u2 = u;
        c2 = xconst;
      }
    }
    *upn = u2;
    return c2;
  }

  // Bound on integration error due to truncation at u.
  double truncation(double u, double tausq) {
    counter();
    double sum1 = 0.0, prod2 = 0.0, prod3 = 0.0;
    int s = 0;
    double sum2 = (sigsq_ + tausq) * sq(u);
    double prod1 = 2.0 * sum2;
    u *= 2.0;
    for (std::size_t j = 0; j < lb_.size(); ++j) {
      const double lj = lb_[j], ncj = nc_[j];
      const int nj = n_[j];
      const double x = sq(u * lj);
      sum1 += ncj * x / (1.0 + x);
      if (x > 1.0) {
        prod2 += nj * std::log(x);
        prod3 += nj * log1(x, true);
        s += nj;
      } else {
        prod1 += nj * log1(x, true);
      }
    }
    sum1 *= 0.5;
    prod2 += prod1;
    prod3 += prod1;
    double x = exp1(-sum1 - 0.25 * prod2) / pi;
    const double y = exp1(-sum1 - 0.25 * prod3) / pi;
    double err1 = s == 0 ? 1.0 : x * 2.0 / s;
    double err2 = prod3 > 1.0 ? 2.5 * y : 1.0;
    if (err2 < err1) err1 = err2;
    x = 0.5 * sum2;
    err2 = x <= y ? 1.0 : y / x;
    return err1 < err2 ? err1 : err2;
  }

  // Find u such that truncation(u) < accx and truncation(u / 1.2) > accx.
  void findu(double* utx, double accx) {
    static constexpr double divis[] = {2.0, 1.4, 1.2, 1.1};
    double ut = *utx;
    double u = ut / 4.0;
    if (truncation(u, 0.0) > accx) {
      for (u = ut; truncation(u, 0.0) > accx; u = ut) ut *= 4.0;
    } else {
      ut = u;
      for (u = u / 4.0; truncation(u, 0.0) <= accx; u /= 4.0) ut = u;
    }
    for (double d : divis) {
      u = ut / d;
      if (truncation(u, 0.0) <= accx) ut = u;
    }
    *utx = ut;
  }

  void integrate(int nterm, double interv, double tausq, bool mainx) {
    const double inpi = interv / pi;
    for (int k = nterm; k >= 0; --k) {
      const double u = (k + 0.5) * interv;
      double sum1 = -2.0 * u * c_;
      double sum2 = std::fabs(sum1);
      double sum3 = -0.5 * sigsq_ * sq(u);
      for (int j = static_cast<int>(lb_.size()) - 1; j >= 0; --j) {
        const auto jj = static_cast<std::size_t>(j);
        const double nj = n_[jj];
        double x = 2.0 * lb_[jj] * u;
        double y = sq(x);
        sum3 -= 0.25 * nj * log1(y, true);
        y = nc_[jj] * x / (1.0 + y);
        const double z = nj * std::atan(x) + y;
        sum1 += z;
        sum2 += std::fabs(z);
        sum3 -= 0.5 * x * y;
      }
      double x = inpi * exp1(sum3) / u;
      if (!mainx) x *= 1.0 - exp1(-0.5 * tausq * sq(u));
      intl_ += std::sin(0.5 * sum1) * x;
      ersm_ += 0.5 * sum2 * x;
    }
  }

  // Coefficient of tausq in the error when the convergence factor exp(-0.5 tausq u^2) is used.
  double cfe(double x) {
    counter();
    if (ndtsrt_) order();
    double axl = std::fabs(x);
    const double sxl = x > 0.0 ? 1.0 : -1.0;
    double sum1 = 0.0;
    for (int j = static_cast<int>(lb_.size()) - 1; j >= 0; --j) {
      const auto t = static_cast<std::size_t>(th_[static_cast<std::size_t>(j)]);
      if (lb_[t] * sxl > 0.0) {
        const double lj = std::fabs(lb_[t]);
        const double axl1 = axl - lj * (n_[t] + nc_[t]);
        const double axl2 = lj / log28;
        if (axl1 > axl2) {
          axl = axl1;
        } else {
          if (axl > axl2) axl = axl2;
          sum1 = (axl - axl1) / lj;
          for (int k = j - 1; k >= 0; --k) {
            const auto tk = static_cast<std::size_t>(th_[static_cast<std::size_t>(k)]);
            sum1 += n_[tk] + nc_[tk];
          }
          break;
        }
      }
    }
    if (sum1 > 100.0) {
      fail_ = true;
      return 1.0;
    }
    return std::pow(2.0, sum1 / 4.0) / (pi * sq(axl));
  }

  DaviesResult run(double c, double acc, int lim) {
    static constexpr int rats[] = {1, 2, 4, 8};
    DaviesResult out;
    c_ = c;
    lim_ = lim;
    count_ = 0;
    intl_ = 0.0;
    ersm_ = 0.0;
    ndtsrt_ = true;
    fail_ = false;
    double acc1 = acc;
    double xlim = lim;

    sigsq_ = sq(sigma_);
    double sd = sigsq_;
    lmax_ = 0.0;
    lmin_ = 0.0;
    mean_ = 0.0;
    for (std::size_t j = 0; j < lb_.size(); ++j) {
      const double nj = n_[j], lj = lb_[j], ncj = nc_[j];
      if (nj < 0 || ncj < 0.0) {
        out.fault = 3;
        return out;
      }
      sd += sq(lj) * (2 * nj + 4.0 * ncj);
      mean_ += lj * (nj + ncj);
      if (lmax_ < lj)
        lmax_ = lj;
      else if (lmin_ > lj)
        lmin_ = lj;
    }
    if (sd == 0.0) {
      out.value = c > 0.0 ? 1.0 : 0.0;
      return out;
    }
    if (lmin_ == 0.0 && lmax_ == 0.0 && sigma_ == 0.0) {
      out.fault = 3;
      return out;
    }
    sd = std::sqrt(sd);
    const double almx = lmax_ < -lmin_ ? -lmin_ : lmax_;

    double utx = 16.0 / sd;
    double up = 4.5 / sd;
    double un = -up;
    findu(&utx, 0.5 * acc1);
    if (c != 0.0 && almx > 0.07 * sd) {
      const double tausq = 0.25 * acc1 / cfe(c);
      if (fail_) {
        fail_ = false;
      } else if (truncation(utx, tausq) < 0.2 * acc1) {
        sigsq_ += tausq;
        findu(&utx, 0.25 * acc1);
      }
    }
    acc1 *= 0.5;

    double intv = 0.0;
    double xnt = 0.0;
    for (;;) {
      const double d1 = ctff(acc1, &up) - c;
      if (d1 < 0.0) {
        out.value = 1.0;
        return out;
      }
      const double d2 = c - ctff(acc1, &un);
      if (d2 < 0.0) {
        out.value = 0.0;
        return out;
      }
      intv = 2.0 * pi / std::max(d1, d2);
      xnt = utx / intv;
      const double xntm = 3.0 / std::sqrt(acc1);
      if (xnt > xntm * 1.5) {
        if (xntm > xlim) {
          out.fault = 1;
          return out;
        }
        const int ntm = static_cast<int>(std::floor(xntm + 0.5));
        const double intv1 = utx / ntm;
        const double x = 2.0 * pi / intv1;
        if (x <= std::fabs(c)) break;
        const double tausq = 0.33 * acc1 / (1.1 * (cfe(c - x) + cfe(c + x)));
        if (fail_) break;
        acc1 *= 0.67;
        integrate(ntm, intv1, tausq, false);
        xlim -= xntm;
        sigsq_ += tausq;
        out.terms += ntm + 1;
        findu(&utx, 0.25 * acc1);
        acc1 *= 0.75;
        continue;
      }
      break;
    }

    if (xnt > xlim) {
      out.fault = 1;
      return out;
    }
    const int nt = static_cast<int>(std::floor(xnt + 0.5));
    integrate(nt, intv, 0.0, true);
    out.terms += nt + 1;
    out.value = 0.5 - intl_;
    out.error_bound = ersm_;

    const double x = ersm_ + acc / 10.0;
    for (int rat : rats) {
      if (rat * x == rat * ersm_) out.fault = 2;
    }
    return out;
  }

  std::vector<double> lb_;
  std::vector<int> n_;
  std::vector<double> nc_;
  double sigma_;

  std::vector<int> th_;
  double sigsq_ = 0.0, lmax_ = 0.0, lmin_ = 0.0, mean_ = 0.0, c_ = 0.0;
  double intl_ = 0.0, ersm_ = 0.0;
  int count_ = 0, lim_ = 0;
  bool ndtsrt_ = true, fail_ = false;
};

}  // namespace hjrobust::detail
