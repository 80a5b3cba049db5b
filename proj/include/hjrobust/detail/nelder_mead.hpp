#pragma once

#include <cmath>
#include <functional>
#include <limits>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include "hjrobust/linalg.hpp"

namespace hjrobust::detail {

struct SimplexResult {
  VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Unconstrained Nelder-Mead (GSL nmsimplex2). Non-finite objective values are
/// mapped to a large finite penalty so the simplex can step back.
inline SimplexResult nelder_mead(const std::function<double(const VectorXd&)>& f, const VectorXd& x0,
                                 const VectorXd& step, double tol = 1e-8, int max_iter = 5000) {
  static const bool handler_off = [] {
    gsl_set_error_handler_off();
    return true;
  }();
  (void)handler_off;

  struct Ctx {
    const std::function<double(const VectorXd&)>* f;
    VectorXd buf;
  } ctx{&f, VectorXd(x0.size())};

  gsl_multimin_function fn;
  fn.n = static_cast<std::size_t>(x0.size());
  fn.params = &ctx;
  fn.f = [](const gsl_vector* v, void* p) -> double {
    auto* c = static_cast<Ctx*>(p);
    for (Index i = 0; i < c->buf.size(); ++i) c->buf(i) = gsl_vector_get(v, static_cast<std::size_t>(i));
    double val;
    try {
      val = (*c->f)(c->buf);
    } catch (...) {
      val = 1e300;
    }
    return std::isfinite(val) ? val : 1e300;
  };

  gsl_vector* x = gsl_vector_alloc(fn.n);
  gsl_vector* ss = gsl_vector_alloc(fn.n);
  for (std::size_t i = 0; i < fn.n; ++i) {
    gsl_vector_set(x, i, x0(static_cast<Index>(i)));
    gsl_vector_set(ss, i, step(static_cast<Index>(i)));
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, fn.n);
  gsl_multimin_fminimizer_set(s, &fn, x, ss);

  SimplexResult res;
  const double scale = std::max(1e-300, step.cwiseAbs().maxCoeff());
  int status = GSL_CONTINUE;
  for (; res.iterations < max_iter && status == GSL_CONTINUE; ++res.iterations) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), tol * scale);
  }
  res.converged = status == GSL_SUCCESS;
  res.x.resize(x0.size());
  for (std::size_t i = 0; i < fn.n; ++i) res.x(static_cast<Index>(i)) = gsl_vector_get(s->x, i);
  res.value = s->fval;

  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(ss);
  gsl_vector_free(x);
  return res;
}

}  // namespace hjrobust::detail
