#include "wzreg/quadrature.hpp"

#include <memory>
#include <string>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>

#include "wzreg/error.hpp"

namespace wzreg {
namespace {

constexpr std::size_t kMaxIntervals = 512;

struct WorkspaceDeleter {
  void operator()(gsl_integration_workspace* w) const { gsl_integration_workspace_free(w); }
};

gsl_integration_workspace* thread_workspace() {
  thread_local std::unique_ptr<gsl_integration_workspace, WorkspaceDeleter> workspace(
      gsl_integration_workspace_alloc(kMaxIntervals));
  return workspace.get();
}

double trampoline(double x, void* params) {
  return (*static_cast<const std::function<double(double)>*>(params))(x);
}

struct DisableGslAbort {
  DisableGslAbort() { gsl_set_error_handler_off(); }
};

}  // namespace

QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double rel_target, double abs_target) {
  static const DisableGslAbort once;
  if (a == b) return {};
  gsl_function fn;
  fn.function = &trampoline;
  fn.params = const_cast<std::function<double(double)>*>(&f);
  QuadratureResult out;
  // A non-zero status (roundoff or interval limit) is tolerated as long as
  // the reported error meets the absolute acceptance bound.
  gsl_integration_qag(&fn, a, b, abs_target, rel_target, kMaxIntervals, GSL_INTEG_GAUSS15,
                      thread_workspace(), &out.value, &out.error);
  if (!(out.error <= kQuadratureAbsTolerance)) {
    fail(ErrorCode::numerical_failure,
         "quadrature did not converge on [" + std::to_string(a) + ", " + std::to_string(b) +
             "]: error estimate " + std::to_string(out.error));
  }
  return out;
}

}  // namespace wzreg
