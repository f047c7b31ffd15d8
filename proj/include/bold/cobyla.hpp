#pragma once

// COBYLA: Powell's constrained optimization by linear approximation.
//
// Minimizes f(x) subject to c_k(x) >= 0 using linear interpolation over an
// (n+1)-vertex simplex and a trust region of radius rho that shrinks from
// rho_begin to rho_end. This is a direct port of the 1992 reference routines
// COBYLB and TRSTLP. Array indexing is kept 1-based internally so the control
// flow can be checked line by line against the reference.
//
// Differences from the reference:
//   * the best point seen is tracked separately (least violation first, then
//     objective) and returned, rather than the pole of the final simplex
//   * a non-finite objective or constraint value stops the search with
//     status NumericalFailure
//   * every evaluation is appended to a trace

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bold/error.hpp"

namespace bold {

using Objective = std::function<double(std::span<const double>)>;
/// Feasible where the value is >= 0.
using Constraint = std::function<double(std::span<const double>)>;

struct CobylaOptions {
  double rho_begin = 0.25;
  double rho_end = 1e-4;
  std::size_t max_evals = 200;
  /// Violation at or below this counts as feasible when picking the result.
  double feasibility_tol = 1e-9;
};

enum class CobylaStatus {
  Converged,         ///< rho reached rho_end
  MaxEvals,          ///< evaluation budget exhausted first
  RoundingErrors,    ///< simplex inverse lost accuracy
  NumericalFailure,  ///< objective or constraint returned a non-finite value
};

inline std::string to_string(CobylaStatus s) {
  switch (s) {
    case CobylaStatus::Converged: return "converged";
    case CobylaStatus::MaxEvals: return "max-evals";
    case CobylaStatus::RoundingErrors: return "rounding-errors";
    case CobylaStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

struct CobylaEval {
  std::size_t index = 0;  ///< 1-based evaluation counter
  std::vector<double> x;
  double objective = 0.0;
  double max_violation = 0.0;
  double best_objective = 0.0;  ///< objective of the best point so far
};

struct CobylaResult {
  std::vector<double> x;
  double objective = 0.0;
  double max_violation = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
  CobylaStatus status = CobylaStatus::MaxEvals;
  std::vector<CobylaEval> trace;
};

namespace detail {

/// Column-major matrix with 1-based (i, j) access.
class Mat1 {
 public:
  Mat1(std::size_t rows, std::size_t cols) : rows_(rows), data_((rows + 1) * (cols + 1), 0.0) {}
  double& operator()(std::ptrdiff_t i, std::ptrdiff_t j) {
    return data_[static_cast<std::size_t>(j) * (rows_ + 1) + static_cast<std::size_t>(i)];
  }

 private:
  std::size_t rows_;
  std::vector<double> data_;
};

using Vec1 = std::vector<double>;  // index 0 unused
using IVec1 = std::vector<std::ptrdiff_t>;

// Finds a step dx with |dx| <= rho that first minimizes the greatest
// violation of the linearized constraints A(.,k)'dx >= b(k), k = 1..m, and
// then uses any remaining freedom to minimize -A(.,m+1)'dx without raising
// that violation. ifull = 0 signals that degeneracy kept |dx| short of rho.
inline void trstlp(std::ptrdiff_t n, std::ptrdiff_t m, Mat1& a, Vec1& b, double rho, Vec1& dx, int& ifull) {
  Mat1 z(n, n);
  Vec1 zdota(n + 2, 0.0), vmultc(m + 2, 0.0), sdirn(n + 1, 0.0), dxnew(n + 1, 0.0), vmultd(m + 2, 0.0);
  IVec1 iact(m + 2, 0);

  std::ptrdiff_t mcon, nact, icon, i, j, k, nactx = 0, isave, kk, kw, kp, kl, icount = 0;
  double resmax, optold = 0.0, optnew, tot, temp, alpha, beta, sp, spabs, acca, accb, ratio, zdotv, zdvabs,
      vsave, dd, ss, sd, stpful, step, zdotw, zdwabs, resold = 0.0, sumabs, sum, tempa;

  ifull = 1;
  mcon = m;
  nact = 0;
  resmax = 0.0;
  icon = 0;
  for (i = 1; i <= n; ++i) {
    for (j = 1; j <= n; ++j) z(i, j) = 0.0;
    z(i, i) = 1.0;
    dx[i] = 0.0;
  }
  if (m >= 1) {
    for (k = 1; k <= m; ++k) {
      if (b[k] > resmax) {
        resmax = b[k];
        icon = k;
      }
    }
    for (k = 1; k <= m; ++k) {
      iact[k] = k;
      vmultc[k] = resmax - b[k];
    }
  }
  if (resmax == 0.0) goto L480;
  for (i = 1; i <= n; ++i) sdirn[i] = 0.0;

  // Stop a stage after three iterations that neither improve the stage
  // objective nor enlarge the active set.
L60:
  optold = 0.0;
  icount = 0;
L70:
  if (mcon == m) {
    optnew = resmax;
  } else {
    optnew = 0.0;
    for (i = 1; i <= n; ++i) optnew -= dx[i] * a(i, mcon);
  }
  if (icount == 0 || optnew < optold) {
    optold = optnew;
    nactx = nact;
    icount = 3;
  } else if (nact > nactx) {
    nactx = nact;
    icount = 3;
  } else {
    --icount;
    if (icount == 0) goto L490;
  }

  // Add constraint iact(icon) to the active set, rotating the trailing
  // columns of z to stay orthogonal to its gradient.
  if (icon <= nact) goto L260;
  kk = iact[icon];
  for (i = 1; i <= n; ++i) dxnew[i] = a(i, kk);
  tot = 0.0;
  k = n;
  while (k > nact) {
    sp = 0.0;
    spabs = 0.0;
    for (i = 1; i <= n; ++i) {
      temp = z(i, k) * dxnew[i];
      sp += temp;
      spabs += std::abs(temp);
    }
    acca = spabs + 0.1 * std::abs(sp);
    accb = spabs + 0.2 * std::abs(sp);
    if (spabs >= acca || acca >= accb) sp = 0.0;
    if (tot == 0.0) {
      tot = sp;
    } else {
      kp = k + 1;
      temp = std::sqrt(sp * sp + tot * tot);
      alpha = sp / temp;
      beta = tot / temp;
      tot = temp;
      for (i = 1; i <= n; ++i) {
        temp = alpha * z(i, k) + beta * z(i, kp);
        z(i, kp) = alpha * z(i, kp) - beta * z(i, k);
        z(i, k) = temp;
      }
    }
    --k;
  }

  if (tot != 0.0) {
    ++nact;
    zdota[nact] = tot;
    vmultc[icon] = vmultc[nact];
    vmultc[nact] = 0.0;
    goto L210;
  }

  // The new gradient is a combination of active gradients, so one active
  // constraint has to leave. vmultd receives the combination coefficients.
  ratio = -1.0;
  k = nact;
  do {
    zdotv = 0.0;
    zdvabs = 0.0;
    for (i = 1; i <= n; ++i) {
      temp = z(i, k) * dxnew[i];
      zdotv += temp;
      zdvabs += std::abs(temp);
    }
    acca = zdvabs + 0.1 * std::abs(zdotv);
    accb = zdvabs + 0.2 * std::abs(zdotv);
    if (zdvabs < acca && acca < accb) {
      temp = zdotv / zdota[k];
      if (temp > 0.0 && iact[k] <= m) {
        tempa = vmultc[k] / temp;
        if (ratio < 0.0 || tempa < ratio) ratio = tempa;
      }
      if (k >= 2) {
        kw = iact[k];
        for (i = 1; i <= n; ++i) dxnew[i] -= temp * a(i, kw);
      }
      vmultd[k] = temp;
    } else {
      vmultd[k] = 0.0;
    }
    --k;
  } while (k > 0);
  if (ratio < 0.0) goto L490;

  for (k = 1; k <= nact; ++k) vmultc[k] = std::max(0.0, vmultc[k] - ratio * vmultd[k]);
  if (icon < nact) {
    isave = iact[icon];
    vsave = vmultc[icon];
    k = icon;
    do {
      kp = k + 1;
      kw = iact[kp];
      sp = 0.0;
      for (i = 1; i <= n; ++i) sp += z(i, k) * a(i, kw);
      temp = std::sqrt(sp * sp + zdota[kp] * zdota[kp]);
      alpha = zdota[kp] / temp;
      beta = sp / temp;
      zdota[kp] = alpha * zdota[k];
      zdota[k] = temp;
      for (i = 1; i <= n; ++i) {
        temp = alpha * z(i, kp) + beta * z(i, k);
        z(i, kp) = alpha * z(i, k) - beta * z(i, kp);
        z(i, k) = temp;
      }
      iact[k] = kw;
      vmultc[k] = vmultc[kp];
      k = kp;
    } while (k < nact);
    iact[k] = isave;
    vmultc[k] = vsave;
  }
  temp = 0.0;
  for (i = 1; i <= n; ++i) temp += z(i, nact) * a(i, kk);
  if (temp == 0.0) goto L490;
  zdota[nact] = temp;
  vmultc[icon] = 0.0;
  vmultc[nact] = ratio;

  // Keep the objective last in the active set during stage two.
L210:
  iact[icon] = iact[nact];
  iact[nact] = kk;
  if (mcon > m && kk != mcon) {
    k = nact - 1;
    sp = 0.0;
    for (i = 1; i <= n; ++i) sp += z(i, k) * a(i, kk);
    temp = std::sqrt(sp * sp + zdota[nact] * zdota[nact]);
    alpha = zdota[nact] / temp;
    beta = sp / temp;
    zdota[nact] = alpha * zdota[k];
    zdota[k] = temp;
    for (i = 1; i <= n; ++i) {
      temp = alpha * z(i, nact) + beta * z(i, k);
      z(i, nact) = alpha * z(i, k) - beta * z(i, nact);
      z(i, k) = temp;
    }
    iact[nact] = iact[k];
    iact[k] = kk;
    temp = vmultc[k];
    vmultc[k] = vmultc[nact];
    vmultc[nact] = temp;
  }

  if (mcon > m) goto L320;
  kk = iact[nact];
  temp = 0.0;
  for (i = 1; i <= n; ++i) temp += sdirn[i] * a(i, kk);
  temp -= 1.0;
  temp /= zdota[nact];
  for (i = 1; i <= n; ++i) sdirn[i] -= temp * z(i, nact);
  goto L340;

  // Drop constraint iact(icon) from the active set.
L260:
  if (icon < nact) {
    isave = iact[icon];
    vsave = vmultc[icon];
    k = icon;
    do {
      kp = k + 1;
      kk = iact[kp];
      sp = 0.0;
      for (i = 1; i <= n; ++i) sp += z(i, k) * a(i, kk);
      temp = std::sqrt(sp * sp + zdota[kp] * zdota[kp]);
      alpha = zdota[kp] / temp;
      beta = sp / temp;
      zdota[kp] = alpha * zdota[k];
      zdota[k] = temp;
      for (i = 1; i <= n; ++i) {
        temp = alpha * z(i, kp) + beta * z(i, k);
        z(i, kp) = alpha * z(i, k) - beta * z(i, kp);
        z(i, k) = temp;
      }
      iact[k] = kk;
      vmultc[k] = vmultc[kp];
      k = kp;
    } while (k < nact);
    iact[k] = isave;
    vmultc[k] = vsave;
  }
  --nact;

  if (mcon > m) goto L320;
  temp = 0.0;
  for (i = 1; i <= n; ++i) temp += sdirn[i] * z(i, nact + 1);
  for (i = 1; i <= n; ++i) sdirn[i] -= temp * z(i, nact + 1);
  goto L340;

L320:
  temp = 1.0 / zdota[nact];
  for (i = 1; i <= n; ++i) sdirn[i] = temp * z(i, nact);

  // Step to the trust-region boundary, or far enough to zero resmax.
L340:
  dd = rho * rho;
  sd = 0.0;
  ss = 0.0;
  for (i = 1; i <= n; ++i) {
    if (std::abs(dx[i]) >= 1.0e-6 * rho) dd -= dx[i] * dx[i];
    sd += dx[i] * sdirn[i];
    ss += sdirn[i] * sdirn[i];
  }
  if (dd <= 0.0) goto L490;
  temp = std::sqrt(ss * dd);
  if (std::abs(sd) >= 1.0e-6 * temp) temp = std::sqrt(ss * dd + sd * sd);
  stpful = dd / (temp + sd);
  step = stpful;
  if (mcon == m) {
    acca = step + 0.1 * resmax;
    accb = step + 0.2 * resmax;
    if (step >= acca || acca >= accb) goto L480;
    step = std::min(step, resmax);
  }

  for (i = 1; i <= n; ++i) dxnew[i] = dx[i] + step * sdirn[i];
  if (mcon == m) {
    resold = resmax;
    resmax = 0.0;
    for (k = 1; k <= nact; ++k) {
      kk = iact[k];
      temp = b[kk];
      for (i = 1; i <= n; ++i) temp -= a(i, kk) * dxnew[i];
      resmax = std::max(resmax, temp);
    }
  }

  // Multipliers that would hold at dxnew, rounding noise forced to zero.
  k = nact;
  for (;;) {
    zdotw = 0.0;
    zdwabs = 0.0;
    for (i = 1; i <= n; ++i) {
      temp = z(i, k) * dxnew[i];
      zdotw += temp;
      zdwabs += std::abs(temp);
    }
    acca = zdwabs + 0.1 * std::abs(zdotw);
    accb = zdwabs + 0.2 * std::abs(zdotw);
    if (zdwabs >= acca || acca >= accb) zdotw = 0.0;
    vmultd[k] = zdotw / zdota[k];
    if (k < 2) break;
    kk = iact[k];
    for (i = 1; i <= n; ++i) dxnew[i] -= vmultd[k] * a(i, kk);
    --k;
  }
  if (mcon > m) vmultd[nact] = std::max(0.0, vmultd[nact]);

  for (i = 1; i <= n; ++i) dxnew[i] = dx[i] + step * sdirn[i];
  if (mcon > nact) {
    kl = nact + 1;
    for (k = kl; k <= mcon; ++k) {
      kk = iact[k];
      sum = resmax - b[kk];
      sumabs = resmax + std::abs(b[kk]);
      for (i = 1; i <= n; ++i) {
        temp = a(i, kk) * dxnew[i];
        sum += temp;
        sumabs += std::abs(temp);
      }
      acca = sumabs + 0.1 * std::abs(sum);
      accb = sumabs + 0.2 * std::abs(sum);
      if (sumabs >= acca || acca >= accb) sum = 0.0;
      vmultd[k] = sum;
    }
  }

  ratio = 1.0;
  icon = 0;
  for (k = 1; k <= mcon; ++k) {
    if (vmultd[k] < 0.0) {
      temp = vmultc[k] / (vmultc[k] - vmultd[k]);
      if (temp < ratio) {
        ratio = temp;
        icon = k;
      }
    }
  }

  temp = 1.0 - ratio;
  for (i = 1; i <= n; ++i) dx[i] = temp * dx[i] + ratio * dxnew[i];
  for (k = 1; k <= mcon; ++k) vmultc[k] = std::max(0.0, temp * vmultc[k] + ratio * vmultd[k]);
  if (mcon == m) resmax = resold + ratio * (resmax - resold);

  if (icon > 0) goto L70;
  if (step == stpful) return;

  // Switch to stage two.
L480:
  mcon = m + 1;
  icon = mcon;
  iact[mcon] = mcon;
  vmultc[mcon] = 0.0;
  goto L60;

L490:
  if (mcon == m) goto L480;
  ifull = 0;
}

}  // namespace detail

inline CobylaResult cobyla_minimize(const Objective& objective, std::span<const Constraint> constraints,
                                    std::span<const double> x0, const CobylaOptions& options = {}) {
  using detail::Mat1;
  using detail::Vec1;
  using std::ptrdiff_t;

  if (x0.empty()) throw Error(ErrorCode::InvalidInput, "cobyla needs at least one variable");
  if (!(options.rho_begin > options.rho_end && options.rho_end > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "cobyla needs rho_begin > rho_end > 0");
  }
  if (options.max_evals == 0) throw Error(ErrorCode::InvalidInput, "cobyla needs max_evals >= 1");
  for (double v : x0) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidInput, "cobyla start point must be finite");
  }

  const auto n = static_cast<ptrdiff_t>(x0.size());
  const auto m = static_cast<ptrdiff_t>(constraints.size());
  const ptrdiff_t np = n + 1, mp = m + 1, mpp = m + 2;
  const auto maxfun = static_cast<std::size_t>(options.max_evals);
  const double rhoend = options.rho_end;

  CobylaResult result;
  Vec1 x(n + 1, 0.0), con(mpp + 1, 0.0), vsig(n + 1, 0.0), veta(n + 1, 0.0), sigbar(n + 1, 0.0),
      dx(n + 1, 0.0), w(n + 1, 0.0);
  Mat1 sim(n, np), simi(n, n), datmat(mpp, np), a(n, mp);
  for (ptrdiff_t i = 1; i <= n; ++i) x[i] = x0[static_cast<std::size_t>(i - 1)];

  bool have_best = false;
  std::vector<double> xv(static_cast<std::size_t>(n));

  // Evaluates at x, fills con(1..m), con(mp) = f, con(mpp) = resmax.
  // Returns false on a non-finite value.
  auto evaluate = [&](double& f, double& resmax) {
    for (ptrdiff_t i = 1; i <= n; ++i) xv[static_cast<std::size_t>(i - 1)] = x[i];
    f = objective(xv);
    bool finite = std::isfinite(f);
    resmax = 0.0;
    for (ptrdiff_t k = 1; k <= m; ++k) {
      con[k] = constraints[static_cast<std::size_t>(k - 1)](xv);
      if (!std::isfinite(con[k])) finite = false;
      resmax = std::max(resmax, -con[k]);
    }
    con[mp] = f;
    con[mpp] = resmax;
    ++result.evaluations;
    if (finite) {
      const bool feasible = resmax <= options.feasibility_tol;
      const bool best_feasible = have_best && result.max_violation <= options.feasibility_tol;
      bool better = false;
      if (!have_best) {
        better = true;
      } else if (feasible) {
        better = !best_feasible || f < result.objective;
      } else if (!best_feasible) {
        better = resmax < result.max_violation || (resmax == result.max_violation && f < result.objective);
      }
      if (better) {
        have_best = true;
        result.x = xv;
        result.objective = f;
        result.max_violation = resmax;
      }
    }
    result.trace.push_back(CobylaEval{result.evaluations, xv, f, resmax, have_best ? result.objective : f});
    return finite;
  };

  const double alpha = 0.25, beta = 2.1, gamma = 0.5, delta = 1.1;
  double rho = options.rho_begin;
  double parmu = 0.0;
  std::size_t nfvals = 0;
  double temp = 1.0 / rho;
  for (ptrdiff_t i = 1; i <= n; ++i) {
    sim(i, np) = x[i];
    for (ptrdiff_t j = 1; j <= n; ++j) simi(i, j) = 0.0;
    sim(i, i) = rho;
    simi(i, i) = temp;
  }
  ptrdiff_t jdrop = np;
  int ibrnch = 0;
  int iflag = 0;
  int ifull = 0;
  ptrdiff_t nbest, l;
  double f = 0.0, resmax = 0.0, phimin, tempa, error, parsig = 0.0, pareta, wsig, weta, cvmaxp, cvmaxm, sum,
         dxsign, resnew, barmu, phi, prerec = 0.0, prerem = 0.0, vmold, vmnew, trured, ratio, edgmax, denom,
         cmin, cmax;

L40:
  if (nfvals >= maxfun && nfvals > 0) {
    result.status = CobylaStatus::MaxEvals;
    goto L600;
  }
  ++nfvals;
  if (!evaluate(f, resmax)) {
    result.status = CobylaStatus::NumericalFailure;
    goto L600;
  }
  if (ibrnch == 1) goto L440;

  for (ptrdiff_t k = 1; k <= mpp; ++k) datmat(k, jdrop) = con[k];
  if (nfvals > static_cast<std::size_t>(np)) goto L130;

  // Build the initial simplex one vertex at a time, keeping the better point
  // in pole position.
  if (jdrop <= n) {
    if (datmat(mp, np) <= f) {
      x[jdrop] = sim(jdrop, np);
    } else {
      sim(jdrop, np) = x[jdrop];
      for (ptrdiff_t k = 1; k <= mpp; ++k) {
        datmat(k, jdrop) = datmat(k, np);
        datmat(k, np) = con[k];
      }
      for (ptrdiff_t k = 1; k <= jdrop; ++k) {
        sim(jdrop, k) = -rho;
        temp = 0.0;
        for (ptrdiff_t i = k; i <= jdrop; ++i) temp -= simi(i, k);
        simi(jdrop, k) = temp;
      }
    }
  }
  if (nfvals <= static_cast<std::size_t>(n)) {
    jdrop = static_cast<ptrdiff_t>(nfvals);
    x[jdrop] += rho;
    goto L40;
  }
L130:
  ibrnch = 1;

L140:
  phimin = datmat(mp, np) + parmu * datmat(mpp, np);
  nbest = np;
  for (ptrdiff_t j = 1; j <= n; ++j) {
    temp = datmat(mp, j) + parmu * datmat(mpp, j);
    if (temp < phimin) {
      nbest = j;
      phimin = temp;
    } else if (temp == phimin && parmu == 0.0) {
      if (datmat(mpp, j) < datmat(mpp, nbest)) nbest = j;
    }
  }

  if (nbest <= n) {
    for (ptrdiff_t i = 1; i <= mpp; ++i) {
      temp = datmat(i, np);
      datmat(i, np) = datmat(i, nbest);
      datmat(i, nbest) = temp;
    }
    for (ptrdiff_t i = 1; i <= n; ++i) {
      temp = sim(i, nbest);
      sim(i, nbest) = 0.0;
      sim(i, np) += temp;
      tempa = 0.0;
      for (ptrdiff_t k = 1; k <= n; ++k) {
        sim(i, k) -= temp;
        tempa -= simi(k, i);
      }
      simi(nbest, i) = tempa;
    }
  }

  error = 0.0;
  for (ptrdiff_t i = 1; i <= n; ++i) {
    for (ptrdiff_t j = 1; j <= n; ++j) {
      temp = (i == j) ? -1.0 : 0.0;
      for (ptrdiff_t k = 1; k <= n; ++k) temp += simi(i, k) * sim(k, j);
      error = std::max(error, std::abs(temp));
    }
  }
  if (error > 0.1) {
    result.status = CobylaStatus::RoundingErrors;
    goto L600;
  }

  // Linear models: constraint gradients in columns 1..m, minus the objective
  // gradient in column mp.
  for (ptrdiff_t k = 1; k <= mp; ++k) {
    con[k] = -datmat(k, np);
    for (ptrdiff_t j = 1; j <= n; ++j) w[j] = datmat(k, j) + con[k];
    for (ptrdiff_t i = 1; i <= n; ++i) {
      temp = 0.0;
      for (ptrdiff_t j = 1; j <= n; ++j) temp += w[j] * simi(j, i);
      if (k == mp) temp = -temp;
      a(i, k) = temp;
    }
  }

  iflag = 1;
  parsig = alpha * rho;
  pareta = beta * rho;
  for (ptrdiff_t j = 1; j <= n; ++j) {
    wsig = 0.0;
    weta = 0.0;
    for (ptrdiff_t i = 1; i <= n; ++i) {
      wsig += simi(j, i) * simi(j, i);
      weta += sim(i, j) * sim(i, j);
    }
    vsig[j] = 1.0 / std::sqrt(wsig);
    veta[j] = std::sqrt(weta);
    if (vsig[j] < parsig || veta[j] > pareta) iflag = 0;
  }

  if (ibrnch == 1 || iflag == 1) goto L370;

  // Geometry step: replace the vertex that spoils the simplex shape.
  jdrop = 0;
  temp = pareta;
  for (ptrdiff_t j = 1; j <= n; ++j) {
    if (veta[j] > temp) {
      jdrop = j;
      temp = veta[j];
    }
  }
  if (jdrop == 0) {
    for (ptrdiff_t j = 1; j <= n; ++j) {
      if (vsig[j] < temp) {
        jdrop = j;
        temp = vsig[j];
      }
    }
  }

  temp = gamma * rho * vsig[jdrop];
  for (ptrdiff_t i = 1; i <= n; ++i) dx[i] = temp * simi(jdrop, i);
  cvmaxp = 0.0;
  cvmaxm = 0.0;
  sum = 0.0;
  for (ptrdiff_t k = 1; k <= mp; ++k) {
    sum = 0.0;
    for (ptrdiff_t i = 1; i <= n; ++i) sum += a(i, k) * dx[i];
    if (k < mp) {
      temp = datmat(k, np);
      cvmaxp = std::max(cvmaxp, -sum - temp);
      cvmaxm = std::max(cvmaxm, sum - temp);
    }
  }
  dxsign = 1.0;
  if (parmu * (cvmaxp - cvmaxm) > sum + sum) dxsign = -1.0;

  temp = 0.0;
  for (ptrdiff_t i = 1; i <= n; ++i) {
    dx[i] *= dxsign;
    sim(i, jdrop) = dx[i];
    temp += simi(jdrop, i) * dx[i];
  }
  for (ptrdiff_t i = 1; i <= n; ++i) simi(jdrop, i) /= temp;
  for (ptrdiff_t j = 1; j <= n; ++j) {
    if (j != jdrop) {
      temp = 0.0;
      for (ptrdiff_t i = 1; i <= n; ++i) temp += simi(j, i) * dx[i];
      for (ptrdiff_t i = 1; i <= n; ++i) simi(j, i) -= temp * simi(jdrop, i);
    }
    x[j] = sim(j, np) + dx[j];
  }
  goto L40;

  // Trust-region step from the pole.
L370:
  ifull = 0;
  detail::trstlp(n, m, a, con, rho, dx, ifull);
  if (ifull == 0) {
    temp = 0.0;
    for (ptrdiff_t i = 1; i <= n; ++i) temp += dx[i] * dx[i];
    if (temp < 0.25 * rho * rho) {
      ibrnch = 1;
      goto L550;
    }
  }

  resnew = 0.0;
  con[mp] = 0.0;
  sum = 0.0;
  for (ptrdiff_t k = 1; k <= mp; ++k) {
    sum = con[k];
    for (ptrdiff_t i = 1; i <= n; ++i) sum -= a(i, k) * dx[i];
    if (k < mp) resnew = std::max(resnew, sum);
  }

  barmu = 0.0;
  prerec = datmat(mpp, np) - resnew;
  if (prerec > 0.0) barmu = sum / prerec;
  if (parmu < 1.5 * barmu) {
    parmu = 2.0 * barmu;
    phi = datmat(mp, np) + parmu * datmat(mpp, np);
    for (ptrdiff_t j = 1; j <= n; ++j) {
      temp = datmat(mp, j) + parmu * datmat(mpp, j);
      if (temp < phi) goto L140;
      if (temp == phi && parmu == 0.0) {
        if (datmat(mpp, j) < datmat(mpp, np)) goto L140;
      }
    }
  }
  prerem = parmu * prerec - sum;

  for (ptrdiff_t i = 1; i <= n; ++i) x[i] = sim(i, np) + dx[i];
  ibrnch = 1;
  goto L40;

L440:
  vmold = datmat(mp, np) + parmu * datmat(mpp, np);
  vmnew = f + parmu * resmax;
  trured = vmold - vmnew;
  if (parmu == 0.0 && f == datmat(mp, np)) {
    prerem = prerec;
    trured = datmat(mpp, np) - resmax;
  }

  // Pick the vertex to replace by the trial point; mandatory when the merit
  // function went down.
  ratio = trured <= 0.0 ? 1.0 : 0.0;
  jdrop = 0;
  for (ptrdiff_t j = 1; j <= n; ++j) {
    temp = 0.0;
    for (ptrdiff_t i = 1; i <= n; ++i) temp += simi(j, i) * dx[i];
    temp = std::abs(temp);
    if (temp > ratio) {
      jdrop = j;
      ratio = temp;
    }
    sigbar[j] = temp * vsig[j];
  }

  edgmax = delta * rho;
  l = 0;
  for (ptrdiff_t j = 1; j <= n; ++j) {
    if (sigbar[j] >= parsig || sigbar[j] >= vsig[j]) {
      temp = veta[j];
      if (trured > 0.0) {
        temp = 0.0;
        for (ptrdiff_t i = 1; i <= n; ++i) temp += (dx[i] - sim(i, j)) * (dx[i] - sim(i, j));
        temp = std::sqrt(temp);
      }
      if (temp > edgmax) {
        l = j;
        edgmax = temp;
      }
    }
  }
  if (l > 0) jdrop = l;
  if (jdrop == 0) goto L550;

  temp = 0.0;
  for (ptrdiff_t i = 1; i <= n; ++i) {
    sim(i, jdrop) = dx[i];
    temp += simi(jdrop, i) * dx[i];
  }
  for (ptrdiff_t i = 1; i <= n; ++i) simi(jdrop, i) /= temp;
  for (ptrdiff_t j = 1; j <= n; ++j) {
    if (j != jdrop) {
      temp = 0.0;
      for (ptrdiff_t i = 1; i <= n; ++i) temp += simi(j, i) * dx[i];
      for (ptrdiff_t i = 1; i <= n; ++i) simi(j, i) -= temp * simi(jdrop, i);
    }
  }
  for (ptrdiff_t k = 1; k <= mpp; ++k) datmat(k, jdrop) = con[k];

  if (trured > 0.0 && trured >= 0.1 * prerem) goto L140;
L550:
  if (iflag == 0) {
    ibrnch = 0;
    goto L140;
  }

  // Shrink rho and rescale the penalty parameter.
  if (rho > rhoend) {
    rho *= 0.5;
    if (rho <= 1.5 * rhoend) rho = rhoend;
    if (parmu > 0.0) {
      denom = 0.0;
      cmin = cmax = 0.0;
      for (ptrdiff_t k = 1; k <= mp; ++k) {
        cmin = datmat(k, np);
        cmax = cmin;
        for (ptrdiff_t i = 1; i <= n; ++i) {
          cmin = std::min(cmin, datmat(k, i));
          cmax = std::max(cmax, datmat(k, i));
        }
        if (k <= m && cmin < 0.5 * cmax) {
          temp = std::max(cmax, 0.0) - cmin;
          denom = denom <= 0.0 ? temp : std::min(denom, temp);
        }
      }
      if (denom == 0.0) {
        parmu = 0.0;
      } else if (cmax - cmin < parmu * denom) {
        parmu = (cmax - cmin) / denom;
      }
    }
    goto L140;
  }
  result.status = CobylaStatus::Converged;
  result.converged = true;

L600:
  if (!have_best) {
    // Only reachable when the very first evaluation was non-finite.
    result.x.assign(x0.begin(), x0.end());
    result.objective = std::numeric_limits<double>::quiet_NaN();
    result.max_violation = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

inline CobylaResult cobyla_minimize(const Objective& objective, const std::vector<Constraint>& constraints,
                                    const std::vector<double>& x0, const CobylaOptions& options = {}) {
  return cobyla_minimize(objective, std::span<const Constraint>(constraints), std::span<const double>(x0),
                         options);
}

}  // namespace bold
