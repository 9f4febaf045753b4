"""Parameter selection and the stage loop with its convergence diagnostics.

The schedule follows the induction ``delta_k = delta_0 K^{-a k}`` and
``mu_k = mu_0 K^{k n_*}``.  The loop stops when the next stage would need
more grid samples than the budget allows; the decay log is then fitted to
check the geometric rates and the interpolated ``C^{1,alpha}`` increments.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .construction import (
    DEFAULT_MAX_RESOLUTION,
    DEFAULT_MEMORY_LIMIT,
    ImmersionState,
    c2_norm_estimate,
    metric_defect,
    metric_on_grid,
    required_spacing,
    run_stage,
)
from .errors import DivergenceError, InsufficientDataError, ParameterError, ResolutionError, StageAbort
from .fitting import semilog_fit
from .frame import build_frame, n_star as _n_star

log = logging.getLogger(__name__)

DEFECT_FLOOR = 1e-12
_REL_TOL = 1e-12  # slack for powers that are exact in real arithmetic (64^(1/6) = 2)


def alpha_ceiling(n, beta):
    """``min(1/(1+2n_*), beta/2)``."""
    ns = _n_star(n)
    return min(1.0 / (1 + 2 * ns), beta / 2.0)


def a_cap(n, beta):
    """``min(1/2, beta n_* / (2 - beta))``."""
    ns = _n_star(n)
    return 0.5 if beta >= 2 else min(0.5, beta * ns / (2.0 - beta))


@dataclass
class StageLog:
    stage: int
    delta_sched: float
    mu_sched: float
    defect_sup: float
    c1_increment: float
    c2_estimate: float
    lambda_max: float
    grid_res: int
    wallclock_ms: float
    c0_increment: float = float("nan")
    c2_increment: float = float("nan")
    ell: float = float("nan")
    C: float = float("nan")
    amplitude_ratio: float = float("nan")


CSV_COLUMNS = ("stage", "delta_sched", "mu_sched", "defect_sup", "c1_increment",
               "c2_estimate", "lambda_max", "grid_res", "wallclock_ms")


@dataclass
class IterationSchedule:
    n: int
    m: int
    n_star: int
    beta: float
    alpha: float
    a: float
    K: float
    mu0: float
    delta0: float
    max_stages: int
    stage_constant: float = 1.0
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    log: list = field(default_factory=list)

    def delta(self, k):
        return self.delta0 * self.K ** (-self.a * k)

    def mu(self, k):
        return self.mu0 * self.K ** (k * self.n_star)

    def validate(self):
        """Every admissibility bound as ``(name, ok, detail)``."""
        out = []
        cap = a_cap(self.n, self.beta)
        out.append(("a < min(1/2, beta n*/(2-beta))", self.a < cap, f"a={self.a:.4g}, cap={cap:.4g}"))
        link = self.a / (self.a + self.n_star)
        out.append(("alpha < a/(a+n*)", self.alpha < link, f"alpha={self.alpha:.4g}, a/(a+n*)={link:.4g}"))
        ceil_ = alpha_ceiling(self.n, self.beta)
        out.append(("alpha < min(1/(1+2n*), beta/2)", 0 < self.alpha < ceil_,
                    f"alpha={self.alpha:.4g}, ceiling={ceil_:.4g}"))
        return out


def choose_parameters(alpha, beta, n, defect0, u2norm, m=None, stage_constant=1.0,
                      max_stages=5, K=None, mu0=None, delta0=None, ell_max=0.25):
    """Schedule for target exponent ``alpha`` and metric regularity ``beta``.

    ``a`` is placed midway between ``alpha n_*/(1-alpha)`` and its cap; ``K``
    is the smallest power of two with ``2C <= K^{1-2a}`` (``C`` is
    ``stage_constant``), enlarged to absorb the constant of the ``mu``
    recursion; ``mu_0`` is the largest of ``||u||_2``, the value closing the
    second induction inequality at ``k = 0`` and ``delta_0 / ell_max``.
    Explicit ``K``, ``mu0`` or ``delta0`` override the automatic choices.
    """
    ns = _n_star(n)
    m = n + 1 if m is None else m
    ceil_ = alpha_ceiling(n, beta)
    if not 0 < alpha < ceil_:
        bound = "1/(1+2n*)" if 1.0 / (1 + 2 * ns) <= beta / 2 else "beta/2"
        raise ParameterError(
            f"alpha = {alpha} violates alpha < min(1/(1+2n*), beta/2) = {ceil_:.6g} (binding: {bound})"
        )
    cap = a_cap(n, beta)
    a_low = alpha * ns / (1 - alpha)
    a = 0.5 * (a_low + cap)
    C = float(stage_constant)
    notes = []
    if K is None:
        K = 2.0
        while 2 * C > K ** (1 - 2 * a) * (1 + _REL_TOL):
            K *= 2.0
        absorbed = max(C ** (1.0 / ns) * K, K)
        if absorbed > K:
            K_new = 2.0 ** math.ceil(math.log2(absorbed))
            notes.append(f"K substituted {K:g} -> {K_new:g} to absorb the mu-recursion constant")
            K = K_new
    else:
        K = float(K)
        notes.append(f"K fixed to {K:g} by the caller")
    if delta0 is None:
        delta0 = math.sqrt(defect0)
    mu_ind = (2 * C * K ** (2 * a) / delta0 ** (2 - beta)) ** (1.0 / beta) if delta0 > 0 else 0.0
    mu_floor = delta0 / ell_max
    if mu0 is None:
        mu0 = max(u2norm, mu_ind, mu_floor)
    else:
        notes.append(f"mu0 fixed to {mu0:g} by the caller")
    checks = {
        "K_rule": (2 * C <= K ** (1 - 2 * a) * (1 + _REL_TOL), f"2C={2 * C:.4g}, K^(1-2a)={K ** (1 - 2 * a):.4g}"),
        "mu_rule": (2 * C <= mu0**beta * delta0 ** (2 - beta) * K ** (-2 * a),
                    f"mu0={mu0:.4g}, needed {mu_ind:.4g}"),
        "mu_geq_u2": (mu0 >= u2norm, f"mu0={mu0:.4g}, ||u||_2={u2norm:.4g}"),
        "geometric_half": (K ** (-a) <= 0.5, f"K^-a={K ** (-a):.4g}"),
        "mu_exponent_nonneg": (beta * (a + ns) - 2 * a >= 0,
                               f"beta(a+n*)-2a={beta * (a + ns) - 2 * a:.4g}"),
    }
    sched = IterationSchedule(n, m, ns, beta, alpha, a, K, mu0, delta0, max_stages, C,
                              checks, notes)
    for name, ok, detail in sched.validate():
        checks[name] = (ok, detail)
    return sched


@dataclass
class IterationDiagnostics:
    schedule: IterationSchedule
    log: list
    stop_reason: str
    initial_defect: float
    final_defect: float
    warnings: list = field(default_factory=list)

    @property
    def stages(self):
        return len(self.log)

    def delta_fit(self):
        """Fitted slope of ``log delta_k`` (measured) against ``k``, ``k = 0..S``."""
        d = [math.sqrt(self.initial_defect)] + [math.sqrt(r.defect_sup) for r in self.log]
        return semilog_fit(np.arange(len(d)), d, min_points=3)

    def c1_total(self):
        return float(sum(r.c1_increment for r in self.log))

    def fitted_c1_constant(self):
        """``C`` in ``||u_1 - u_0||_1 <= C delta_0`` from the first stage."""
        if not self.log:
            raise InsufficientDataError("no completed stage")
        return self.log[0].c1_increment / self.schedule.delta0

    def rows(self):
        return [asdict(r) for r in self.log]


def frame_base_point(g, grid):
    """Constant metric at the centre of the target's range (the frame's ``g0``)."""
    vals = metric_on_grid(g, grid)
    return np.mean(vals.reshape(-1, grid.ndim, grid.ndim), axis=0)


def run_iteration(initial: ImmersionState, g, schedule: IterationSchedule, table, frame=None,
                  max_resolution=DEFAULT_MAX_RESOLUTION, memory_limit=DEFAULT_MEMORY_LIMIT,
                  gamma=None, divergence_factor=2.0, seed=0, on_stage=None):
    """Run stages until ``max_stages`` or the resolution budget is exhausted.

    Returns ``(final_state, diagnostics)``.  A stage abort or divergence is
    re-raised with the diagnostics so far attached as ``exc.diagnostics``.
    """
    if frame is None:
        frame = build_frame(frame_base_point(g, initial.grid), seed=seed)
    d0 = metric_defect(initial, g)
    if d0 > schedule.delta0**2 * (1 + 1e-12):
        raise ParameterError(f"initial defect {d0:.4g} exceeds delta_0^2 = {schedule.delta0**2:.4g}")
    spread = float(np.max(np.linalg.norm(metric_on_grid(g, initial.grid) - frame.g0, axis=(-2, -1))))
    if spread > 0.5 * frame.r:
        raise ParameterError(f"target varies by {spread:.3g} around g0, beyond r = {0.5 * frame.r:.3g}")
    diag = IterationDiagnostics(schedule, [], "max_stages", d0, d0)
    state = initial
    if d0 <= DEFECT_FLOOR:
        diag.stop_reason = "defect at floor"
        return state, diag
    for k in range(schedule.max_stages):
        delta, mu = schedule.delta(k), schedule.mu(k)
        ell = delta / mu
        _, lam_max = required_spacing(schedule.K, ell, schedule.n_star)
        try:
            v, rep = run_stage(state, g, schedule.K, delta, mu, frame, table, gamma=gamma,
                               max_resolution=max_resolution, memory_limit=memory_limit,
                               stage_index=k)
        except ResolutionError as exc:
            diag.stop_reason = f"resolution budget exhausted before stage {k}: {exc}"
            log.info(diag.stop_reason)
            break
        except StageAbort as exc:
            diag.stop_reason = f"stage {k} aborted: {exc}"
            exc.diagnostics = diag
            raise
        u_prev_c2 = c2_norm_estimate(state)
        row = StageLog(
            stage=k,
            delta_sched=delta,
            mu_sched=mu,
            defect_sup=rep.defect_sup,
            c1_increment=rep.c1_increment,
            c2_estimate=rep.c2_estimate,
            lambda_max=lam_max,
            grid_res=int(max(rep.grid_counts)),
            wallclock_ms=rep.wallclock_ms,
            c0_increment=rep.c0_increment,
            c2_increment=rep.c2_estimate + u_prev_c2,
            ell=ell,
            C=rep.C,
            amplitude_ratio=rep.amplitude_ratio,
        )
        diag.log.append(row)
        schedule.log.append(row)
        diag.final_defect = rep.defect_sup
        state = v
        if on_stage is not None:
            on_stage(row, v)
        target = schedule.delta(k + 1) ** 2
        if rep.defect_sup > divergence_factor * target:
            exc = DivergenceError(
                f"stage {k}: defect {rep.defect_sup:.4g} exceeds the schedule "
                f"{target:.4g} by more than {divergence_factor:g}x"
            )
            diag.stop_reason = f"diverged at stage {k}"
            exc.diagnostics = diag
            exc.state = state
            raise exc
        if rep.defect_sup > target:
            diag.warnings.append(f"stage {k}: defect {rep.defect_sup:.4g} above schedule {target:.4g}")
    return state, diag


@dataclass
class CauchyCheck:
    ratio: float
    predicted: float
    passed: bool
    converges: bool
    degenerate: bool
    monotone: bool
    increments: tuple
    notes: list


def c1alpha_cauchy_check(rows, alpha, K, a, n_star, tolerance=0.2, floor=1e-12) -> CauchyCheck:
    """Geometric decay of ``||u_{k+1}-u_k||_1^{1-alpha} ||u_{k+1}-u_k||_2^alpha``.

    ``rows`` are :class:`StageLog` entries (or dicts) with ``c1_increment``
    and ``c2_increment``.  The predicted ratio is
    ``K^{-[(1-alpha) a - alpha n_*]}``; the fitted ratio passes if it is at
    most ``(1 + tolerance)`` times the prediction and below one.
    """
    get = (lambda r, k: r[k]) if rows and isinstance(rows[0], dict) else getattr
    c1 = np.array([get(r, "c1_increment") for r in rows], dtype=float)
    c2 = np.array([get(r, "c2_increment") for r in rows], dtype=float)
    predicted = K ** (-((1 - alpha) * a - alpha * n_star))
    converges = predicted < 1.0
    notes = []
    if not converges:
        notes.append("predicted ratio >= 1: exponent outside the convergent range")
    if len(rows) < 3:
        raise InsufficientDataError("the Cauchy check needs at least 3 stages")
    inc = c1 ** (1 - alpha) * c2**alpha
    if np.all(inc <= floor):
        notes.append("increments at numerical floor; ratio fit skipped")
        return CauchyCheck(float("nan"), predicted, False, converges, True, True, tuple(inc), notes)
    monotone = bool(np.all(np.diff(inc) < 0))
    if not monotone:
        notes.append("increments are not monotone; fit quality is poor")
    fit = semilog_fit(np.arange(inc.size), np.maximum(inc, floor), min_points=3)
    ratio = float(np.exp(fit.slope))
    passed = converges and ratio < 1.0 and ratio <= predicted * (1 + tolerance)
    return CauchyCheck(ratio, predicted, passed, converges, False, monotone, tuple(inc), notes)
