"""Gaussian linear mixed models for longitudinal z-scores.

Two model families, each with an optional baseline-age interaction term:

* random slopes ("RS"/"cRS"): per-child random intercept and slope around
  a population line;
* broken stick ("BrokenStick"/"cBrokenStick"): per-child random
  coefficients on a piecewise-linear spline basis, giving a continuous
  piecewise-linear trajectory per child.

Estimation is restricted maximum likelihood (ML optional): the deviance
with fixed effects and residual variance profiled out is minimized over
the lower-triangular factor of the random-effect covariance relative to
the residual variance, using gradient-free machinery only (quasi-Newton
on finite differences plus a direction-set guard; no analytic
derivatives). Children are independent, so the objective is evaluated
from per-child cross-products via the kernels backend; evaluation cost
does not grow with the number of rows once those are accumulated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .data import GrowthDataset
from .errors import DataError, SingularDesignError
from .splines import KnotVector, design_matrix

RS = "RS"
CRS = "cRS"
BROKEN_STICK = "BrokenStick"
CBROKEN_STICK = "cBrokenStick"
MODEL_KINDS = (RS, CRS, BROKEN_STICK, CBROKEN_STICK)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelSpec:
    """Which mixed model to fit.

    `knots` is required for the broken-stick kinds and must be absent for
    the random-slopes kinds. The conditional kinds (cRS, cBrokenStick)
    add a fixed age-by-baseline interaction column to the design; the
    baseline main effect is deliberately excluded since per-child random
    intercepts already absorb baseline variation.
    """

    kind: str
    knots: KnotVector | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise DataError(f"unknown model kind {self.kind!r}")
        if self.is_broken_stick and self.knots is None:
            raise DataError(f"{self.kind} requires a knot vector")
        if not self.is_broken_stick and self.knots is not None:
            raise DataError(f"{self.kind} does not take knots")

    @property
    def is_broken_stick(self) -> bool:
        return self.kind in (BROKEN_STICK, CBROKEN_STICK)

    @property
    def conditional(self) -> bool:
        return self.kind in (CRS, CBROKEN_STICK)

    @property
    def n_random(self) -> int:
        return self.knots.n_basis if self.is_broken_stick else 2


@dataclass(frozen=True)
class VarianceParams:
    """Variance parameters: relative factor and residual variance.

    `theta` is the lower-triangular factor of the random-effect
    covariance divided by the residual variance: Sigma = sigma2 *
    theta theta'.
    """

    theta: np.ndarray
    sigma2: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
            raise DataError("theta must be square")
        if np.any(np.triu(theta, 1) != 0):
            raise DataError("theta must be lower triangular")
        if np.any(np.diag(theta) < 0):
            raise DataError("theta diagonal must be non-negative")
        if not (self.sigma2 > 0):
            raise DataError("sigma2 must be positive")
        object.__setattr__(self, "theta", theta)


def theta_to_flat(theta: np.ndarray) -> np.ndarray:
    q = theta.shape[0]
    return theta[np.tril_indices(q)]


def flat_to_theta(flat: np.ndarray, q: int) -> np.ndarray:
    theta = np.zeros((q, q))
    theta[np.tril_indices(q)] = flat
    return theta


@dataclass(frozen=True)
class DesignData:
    """Per-child cross-products for one model/dataset combination."""

    child_ids: tuple[str, ...]
    ztz: np.ndarray  # (m, q, q)
    ztx: np.ndarray  # (m, q, p)
    zty: np.ndarray  # (m, q)
    xtx: np.ndarray  # (p, p)
    xty: np.ndarray  # (p,)
    yty: float
    n_obs: int
    q: int
    p: int
    baselines: dict | None
    excluded_children: tuple[str, ...]
    interaction_dropped: bool

    @property
    def n_children(self) -> int:
        return len(self.child_ids)


@dataclass(frozen=True)
class MixedModelFit:
    """A fitted mixed model.

    `beta` holds the fixed effects (shared columns first, interaction
    last for conditional kinds). `blups` maps each fitted child to its
    coefficient vector: fixed means plus the predicted random deviation,
    i.e. the child-specific intercept/slope (RS kinds) or the
    child-specific values at the knots (broken-stick kinds).
    """

    spec: ModelSpec
    beta: np.ndarray
    Sigma: np.ndarray
    sigma2: float
    theta: np.ndarray
    blups: dict
    reml_deviance: float
    converged: bool
    reml: bool
    singular: bool
    n_children: int
    n_obs: int
    n_evals: int
    baselines: dict | None = None
    excluded_children: tuple[str, ...] = ()
    interaction_dropped: bool = field(default=False, repr=False)

    @property
    def mean_coefficients(self) -> np.ndarray:
        """Fixed effects matching the random-effect columns."""
        return self.beta[: self.spec.n_random]

    def ranef(self, child_id: str) -> np.ndarray:
        """Random-effect deviation of one child from the fixed effects."""
        return self.blups[child_id] - self.mean_coefficients

    @property
    def interaction_coefficient(self) -> float:
        if not self.spec.conditional:
            raise DataError(f"{self.spec.kind} has no interaction coefficient")
        return float(self.beta[-1])

    def to_summary_dict(self) -> dict:
        return {
            "kind": self.spec.kind,
            "reml": self.reml,
            "beta": self.beta.tolist(),
            "Sigma": self.Sigma.tolist(),
            "sigma2": self.sigma2,
            "reml_deviance": self.reml_deviance,
            "converged": self.converged,
            "singular": self.singular,
            "n_children": self.n_children,
            "n_obs": self.n_obs,
            "blups": {cid: vec.tolist() for cid, vec in self.blups.items()},
        }

    def to_summary_json(self) -> str:
        return json.dumps(self.to_summary_dict(), indent=2)


def _child_design(spec: ModelSpec, ages: np.ndarray, baseline_z: float | None):
    """Shared (random-effect) columns and full fixed design for one child."""
    if spec.is_broken_stick:
        z = design_matrix(ages, spec.knots)
    else:
        z = np.column_stack([np.ones(ages.size), ages])
    if spec.conditional:
        x = np.column_stack([z, ages * baseline_z])
    else:
        x = z
    return z, x


def assemble_design(
    dataset: GrowthDataset, spec: ModelSpec, drop_baseline_rows: bool = False
) -> DesignData:
    """Accumulate per-child cross-products for the requested model.

    Conditional kinds take each child's first in-window observation as the
    baseline predictor; by default that observation also stays in the
    response vector (`drop_baseline_rows=True` removes it). Children with
    fewer than two observations cannot anchor a baseline plus a response
    and are excluded from conditional fits.
    """
    q = spec.n_random
    p = q + (1 if spec.conditional else 0)

    child_ids = []
    excluded = []
    baselines = {} if spec.conditional else None
    blocks = []
    for child in dataset.children:
        meas = child.measurements
        baseline_z = None
        if spec.conditional:
            if len(meas) < 2:
                excluded.append(child.child_id)
                continue
            baseline_z = meas[0].zscore
            baselines[child.child_id] = baseline_z
            if drop_baseline_rows:
                meas = meas[1:]
        ages = np.array([m.age for m in meas])
        z_obs = np.array([m.zscore for m in meas])
        z, x = _child_design(spec, ages, baseline_z)
        blocks.append((z, x, z_obs))
        child_ids.append(child.child_id)

    if len(child_ids) < 2:
        raise DataError(f"need at least 2 children with usable data, got {len(child_ids)}")

    m = len(blocks)
    ztz = np.empty((m, q, q))
    ztx_full = np.empty((m, q, p))
    zty = np.empty((m, q))
    xtx = np.zeros((p, p))
    xty = np.zeros(p)
    yty = 0.0
    n_obs = 0
    x_rows = []
    for i, (z, x, y) in enumerate(blocks):
        ztz[i] = z.T @ z
        ztx_full[i] = z.T @ x
        zty[i] = z.T @ y
        xtx += x.T @ x
        xty += x.T @ y
        yty += float(y @ y)
        n_obs += y.size
        x_rows.append(x)

    if n_obs <= p:
        raise DataError(f"{n_obs} observations cannot identify {p} fixed effects")

    # Rank handling: a deficient shared design (e.g. every child measured
    # at a single age) is unrecoverable; a collinear interaction column
    # (e.g. all baselines zero) is dropped with coefficient pinned at 0.
    x_all = np.vstack(x_rows)
    shared_rank = np.linalg.matrix_rank(x_all[:, :q])
    if shared_rank < q:
        raise SingularDesignError(
            f"random-effect design has rank {shared_rank} < {q}"
        )
    interaction_dropped = False
    if spec.conditional and np.linalg.matrix_rank(x_all) < p:
        interaction_dropped = True
        p -= 1
        ztx_full = ztx_full[:, :, :p]
        xtx = xtx[:p, :p]
        xty = xty[:p]
        if np.linalg.matrix_rank(x_all[:, :p]) < p:
            raise SingularDesignError("fixed-effect design is rank deficient")

    return DesignData(
        child_ids=tuple(child_ids),
        ztz=np.ascontiguousarray(ztz),
        ztx=np.ascontiguousarray(ztx_full),
        zty=np.ascontiguousarray(zty),
        xtx=xtx,
        xty=xty,
        yty=yty,
        n_obs=n_obs,
        q=q,
        p=p,
        baselines=baselines,
        excluded_children=tuple(excluded),
        interaction_dropped=interaction_dropped,
    )


def _absorb(theta: np.ndarray, dd: DesignData):
    """Profile the random effects out at one theta.

    Returns (logdet, rxtx, rxty, rss0) or None when the system is
    numerically singular.
    """
    theta = np.ascontiguousarray(theta, dtype=float)
    logdet, s = kernels.pls_components(theta, dd.ztz, dd.ztx, dd.zty)
    if not np.isfinite(logdet):
        return None
    p = dd.p
    rxtx = dd.xtx - s[:p, :p]
    rxty = dd.xty - s[:p, p]
    rss0 = dd.yty - s[p, p]
    return logdet, rxtx, rxty, rss0


def _profile_beta(rxtx: np.ndarray, rxty: np.ndarray, rss0: float):
    """GLS fixed effects and penalized residual sum of squares.

    Returns (beta, r2, logdet_rx) or None when the absorbed normal
    equations are not positive definite.
    """
    try:
        chol = np.linalg.cholesky(rxtx)
    except np.linalg.LinAlgError:
        return None
    diag = np.diag(chol)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        return None
    half = np.linalg.solve(chol, rxty)
    beta = np.linalg.solve(chol.T, half)
    r2 = rss0 - float(half @ half)
    logdet_rx = 2.0 * float(np.sum(np.log(diag)))
    return beta, r2, logdet_rx


def profiled_deviance(theta: np.ndarray, dd: DesignData, reml: bool = True) -> float:
    """-2 log-likelihood with fixed effects and residual variance profiled out.

    Returns +inf for parameter values where the system is singular, which
    steers the derivative-free optimizer back into the feasible region.
    """
    absorbed = _absorb(theta, dd)
    if absorbed is None:
        return math.inf
    logdet, rxtx, rxty, rss0 = absorbed
    profiled = _profile_beta(rxtx, rxty, rss0)
    if profiled is None:
        return math.inf
    _, r2, logdet_rx = profiled
    if not (r2 > 0):
        return math.inf
    n, p = dd.n_obs, dd.p
    if reml:
        return logdet + logdet_rx + (n - p) * (1.0 + LOG_2PI + math.log(r2 / (n - p)))
    return logdet + n * (1.0 + LOG_2PI + math.log(r2 / n))


def profiled_estimates(theta: np.ndarray, dd: DesignData, reml: bool = True):
    """Fixed effects, residual variance and deviance at a fixed theta.

    Returns (beta, sigma2, deviance). The fixed effects are the GLS
    solution under the marginal covariance implied by theta.
    """
    absorbed = _absorb(theta, dd)
    if absorbed is None:
        raise SingularDesignError("marginal covariance is numerically singular")
    logdet, rxtx, rxty, rss0 = absorbed
    profiled = _profile_beta(rxtx, rxty, rss0)
    if profiled is None:
        raise SingularDesignError("fixed-effect system is numerically singular")
    beta, r2, logdet_rx = profiled
    if not (r2 > 0):
        raise SingularDesignError("non-positive residual sum of squares")
    n, p = dd.n_obs, dd.p
    if reml:
        sigma2 = r2 / (n - p)
        dev = logdet + logdet_rx + (n - p) * (1.0 + LOG_2PI + math.log(sigma2))
    else:
        sigma2 = r2 / n
        dev = logdet + n * (1.0 + LOG_2PI + math.log(sigma2))
    return beta, sigma2, dev


def reml_deviance(
    dataset: GrowthDataset,
    spec: ModelSpec,
    params: VarianceParams,
    drop_baseline_rows: bool = False,
) -> float:
    """-2 restricted log-likelihood at the given variance parameters.

    Fixed effects are profiled out by generalized least squares; the
    residual variance is taken from `params` (so the value is minimized
    over sigma2 exactly at the profiled estimate). Returns +inf when the
    implied marginal covariance is numerically singular.
    """
    dd = assemble_design(dataset, spec, drop_baseline_rows)
    if params.theta.shape[0] != dd.q:
        raise DataError(f"theta must be {dd.q}x{dd.q} for kind {spec.kind}")
    absorbed = _absorb(np.asarray(params.theta, dtype=float), dd)
    if absorbed is None:
        return math.inf
    logdet, rxtx, rxty, rss0 = absorbed
    profiled = _profile_beta(rxtx, rxty, rss0)
    if profiled is None:
        return math.inf
    _, r2, logdet_rx = profiled
    if not (r2 >= 0):
        return math.inf
    n, p = dd.n_obs, dd.p
    s2 = params.sigma2
    return logdet + logdet_rx + (n - p) * (LOG_2PI + math.log(s2)) + r2 / s2


def _child_lines(dataset: GrowthDataset):
    """Per-child OLS lines (intercept, slope) and the pooled residual variance."""
    lines = []
    ss_res = 0.0
    df = 0
    for child in dataset.children:
        ages = np.array([m.age for m in child.measurements])
        z = np.array([m.zscore for m in child.measurements])
        if ages.size < 2 or np.ptp(ages) == 0:
            continue
        t_c = ages - ages.mean()
        slope = float(t_c @ (z - z.mean()) / (t_c @ t_c))
        intercept = float(z.mean() - slope * ages.mean())
        lines.append((intercept, slope))
        if ages.size >= 3:
            resid = z - intercept - slope * ages
            ss_res += float(resid @ resid)
            df += ages.size - 2
    var_within = ss_res / df if df >= 1 else None
    return lines, var_within


def _start_scale(dataset: GrowthDataset) -> float:
    """Sqrt of between- over within-child variance of per-child OLS slopes."""
    lines, var_within = _child_lines(dataset)
    slopes = [b for _, b in lines]
    if len(slopes) < 2 or var_within is None or var_within <= 0:
        return 1.0
    var_between = float(np.var(slopes, ddof=1))
    if var_between <= 0:
        return 1.0
    return float(np.clip(math.sqrt(var_between / var_within), 1e-2, 1e2))


def _moment_start(dataset: GrowthDataset, spec: ModelSpec) -> np.ndarray | None:
    """Moment-based starting factor.

    Evaluates each child's OLS line as a coefficient vector in the model's
    random-effect basis (the pair itself for random slopes, the line's
    values at the breakpoints for broken sticks), takes the between-child
    covariance relative to the pooled residual variance, and clips the
    eigenvalues: floored off the zero-variance boundary (exactly on it
    the deviance is flat to first order in the boundary coordinate, which
    can trap the optimizer at a worse stationary point), and capped
    because few-observation children make the raw estimate explode.
    """
    q = spec.n_random
    lines, var_within = _child_lines(dataset)
    if len(lines) < 2 or var_within is None or var_within <= 0:
        return None
    coefs = np.array(lines)
    if spec.is_broken_stick:
        bp = np.array(spec.knots.breakpoints)
        coefs = coefs[:, [0]] + coefs[:, [1]] * bp
    rel = np.cov(coefs, rowvar=False, ddof=1) / var_within
    w, v = np.linalg.eigh(rel)
    w = np.clip(w, max(1e-2 * float(w.max()), 1e-4), 25.0)
    rel = (v * w) @ v.T
    return np.linalg.cholesky(rel)


def _start_candidates(dataset: GrowthDataset, spec: ModelSpec) -> list[np.ndarray]:
    """Deterministic starting factors to probe.

    The moment start's noise shrinks like 1/sqrt(children), so on
    sizable cohorts it reliably identifies the basin and is used alone.
    Small cohorts get two extra probes: the sign-flipped moment start
    (the opposite correlation basin, which noisy moment estimates can
    mistakenly rule out) and a neutral scaled identity.
    """
    q = spec.n_random
    candidates = []
    moment = _moment_start(dataset, spec)
    if moment is not None:
        candidates.append(moment)
    if moment is None or len(dataset) < 100:
        if moment is not None:
            off = np.tril(moment, -1)
            if np.max(np.abs(off)) > 1e-8:
                candidates.append(moment - 2.0 * off)
        scale = float(np.clip(_start_scale(dataset), 0.1, 10.0))
        candidates.append(np.eye(q) * scale)
    return candidates


def _theta_bounds(q: int) -> list[tuple[float | None, float | None]]:
    bounds = []
    for i, j in zip(*np.tril_indices(q)):
        bounds.append((0.0, None) if i == j else (None, None))
    return bounds


def _lift_collapsed(flat, q):
    """Move collapsed diagonal entries off the zero bound.

    Exactly on the bound the deviance is flat to first order in that
    coordinate, so a collapsed diagonal can be a spurious stationary
    point; restarting slightly inside distinguishes a genuine boundary
    optimum from a trap. Returns None when nothing is collapsed.
    """
    theta = flat_to_theta(flat, q)
    diag = np.diag(theta)
    collapsed = diag < 1e-4
    if not np.any(collapsed):
        return None
    lifted = theta.copy()
    bump = max(0.1 * float(diag.max()), 0.1)
    for k in np.flatnonzero(collapsed):
        lifted[k, k] = bump
    return theta_to_flat(lifted)


def _minimize_deviance(objective, starts, q, rel_tol, max_evals):
    """Bounded minimization without analytic gradients.

    Quasi-Newton descents with forward differences are run from every
    starting candidate (the profiled deviance is smooth and finite
    everywhere inside the bounds, but small cohorts can have competing
    correlation-sign basins), plus a restart off any collapsed diagonal.
    A centered-difference pass then pins the winner's parameters to
    ~1e-9 (prediction identities downstream rely on this), and a short
    direction-set pass guards against the rare quasi-Newton stall,
    normally exiting without finding anything.
    """
    bounds = _theta_bounds(q)
    n_evals = 0

    def counted(x):
        nonlocal n_evals
        n_evals += 1
        return objective(x)

    def descend(start, budget):
        return minimize(
            counted,
            start,
            method="L-BFGS-B",
            jac="2-point",
            bounds=bounds,
            options={"maxfun": budget, "ftol": rel_tol * 1e-4, "gtol": 1e-8},
        )

    starts = [np.asarray(s, dtype=float) for s in starts]
    best_x, best_f = starts[0], counted(starts[0])
    converged = False
    if len(starts) == 1:
        res = descend(starts[0], max_evals)
        if res.fun <= best_f:
            best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)
            converged = bool(res.success)
    else:
        probe_budget = min(2500, max(1, max_evals // (len(starts) + 3)))
        for start in starts:
            budget = min(probe_budget, max_evals - n_evals)
            if budget <= 0:
                break
            res = descend(start, budget)
            if res.fun <= best_f:
                best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)
                converged = bool(res.success)
        budget = max_evals - n_evals
        if budget > 0:
            res = descend(best_x, budget)
            if res.fun <= best_f:
                best_x, best_f = np.asarray(res.x, dtype=float), float(res.fun)
                converged = bool(res.success)

    lifted = _lift_collapsed(best_x, q)
    budget = max_evals - n_evals
    if lifted is not None and budget > 0:
        retry = descend(lifted, budget)
        if retry.fun < best_f:
            best_x, best_f = np.asarray(retry.x, dtype=float), float(retry.fun)
            converged = bool(retry.success)

    budget = max_evals - n_evals
    if budget > 0:
        fine = minimize(
            counted,
            best_x,
            method="L-BFGS-B",
            jac="3-point",
            bounds=bounds,
            options={"maxfun": budget, "ftol": 1e-14, "gtol": 1e-9},
        )
        if fine.fun <= best_f:
            best_x, best_f = np.asarray(fine.x, dtype=float), float(fine.fun)
        converged = converged or bool(fine.success)

    budget = min(max_evals - n_evals, 1500)
    if budget > 0:
        guard = minimize(
            counted,
            best_x,
            method="Powell",
            bounds=bounds,
            options={"ftol": rel_tol, "xtol": 1e-8, "maxfev": budget},
        )
        if guard.fun <= best_f:
            best_x, best_f = np.asarray(guard.x, dtype=float), float(guard.fun)

    converged = converged and n_evals <= max_evals
    return best_x, best_f, n_evals, converged


def fit(
    dataset: GrowthDataset,
    spec: ModelSpec,
    reml: bool = True,
    drop_baseline_rows: bool = False,
    rel_tol: float = 1e-8,
    max_evals: int = 10000,
) -> MixedModelFit:
    """Fit the mixed model by REML (or ML) and predict per-child effects.

    The profiled deviance is minimized over the lower-triangular relative
    covariance factor (diagonal bounded below by zero); boundary optima
    (singular random-effect covariances) are legal fits flagged via
    `singular`. If the evaluation budget runs out, the best-found fit is
    returned with `converged=False`.
    """
    dd = assemble_design(dataset, spec, drop_baseline_rows)
    q = dd.q
    starts = [theta_to_flat(t) for t in _start_candidates(dataset, spec)]

    def objective(flat):
        return profiled_deviance(flat_to_theta(flat, q), dd, reml)

    flat_opt, dev, n_evals, converged = _minimize_deviance(
        objective, starts, q, rel_tol, max_evals
    )
    theta = flat_to_theta(flat_opt, q)

    beta_fitted, sigma2, dev_final = profiled_estimates(theta, dd, reml)
    deviations = kernels.ranef_means(
        np.ascontiguousarray(theta),
        dd.ztz,
        dd.ztx,
        dd.zty,
        np.ascontiguousarray(beta_fitted),
    )

    if dd.interaction_dropped:
        beta = np.append(beta_fitted, 0.0)
    else:
        beta = beta_fitted
    sigma_mat = sigma2 * (theta @ theta.T)
    mean_part = beta_fitted[:q]
    blups = {
        cid: mean_part + deviations[i] for i, cid in enumerate(dd.child_ids)
    }
    singular = bool(np.any(np.diag(theta) < 1e-6))

    return MixedModelFit(
        spec=spec,
        beta=beta,
        Sigma=sigma_mat,
        sigma2=sigma2,
        theta=theta,
        blups=blups,
        reml_deviance=dev_final,
        converged=converged,
        reml=reml,
        singular=singular,
        n_children=dd.n_children,
        n_obs=dd.n_obs,
        n_evals=n_evals,
        baselines=dd.baselines,
        excluded_children=dd.excluded_children,
        interaction_dropped=dd.interaction_dropped,
    )


def predict(
    fit_result: MixedModelFit,
    child_id: str,
    times,
    baseline_z: float | None = None,
) -> np.ndarray:
    """Predicted z-scores for a fitted child at the given ages.

    The prediction combines the child's coefficient vector (fixed effects
    plus predicted deviation) with, for conditional kinds, the
    age-by-baseline interaction term. `baseline_z` must be supplied
    exactly when the model kind is conditional.
    """
    spec = fit_result.spec
    if child_id not in fit_result.blups:
        raise KeyError(f"child {child_id!r} was not in the fitted dataset")
    if spec.conditional and baseline_z is None:
        raise DataError(f"{spec.kind} predictions need baseline_z")
    if not spec.conditional and baseline_z is not None:
        raise DataError(f"{spec.kind} predictions do not take baseline_z")
    times = np.asarray(times, dtype=float)
    coef = fit_result.blups[child_id]
    if spec.is_broken_stick:
        rows = design_matrix(times, spec.knots)
    else:
        rows = np.column_stack([np.ones(times.size), times])
    pred = rows @ coef
    if spec.conditional:
        pred = pred + fit_result.interaction_coefficient * times * baseline_z
    return pred
