"""Faltering classification and agreement statistics.

Two classifiers over a velocity table: a two-component Gaussian mixture
fitted by EM (children assigned to the lower-mean component by posterior
probability) and a quantile threshold (lowest fraction of velocities).
Agreement between two classifications is summarized by percentage
discordance and Cohen's kappa with its one-sided significance test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, DataError, DegenerateDataError, MalformedRowError
from .metrics import VelocityTable

FALTERING = "faltering"
NON_FALTERING = "non-faltering"

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MixtureFit:
    """Two-component Gaussian mixture with per-child posteriors.

    Components are ordered by mean, so component 1 (the lower mean) is
    the faltering candidate; `posteriors` holds each child's probability
    of belonging to it.
    """

    weights: tuple[float, float]
    means: tuple[float, float]
    sds: tuple[float, float]
    posteriors: dict
    loglik: float
    converged: bool
    n_iter: int
    sigma_floored: bool = False

    def __post_init__(self):
        if abs(self.weights[0] + self.weights[1] - 1.0) > 1e-9:
            raise DataError("mixture weights must sum to 1")
        if min(self.weights) < 0:
            raise DataError("mixture weights must be non-negative")
        if min(self.sds) <= 0:
            raise DataError("mixture standard deviations must be positive")
        if self.means[0] > self.means[1]:
            raise DataError("components must be ordered by mean")

    def to_summary_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "means": list(self.means),
            "sds": list(self.sds),
            "loglik": self.loglik,
            "converged": self.converged,
            "n_iter": self.n_iter,
            "sigma_floored": self.sigma_floored,
            "n": len(self.posteriors),
        }

    def to_summary_json(self) -> str:
        return json.dumps(self.to_summary_dict(), indent=2)


@dataclass(frozen=True)
class Classification:
    """Faltering / non-faltering labels for the defined children."""

    labels: dict
    method: str  # "MM" or "TH"
    metadata: dict

    def faltering_ids(self) -> frozenset:
        return frozenset(cid for cid, lab in self.labels.items() if lab == FALTERING)


@dataclass(frozen=True)
class AgreementStats:
    """Agreement between two classifications on their common children.

    `kappa` (and its test) is None when chance agreement is total
    (p_e = 1) or when the null standard error vanishes.
    """

    percent_discordance: float
    kappa: float | None
    kappa_z: float | None
    kappa_p: float | None
    n_common: int

    def significant(self, level: float = 0.01) -> bool:
        return self.kappa_p is not None and self.kappa_p < level

    def to_dict(self) -> dict:
        return {
            "percent_discordance": self.percent_discordance,
            "kappa": self.kappa,
            "kappa_z": self.kappa_z,
            "kappa_p": self.kappa_p,
            "n_common": self.n_common,
        }


def _e_step(x: np.ndarray, w, mu, sd):
    """Responsibilities and log-likelihood at the current parameters."""
    logp = np.empty((x.size, 2))
    with np.errstate(divide="ignore"):
        logw = np.log(w)
    for k in range(2):
        logp[:, k] = (
            logw[k] - math.log(sd[k]) - 0.5 * LOG_2PI
            - 0.5 * ((x - mu[k]) / sd[k]) ** 2
        )
    top = logp.max(axis=1)
    mix = top + np.log(np.exp(logp[:, 0] - top) + np.exp(logp[:, 1] - top))
    return np.exp(logp - mix[:, None]), float(mix.sum())


def _run_em(x, w, mu, sd, var_floor, tol, max_iter):
    """EM iterations from one start; log-likelihood must not decrease."""
    loglik = -math.inf
    floored = False
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resp, new_loglik = _e_step(x, w, mu, sd)
        if new_loglik < loglik - 1e-9:
            raise RuntimeError(
                f"EM log-likelihood decreased: {loglik} -> {new_loglik}"
            )
        done = abs(new_loglik - loglik) < tol
        loglik = new_loglik
        if done:
            converged = True
            break
        # M step; a dying component keeps its weight near zero and its
        # variance at the floor rather than producing NaNs
        totals = np.maximum(resp.sum(axis=0), 1e-12)
        w = totals / x.size
        mu = (resp * x[:, None]).sum(axis=0) / totals
        var = (resp * (x[:, None] - mu) ** 2).sum(axis=0) / totals
        if np.any(var < var_floor):
            var = np.maximum(var, var_floor)
            floored = True
        sd = np.sqrt(var)
    if not converged:
        resp, final = _e_step(x, w, mu, sd)
        if final < loglik - 1e-9:
            raise RuntimeError(f"EM log-likelihood decreased: {loglik} -> {final}")
        loglik = final
    return w, mu, sd, resp, loglik, it, converged, floored


def fit_gmm2(
    velocities: VelocityTable,
    seed,
    n_restarts: int = 10,
    jitter_frac: float = 0.1,
    var_floor_frac: float = 1e-6,
    tol: float = 1e-8,
    max_iter: int = 2000,
) -> MixtureFit:
    """Fit a two-component Gaussian mixture to the defined velocities.

    Initialization splits the sorted values at the median and takes
    component moments from the halves; `n_restarts` additional EM runs
    jitter the initial means (sd = `jitter_frac` times the data sd) and
    the best log-likelihood wins. Component variances are floored at
    `var_floor_frac` times the data variance; a best run that hit the
    floor is flagged via `sigma_floored`, not an error.
    """
    ids = velocities.defined_ids()
    x = velocities.values()
    if x.size < 4:
        raise DataError(f"mixture fit needs at least 4 velocities, got {x.size}")
    if np.unique(x).size < 2:
        raise DegenerateDataError("all velocities identical")

    data_sd = float(np.std(x))
    var_floor = var_floor_frac * data_sd**2
    rng = np.random.default_rng(seed)

    order = np.sort(x)
    half = x.size // 2
    lo, hi = order[:half], order[half:]
    w0 = np.array([lo.size / x.size, hi.size / x.size])
    mu0 = np.array([lo.mean(), hi.mean()])
    sd0 = np.sqrt(np.maximum([lo.var(), hi.var()], var_floor))

    best = None
    for restart in range(n_restarts + 1):
        mu_start = mu0.copy()
        if restart > 0:
            mu_start = mu_start + rng.normal(0.0, jitter_frac * data_sd, 2)
        result = _run_em(x, w0.copy(), mu_start, sd0.copy(), var_floor, tol, max_iter)
        if best is None or result[4] > best[4]:
            best = result
    w, mu, sd, resp, loglik, n_iter, converged, floored = best

    if mu[0] > mu[1] or (mu[0] == mu[1] and sd[0] > sd[1]):
        w, mu, sd = w[::-1], mu[::-1], sd[::-1]
        resp = resp[:, ::-1]
    posteriors = {cid: float(resp[i, 0]) for i, cid in enumerate(ids)}
    return MixtureFit(
        weights=(float(w[0]), float(w[1])),
        means=(float(mu[0]), float(mu[1])),
        sds=(float(sd[0]), float(sd[1])),
        posteriors=posteriors,
        loglik=loglik,
        converged=converged,
        n_iter=n_iter,
        sigma_floored=floored,
    )


def mm_classify(mix: MixtureFit, cutoff: float = 0.5) -> Classification:
    """Label children faltering when their lower-component posterior
    reaches the cutoff."""
    if not (0.0 <= cutoff <= 1.0):
        raise ConfigError(f"cutoff must be in [0, 1], got {cutoff}")
    labels = {
        cid: FALTERING if post >= cutoff else NON_FALTERING
        for cid, post in mix.posteriors.items()
    }
    return Classification(
        labels=labels,
        method="MM",
        metadata={
            "cutoff": cutoff,
            "weights": list(mix.weights),
            "means": list(mix.means),
            "sds": list(mix.sds),
        },
    )


def threshold_classify(velocities: VelocityTable, proportion: float) -> Classification:
    """Label the lowest floor(proportion * n) velocities faltering.

    Ties at the cut are broken by child-id order, so the result is
    deterministic.
    """
    if not (0.0 < proportion < 1.0):
        raise ConfigError(f"proportion must be in (0, 1), got {proportion}")
    ids = sorted(velocities.entries, key=lambda cid: (velocities.entries[cid], cid))
    k = int(math.floor(proportion * len(ids)))
    faltering = set(ids[:k])
    labels = {
        cid: FALTERING if cid in faltering else NON_FALTERING for cid in ids
    }
    threshold = velocities.entries[ids[k - 1]] if k >= 1 else None
    return Classification(
        labels=labels,
        method="TH",
        metadata={"proportion": proportion, "n_labeled": k, "threshold": threshold},
    )


def agreement(a: Classification, b: Classification) -> AgreementStats:
    """Percentage discordance and Cohen's kappa between two label sets.

    Children labeled by only one side are excluded; the statistics are
    computed on the intersection. The kappa z statistic uses the
    large-sample standard error under the null of chance agreement, with
    a one-sided upper-tail p-value.
    """
    common = sorted(set(a.labels) & set(b.labels))
    if not common:
        raise DataError("classifications share no children")
    n = len(common)
    counts = np.zeros((2, 2))
    for cid in common:
        i = 0 if a.labels[cid] == FALTERING else 1
        j = 0 if b.labels[cid] == FALTERING else 1
        counts[i, j] += 1
    props = counts / n
    p_o = float(np.trace(props))
    row = props.sum(axis=1)
    col = props.sum(axis=0)
    p_e = float(row @ col)
    discordance = 100.0 * (1.0 - p_o)
    if 1.0 - p_e <= 1e-15:
        return AgreementStats(discordance, None, None, None, n)
    kappa = (p_o - p_e) / (1.0 - p_e)
    var0 = (p_e + p_e**2 - float(np.sum(row * col * (row + col)))) / (
        n * (1.0 - p_e) ** 2
    )
    if var0 <= 0:
        return AgreementStats(discordance, kappa, None, None, n)
    z = kappa / math.sqrt(var0)
    p = float(norm.sf(z))
    return AgreementStats(discordance, kappa, z, p, n)


def write_labels(classification: Classification, target, mix: MixtureFit | None = None):
    """Delimited export: child_id, label, posterior (mixture runs only)."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            write_labels(classification, fh, mix)
            return
    target.write("child_id,label,posterior\n")
    for cid in sorted(classification.labels):
        posterior = ""
        if mix is not None and cid in mix.posteriors:
            posterior = repr(mix.posteriors[cid])
        target.write(f"{cid},{classification.labels[cid]},{posterior}\n")


def read_labels(source) -> Classification:
    """Parse a label file written by `write_labels`."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_labels(fh)
    header = source.readline().rstrip("\n")
    if header != "child_id,label,posterior":
        raise DataError(f"unexpected labels header {header!r}")
    labels = {}
    for row_number, line in enumerate(source, start=2):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split(",")
        if len(parts) != 3:
            raise MalformedRowError(row_number, f"expected 3 fields, got {len(parts)}")
        cid, label, _ = parts
        if label not in (FALTERING, NON_FALTERING):
            raise MalformedRowError(row_number, f"bad label {label!r}")
        labels[cid] = label
    if not labels:
        raise DataError("empty labels file")
    return Classification(labels=labels, method="file", metadata={})


def histogram_bins(
    velocities: VelocityTable, mix: MixtureFit, n_bins: int = 30, n_grid: int = 200
):
    """Histogram counts plus fitted component densities on a grid.

    Returns (bin_edges, counts, grid, comp1, comp2, total): everything a
    plotting tool needs to redraw the velocity histogram with the two
    weighted component curves overlaid.
    """
    x = velocities.values()
    counts, edges = np.histogram(x, bins=n_bins)
    pad = 0.5 * float(np.std(x))
    grid = np.linspace(x.min() - pad, x.max() + pad, n_grid)
    comps = []
    for k in range(2):
        comps.append(
            mix.weights[k] * norm.pdf(grid, loc=mix.means[k], scale=mix.sds[k])
        )
    return edges, counts, grid, comps[0], comps[1], comps[0] + comps[1]
