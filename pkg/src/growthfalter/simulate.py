"""Synthetic cohort benchmark for the velocity metrics and classifiers.

Cohorts mix a general population (declining linear trajectories through
the origin) with four faltering archetypes: two steeper lines (mild and
severe) and two piecewise patterns that change slope a third of the way
through the window (level-off and catch-up). Each replication fits the
random-slopes and broken-stick models, computes the SDS, RS, ARS and MRS
tables, classifies with both the true-proportion threshold and the
mixture model, and scores true positives against the generating labels.

Replication streams come from a counter-based generator keyed by
(seed, replication_index), so any subset of replications can be run in
any order, or in parallel, with identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import classify, lmm, metrics
from .classify import AgreementStats, Classification
from .data import AnalysisWindow, ChildSeries, GrowthDataset, Measurement
from .errors import ConfigError
from .splines import KnotVector

GENERAL = "general"
SUBGROUPS = ("mild", "severe", "level", "catchup")
SUBGROUP_RATIO = (5, 2, 2, 1)
SIM_METRICS = ("SDS", "RS", "ARS", "MRS")
CLASSIFIERS = ("TH", "MM")

# archetype -> (pre-break slope mean, post-break slope mean or None for a
# single straight line)
DEFAULT_ARCHETYPES = {
    "mild": (-2.5, None),
    "severe": (-4.5, None),
    "level": (-3.5, 0.0),
    "catchup": (-4.5, 0.75),
}

OBS_RANGES = {"dense": (6, 12), "sparse": (2, 6)}


def split_faltering(total: int, ratio=SUBGROUP_RATIO) -> tuple[int, ...]:
    """Split a faltering headcount across subgroups by largest remainder."""
    denom = sum(ratio)
    quotas = [total * r / denom for r in ratio]
    counts = [int(math.floor(quota)) for quota in quotas]
    remainders = sorted(
        range(len(ratio)), key=lambda i: (quotas[i] - counts[i], -i), reverse=True
    )
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return tuple(counts)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario."""

    n_children: int = 1000
    proportion_faltering: float = 0.10
    design: str = "dense"
    n_replications: int = 100
    seed: int = 0
    sigma_omega: float = 0.25
    sigma_epsilon: float = 0.3
    kappa_break: float = 1.0 / 3.0
    general_slope_mean: float = -1.0
    archetypes: dict = field(default_factory=lambda: dict(DEFAULT_ARCHETYPES))
    obs_range: tuple[int, int] | None = None
    knots: KnotVector = KnotVector((0.0, 0.25, 0.5, 0.75), 1.0)
    subgroup_counts: tuple[int, int, int, int] | None = None

    def __post_init__(self):
        if self.design not in OBS_RANGES and self.obs_range is None:
            raise ConfigError(f"unknown design {self.design!r}")
        if self.obs_range is None:
            object.__setattr__(self, "obs_range", OBS_RANGES[self.design])
        if self.obs_range[0] < 2:
            raise ConfigError("need at least 2 observations per child")
        if not (0.0 <= self.proportion_faltering < 1.0):
            raise ConfigError(
                f"proportion_faltering must be in [0, 1), got {self.proportion_faltering}"
            )
        if self.n_children < 2:
            raise ConfigError("need at least 2 children")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        expected = round(self.proportion_faltering * self.n_children)
        if self.subgroup_counts is None:
            object.__setattr__(self, "subgroup_counts", split_faltering(expected))
        if sum(self.subgroup_counts) != expected:
            raise ConfigError(
                f"subgroup counts {self.subgroup_counts} do not sum to {expected}"
            )
        if set(self.archetypes) != set(SUBGROUPS):
            raise ConfigError(f"archetypes must define exactly {SUBGROUPS}")

    @property
    def window(self) -> AnalysisWindow:
        return AnalysisWindow(0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "n_children": self.n_children,
            "proportion_faltering": self.proportion_faltering,
            "design": self.design,
            "n_replications": self.n_replications,
            "seed": self.seed,
            "sigma_omega": self.sigma_omega,
            "sigma_epsilon": self.sigma_epsilon,
            "kappa_break": self.kappa_break,
            "general_slope_mean": self.general_slope_mean,
            "archetypes": {k: list(v) for k, v in self.archetypes.items()},
            "obs_range": list(self.obs_range),
            "knots": {
                "internal": list(self.knots.internal),
                "upper": self.knots.upper,
            },
            "subgroup_counts": list(self.subgroup_counts),
        }


@dataclass(frozen=True)
class TrueLabels:
    """Generating subgroup of every simulated child."""

    labels: dict

    def subgroup_ids(self, name: str) -> frozenset:
        return frozenset(cid for cid, lab in self.labels.items() if lab == name)

    def faltering_ids(self) -> frozenset:
        return frozenset(
            cid for cid, lab in self.labels.items() if lab != GENERAL
        )


def replication_rng(seed: int, replication_index: int) -> np.random.Generator:
    """Independent counter-based stream for one replication."""
    return np.random.Generator(np.random.Philox(key=[seed, replication_index]))


def _sample_ages(rng: np.random.Generator, count: int) -> np.ndarray:
    """One early age, one late age, the rest interior; sorted ascending."""
    early = rng.uniform(0.0, 1.0 / 12.0)
    late = rng.uniform(11.0 / 12.0, 1.0)
    interior = rng.uniform(1.0 / 12.0, 11.0 / 12.0, count - 2)
    return np.sort(np.concatenate([[early, late], interior]))


def generate_population(
    cfg: ScenarioConfig, replication_index: int
) -> tuple[GrowthDataset, TrueLabels]:
    """Simulate one cohort.

    General children follow z = w t + eps with w ~ Normal(general mean,
    sigma_omega); straight-line archetypes swap in their own slope mean;
    the two-phase archetypes switch to an independently drawn post-break
    slope at the break age while staying continuous. Intercepts are zero
    by construction, which removes regression to the mean from the
    benchmark and is why only unconditional metrics are scored.
    """
    rng = replication_rng(cfg.seed, replication_index)
    n_faltering = sum(cfg.subgroup_counts)
    groups = [(GENERAL, cfg.n_children - n_faltering)]
    groups += list(zip(SUBGROUPS, cfg.subgroup_counts))

    width = len(str(cfg.n_children - 1))
    children = []
    labels = {}
    index = 0
    lo, hi = cfg.obs_range
    kb = cfg.kappa_break
    for group, count in groups:
        for _ in range(count):
            cid = f"c{index:0{width}d}"
            index += 1
            labels[cid] = group
            k = int(rng.integers(lo, hi, endpoint=True))
            ages = _sample_ages(rng, k)
            if group == GENERAL:
                slope = rng.normal(cfg.general_slope_mean, cfg.sigma_omega)
                mean_z = slope * ages
            else:
                pre_mean, post_mean = cfg.archetypes[group]
                pre = rng.normal(pre_mean, cfg.sigma_omega)
                if post_mean is None:
                    mean_z = pre * ages
                else:
                    post = rng.normal(post_mean, cfg.sigma_omega)
                    mean_z = np.where(
                        ages < kb, pre * ages, pre * kb + post * (ages - kb)
                    )
            z = mean_z + rng.normal(0.0, cfg.sigma_epsilon, k)
            measurements = tuple(
                Measurement(float(a), float(v)) for a, v in zip(ages, z)
            )
            children.append(ChildSeries(cid, measurements))

    dataset = GrowthDataset(
        tuple(children), cfg.window, exclusion_bound=math.inf
    )
    return dataset, TrueLabels(labels)


@dataclass(frozen=True)
class SubgroupScore:
    """True positives of one metric x classifier cell."""

    per_subgroup: dict
    total: int
    n_labeled: int


@dataclass(frozen=True)
class ReplicationResult:
    """Classification outcomes of a single replication."""

    replication_index: int
    scores: dict  # (metric, classifier) -> SubgroupScore
    agreement: dict  # metric -> AgreementStats
    faltering_labels: dict  # (metric, classifier) -> frozenset of ids
    converged: dict  # model kind -> bool


def score_classification(
    labels: Classification, truth: TrueLabels
) -> SubgroupScore:
    predicted = labels.faltering_ids()
    per_subgroup = {
        name: len(predicted & truth.subgroup_ids(name)) for name in SUBGROUPS
    }
    return SubgroupScore(
        per_subgroup=per_subgroup,
        total=sum(per_subgroup.values()),
        n_labeled=len(predicted),
    )


def _gmm_seed(cfg: ScenarioConfig, replication_index: int, metric: str):
    return np.random.SeedSequence(
        (cfg.seed, replication_index, SIM_METRICS.index(metric))
    )


def run_replication(cfg: ScenarioConfig, replication_index: int) -> ReplicationResult:
    """Generate, fit, classify and score one replication.

    Non-convergence of a model fit is recorded, not fatal: the
    replication is still scored from the best-found fit.
    """
    dataset, truth = generate_population(cfg, replication_index)

    rs_fit = lmm.fit(dataset, lmm.ModelSpec(lmm.RS))
    bs_fit = lmm.fit(dataset, lmm.ModelSpec(lmm.BROKEN_STICK, cfg.knots))
    seg = metrics.segment_slopes(bs_fit)
    tables = {
        "SDS": metrics.sds(dataset),
        "RS": metrics.rs(rs_fit),
        "ARS": metrics.ars(seg),
        "MRS": metrics.mrs(seg),
    }

    scores = {}
    agreement_stats = {}
    faltering_labels = {}
    for metric in SIM_METRICS:
        table = tables[metric]
        if cfg.proportion_faltering == 0.0:
            th = classify.Classification(
                labels={cid: classify.NON_FALTERING for cid in table.entries},
                method="TH",
                metadata={"proportion": 0.0, "n_labeled": 0, "threshold": None},
            )
        else:
            th = classify.threshold_classify(table, cfg.proportion_faltering)
        mix = classify.fit_gmm2(table, seed=_gmm_seed(cfg, replication_index, metric))
        mm = classify.mm_classify(mix)
        for name, labelling in (("TH", th), ("MM", mm)):
            scores[(metric, name)] = score_classification(labelling, truth)
            faltering_labels[(metric, name)] = labelling.faltering_ids()
        agreement_stats[metric] = classify.agreement(th, mm)

    return ReplicationResult(
        replication_index=replication_index,
        scores=scores,
        agreement=agreement_stats,
        faltering_labels=faltering_labels,
        converged={"RS": rs_fit.converged, "BrokenStick": bs_fit.converged},
    )


@dataclass(frozen=True)
class ScenarioReport:
    """Averages across replications, mirroring the benchmark tables."""

    config: ScenarioConfig
    n_replications: int
    subgroup_sizes: dict
    mean_true_positives: dict  # (metric, classifier) -> {subgroup: mean, "total": mean}
    mean_discordance: dict  # metric -> float
    mean_kappa: dict  # metric -> float
    percent_significant: dict  # metric -> float
    ordering_fraction: dict  # classifier -> fraction of reps with MRS > ARS >= SDS
    n_converged: dict  # model kind -> int


def aggregate(
    results: list[ReplicationResult], cfg: ScenarioConfig
) -> ScenarioReport:
    """Average per-subgroup true positives and agreement across replications."""
    if not results:
        raise ConfigError("no replications to aggregate")
    n = len(results)
    sizes = dict(zip(SUBGROUPS, cfg.subgroup_counts))

    mean_tp = {}
    for key in results[0].scores:
        per = {
            name: float(
                np.mean([r.scores[key].per_subgroup[name] for r in results])
            )
            for name in SUBGROUPS
        }
        per["total"] = float(np.mean([r.scores[key].total for r in results]))
        mean_tp[key] = per

    mean_pd = {}
    mean_kappa = {}
    pct_sig = {}
    for metric in SIM_METRICS:
        stats = [r.agreement[metric] for r in results]
        mean_pd[metric] = float(np.mean([s.percent_discordance for s in stats]))
        kappas = [s.kappa for s in stats if s.kappa is not None]
        mean_kappa[metric] = float(np.mean(kappas)) if kappas else math.nan
        pct_sig[metric] = 100.0 * float(np.mean([s.significant() for s in stats]))

    ordering = {}
    for cls in CLASSIFIERS:
        hits = [
            r.scores[("MRS", cls)].total > r.scores[("ARS", cls)].total
            and r.scores[("ARS", cls)].total >= r.scores[("SDS", cls)].total
            for r in results
        ]
        ordering[cls] = float(np.mean(hits))

    n_converged = {
        kind: sum(r.converged[kind] for r in results)
        for kind in results[0].converged
    }

    return ScenarioReport(
        config=cfg,
        n_replications=n,
        subgroup_sizes=sizes,
        mean_true_positives=mean_tp,
        mean_discordance=mean_pd,
        mean_kappa=mean_kappa,
        percent_significant=pct_sig,
        ordering_fraction=ordering,
        n_converged=n_converged,
    )


def run_scenario(
    cfg: ScenarioConfig, progress=None
) -> tuple[ScenarioReport, list[ReplicationResult]]:
    """Run every replication in index order and aggregate."""
    results = []
    for rep in range(cfg.n_replications):
        results.append(run_replication(cfg, rep))
        if progress is not None:
            progress(rep + 1, cfg.n_replications)
    return aggregate(results, cfg), results


def true_positives_csv(report: ScenarioReport) -> str:
    """Table of mean true positives: subgroup rows, metric x classifier columns."""
    header = ["subgroup", "n"]
    for metric in SIM_METRICS:
        for cls in CLASSIFIERS:
            header.append(f"{metric}_{cls}")
    lines = [",".join(header)]
    rows = [(name, report.subgroup_sizes[name]) for name in SUBGROUPS]
    rows.append(("total", sum(report.subgroup_sizes.values())))
    for name, size in rows:
        cells = [name, str(size)]
        for metric in SIM_METRICS:
            for cls in CLASSIFIERS:
                value = report.mean_true_positives[(metric, cls)]
                value = value["total"] if name == "total" else value[name]
                cells.append(f"{value:.6f}")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def agreement_csv(report: ScenarioReport) -> str:
    """Agreement table: percentage discordance, kappa, percent significant."""
    lines = ["metric,pct_discordance,kappa,pct_significant"]
    for metric in SIM_METRICS:
        lines.append(
            f"{metric},{report.mean_discordance[metric]:.6f},"
            f"{report.mean_kappa[metric]:.6f},"
            f"{report.percent_significant[metric]:.6f}"
        )
    return "\n".join(lines) + "\n"


def replications_csv(results: list[ReplicationResult]) -> str:
    """Per-replication record from which the aggregates can be rebuilt."""
    lines = [
        "replication,metric,classifier,tp_mild,tp_severe,tp_level,tp_catchup,"
        "tp_total,n_labeled,pct_discordance,kappa,kappa_z,kappa_p"
    ]
    for r in results:
        for metric in SIM_METRICS:
            stats = r.agreement[metric]
            for cls in CLASSIFIERS:
                score = r.scores[(metric, cls)]
                cells = [
                    str(r.replication_index),
                    metric,
                    cls,
                    *(str(score.per_subgroup[name]) for name in SUBGROUPS),
                    str(score.total),
                    str(score.n_labeled),
                ]
                if cls == "TH":
                    cells += ["", "", "", ""]
                else:
                    cells += [
                        f"{stats.percent_discordance!r}",
                        "" if stats.kappa is None else f"{stats.kappa!r}",
                        "" if stats.kappa_z is None else f"{stats.kappa_z!r}",
                        "" if stats.kappa_p is None else f"{stats.kappa_p!r}",
                    ]
                lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
