import math

import numpy as np
import pytest

from growthfalter.data import canonical_text
from growthfalter.errors import ConfigError
from growthfalter.simulate import (
    CLASSIFIERS,
    SIM_METRICS,
    SUBGROUPS,
    ScenarioConfig,
    aggregate,
    agreement_csv,
    generate_population,
    replications_csv,
    run_replication,
    run_scenario,
    split_faltering,
    true_positives_csv,
)


def test_split_faltering_matches_benchmark_tables():
    assert split_faltering(50) == (25, 10, 10, 5)
    assert split_faltering(100) == (50, 20, 20, 10)
    assert split_faltering(200) == (100, 40, 40, 20)


def test_split_faltering_sums_for_odd_totals():
    for total in range(0, 97):
        counts = split_faltering(total)
        assert sum(counts) == total
        assert all(c >= 0 for c in counts)


def test_config_derives_counts_and_validates():
    cfg = ScenarioConfig(n_children=1000, proportion_faltering=0.05)
    assert cfg.subgroup_counts == (25, 10, 10, 5)
    assert cfg.obs_range == (6, 12)
    sparse = ScenarioConfig(design="sparse")
    assert sparse.obs_range == (2, 6)
    with pytest.raises(ConfigError):
        ScenarioConfig(design="weird")
    with pytest.raises(ConfigError):
        ScenarioConfig(proportion_faltering=1.2)
    with pytest.raises(ConfigError):
        ScenarioConfig(obs_range=(1, 6))
    with pytest.raises(ConfigError):
        ScenarioConfig(subgroup_counts=(1, 1, 1, 1), proportion_faltering=0.1)


def test_generation_is_bit_reproducible():
    cfg = ScenarioConfig(n_children=50, proportion_faltering=0.2, seed=9)
    ds1, labels1 = generate_population(cfg, 3)
    ds2, labels2 = generate_population(cfg, 3)
    assert canonical_text(ds1) == canonical_text(ds2)
    assert labels1.labels == labels2.labels
    ds3, _ = generate_population(cfg, 4)
    assert canonical_text(ds3) != canonical_text(ds1)


def test_subgroup_counts_match_config_exactly():
    cfg = ScenarioConfig(n_children=200, proportion_faltering=0.1, seed=1)
    for rep in range(3):
        _, labels = generate_population(cfg, rep)
        for name, expected in zip(SUBGROUPS, cfg.subgroup_counts):
            assert len(labels.subgroup_ids(name)) == expected
        assert len(labels.faltering_ids()) == sum(cfg.subgroup_counts)


def test_observation_schedule():
    cfg = ScenarioConfig(n_children=120, proportion_faltering=0.1, seed=5)
    ds, _ = generate_population(cfg, 0)
    for child in ds.children:
        ages = np.array([m.age for m in child.measurements])
        assert 6 <= ages.size <= 12
        assert np.all((ages >= 0.0) & (ages <= 1.0))
        assert np.sum(ages <= 1.0 / 12.0) == 1
        assert np.sum(ages >= 11.0 / 12.0) == 1


def test_sparse_schedule_counts():
    cfg = ScenarioConfig(n_children=120, proportion_faltering=0.1, seed=5, design="sparse")
    ds, _ = generate_population(cfg, 0)
    sizes = [len(c.measurements) for c in ds.children]
    assert min(sizes) >= 2 and max(sizes) <= 6


def test_noise_free_archetype_trajectories():
    cfg = ScenarioConfig(
        n_children=100,
        proportion_faltering=0.2,
        seed=3,
        sigma_omega=0.0,
        sigma_epsilon=0.0,
    )
    ds, labels = generate_population(cfg, 0)

    def z_at(cid, t):
        child = ds.child(cid)
        ages = np.array([m.age for m in child.measurements])
        zs = np.array([m.zscore for m in child.measurements])
        # trajectories are piecewise linear with a single break at 1/3;
        # interpolate within the observed range
        return np.interp(t, ages, zs)

    for cid in sorted(labels.subgroup_ids("mild"))[:3]:
        child = ds.child(cid)
        last = child.measurements[-1]
        assert last.zscore == pytest.approx(-2.5 * last.age, abs=1e-12)
    # level-off: slope -3.5 up to the break, flat afterwards
    for cid in sorted(labels.subgroup_ids("level"))[:3]:
        child = ds.child(cid)
        for m in child.measurements:
            expected = -3.5 * min(m.age, 1.0 / 3.0)
            assert m.zscore == pytest.approx(expected, abs=1e-12)
    # catch-up: slope -4.5 then +0.75
    for cid in sorted(labels.subgroup_ids("catchup"))[:3]:
        child = ds.child(cid)
        for m in child.measurements:
            if m.age < 1.0 / 3.0:
                expected = -4.5 * m.age
            else:
                expected = -4.5 / 3.0 + 0.75 * (m.age - 1.0 / 3.0)
            assert m.zscore == pytest.approx(expected, abs=1e-12)


def test_noise_free_average_velocities():
    # reconstruct the trajectory's two slopes from the deterministic
    # measurements; the drop over [0, 1] equals the advertised subgroup
    # average velocity (in particular -7/6 for level-off and -1 for
    # catch-up, which pins down that the post-break slope is drawn
    # directly rather than as a slope change)
    cfg = ScenarioConfig(
        n_children=50,
        proportion_faltering=0.2,
        seed=3,
        sigma_omega=0.0,
        sigma_epsilon=0.0,
    )
    ds, labels = generate_population(cfg, 0)
    kb = 1.0 / 3.0
    expected = {"mild": -2.5, "severe": -4.5, "level": -7.0 / 6.0, "catchup": -1.0}
    for name, velocity in expected.items():
        for cid in sorted(labels.subgroup_ids(name))[:3]:
            meas = ds.child(cid).measurements
            early, late = meas[0], meas[-1]
            pre_slope = early.zscore / early.age
            post_slope = (late.zscore - pre_slope * kb) / (late.age - kb)
            drop = pre_slope * kb + post_slope * (1.0 - kb)
            assert drop == pytest.approx(velocity, abs=1e-9)


def test_replication_scoring_structure():
    cfg = ScenarioConfig(n_children=60, proportion_faltering=0.2, seed=20, n_replications=1)
    result = run_replication(cfg, 0)
    sizes = dict(zip(SUBGROUPS, cfg.subgroup_counts))
    for metric in SIM_METRICS:
        for cls in CLASSIFIERS:
            score = result.scores[(metric, cls)]
            for name in SUBGROUPS:
                assert 0 <= score.per_subgroup[name] <= sizes[name]
            assert score.total == sum(score.per_subgroup.values())
        assert result.scores[(metric, "TH")].n_labeled == math.floor(0.2 * 60)
        stats = result.agreement[metric]
        assert 0.0 <= stats.percent_discordance <= 100.0
    assert set(result.converged) == {"RS", "BrokenStick"}


def test_zero_proportion_scenario():
    cfg = ScenarioConfig(n_children=40, proportion_faltering=0.0, seed=2, n_replications=1)
    result = run_replication(cfg, 0)
    for metric in SIM_METRICS:
        assert result.scores[(metric, "TH")].n_labeled == 0
        assert result.scores[(metric, "TH")].total == 0
        assert result.scores[(metric, "MM")].total == 0


def test_aggregate_single_replication_is_identity():
    cfg = ScenarioConfig(n_children=60, proportion_faltering=0.1, seed=4, n_replications=1)
    result = run_replication(cfg, 0)
    report = aggregate([result], cfg)
    for key, score in result.scores.items():
        assert report.mean_true_positives[key]["total"] == score.total
        for name in SUBGROUPS:
            assert report.mean_true_positives[key][name] == score.per_subgroup[name]
    for metric in SIM_METRICS:
        assert report.mean_discordance[metric] == result.agreement[metric].percent_discordance
    assert report.n_replications == 1


def test_run_scenario_and_tables():
    cfg = ScenarioConfig(n_children=50, proportion_faltering=0.1, seed=14, n_replications=2)
    report, results = run_scenario(cfg)
    assert len(results) == 2
    tp = true_positives_csv(report)
    lines = tp.strip().splitlines()
    assert lines[0].startswith("subgroup,n,SDS_TH,SDS_MM")
    assert len(lines) == 6  # header + 4 subgroups + total
    agree = agreement_csv(report)
    assert agree.splitlines()[0] == "metric,pct_discordance,kappa,pct_significant"
    reps = replications_csv(results)
    # 2 replications x 4 metrics x 2 classifiers + header
    assert len(reps.strip().splitlines()) == 17


def test_replication_reproducibility():
    cfg = ScenarioConfig(n_children=50, proportion_faltering=0.1, seed=31, n_replications=1)
    r1 = run_replication(cfg, 0)
    r2 = run_replication(cfg, 0)
    assert replications_csv([r1]) == replications_csv([r2])
    for key in r1.faltering_labels:
        assert r1.faltering_labels[key] == r2.faltering_labels[key]
