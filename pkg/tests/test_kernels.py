import numpy as np
import pytest

from growthfalter import kernels
from growthfalter.kernels import pure

try:
    from growthfalter.kernels import _core as compiled
except ImportError:
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="extension not built")


def _random_stats(seed, m=40, q=4, p=5):
    rng = np.random.default_rng(seed)
    ztz = np.empty((m, q, q))
    ztx = np.empty((m, q, p))
    zty = np.empty((m, q))
    for i in range(m):
        n_i = int(rng.integers(2, 10))
        z = rng.normal(size=(n_i, q))
        x = rng.normal(size=(n_i, p))
        y = rng.normal(size=n_i)
        ztz[i] = z.T @ z
        ztx[i] = z.T @ x
        zty[i] = z.T @ y
    lam = np.tril(rng.normal(size=(q, q)))
    np.fill_diagonal(lam, np.abs(np.diag(lam)))
    return np.ascontiguousarray(lam), ztz, ztx, zty


def _reference_pls(lam, ztz, ztx, zty):
    """Straightforward per-child loop, independent of both backends."""
    m, q, p = ztx.shape
    s = np.zeros((p + 1, p + 1))
    logdet = 0.0
    for i in range(m):
        a = lam.T @ ztz[i] @ lam + np.eye(q)
        chol = np.linalg.cholesky(a)
        g = np.column_stack([ztx[i], zty[i]])
        w = np.linalg.solve(chol, lam.T @ g)
        s += w.T @ w
        logdet += 2.0 * np.sum(np.log(np.diag(chol)))
    return logdet, s


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pure_matches_reference(seed):
    lam, ztz, ztx, zty = _random_stats(seed)
    ld_ref, s_ref = _reference_pls(lam, ztz, ztx, zty)
    ld, s = pure.pls_components(lam, ztz, ztx, zty)
    assert ld == pytest.approx(ld_ref, abs=1e-10)
    assert np.max(np.abs(s - s_ref)) < 1e-10


@needs_compiled
@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_backends_agree_on_pls(seed):
    lam, ztz, ztx, zty = _random_stats(seed)
    ld1, s1 = compiled.pls_components(lam, ztz, ztx, zty)
    ld2, s2 = pure.pls_components(lam, ztz, ztx, zty)
    assert ld1 == pytest.approx(ld2, abs=1e-9)
    assert np.max(np.abs(s1 - s2)) < 1e-9


@needs_compiled
@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_backends_agree_on_ranef(seed):
    lam, ztz, ztx, zty = _random_stats(seed)
    beta = np.random.default_rng(seed + 100).normal(size=ztx.shape[2])
    b1 = compiled.ranef_means(lam, ztz, ztx, zty, beta)
    b2 = pure.ranef_means(lam, ztz, ztx, zty, beta)
    assert np.max(np.abs(b1 - b2)) < 1e-10


def test_ranef_solves_the_normal_equations():
    lam, ztz, ztx, zty = _random_stats(9, m=10, q=3, p=3)
    beta = np.array([0.3, -1.0, 0.5])
    out = pure.ranef_means(lam, ztz, ztx, zty, beta)
    for i in range(10):
        a = lam.T @ ztz[i] @ lam + np.eye(3)
        rhs = lam.T @ (zty[i] - ztx[i] @ beta)
        expected = lam @ np.linalg.solve(a, rhs)
        assert np.max(np.abs(out[i] - expected)) < 1e-12


def test_singular_lambda_is_fine():
    # a zero factor just means no random-effect contribution
    lam, ztz, ztx, zty = _random_stats(4, q=3)
    zero = np.zeros((3, 3))
    ld, s = kernels.pls_components(zero, ztz, ztx, zty)
    assert ld == 0.0
    assert np.allclose(s, 0.0)


def test_backend_name_exposed():
    assert kernels.BACKEND in ("compiled", "pure")
