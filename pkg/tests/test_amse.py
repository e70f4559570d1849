import dataclasses

import numpy as np
import pytest

from conftest import make_frame
from csa2sls.amse import (
    amse_score,
    amse_terms,
    csa2sls,
    mallows_first_stage,
    preliminary_estimate,
    select_optimal_k,
)
from csa2sls.dataframe import ModelFrame
from csa2sls.estimators import accumulate_projection_stats, csa2sls_fixed_k, tsls
from csa2sls.subsets import build_subset_plan
import oracles


def test_single_instrument_modes_coincide(rng):
    f = make_frame(rng, N=50, K=1)
    a = preliminary_estimate(f, "onestep")
    b = preliminary_estimate(f, "mallows")
    assert a.prelim_ivcount == b.prelim_ivcount == 1
    np.testing.assert_allclose(a.beta_tilde, b.beta_tilde)
    np.testing.assert_allclose(a.beta_tilde, tsls(f).b, rtol=1e-10)


def test_onestep_is_tsls(rng):
    f = make_frame(rng, N=80, K=4, d2=1)
    np.testing.assert_allclose(preliminary_estimate(f, "onestep").beta_tilde, tsls(f).b, rtol=1e-12)


def test_prelim_dispersion_properties(rng):
    f = make_frame(rng, N=80, K=5, d2=2)
    for mode in ("onestep", "mallows"):
        p = preliminary_estimate(f, mode)
        assert p.sigma_eps2 >= 0
        assert np.all(np.linalg.eigvalsh(p.Sigma_u) > -1e-12)
        assert np.all(np.linalg.eigvalsh(p.H) > 0)
        np.testing.assert_allclose(p.Sigma_u[f.d1:, :], 0, atol=1e-8)
        np.testing.assert_allclose(p.sigma_ueps[f.d1:], 0, atol=1e-8)
        np.testing.assert_array_equal(p.lam, [1, 0, 0, 0])


def test_mallows_prefers_strong_leading_instrument():
    hits = 0
    for rep in range(200):
        rng = np.random.default_rng([77, rep])
        n = 500
        z = rng.standard_normal((n, 4))
        v = rng.standard_normal(n)
        x = 0.8 * z[:, 0] + v
        y = 0.5 * x + 0.5 * v + rng.standard_normal(n)
        j, _ = mallows_first_stage(ModelFrame.from_arrays(y, x, z))
        hits += j == 1
    assert hits > 100


def test_mallows_matches_oracle(rng):
    f = make_frame(rng, N=60, K=6, d2=1)
    p = preliminary_estimate(f, "mallows")
    ref = oracles.brute_prelim(f.y, f.X, f.Z_excl, f.W, f.d1, "mallows")
    assert p.prelim_ivcount == ref["j"]
    np.testing.assert_allclose(p.beta_tilde, ref["beta"], rtol=1e-9)


def test_bad_mode(frame):
    with pytest.raises(ValueError):
        preliminary_estimate(frame, "twostep")


def test_amse_specialization_no_first_stage_noise(rng):
    f = make_frame(rng, N=40, K=3)
    p = preliminary_estimate(f, "onestep")
    p0 = dataclasses.replace(p, Sigma_u=np.zeros_like(p.Sigma_u))
    s = accumulate_projection_stats(f, build_subset_plan(3, 3))
    n, K = f.N, f.K
    P = oracles.projector(f.Z_full)
    A = f.X.T @ (np.eye(n) - P) @ f.X / n
    Hi = np.linalg.inv(p.H)
    lam = p.lam
    s_le = lam @ Hi @ p.sigma_ueps
    expected = s_le**2 * K**2 / n + p.sigma_eps2 * (
        lam @ Hi @ A @ Hi @ lam - lam @ Hi @ A @ Hi @ A @ Hi @ lam
    )
    assert amse_score(f, p0, s) == pytest.approx(expected, rel=1e-9)


def test_amse_dense_oracle(rng):
    f = make_frame(rng, N=30, K=5)
    p = preliminary_estimate(f, "mallows")
    ref_pre = oracles.brute_prelim(f.y, f.X, f.Z_excl, f.W, f.d1, "mallows")
    P, _, _ = oracles.averaged_projector(f.Z_excl, f.W, 2)
    ref = oracles.brute_amse(f.X, P, 2, ref_pre)
    for mode in ("dense", "streaming"):
        t = amse_terms(f, p, accumulate_projection_stats(f, build_subset_plan(5, 2), mode))
        np.testing.assert_allclose(t.e_f, ref["e_f"], rtol=1e-8, atol=1e-12)
        np.testing.assert_allclose(t.xi_f, ref["xi_f"], rtol=1e-8, atol=1e-12)
        assert t.S == pytest.approx(ref["S"], rel=1e-8)
        assert t.sigma_le2 >= 0


def test_amse_instrument_scaling(rng):
    f = make_frame(rng, N=60, K=5, d2=1)
    g = f.replace(Z_excl=3.0 * f.Z_excl)
    for mode in ("onestep", "mallows"):
        ta = select_optimal_k(f, mode)
        tb = select_optimal_k(g, mode)
        for ea, eb in zip(ta.entries, tb.entries):
            assert ea.S == pytest.approx(eb.S, rel=1e-8)


def test_select_forced_grid(rng):
    f = make_frame(rng, N=40, K=1)
    t = select_optimal_k(f)
    assert t.grid == [1] and t.k_opt == 1


def test_select_grid_starts_at_d1(rng):
    f = make_frame(rng, N=80, K=4, d1=2)
    assert select_optimal_k(f).grid == [2, 3, 4]


def test_select_matches_dense_oracle(rng):
    f = make_frame(rng, N=60, K=6)
    ref = oracles.brute_full(f.y, f.X, f.Z_excl, f.W, f.d1, "mallows")
    t = select_optimal_k(f)
    assert t.k_opt == ref["k_opt"]
    for e in t.entries:
        assert e.S == pytest.approx(ref["table"][e.k]["S"], rel=1e-8)


def test_outcome_scaling(rng):
    f = make_frame(rng, N=60, K=6)
    c = 4.0
    ta = select_optimal_k(f)
    tb = select_optimal_k(f.replace(y=c * f.y))
    assert ta.k_opt == tb.k_opt
    for ea, eb in zip(ta.entries, tb.entries):
        assert eb.S == pytest.approx(c**2 * ea.S, rel=1e-9)


def test_permutation_invariance_onestep(rng):
    f = make_frame(rng, N=60, K=5, d2=1)
    perm = [3, 0, 4, 2, 1]
    g = f.replace(Z_excl=f.Z_excl[:, perm])
    ta, tb = select_optimal_k(f, "onestep"), select_optimal_k(g, "onestep")
    for ea, eb in zip(ta.entries, tb.entries):
        assert ea.S == pytest.approx(eb.S, rel=1e-10)
    np.testing.assert_allclose(csa2sls(f, "onestep").b, csa2sls(g, "onestep").b, rtol=1e-10)


def test_full_estimator_uses_selected_k(rng):
    f = make_frame(rng, N=60, K=6, d2=1)
    res = csa2sls(f, r=5, seed=11)
    again = csa2sls_fixed_k(f, res.k_opt, r=5, seed=11)
    np.testing.assert_array_equal(res.b, again.b)
    assert res.amse_table.k_opt == res.k_opt
    assert res.estimator == "csa2sls" and res.prelim_mode == "mallows"
