"""Tests for the worst-case (norm-bounded error) designs.

Independent oracles: sampled ball points lower-bound every certified
slack; a masked least-squares closed form (free feedback absorbs the
lower-triangular residual columns) cross-checks the precoder
subproblem at delta = 0; the exact ball maximizer bounds final
iterates.
"""

import numpy as np
import pytest

from robust_thp.model import SystemConfig, Transceiver, identity_transceiver
from robust_thp.nbe_design import (
    FeasibilityReport,
    NbeDesignParams,
    build_Mk,
    build_Nk,
    check_feasibility,
    mse_balancing_design,
    mse_constrained_design,
    nbe_smse_design,
    nbe_smse_design_per_antenna,
    solve_bg_subproblem,
    solve_c_subproblem,
)
from robust_thp.oracle import worst_case_user_mse
from robust_thp.sampling import sample_channel, sphere_points
from robust_thp.se_design import SeDesignParams, se_design

from helpers import small_config


def sampled_residual_max(B, gbar, C_k, hhat_k, delta, count=10_000, seed=0,
                         noise_var=None):
    """Max of the user residual over sampled ||e|| <= delta points."""
    rng = np.random.default_rng(seed)
    dim = hhat_k.size
    E = sphere_points(rng, dim, delta, count)
    radii = rng.uniform(size=(count, 1)) ** (1.0 / (2 * dim))
    E[count // 2:] *= radii[count // 2:]  # half interior, half surface
    D = np.kron(B.T, C_k)
    a = D @ hhat_k.reshape(-1, order="F") - gbar.reshape(-1, order="F")
    vals = np.sum(np.abs(a[None, :] + E @ D.T) ** 2, axis=1)
    best = float(np.max(vals))
    if noise_var is not None:
        best += noise_var * float(np.sum(np.abs(C_k) ** 2))
    return best


def masked_joint_ls(C, channel_hat, config, power_limit):
    """Joint (b, g) minimizer of the nominal residual at delta = 0.

    The feedback blocks zero the residual columns below each user's
    diagonal exactly, leaving a least-squares problem in b over the
    remaining columns, solved in closed form with a bisected power
    multiplier when the cap binds.
    """
    L = config.total_streams
    offs = config.stream_offsets
    AtA = np.zeros((config.n_tx * L,) * 2, dtype=complex)
    Atg = np.zeros(config.n_tx * L, dtype=complex)
    pieces = []
    for k in range(config.n_users):
        lk = config.n_streams[k]
        F = C[k] @ channel_hat.per_user[k]
        kept = L - offs[k]
        A = np.zeros((kept * lk, config.n_tx * L), dtype=complex)
        for c in range(kept):
            col = offs[k] + c
            A[c * lk:(c + 1) * lk, col * config.n_tx:(col + 1) * config.n_tx] = F
        target = np.zeros((lk, kept), dtype=complex)
        target[:, :lk] = np.eye(lk)
        g = target.reshape(-1, order="F")
        pieces.append((A, g))
        AtA += A.conj().T @ A
        Atg += A.conj().T @ g

    def solve_at(nu):
        return np.linalg.solve(AtA + nu * np.eye(AtA.shape[0]) +
                               1e-14 * np.eye(AtA.shape[0]), Atg)

    b = solve_at(0.0)
    if np.sum(np.abs(b) ** 2) > power_limit:
        lo, hi = 0.0, 1.0
        while np.sum(np.abs(solve_at(hi)) ** 2) > power_limit:
            hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.sum(np.abs(solve_at(mid)) ** 2) > power_limit:
                lo = mid
            else:
                hi = mid
        b = solve_at(hi)
    return sum(float(np.sum(np.abs(A @ b - g) ** 2)) for A, g in pieces)


class TestCertificateBlocks:
    def test_zero_radius_reduces_to_schur(self):
        cfg = small_config()
        hhat = sample_channel(cfg, seed=1)
        tx = identity_transceiver(cfg, power=2.0)
        D = np.kron(tx.B.T, tx.C[0])
        a = D @ hhat.per_user[0].reshape(-1, order="F") \
            - tx.gbar(0).reshape(-1, order="F")
        need = float(np.sum(np.abs(a) ** 2))
        M = build_Mk(need + 1e-9, 0.0, tx.B, tx.gbar(0), tx.C[0],
                     hhat.per_user[0], 0.0)
        assert np.linalg.eigvalsh(M).min() >= -1e-12
        M = build_Mk(need - 1e-3, 0.0, tx.B, tx.gbar(0), tx.C[0],
                     hhat.per_user[0], 0.0)
        assert np.linalg.eigvalsh(M).min() < 0

    def test_negative_slack_never_psd(self):
        cfg = small_config()
        hhat = sample_channel(cfg, seed=2)
        tx = identity_transceiver(cfg, power=1.0)
        for beta in (0.0, 0.5, 3.0):
            M = build_Mk(-1e-6, beta, tx.B, tx.gbar(0), tx.C[0],
                         hhat.per_user[0], 0.1)
            assert np.linalg.eigvalsh(M).min() < 0

    def test_bg_certificates_dominate_sampled_ball(self):
        cfg = small_config(noise_var=0.01)
        hhat = sample_channel(cfg, seed=3)
        tx0 = identity_transceiver(cfg)
        params = NbeDesignParams(delta=0.15, power_limit=5.0)
        res = solve_bg_subproblem(tx0.C, hhat, cfg, params)
        chk = Transceiver(B=res.B, feedback=res.feedback, C=tx0.C)
        for k in range(cfg.n_users):
            worst = sampled_residual_max(res.B, chk.gbar(k), tx0.C[k],
                                         hhat.per_user[k], 0.15, seed=10 + k)
            assert worst <= res.slacks.t[k] + 1e-6

    def test_c_certificates_dominate_sampled_ball(self):
        cfg = small_config(noise_var=0.05)
        hhat = sample_channel(cfg, seed=4)
        tx0 = identity_transceiver(cfg, power=3.0)
        params = NbeDesignParams(delta=0.1, power_limit=3.0)
        res = solve_c_subproblem(tx0.B, tx0.feedback, hhat, cfg, params)
        for k in range(cfg.n_users):
            worst = sampled_residual_max(tx0.B, tx0.gbar(k), res.C[k],
                                         hhat.per_user[k], 0.1, seed=20 + k,
                                         noise_var=cfg.noise_var)
            assert worst <= res.slacks.s[k] + 1e-6
        assert all(m >= -1e-9 for m in res.slacks.multipliers["lambda"])

    def test_nk_block_is_affine_in_receiver(self):
        """Evaluation-based extraction relies on exact affinity."""
        cfg = small_config()
        hhat = sample_channel(cfg, seed=5)
        tx = identity_transceiver(cfg, power=2.0)
        rng = np.random.default_rng(6)

        def at(c_mat):
            return build_Nk(0.7, 0.3, tx.B, tx.gbar(0), c_mat,
                            hhat.per_user[0], 0.1, cfg.noise_var)

        c0 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        c1 = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        mid = at(0.5 * (c0 + c1))
        np.testing.assert_allclose(mid, 0.5 * (at(c0) + at(c1)), atol=1e-12)


class TestBgSubproblem:
    def test_feasible_for_tiny_power(self):
        cfg = small_config()
        hhat = sample_channel(cfg, seed=11)
        tx0 = identity_transceiver(cfg)
        params = NbeDesignParams(delta=0.2, power_limit=1e-6)
        res = solve_bg_subproblem(tx0.C, hhat, cfg, params)
        assert res.status == "optimal"
        assert float(np.sum(np.abs(res.B) ** 2)) <= 1e-6 + 1e-8

    def test_power_cap_respected(self):
        cfg = small_config()
        hhat = sample_channel(cfg, seed=12)
        tx0 = identity_transceiver(cfg)
        params = NbeDesignParams(delta=0.1, power_limit=2.0)
        res = solve_bg_subproblem(tx0.C, hhat, cfg, params)
        assert float(np.sum(np.abs(res.B) ** 2)) <= 2.0 + 1e-6

    def test_zero_radius_matches_masked_least_squares(self):
        cfg = small_config(noise_var=0.2)
        for seed in (13, 14):
            hhat = sample_channel(cfg, seed=seed)
            tx0 = identity_transceiver(cfg)
            for power in (0.5, 50.0):
                params = NbeDesignParams(delta=0.0, power_limit=power)
                res = solve_bg_subproblem(tx0.C, hhat, cfg, params)
                ref = masked_joint_ls(tx0.C, hhat, cfg, power)
                assert abs(res.objective - ref) <= 1e-3 * (1 + ref)

    def test_per_antenna_rows_and_zero_row(self):
        cfg = small_config()
        hhat = sample_channel(cfg, seed=15)
        tx0 = identity_transceiver(cfg)
        lims = (0.5, 0.5, 0.0, 0.5)
        params = NbeDesignParams(delta=0.1, per_antenna_limits=lims)
        res = solve_bg_subproblem(tx0.C, hhat, cfg, params)
        rows = np.sum(np.abs(res.B) ** 2, axis=1)
        assert np.all(rows <= np.array(lims) + 1e-6)
        assert rows[2] <= 1e-8

    def test_per_antenna_objective_no_better_than_total(self):
        """Equal per-antenna caps carve a subset of the total-power ball."""
        cfg = small_config()
        hhat = sample_channel(cfg, seed=16)
        tx0 = identity_transceiver(cfg)
        total = solve_bg_subproblem(
            tx0.C, hhat, cfg, NbeDesignParams(delta=0.1, power_limit=4.0))
        per = solve_bg_subproblem(
            tx0.C, hhat, cfg,
            NbeDesignParams(delta=0.1, per_antenna_limits=(1.0,) * 4))
        assert per.objective >= total.objective - 1e-6


class TestCSubproblem:
    def test_near_zero_noise_reduces_to_least_squares(self):
        cfg = SystemConfig(n_tx=4, n_rx=(2, 2), n_streams=(2, 2),
                           noise_var=1e-9)
        hhat = sample_channel(cfg, seed=21)
        tx0 = identity_transceiver(cfg, power=2.0)
        params = NbeDesignParams(delta=0.0, power_limit=2.0)
        res = solve_c_subproblem(tx0.B, tx0.feedback, hhat, cfg, params)
        for k in range(cfg.n_users):
            HB = hhat.per_user[k] @ tx0.B
            g = tx0.gbar(k)
            resid = g - g @ np.linalg.pinv(HB) @ HB
            ref = float(np.sum(np.abs(resid) ** 2))
            assert abs(res.slacks.s[k] - ref) <= 1e-6 + 1e-3 * ref

    def test_caps_enforced(self):
        cfg = small_config(noise_var=0.003)
        hhat = sample_channel(cfg, seed=22)
        params = NbeDesignParams(delta=0.05, mse_targets=(0.4, 0.4))
        bg = solve_bg_subproblem(identity_transceiver(cfg).C, hhat, cfg,
                                 params, mode="power-min")
        assert bg.status == "optimal"
        res = solve_c_subproblem(bg.B, bg.feedback, hhat, cfg, params,
                                 caps=(0.4, 0.4))
        assert all(s <= 0.4 + 1e-7 for s in res.slacks.s)


class TestSmseDesign:
    def test_monotone_and_certified(self):
        cfg = small_config(noise_var=0.1)
        for seed in (31, 32):
            hhat = sample_channel(cfg, seed=seed)
            params = NbeDesignParams(delta=0.12, power_limit=10 ** 1.5,
                                     max_iters=5)
            tx, trace = nbe_smse_design(hhat, cfg, params)
            assert trace.is_monotone(1e-9)
            assert trace.n_iterations == len(trace.objectives)
            assert tx.power <= params.power_limit + 1e-6
            wc = sum(worst_case_user_mse(tx, hhat, k, 0.12,
                                         cfg.noise_var).value
                     for k in range(cfg.n_users))
            assert wc <= trace.objectives[-1] + 1e-6

    def test_zero_radius_matches_stochastic_design(self):
        cfg = small_config(noise_var=0.1)
        hhat = sample_channel(cfg, seed=33)
        power = 10.0
        nbe_p = NbeDesignParams(delta=0.0, power_limit=power,
                                threshold=1e-5, max_iters=80)
        _, nbe_tr = nbe_smse_design(hhat, cfg, nbe_p)
        se_p = SeDesignParams(error_var=0.0, power_limit=power,
                              threshold=1e-5, max_iters=80)
        _, se_tr = se_design(hhat, cfg, se_p)
        assert abs(nbe_tr.objectives[-1] - se_tr.objectives[-1]) <= 2e-3

    def test_per_antenna_design(self):
        cfg = small_config(noise_var=0.1)
        hhat = sample_channel(cfg, seed=34)
        params = NbeDesignParams(delta=0.1, per_antenna_limits=(0.8,) * 4,
                                 max_iters=4)
        tx, trace = nbe_smse_design_per_antenna(hhat, cfg, params)
        assert trace.is_monotone(1e-9)
        rows = np.sum(np.abs(tx.B) ** 2, axis=1)
        assert np.all(rows <= 0.8 + 1e-6)

    def test_exactly_one_power_mode_required(self):
        cfg = small_config()
        hhat = sample_channel(cfg, seed=35)
        with pytest.raises(ValueError):
            nbe_smse_design(hhat, cfg, NbeDesignParams(delta=0.1))
        with pytest.raises(ValueError):
            nbe_smse_design(hhat, cfg, NbeDesignParams(
                delta=0.1, power_limit=1.0, per_antenna_limits=(1.0,) * 4))
        with pytest.raises(ValueError):
            nbe_smse_design_per_antenna(hhat, cfg, NbeDesignParams(
                delta=0.1, power_limit=1.0))


class TestConstrainedDesign:
    def test_slack_targets_need_no_power(self):
        cfg = small_config(noise_var=0.003)
        hhat = sample_channel(cfg, seed=41)
        params = NbeDesignParams(delta=0.1, mse_targets=(1e3, 1e3),
                                 max_iters=3)
        tx, trace, feasible = mse_constrained_design(hhat, cfg, params)
        assert feasible
        assert trace.objectives[-1] <= 1e-6

    def test_infeasible_verdict(self):
        cfg = small_config(noise_var=0.003)
        hhat = sample_channel(cfg, seed=42)
        params = NbeDesignParams(delta=0.3, mse_targets=(0.01, 0.01))
        tx, trace, feasible = mse_constrained_design(hhat, cfg, params)
        assert not feasible
        assert trace.termination == "infeasible"
        assert trace.objectives == ()
        assert trace.n_iterations == 0
        assert not check_feasibility(hhat, cfg, params)

    def test_feasible_run_meets_targets(self):
        cfg = small_config(noise_var=0.003)
        hhat = sample_channel(cfg, seed=44)
        eta = 0.25
        params = NbeDesignParams(delta=0.1, mse_targets=(eta, eta),
                                 threshold=1e-2, max_iters=25)
        tx, trace, feasible = mse_constrained_design(hhat, cfg, params)
        assert feasible
        assert check_feasibility(hhat, cfg, params)
        assert trace.is_monotone(1e-9)
        for k in range(cfg.n_users):
            wc = worst_case_user_mse(tx, hhat, k, 0.1, cfg.noise_var).value
            assert wc <= eta + 1e-4
        assert abs(tx.power - trace.objectives[-1]) <= 1e-6


class TestBalancingDesign:
    def test_monotone_certified_and_capped(self):
        cfg = small_config(noise_var=0.01)
        hhat = sample_channel(cfg, seed=51)
        params = NbeDesignParams(delta=0.1, power_limit=8.0,
                                 threshold=1e-4, max_iters=8)
        tx, trace = mse_balancing_design(hhat, cfg, params)
        assert trace.is_monotone(1e-9)
        assert tx.power <= 8.0 + 1e-6
        worst = max(worst_case_user_mse(tx, hhat, k, 0.1,
                                        cfg.noise_var).value
                    for k in range(cfg.n_users))
        assert worst <= trace.objectives[-1] + 1e-6

    def test_more_power_never_hurts_first_step(self):
        cfg = small_config(noise_var=0.01)
        hhat = sample_channel(cfg, seed=52)
        tx0 = identity_transceiver(cfg)
        vals = []
        for power in (1.0, 4.0, 16.0):
            res = solve_bg_subproblem(
                tx0.C, hhat, cfg,
                NbeDesignParams(delta=0.1, power_limit=power),
                mode="balance")
            vals.append(res.objective)
        assert vals[0] >= vals[1] - 1e-7 >= vals[2] - 2e-7

    def test_requires_power_limit(self):
        cfg = small_config()
        hhat = sample_channel(cfg, seed=53)
        with pytest.raises(ValueError):
            mse_balancing_design(hhat, cfg, NbeDesignParams(delta=0.1))


class TestFeasibilityReport:
    def test_fraction(self):
        rep = FeasibilityReport(verdicts=(True, False, True, False))
        assert rep.fraction_infeasible == 0.5
        assert FeasibilityReport(verdicts=()).fraction_infeasible == 0.0
        assert FeasibilityReport(verdicts=(1, 0, 1)).verdicts == (True, False, True)


class TestParams:
    def test_delta_broadcast_and_validation(self):
        p = NbeDesignParams(delta=0.1, power_limit=1.0)
        assert p.radii(3) == (0.1, 0.1, 0.1)
        p2 = NbeDesignParams(delta=(0.1, 0.2), power_limit=1.0)
        assert p2.radii(2) == (0.1, 0.2)
        with pytest.raises(ValueError):
            p2.radii(3)
        with pytest.raises(ValueError):
            NbeDesignParams(delta=-0.1, power_limit=1.0)

    def test_target_validation(self):
        p = NbeDesignParams(delta=0.1, mse_targets=0.3)
        assert p.targets(2) == (0.3, 0.3)
        with pytest.raises(ValueError):
            NbeDesignParams(delta=0.1, mse_targets=(0.0,))
        with pytest.raises(ValueError):
            NbeDesignParams(delta=0.1, power_limit=1.0).targets(2)
