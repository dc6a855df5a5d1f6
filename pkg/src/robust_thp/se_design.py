"""Alternating transceiver design under stochastic CSIT errors.

The objective is the error-averaged sum MSE

    mu(B, C, G) = sum_k ||C_k Hhat_k B - Gbar_k||_F^2
                  + (error_var ||B||_F^2 + noise_var) sum_k ||C_k||_F^2,

minimized by cycling a power-constrained precoder step (a small conic
program), a closed-form receiver update, and a closed-form feedback
update.  With error_var = 0 the routine reduces to a non-robust design
against the channel estimate, which doubles as the baseline in the
experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import ConeProgram, NonnegBlock, RsocBlock, solve
from .model import Transceiver, averaged_smse, identity_transceiver


class SolverFailure(RuntimeError):
    """Raised when a conic subproblem does not reach an optimal status."""

    def __init__(self, context, outcome):
        super().__init__(f"{context}: solver status {outcome.status}")
        self.context = context
        self.outcome = outcome


@dataclass(frozen=True)
class SeDesignParams:
    """Knobs of the stochastic-error design.

    error_var is the variance weight in the averaged objective,
    power_limit bounds ||B||_F^2, and receiver_variant selects the
    interference sum in the receiver update: "stationarity-consistent"
    sums over j >= k (the fixed point of the alternation), while
    "later-streams" sums over j > k only.
    """

    error_var: float
    power_limit: float
    threshold: float = 1e-3
    max_iters: int = 50
    receiver_variant: str = "stationarity-consistent"
    solver_tol: float = 1e-7

    def __post_init__(self):
        if self.error_var < 0:
            raise ValueError("error_var must be nonnegative")
        if not self.power_limit > 0:
            raise ValueError("power_limit must be positive")
        if self.receiver_variant not in ("stationarity-consistent", "later-streams"):
            raise ValueError("unknown receiver_variant")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass(frozen=True)
class DesignTrace:
    """Objective values per iteration, termination verdict, final point.

    For the stochastic-error design objectives[0] is the starting
    objective with one entry per completed iteration; the worst-case
    designs record one certified value per iteration and no start.
    n_iterations counts completed iterations in either case.
    termination is threshold | max-iterations | solver-failure, plus
    infeasible for the target-constrained design.
    """

    objectives: tuple
    termination: str
    transceiver: Transceiver
    stats: tuple = ()
    n_iterations: int = None

    def __post_init__(self):
        if self.n_iterations is None:
            object.__setattr__(self, "n_iterations",
                               max(len(self.objectives) - 1, 0))

    def is_monotone(self, slack=1e-9):
        return all(b <= a + slack
                   for a, b in zip(self.objectives, self.objectives[1:]))


def _real_stack(mat):
    """[[Re, -Im], [Im, Re]] acting on stacked [Re x; Im x] vectors."""
    return np.block([[mat.real, -mat.imag], [mat.imag, mat.real]])


def se_feedback_update(B, C, channel_hat):
    """Closed-form feedback blocks G_kj = C_k Hhat_k B_j for j < k."""
    sizes = tuple(c.shape[0] for c in C)
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    fb = []
    for k in range(len(C)):
        eff = C[k] @ channel_hat.per_user[k] @ B
        fb.append(tuple(eff[:, offs[j]:offs[j + 1]] for j in range(k)))
    return tuple(fb)


def se_receiver_update(B, channel_hat, config, error_var,
                       variant="stationarity-consistent"):
    """MMSE-style receiver filters for fixed precoder.

        C_k = B_k^H Hhat_k^H ( Hhat_k (sum_j B_j B_j^H) Hhat_k^H
              + (noise_var + error_var ||B||_F^2) I )^{-1}

    with the sum over j >= k (stationarity-consistent) or j > k
    (later-streams).
    """
    offs = np.concatenate([[0], np.cumsum(config.n_streams)]).astype(int)
    load = config.noise_var + error_var * float(np.sum(np.abs(B) ** 2))
    C = []
    for k in range(config.n_users):
        start = offs[k] if variant == "stationarity-consistent" else offs[k + 1]
        tail = B[:, start:]
        Hk = channel_hat.per_user[k]
        S = Hk @ tail @ tail.conj().T @ Hk.conj().T \
            + load * np.eye(config.n_rx[k])
        Bk = B[:, offs[k]:offs[k + 1]]
        C.append(np.linalg.solve(S, Hk @ Bk).conj().T)
    return tuple(C)


def se_precoder_step(C, feedback, channel_hat, config, error_var,
                     power_limit, tol=1e-7):
    """Power-constrained precoder update as a small conic program.

    With b = vec(B) the averaged objective is separable as

        minimize  sum_k t_k + error_var ||C_k||_F^2 r_k
        s.t.      ||(I kron C_k Hhat_k) b - vec(Gbar_k)||^2 <= t_k,
                  ||b||^2 <= r_k,   r_k <= power_limit,

    using rotated second-order cones.  The constant noise term is not
    part of the program.  Raises SolverFailure when the backend fails.
    """
    M = config.n_users
    L = config.total_streams
    nb = 2 * config.n_tx * L
    n = nb + 2 * M  # [b_re, b_im, t_1..t_M, r_1..r_M]
    t_at = nb
    r_at = nb + M

    ref = Transceiver(B=np.zeros((config.n_tx, L), dtype=complex),
                      feedback=feedback, C=C)
    obj = np.zeros(n)
    blocks = []
    for k in range(M):
        obj[t_at + k] = 1.0
        obj[r_at + k] = error_var * float(np.sum(np.abs(C[k]) ** 2))

        A_k = np.kron(np.eye(L), C[k] @ channel_hat.per_user[k])
        Ar = _real_stack(A_k)
        g = ref.gbar(k).reshape(-1, order="F")
        gr = np.concatenate([g.real, g.imag])
        rows = 2 + Ar.shape[0]
        off = np.zeros(rows)
        co = np.zeros((rows, n))
        co[0, t_at + k] = 1.0
        off[1] = 1.0
        off[2:] = -gr
        co[2:, :nb] = Ar
        blocks.append(RsocBlock(offset=off, coeffs=co))

        rows = 2 + nb
        off = np.zeros(rows)
        co = np.zeros((rows, n))
        co[0, r_at + k] = 1.0
        off[1] = 1.0
        co[2:, :nb] = np.eye(nb)
        blocks.append(RsocBlock(offset=off, coeffs=co))

    cap = NonnegBlock(offset=np.full(M, power_limit),
                      coeffs=np.zeros((M, n)))
    for k in range(M):
        cap.coeffs[k, r_at + k] = -1.0
    blocks.append(cap)

    prog = ConeProgram(n_vars=n, objective=obj, blocks=blocks)
    out = solve(prog, tol=tol)
    if not out.ok:
        raise SolverFailure("precoder step", out)
    br = out.x[:nb]
    b = br[:nb // 2] + 1j * br[nb // 2:]
    return b.reshape(config.n_tx, L, order="F")


def se_design(channel_hat, config, params):
    """Alternating stochastic-error design from the scaled-identity start.

    Runs precoder step, receiver update, feedback update per iteration
    until successive objective values differ by less than
    params.threshold or the iteration cap is reached.  The precoder
    step keeps the previous iterate whenever solver inexactness would
    raise the objective, so the recorded sequence is nonincreasing.  On
    a mid-run solver failure the best iterate so far is returned with
    termination reason "solver-failure".
    """
    tx = identity_transceiver(config, power=params.power_limit)
    mu = averaged_smse(tx, channel_hat, params.error_var, config.noise_var)
    objectives = [mu]
    stats = []
    termination = "max-iterations"
    for _ in range(params.max_iters):
        info = {}
        try:
            B_cand = se_precoder_step(tx.C, tx.feedback, channel_hat, config,
                                      params.error_var, params.power_limit,
                                      tol=params.solver_tol)
        except SolverFailure as exc:
            info["b_step"] = exc.outcome.status
            stats.append(info)
            termination = "solver-failure"
            break
        cand = Transceiver(B=B_cand, feedback=tx.feedback, C=tx.C)
        mu_cand = averaged_smse(cand, channel_hat, params.error_var,
                                config.noise_var)
        if mu_cand <= mu:
            tx = cand
            info["b_step"] = "optimal"
        else:
            info["b_step"] = "kept-previous"
        info["mu_after_b"] = min(mu_cand, mu)

        C = se_receiver_update(tx.B, channel_hat, config, params.error_var,
                               variant=params.receiver_variant)
        fb = se_feedback_update(tx.B, C, channel_hat)
        cand = Transceiver(B=tx.B, feedback=fb, C=C)
        mu_new = averaged_smse(cand, channel_hat, params.error_var,
                               config.noise_var)
        if mu_new <= info["mu_after_b"]:
            tx = cand
        else:
            # possible only for the later-streams variant, whose update
            # is not the block minimizer
            mu_new = info["mu_after_b"]
        info["mu_after_cg"] = mu_new
        stats.append(info)
        objectives.append(mu_new)
        if abs(mu - mu_new) < params.threshold:
            mu = mu_new
            termination = "threshold"
            break
        mu = mu_new
    return tx, DesignTrace(objectives=tuple(objectives),
                           termination=termination,
                           transceiver=tx,
                           stats=tuple(stats))
