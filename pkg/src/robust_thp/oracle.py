"""Independent evaluation oracles for robust designs.

worst_case_user_mse maximizes user k's MSE over the CSIT error ball
||e_k|| <= delta exactly, by solving the stationarity system of the
quadratic-over-sphere problem, or approximately by sampling with ascent
refinement.  The exact route never calls the conic solver, so it can
audit certificates produced by the design modules.

mc_expected_smse estimates the error-averaged SMSE by plain Monte
Carlo for auditing the analytic average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Channel, smse, vectorized_residual
from .sampling import complex_gaussian, sphere_points


@dataclass(frozen=True)
class WorstCaseResult:
    """Maximum MSE over the error ball, the maximizing error, method tag."""

    value: float
    error: np.ndarray
    method: str
    evaluations: int = 0


def _quadratic_value(Q, q, r0_sq, e):
    return float(np.real(np.vdot(e, Q @ e)) + 2.0 * np.real(np.vdot(q, e)) + r0_sq)


def _exact_ball_max(D, r0, delta):
    """Maximize ||r0 + D e||^2 over ||e|| <= delta.

    The maximum of this convex quadratic sits on the sphere and solves
    (nu I - Q) e = q with Q = D^H D, q = D^H r0 and nu >= lambda_max(Q).
    Bisection on nu handles the generic case; when q is (numerically)
    orthogonal to the top eigenspace the solution gains a component
    along the top eigenvector instead.
    """
    n = D.shape[1]
    r0_sq = float(np.sum(np.abs(r0) ** 2))
    if delta == 0.0 or n == 0:
        return r0_sq, np.zeros(n, dtype=complex)
    Q = D.conj().T @ D
    q = D.conj().T @ r0
    lam, U = np.linalg.eigh(Q)
    lam_max = float(lam[-1])
    qt = U.conj().T @ q
    eps = 1e-12 * (1.0 + lam_max)
    lo = lam_max + eps
    hi = lam_max + float(np.linalg.norm(q)) / delta + eps

    def norm_sq(nu):
        return float(np.sum(np.abs(qt) ** 2 / (nu - lam) ** 2))

    if norm_sq(lo) < delta ** 2:
        # hard case: complete with a top-eigenspace direction
        coeff = np.where(lam_max - lam > eps, qt / (lo - lam), 0.0)
        e_base = U @ coeff
        tau = math.sqrt(max(delta ** 2 - float(np.sum(np.abs(e_base) ** 2)), 0.0))
        u_top = U[:, -1]
        phase = 1.0
        overlap = np.vdot(u_top, q)
        if abs(overlap) > 0:
            phase = overlap / abs(overlap)
        e = e_base + tau * phase * u_top
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if norm_sq(mid) >= delta ** 2:
                lo = mid
            else:
                hi = mid
        e = U @ (qt / (0.5 * (lo + hi) - lam))
    norm = float(np.linalg.norm(e))
    if norm > 0:
        e = e * (delta / norm)
    return _quadratic_value(Q, q, r0_sq, e), e


def _sampled_ball_max(D, r0, delta, budget, seed):
    """Sphere sampling plus ascent refinement within an evaluation budget.

    Refinement repeats the conditional-gradient step
    e <- delta * (Q e + q) / ||Q e + q||, which never decreases the
    convex objective, from the best raw samples and a few informed
    starts.
    """
    n = D.shape[1]
    r0_sq = float(np.sum(np.abs(r0) ** 2))
    if delta == 0.0 or n == 0:
        return r0_sq, np.zeros(n, dtype=complex), 0
    Q = D.conj().T @ D
    q = D.conj().T @ r0
    rng = np.random.default_rng(seed)

    n_raw = max(int(0.8 * budget), 1)
    pts = sphere_points(rng, n, delta, n_raw)
    vals = (np.real(np.einsum("ij,jk,ik->i", pts.conj(), Q, pts))
            + 2.0 * np.real(pts.conj() @ q) + r0_sq)
    used = n_raw

    order = np.argsort(vals)[::-1]
    starts = [pts[i] for i in order[:6]]
    if np.linalg.norm(q) > 0:
        starts.append(delta * q / np.linalg.norm(q))
    lam, U = np.linalg.eigh(Q)
    starts.append(delta * U[:, -1])
    starts.append(-delta * U[:, -1])

    best_val = float(vals[order[0]])
    best_e = pts[order[0]]
    per_start = max((budget - used) // max(len(starts), 1), 1)
    for e in starts:
        val = _quadratic_value(Q, q, r0_sq, e)
        for _ in range(per_start):
            grad = Q @ e + q
            gnorm = float(np.linalg.norm(grad))
            used += 1
            if gnorm == 0.0:
                break
            e_next = delta * grad / gnorm
            val_next = _quadratic_value(Q, q, r0_sq, e_next)
            if val_next <= val + 1e-15 * (1.0 + abs(val)):
                e, val = e_next, val_next
                break
            e, val = e_next, val_next
        if val > best_val:
            best_val, best_e = val, e
    return best_val, best_e, used


def worst_case_residual(D, r0, delta, method="exact", budget=100_000, seed=0):
    """Maximize ||r0 + D e||^2 over the ball ||e|| <= delta."""
    D = np.asarray(D, dtype=complex)
    r0 = np.asarray(r0, dtype=complex).reshape(-1)
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if method == "exact":
        val, e = _exact_ball_max(D, r0, delta)
        return WorstCaseResult(value=val, error=e, method="exact")
    if method == "sampled":
        val, e, used = _sampled_ball_max(D, r0, delta, budget, seed)
        return WorstCaseResult(value=val, error=e, method="sampled",
                               evaluations=used)
    raise ValueError(f"unknown method {method!r}")


def worst_case_user_mse(tx, channel_hat, k, delta, noise_var,
                        method="exact", budget=100_000, seed=0):
    """Worst-case MSE of user k over its CSIT error ball,

        max_{||e_k|| <= delta} ||D_k (hhat_k + e_k) - gbar_k||^2
                               + noise_var ||C_k||_F^2.
    """
    D_k, r0 = vectorized_residual(tx, channel_hat.per_user[k], k)
    noise_term = noise_var * float(np.sum(np.abs(tx.C[k]) ** 2))
    res = worst_case_residual(D_k, r0, delta, method=method,
                              budget=budget, seed=seed)
    return WorstCaseResult(value=res.value + noise_term, error=res.error,
                           method=res.method, evaluations=res.evaluations)


def worst_case_smse(tx, channel_hat, delta, noise_var, method="exact",
                    budget=100_000, seed=0):
    """Sum of per-user worst cases (error balls are independent)."""
    if np.isscalar(delta):
        delta = (delta,) * tx.n_users
    return float(sum(
        worst_case_user_mse(tx, channel_hat, k, float(d), noise_var,
                            method=method, budget=budget, seed=(seed, k)).value
        for k, d in enumerate(delta)
    ))


@dataclass(frozen=True)
class McSmseResult:
    mean: float
    stderr: float
    n_samples: int


def mc_expected_smse(tx, channel_hat, error_var, noise_var,
                     n_samples=10_000, seed=0, per_entry_variance=True):
    """Monte Carlo estimate of the error-averaged SMSE.

    Draws Gaussian CSIT errors, evaluates the exact per-realization
    SMSE, and returns mean and standard error.  The default draws use
    per-entry variance error_var, the convention under which the
    analytic average is exact; per_entry_variance=False selects the
    error_var / n_tx scaling instead.
    """
    rng = np.random.default_rng(seed)
    var = error_var if per_entry_variance else error_var / channel_hat.n_tx
    draws = np.empty(n_samples)
    for i in range(n_samples):
        real = Channel(per_user=tuple(
            h + complex_gaussian(rng, h.shape, var)
            for h in channel_hat.per_user))
        draws[i] = smse(tx, real, noise_var)
    return McSmseResult(
        mean=float(np.mean(draws)),
        stderr=float(np.std(draws, ddof=1) / math.sqrt(n_samples)),
        n_samples=n_samples,
    )
