"""Worst-case transceiver designs for norm-bounded CSIT errors.

Each design alternates two conic subproblems built from the same
uncertain inequality: user k's MSE must stay below a slack for every
error ||e_k|| <= delta_k.  The lift of that inequality (see
conic.robust_lmi_lift) yields, with multiplier beta_k,

    M_k = [[t_k - beta_k, a_k^H,      0        ],
           [a_k,          I,          -delta D_k],
           [0,            -delta D_k^H, beta_k I]]  >= 0,

with a_k the nominal residual.  The precoder/feedback subproblem keeps
C fixed and optimizes (b, g, t, beta); the receive-filter subproblem
keeps (B, G) fixed, stacks the noise term sigma_n c_k into the
residual, and optimizes (c_k, s_k, lambda_k) per user.

Four designs reuse these pieces: worst-case SMSE minimization under a
total or per-antenna power budget, power minimization under per-user
MSE targets (which can be genuinely infeasible), and MSE balancing
under a power budget.  Every alternation step compares the freshly
certified objective against the bound transferred from the previous
certificate and keeps the better iterate, so recorded objective
sequences are nonincreasing even at solver tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conic import (
    ConeProgram,
    NonnegBlock,
    RobustLmiSpec,
    SocBlock,
    hermitian_psd_block,
    robust_lmi_lift,
    schur_lift,
    solve,
)
from .model import Transceiver, identity_transceiver
from .se_design import DesignTrace, SolverFailure


@dataclass(frozen=True)
class NbeDesignParams:
    """Knobs shared by the norm-bounded-error designs.

    delta holds per-user error radii (a scalar is broadcast).  Exactly
    one of power_limit / per_antenna_limits applies to the SMSE design;
    mse_targets holds the eta_k of the power-minimization design.
    """

    delta: tuple
    power_limit: float = None
    per_antenna_limits: tuple = None
    mse_targets: tuple = None
    threshold: float = 1e-3
    max_iters: int = 50
    solver_tol: float = 1e-7

    def __post_init__(self):
        d = self.delta
        if np.isscalar(d):
            d = (float(d),)
        object.__setattr__(self, "delta", tuple(float(v) for v in d))
        if any(v < 0 for v in self.delta):
            raise ValueError("delta must be nonnegative")
        if self.power_limit is not None and not self.power_limit > 0:
            raise ValueError("power_limit must be positive")
        if self.per_antenna_limits is not None:
            lims = tuple(float(v) for v in self.per_antenna_limits)
            if any(v < 0 for v in lims):
                raise ValueError("per-antenna limits must be nonnegative")
            object.__setattr__(self, "per_antenna_limits", lims)
        if self.mse_targets is not None:
            tg = self.mse_targets
            if np.isscalar(tg):
                tg = (float(tg),)
            tg = tuple(float(v) for v in tg)
            if any(v <= 0 for v in tg):
                raise ValueError("mse_targets must be positive")
            object.__setattr__(self, "mse_targets", tg)
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    def radii(self, n_users):
        if len(self.delta) == n_users:
            return self.delta
        if len(self.delta) == 1:
            return self.delta * n_users
        raise ValueError("delta length must be 1 or the user count")

    def targets(self, n_users):
        if self.mse_targets is None:
            raise ValueError("mse_targets required for this design")
        if len(self.mse_targets) == n_users:
            return self.mse_targets
        if len(self.mse_targets) == 1:
            return self.mse_targets * n_users
        raise ValueError("mse_targets length must be 1 or the user count")


@dataclass(frozen=True)
class SubproblemSlacks:
    """Certified bounds returned by one subproblem solve.

    t: per-user worst-case residual bounds (precoder side, no noise
    term); s: per-user worst-case MSE bounds including noise (receiver
    side); r: power slack (norm of b); multipliers: the nonnegative
    lift multipliers actually used.
    """

    t: tuple = None
    s: tuple = None
    r: float = None
    multipliers: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FeasibilityReport:
    """Feasible/infeasible verdicts over a batch of channels."""

    verdicts: tuple

    def __post_init__(self):
        object.__setattr__(self, "verdicts", tuple(bool(v) for v in self.verdicts))

    @property
    def fraction_infeasible(self):
        if not self.verdicts:
            return 0.0
        return 1.0 - sum(self.verdicts) / len(self.verdicts)


def build_Mk(t_k, beta_k, B, gbar_k, C_k, hhat_k, delta_k):
    """Precoder-side certificate block for user k at numeric values.

    PSD of this block certifies ||D_k (hhat_k + e) - gbar_k||^2 <= t_k
    for every ||e|| <= delta_k, with multiplier beta_k >= 0.
    """
    D_k = np.kron(B.T, C_k)
    a = D_k @ hhat_k.reshape(-1, order="F") - gbar_k.reshape(-1, order="F")
    n = D_k.shape[1]
    P = np.hstack([np.zeros((n, 1), dtype=complex), D_k.conj().T])
    Q = np.zeros((1, 1 + D_k.shape[0]), dtype=complex)
    Q[0, 0] = 1.0
    spec = RobustLmiSpec(A=schur_lift(t_k, a), P=P, Q=Q, rho=delta_k)
    return robust_lmi_lift(spec, beta_k)


def build_Nk(s_k, lam_k, B, gbar_k, C_k, hhat_k, delta_k, noise_var):
    """Receiver-side certificate block for user k at numeric values.

    The residual gains the noise rows sqrt(noise_var) c_k, so PSD
    certifies the full worst-case MSE including the noise term.
    """
    D_k = np.kron(B.T, C_k)
    a = D_k @ hhat_k.reshape(-1, order="F") - gbar_k.reshape(-1, order="F")
    c = C_k.reshape(-1, order="F")
    r = np.concatenate([a, math.sqrt(noise_var) * c])
    gamma = np.vstack([D_k, np.zeros((c.shape[0], D_k.shape[1]))])
    n = D_k.shape[1]
    P = np.hstack([np.zeros((n, 1), dtype=complex), gamma.conj().T])
    Q = np.zeros((1, 1 + r.shape[0]), dtype=complex)
    Q[0, 0] = 1.0
    spec = RobustLmiSpec(A=schur_lift(s_k, r), P=P, Q=Q, rho=delta_k)
    return robust_lmi_lift(spec, lam_k)


def _affine_psd_block(n_vars, active, builder):
    """Extract the affine PSD block by evaluating builder at unit vectors."""
    zero = np.zeros(n_vars)
    base = builder(zero)
    terms = []
    for idx in active:
        unit = np.zeros(n_vars)
        unit[idx] = 1.0
        terms.append((idx, builder(unit) - base))
    return hermitian_psd_block(n_vars, base, terms)


class _BgLayout:
    """Variable bookkeeping for the precoder/feedback subproblem.

    Order: [Re b | Im b | per-user feedback (Re then Im) | per-design
    scalars (t_k or r, then beta_k)].
    """

    def __init__(self, config, mode):
        self.config = config
        self.mode = mode
        L = config.total_streams
        self.nb = config.n_tx * L
        self.g_slices = []
        at = 2 * self.nb
        offs = config.stream_offsets
        for k in range(config.n_users):
            size = config.n_streams[k] * offs[k]
            self.g_slices.append((at, size))
            at += 2 * size
        if mode == "smse":
            self.t_at = at
            at += config.n_users
            self.r_at = None
        else:
            self.r_at = at
            at += 1
            self.t_at = None
        self.beta_at = at
        at += config.n_users
        self.n_vars = at

    def decode(self, x):
        cfg = self.config
        L = cfg.total_streams
        b = x[:self.nb] + 1j * x[self.nb:2 * self.nb]
        B = b.reshape(cfg.n_tx, L, order="F")
        offs = cfg.stream_offsets
        fb = []
        for k in range(cfg.n_users):
            at, size = self.g_slices[k]
            g = x[at:at + size] + 1j * x[at + size:at + 2 * size]
            row = g.reshape(cfg.n_streams[k], offs[k], order="F")
            fb.append(tuple(row[:, offs[j]:offs[j] + cfg.n_streams[j]]
                            for j in range(k)))
        return B, tuple(fb)

    def gbar(self, x, k):
        cfg = self.config
        at, size = self.g_slices[k]
        g = x[at:at + size] + 1j * x[at + size:at + 2 * size]
        lk = cfg.n_streams[k]
        row = g.reshape(lk, cfg.stream_offsets[k], order="F")
        tail = cfg.total_streams - cfg.stream_offsets[k] - lk
        return np.hstack([row, np.eye(lk, dtype=complex),
                          np.zeros((lk, tail), dtype=complex)])

    def active_for_user(self, k):
        idx = list(range(2 * self.nb))
        at, size = self.g_slices[k]
        idx.extend(range(at, at + 2 * size))
        if self.t_at is not None:
            idx.append(self.t_at + k)
        else:
            idx.append(self.r_at)
        idx.append(self.beta_at + k)
        return idx


@dataclass(frozen=True)
class BgStepResult:
    B: np.ndarray
    feedback: tuple
    slacks: SubproblemSlacks
    objective: float
    status: str


def solve_bg_subproblem(C, channel_hat, config, params, mode="smse"):
    """Precoder/feedback subproblem at fixed receive filters.

    mode "smse": minimize sum_k t_k subject to the M_k certificates and
    the power budget (total ||b|| <= sqrt(P_max) or per-antenna rows).
    mode "power-min": minimize r subject to ||b|| <= r and certificates
    with corners eta_k - beta_k on the full MSE (noise rows included).
    mode "balance": minimize the uniform MSE bound r under the power
    budget, corners r - beta_k, noise rows included.

    Returns certified slacks; raises SolverFailure on backend failure
    and returns status "infeasible" (power-min only) when the target
    set is empty.
    """
    lay = _BgLayout(config, mode)
    deltas = params.radii(config.n_users)
    noise = config.noise_var
    n = lay.n_vars

    obj = np.zeros(n)
    if mode == "smse":
        obj[lay.t_at:lay.t_at + config.n_users] = 1.0
    else:
        obj[lay.r_at] = 1.0

    if mode == "power-min":
        targets = params.targets(config.n_users)

    blocks = []
    for k in range(config.n_users):
        hk = channel_hat.per_user[k]
        ck = C[k]

        def builder(x, k=k, hk=hk, ck=ck):
            B, _ = lay.decode(x)
            gbar = lay.gbar(x, k)
            beta = x[lay.beta_at + k]
            if mode == "smse":
                return build_Mk(x[lay.t_at + k], beta, B, gbar, ck, hk,
                                deltas[k])
            corner = targets[k] if mode == "power-min" else x[lay.r_at]
            return build_Nk(corner, lam_k=beta, B=B, gbar_k=gbar, C_k=ck,
                            hhat_k=hk, delta_k=deltas[k], noise_var=noise)

        blocks.append(_affine_psd_block(n, lay.active_for_user(k), builder))

    beta_block = NonnegBlock(offset=np.zeros(config.n_users),
                             coeffs=np.zeros((config.n_users, n)))
    for k in range(config.n_users):
        beta_block.coeffs[k, lay.beta_at + k] = 1.0
    blocks.append(beta_block)

    if mode == "power-min":
        off = np.zeros(1 + 2 * lay.nb)
        co = np.zeros((1 + 2 * lay.nb, n))
        co[0, lay.r_at] = 1.0
        co[1:, :2 * lay.nb] = np.eye(2 * lay.nb)
        blocks.append(SocBlock(offset=off, coeffs=co))
    elif params.per_antenna_limits is not None:
        if len(params.per_antenna_limits) != config.n_tx:
            raise ValueError("need one per-antenna limit per transmit antenna")
        L = config.total_streams
        for i in range(config.n_tx):
            rows = 1 + 2 * L
            off = np.zeros(rows)
            off[0] = math.sqrt(params.per_antenna_limits[i])
            co = np.zeros((rows, n))
            for col in range(L):
                co[1 + 2 * col, col * config.n_tx + i] = 1.0
                co[2 + 2 * col, lay.nb + col * config.n_tx + i] = 1.0
            blocks.append(SocBlock(offset=off, coeffs=co))
    else:
        if params.power_limit is None:
            raise ValueError("power_limit or per_antenna_limits required")
        off = np.zeros(1 + 2 * lay.nb)
        off[0] = math.sqrt(params.power_limit)
        co = np.zeros((1 + 2 * lay.nb, n))
        co[1:, :2 * lay.nb] = np.eye(2 * lay.nb)
        blocks.append(SocBlock(offset=off, coeffs=co))

    prog = ConeProgram(n_vars=n, objective=obj, blocks=blocks)
    out = solve(prog, tol=params.solver_tol)
    if out.status == "infeasible" and mode == "power-min":
        return BgStepResult(B=None, feedback=None,
                            slacks=SubproblemSlacks(), objective=math.inf,
                            status="infeasible")
    if not out.ok:
        raise SolverFailure(f"precoder/feedback subproblem ({mode})", out)

    B, fb = lay.decode(out.x)
    mults = tuple(float(out.x[lay.beta_at + k]) for k in range(config.n_users))
    mult_key = "mu" if mode == "balance" else "beta"
    if mode == "smse":
        t = tuple(float(out.x[lay.t_at + k]) for k in range(config.n_users))
        slacks = SubproblemSlacks(t=t, multipliers={mult_key: mults})
        objective = float(sum(t))
    else:
        r = float(out.x[lay.r_at])
        slacks = SubproblemSlacks(r=r, multipliers={mult_key: mults})
        objective = r
    return BgStepResult(B=B, feedback=fb, slacks=slacks,
                        objective=objective, status="optimal")


@dataclass(frozen=True)
class CStepResult:
    C: tuple
    slacks: SubproblemSlacks
    status: str


def solve_c_subproblem(B, feedback, channel_hat, config, params, caps=None):
    """Receive-filter subproblem at fixed precoder and feedback.

    Minimizes sum_k s_k over block-diagonal filters subject to the N_k
    certificates (noise rows included); the problem separates per user
    and each user's program is solved independently.  caps optionally
    upper-bounds each s_k (used by the power-minimization design to
    keep iterates feasible).
    """
    ref = Transceiver(B=B, feedback=feedback,
                      C=tuple(np.zeros((lk, nr), dtype=complex)
                              for lk, nr in zip(config.n_streams, config.n_rx)))
    deltas = params.radii(config.n_users)
    noise = config.noise_var
    C_out, s_out, lam_out = [], [], []
    for k in range(config.n_users):
        nc = config.n_streams[k] * config.n_rx[k]
        n = 2 * nc + 2  # [Re c, Im c, s, lam]
        s_at, lam_at = 2 * nc, 2 * nc + 1
        hk = channel_hat.per_user[k]
        gbar = ref.gbar(k)

        def builder(x, k=k, hk=hk, gbar=gbar, nc=nc, s_at=s_at, lam_at=lam_at):
            c = x[:nc] + 1j * x[nc:2 * nc]
            ck = c.reshape(config.n_streams[k], config.n_rx[k], order="F")
            return build_Nk(x[s_at], x[lam_at], B, gbar, ck, hk,
                            deltas[k], noise)

        blocks = [_affine_psd_block(n, range(n), builder)]
        lam_pos = NonnegBlock(offset=np.zeros(1), coeffs=np.zeros((1, n)))
        lam_pos.coeffs[0, lam_at] = 1.0
        blocks.append(lam_pos)
        if caps is not None:
            cap = NonnegBlock(offset=np.array([float(caps[k])]),
                              coeffs=np.zeros((1, n)))
            cap.coeffs[0, s_at] = -1.0
            blocks.append(cap)
        obj = np.zeros(n)
        obj[s_at] = 1.0
        out = solve(ConeProgram(n_vars=n, objective=obj, blocks=blocks),
                    tol=params.solver_tol)
        if not out.ok:
            raise SolverFailure(f"receive-filter subproblem (user {k})", out)
        c = out.x[:nc] + 1j * out.x[nc:2 * nc]
        C_out.append(c.reshape(config.n_streams[k], config.n_rx[k], order="F"))
        s_out.append(float(out.x[s_at]))
        lam_out.append(float(out.x[lam_at]))
    slacks = SubproblemSlacks(s=tuple(s_out),
                              multipliers={"lambda": tuple(lam_out)})
    return CStepResult(C=tuple(C_out), slacks=slacks, status="optimal")


def _noise_energy(C, noise_var):
    return noise_var * float(sum(np.sum(np.abs(c) ** 2) for c in C))


def nbe_smse_design(channel_hat, config, params, init=None):
    """Alternating worst-case SMSE minimization under a power budget.

    The recorded objective is the certified worst-case SMSE bound
    J = sum_k s_k (noise included).  Each subproblem result is guarded
    against the bound transferred from the previous certificate, so the
    sequence is nonincreasing by construction.

    init optionally supplies a transceiver whose receive filters seed
    the iteration (the precoder step runs first, so only C matters).
    Seeding with a nominal design keeps the first certified value at or
    below that design's exact worst case; the default conformable
    identity start can settle on much worse stationary points when the
    transmitter has spare antennas.
    """
    if (params.power_limit is None) == (params.per_antenna_limits is None):
        raise ValueError(
            "exactly one of power_limit / per_antenna_limits must be set")
    tx = init if init is not None else identity_transceiver(config)
    C = tx.C
    B, fb = tx.B * 0.0, tx.feedback
    t_bound = None  # certified per-user residual bounds for current (B, G, C)
    objectives = []
    termination = "max-iterations"
    iters = 0
    for _ in range(params.max_iters):
        try:
            bg = solve_bg_subproblem(C, channel_hat, config, params)
        except SolverFailure:
            termination = "solver-failure"
            break
        if t_bound is None or bg.objective <= sum(t_bound):
            B, fb, t = bg.B, bg.feedback, bg.slacks.t
        else:
            t = t_bound  # keep previous iterate, solver noise made it worse
        try:
            cs = solve_c_subproblem(B, fb, channel_hat, config, params)
        except SolverFailure:
            termination = "solver-failure"
            break
        noise = config.noise_var
        s_new, C_new = [], []
        for k in range(config.n_users):
            transfer = t[k] + noise * float(np.sum(np.abs(C[k]) ** 2))
            if cs.slacks.s[k] <= transfer:
                s_new.append(cs.slacks.s[k])
                C_new.append(cs.C[k])
            else:
                s_new.append(transfer)
                C_new.append(C[k])
        C = tuple(C_new)
        t_bound = tuple(s_new[k] - noise * float(np.sum(np.abs(C[k]) ** 2))
                        for k in range(config.n_users))
        J = float(sum(s_new))
        objectives.append(J)
        iters += 1
        if len(objectives) >= 2 and abs(objectives[-2] - J) < params.threshold:
            termination = "threshold"
            break
    tx = Transceiver(B=B, feedback=fb, C=C)
    return tx, DesignTrace(objectives=tuple(objectives),
                           termination=termination, transceiver=tx,
                           stats=(), n_iterations=iters)


def nbe_smse_design_per_antenna(channel_hat, config, params):
    """Worst-case SMSE design with per-antenna power limits."""
    if params.per_antenna_limits is None:
        raise ValueError("per_antenna_limits required")
    return nbe_smse_design(channel_hat, config, params)


def check_feasibility(channel_hat, config, params):
    """Feasibility verdict of the target-constrained design for one channel.

    Solves only the first-iteration precoder subproblem at the identity
    starting filters, which is exactly the event that decides the
    verdict; the batch feasibility experiment uses this instead of
    running the full alternation.
    """
    tx0 = identity_transceiver(config)
    bg = solve_bg_subproblem(tx0.C, channel_hat, config, params,
                             mode="power-min")
    return bg.status != "infeasible"


def mse_constrained_design(channel_hat, config, params):
    """Transmit-power minimization under per-user worst-case MSE targets.

    Returns (transceiver, trace, feasible).  The recorded objective is
    the transmit power r^2 after each precoder subproblem.  A solver
    infeasibility certificate at the first iteration yields
    feasible=False with termination reason "infeasible"; by
    construction later iterations stay feasible.
    """
    tx0 = identity_transceiver(config)
    C = tx0.C
    targets = params.targets(config.n_users)
    B, fb = None, None
    r_prev = None
    objectives = []
    termination = "max-iterations"
    iters = 0
    for it in range(params.max_iters):
        try:
            bg = solve_bg_subproblem(C, channel_hat, config, params,
                                     mode="power-min")
        except SolverFailure:
            termination = "solver-failure"
            break
        if bg.status == "infeasible":
            if it == 0:
                trace = DesignTrace(objectives=(), termination="infeasible",
                                    transceiver=tx0, stats=(), n_iterations=0)
                return tx0, trace, False
            # cannot happen for feasible instances: the previous iterate
            # remains feasible; treat defensively as a solver failure
            termination = "solver-failure"
            break
        if r_prev is None or bg.objective <= r_prev:
            B, fb, r = bg.B, bg.feedback, bg.objective
        else:
            r = r_prev
        try:
            cs = solve_c_subproblem(B, fb, channel_hat, config, params,
                                    caps=targets)
        except SolverFailure:
            termination = "solver-failure"
            break
        C = tuple(cs.C)
        r_prev = r
        objectives.append(r ** 2)
        iters += 1
        if len(objectives) >= 2 and \
                abs(objectives[-2] - objectives[-1]) < params.threshold:
            termination = "threshold"
            break
    if B is None:
        return tx0, DesignTrace(objectives=(), termination=termination,
                                transceiver=tx0, stats=(), n_iterations=0), False
    tx = Transceiver(B=B, feedback=fb, C=C)
    trace = DesignTrace(objectives=tuple(objectives), termination=termination,
                        transceiver=tx, stats=(), n_iterations=iters)
    return tx, trace, True


def mse_balancing_design(channel_hat, config, params):
    """Minimize the largest worst-case user MSE under a power budget.

    The recorded objective is the certified uniform bound r after each
    precoder subproblem; transfers from the receiver subproblem keep it
    nonincreasing.
    """
    if params.power_limit is None:
        raise ValueError("power_limit required")
    tx0 = identity_transceiver(config)
    C = tx0.C
    B, fb = None, None
    r_bound = None
    objectives = []
    termination = "max-iterations"
    iters = 0
    for _ in range(params.max_iters):
        try:
            bg = solve_bg_subproblem(C, channel_hat, config, params,
                                     mode="balance")
        except SolverFailure:
            termination = "solver-failure"
            break
        if r_bound is None or bg.objective <= r_bound:
            B, fb, r = bg.B, bg.feedback, bg.objective
        else:
            r = r_bound
        try:
            cs = solve_c_subproblem(B, fb, channel_hat, config, params)
        except SolverFailure:
            termination = "solver-failure"
            break
        s_new, C_new = [], []
        for k in range(config.n_users):
            if cs.slacks.s[k] <= r:
                s_new.append(cs.slacks.s[k])
                C_new.append(cs.C[k])
            else:
                s_new.append(r)
                C_new.append(C[k])
        C = tuple(C_new)
        r_bound = max(s_new)
        objectives.append(r)
        iters += 1
        if len(objectives) >= 2 and \
                abs(objectives[-2] - objectives[-1]) < params.threshold:
            termination = "threshold"
            break
    if B is None:
        return tx0, DesignTrace(objectives=(), termination=termination,
                                transceiver=tx0, stats=(), n_iterations=0)
    tx = Transceiver(B=B, feedback=fb, C=C)
    return tx, DesignTrace(objectives=tuple(objectives),
                           termination=termination, transceiver=tx,
                           stats=(), n_iterations=iters)
