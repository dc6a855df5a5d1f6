"""Downlink THP system model: configuration, channels, transceivers, MSE.

The transmitter applies a feedforward precoder B after a feedback loop
that subtracts already-encoded user symbols through a strictly block
lower triangular filter G, with a modulo device keeping the signal
bounded.  Each receiver k applies a filter C_k followed by the same
modulo.  Everything here is plain numpy; design algorithms live in
separate modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MODULO_BASE = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class ModuloConfig:
    """Modulo base a of the THP lattice.

    The default a = 2*sqrt(2) matches unit-energy QPSK, where the modulo
    grid repeats the constellation without distorting it.
    """

    base: float = DEFAULT_MODULO_BASE

    def __post_init__(self):
        if not self.base > 0:
            raise ValueError("modulo base must be positive")


@dataclass(frozen=True)
class SystemConfig:
    """Static downlink dimensions and noise level.

    n_tx transmit antennas serve len(n_rx) users; user k has n_rx[k]
    receive antennas and n_streams[k] data streams.  The total number of
    streams may not exceed n_tx.
    """

    n_tx: int
    n_rx: tuple
    n_streams: tuple
    noise_var: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "n_rx", tuple(int(n) for n in self.n_rx))
        object.__setattr__(self, "n_streams", tuple(int(n) for n in self.n_streams))
        if self.n_tx < 1:
            raise ValueError("n_tx must be at least 1")
        if len(self.n_rx) == 0:
            raise ValueError("at least one user is required")
        if len(self.n_rx) != len(self.n_streams):
            raise ValueError("n_rx and n_streams must have one entry per user")
        for k, (nr, lk) in enumerate(zip(self.n_rx, self.n_streams)):
            if nr < 1:
                raise ValueError(f"user {k}: n_rx must be at least 1")
            if not 1 <= lk <= nr:
                raise ValueError(
                    f"user {k}: n_streams must satisfy 1 <= n_streams <= n_rx"
                )
        if self.total_streams > self.n_tx:
            raise ValueError("total stream count exceeds n_tx")
        if not self.noise_var > 0:
            raise ValueError("noise_var must be positive")

    @property
    def n_users(self):
        return len(self.n_rx)

    @property
    def total_streams(self):
        return int(sum(self.n_streams))

    @property
    def stream_offsets(self):
        """Start column of each user's block inside the stacked stream vector."""
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.n_streams)[:-1]]))


@dataclass(frozen=True)
class Channel:
    """Per-user channel matrices H_k of shape (n_rx[k], n_tx)."""

    per_user: tuple

    def __post_init__(self):
        mats = tuple(np.asarray(h, dtype=complex) for h in self.per_user)
        if len(mats) == 0:
            raise ValueError("channel needs at least one user block")
        n_tx = mats[0].shape[1]
        for k, h in enumerate(mats):
            if h.ndim != 2 or h.shape[1] != n_tx:
                raise ValueError(f"user {k}: channel block has inconsistent shape")
        object.__setattr__(self, "per_user", mats)

    @property
    def n_tx(self):
        return self.per_user[0].shape[1]

    @property
    def n_users(self):
        return len(self.per_user)

    @property
    def stacked(self):
        """All user blocks stacked row-wise into one matrix."""
        return np.vstack(self.per_user)


@dataclass(frozen=True)
class SeModel:
    """Stochastic CSIT error: estimation error with Gaussian entries.

    error_var sets the scale of the error covariance.  With
    per_entry_variance=False each entry of E_k has variance
    error_var / n_tx (so E{E_k E_k^H} = error_var * I); with True each
    entry has variance error_var, which is the convention under which
    the averaged-MSE objective used by the stochastic design is exact.
    """

    error_var: float
    per_entry_variance: bool = False

    def __post_init__(self):
        if self.error_var < 0:
            raise ValueError("error_var must be nonnegative")


@dataclass(frozen=True)
class NbeModel:
    """Norm-bounded CSIT error: ||E_k||_F <= delta[k] per user."""

    delta: tuple

    def __post_init__(self):
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))
        if any(d < 0 for d in self.delta):
            raise ValueError("error radii must be nonnegative")


@dataclass(frozen=True)
class Transceiver:
    """A THP transceiver triple (B, G, C).

    B is the n_tx x L precoder.  feedback[k][j] holds the feedback block
    G_kj of shape (L_k, L_j) for j < k; the unit diagonal block of the
    full feedback matrix is implicit and never stored, so G is strictly
    block lower triangular by construction.  C[k] is user k's L_k x
    n_rx[k] receive filter.
    """

    B: np.ndarray
    feedback: tuple
    C: tuple

    def __post_init__(self):
        B = np.asarray(self.B, dtype=complex)
        C = tuple(np.asarray(c, dtype=complex) for c in self.C)
        fb = tuple(tuple(np.asarray(g, dtype=complex) for g in row) for row in self.feedback)
        sizes = tuple(c.shape[0] for c in C)
        if B.ndim != 2 or B.shape[1] != sum(sizes):
            raise ValueError("precoder width must match the total stream count")
        if len(fb) != len(C):
            raise ValueError("feedback needs one row of blocks per user")
        for k, row in enumerate(fb):
            if len(row) != k:
                raise ValueError(f"user {k}: expected {k} feedback blocks, got {len(row)}")
            for j, g in enumerate(row):
                if g.shape != (sizes[k], sizes[j]):
                    raise ValueError(f"feedback block ({k},{j}) has wrong shape")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "feedback", fb)

    @property
    def n_users(self):
        return len(self.C)

    @property
    def stream_sizes(self):
        return tuple(c.shape[0] for c in self.C)

    @property
    def total_streams(self):
        return int(sum(self.stream_sizes))

    def stream_offset(self, k):
        return int(sum(self.stream_sizes[:k]))

    def precoder_block(self, k):
        """Columns of B that carry user k's streams."""
        o = self.stream_offset(k)
        return self.B[:, o:o + self.stream_sizes[k]]

    def gbar(self, k):
        """Augmented feedback row [G_k0 ... G_k,k-1  I  0] of shape (L_k, L)."""
        lk = self.stream_sizes[k]
        parts = list(self.feedback[k])
        parts.append(np.eye(lk, dtype=complex))
        tail = self.total_streams - self.stream_offset(k) - lk
        if tail:
            parts.append(np.zeros((lk, tail), dtype=complex))
        return np.hstack(parts)

    @property
    def power(self):
        """Transmit power ||B||_F^2 under unit-variance encoded symbols."""
        return float(np.sum(np.abs(self.B) ** 2))


def identity_transceiver(config, power=None):
    """Unity-style starting point: scaled identity precoder, identity filters.

    B takes the first L columns of I_{n_tx}, scaled so that ||B||_F^2
    equals the power budget when one is given.  Receive filters are
    rectangular identities and all feedback blocks are zero.
    """
    L = config.total_streams
    B = np.eye(config.n_tx, L, dtype=complex)
    if power is not None:
        B = B * math.sqrt(power / L)
    C = tuple(np.eye(lk, nr, dtype=complex) for lk, nr in zip(config.n_streams, config.n_rx))
    fb = tuple(
        tuple(np.zeros((config.n_streams[k], config.n_streams[j]), dtype=complex) for j in range(k))
        for k in range(config.n_users)
    )
    return Transceiver(B=B, feedback=fb, C=C)


def modulo(x, config=ModuloConfig()):
    """Complex modulo onto the square [-a/2, a/2) x [-a/2, a/2).

    Mod(x) = x - a*floor(Re(x)/a + 1/2) - 1j*a*floor(Im(x)/a + 1/2),
    applied elementwise.
    """
    a = config.base
    x = np.asarray(x, dtype=complex)
    return (
        x
        - a * np.floor(x.real / a + 0.5)
        - 1j * a * np.floor(x.imag / a + 0.5)
    )


def thp_encode(u, tx, config=ModuloConfig()):
    """Successive THP encoding of one stacked symbol vector.

    User 1 passes through, later users subtract feedback from already
    encoded blocks and reduce modulo the lattice:

        v_1 = u_1,   v_k = Mod(u_k - sum_{j<k} G_kj v_j)

    Returns (v, x) with x = B v the transmit vector.
    """
    u = np.asarray(u, dtype=complex).reshape(-1)
    L = tx.total_streams
    if u.shape[0] != L:
        raise ValueError("symbol vector length must match the total stream count")
    v = np.zeros(L, dtype=complex)
    for k in range(tx.n_users):
        o = tx.stream_offset(k)
        lk = tx.stream_sizes[k]
        uk = u[o:o + lk]
        if k == 0:
            v[o:o + lk] = uk
            continue
        acc = np.zeros(lk, dtype=complex)
        for j in range(k):
            oj = tx.stream_offset(j)
            acc += tx.feedback[k][j] @ v[oj:oj + tx.stream_sizes[j]]
        v[o:o + lk] = modulo(uk - acc, config)
    return v, tx.B @ v


def per_user_mse(tx, H_k, k, noise_var):
    """User k's MSE for a given channel realization,

        eps_k = ||C_k H_k B - Gbar_k||_F^2 + noise_var * ||C_k||_F^2.
    """
    C_k = tx.C[k]
    res = C_k @ np.asarray(H_k, dtype=complex) @ tx.B - tx.gbar(k)
    return float(np.sum(np.abs(res) ** 2) + noise_var * np.sum(np.abs(C_k) ** 2))


def averaged_smse(tx, channel_hat, error_var, noise_var):
    """Sum MSE averaged over the stochastic CSIT error,

        mu = sum_k ||C_k Hhat_k B - Gbar_k||_F^2
             + (error_var * ||B||_F^2 + noise_var) * sum_k ||C_k||_F^2.

    error_var is the per-entry variance of the error matrices here; see
    SeModel for the convention switch.
    """
    acc = 0.0
    c_energy = 0.0
    for k in range(tx.n_users):
        res = tx.C[k] @ channel_hat.per_user[k] @ tx.B - tx.gbar(k)
        acc += float(np.sum(np.abs(res) ** 2))
        c_energy += float(np.sum(np.abs(tx.C[k]) ** 2))
    return acc + (error_var * tx.power + noise_var) * c_energy


def smse(tx, channel, noise_var):
    """Sum of per-user MSEs at one channel realization."""
    return float(sum(per_user_mse(tx, channel.per_user[k], k, noise_var)
                     for k in range(tx.n_users)))


def vectorized_residual(tx, H_k, k):
    """Vectorized form of user k's MSE residual.

    Returns (D_k, residual) with D_k = B^T kron C_k, so that
    D_k vec(H_k) - vec(Gbar_k) = vec(C_k H_k B - Gbar_k) for the
    column-stacking vec.
    """
    H_k = np.asarray(H_k, dtype=complex)
    D_k = np.kron(tx.B.T, tx.C[k])
    residual = D_k @ H_k.reshape(-1, order="F") - tx.gbar(k).reshape(-1, order="F")
    return D_k, residual


@dataclass(frozen=True)
class MseReport:
    """Per-user MSE values and their sum for one channel realization."""

    per_user: tuple
    smse: float

    def __post_init__(self):
        object.__setattr__(self, "per_user", tuple(float(e) for e in self.per_user))
        if abs(self.smse - sum(self.per_user)) > 1e-12 * max(1.0, abs(self.smse)):
            raise ValueError("smse must equal the sum of per-user terms")


def mse_report(tx, channel, noise_var):
    per_user = tuple(per_user_mse(tx, channel.per_user[k], k, noise_var)
                     for k in range(tx.n_users))
    return MseReport(per_user=per_user, smse=float(sum(per_user)))
