"""Shared builders for the test suite."""

import numpy as np

from robust_thp.model import SystemConfig, Transceiver
from robust_thp.sampling import complex_gaussian


def small_config(noise_var=0.1):
    """Two users, two antennas and streams each, four transmit antennas."""
    return SystemConfig(n_tx=4, n_rx=(2, 2), n_streams=(2, 2), noise_var=noise_var)


def mixed_config(noise_var=0.5):
    """Unequal stream counts to exercise block bookkeeping."""
    return SystemConfig(n_tx=5, n_rx=(2, 3, 2), n_streams=(1, 2, 1), noise_var=noise_var)


def random_transceiver(config, rng, power=None):
    """Random dense transceiver respecting the block structure."""
    L = config.total_streams
    B = complex_gaussian(rng, (config.n_tx, L))
    if power is not None:
        B = B * np.sqrt(power / np.sum(np.abs(B) ** 2))
    C = tuple(complex_gaussian(rng, (lk, nr))
              for lk, nr in zip(config.n_streams, config.n_rx))
    fb = tuple(
        tuple(complex_gaussian(rng, (config.n_streams[k], config.n_streams[j]))
              for j in range(k))
        for k in range(config.n_users)
    )
    return Transceiver(B=B, feedback=fb, C=C)


def wiener_receiver(B, channel_hat, config, k, error_var=0.0):
    """Joint-covariance route to user k's optimal filter.

    Estimate v_k from the stacked observation [y_k; v_{<k}] where
    y_k = H_k B v + n_k; the y-part of the Wiener filter is the optimal
    C_k once the feedback blocks absorb the v_{<k} part.
    """
    offs = np.concatenate([[0], np.cumsum(config.n_streams)]).astype(int)
    Hk = channel_hat.per_user[k]
    HB = Hk @ B
    nrk = config.n_rx[k]
    load = config.noise_var + error_var * float(np.sum(np.abs(B) ** 2))
    lead = HB[:, : offs[k]]
    R_obs = np.block([
        [HB @ HB.conj().T + load * np.eye(nrk), lead],
        [lead.conj().T, np.eye(offs[k])],
    ])
    Bk = B[:, offs[k]:offs[k + 1]]
    R_cross = np.hstack([Bk.conj().T @ Hk.conj().T,
                         np.zeros((config.n_streams[k], offs[k]))])
    W = R_cross @ np.linalg.inv(R_obs)
    return W[:, :nrk]
