"""Random draws for channels and CSIT errors.

All samplers take explicit seeds (anything numpy's default_rng accepts,
including sequences used as hierarchical keys) so experiment runs are
reproducible draw by draw.
"""

from __future__ import annotations

import numpy as np

from .model import Channel


def complex_gaussian(rng, shape, var=1.0):
    """Circularly symmetric complex Gaussian entries with variance var."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channel(config, seed):
    """i.i.d. CN(0, 1) channel blocks for every user."""
    rng = np.random.default_rng(seed)
    blocks = tuple(
        complex_gaussian(rng, (nr, config.n_tx)) for nr in config.n_rx
    )
    return Channel(per_user=blocks)


def sample_se_error(config, error_var, seed, per_entry_variance=False):
    """Gaussian CSIT error matrices E_k, one per user.

    With per_entry_variance=False the entry variance is error_var / n_tx
    so that E{E_k E_k^H} = error_var * I; with True it is error_var
    itself.
    """
    rng = np.random.default_rng(seed)
    var = error_var if per_entry_variance else error_var / config.n_tx
    return tuple(
        complex_gaussian(rng, (nr, config.n_tx), var) for nr in config.n_rx
    )


def _ball_point(rng, shape, radius, surface_only):
    """Uniform point on or in the Frobenius-norm ball of matrices."""
    g = complex_gaussian(rng, shape)
    norm = np.sqrt(np.sum(np.abs(g) ** 2))
    if norm == 0.0:
        return np.zeros(shape, dtype=complex)
    direction = g / norm
    if surface_only:
        return radius * direction
    dim = 2 * int(np.prod(shape))
    return radius * rng.uniform() ** (1.0 / dim) * direction


def sample_nbe_error(config, delta, seed, surface_only=False):
    """Norm-bounded CSIT errors with ||E_k||_F <= delta[k].

    Draws are uniform inside the Frobenius ball, or uniform on the
    sphere ||E_k||_F = delta[k] when surface_only is set.
    """
    rng = np.random.default_rng(seed)
    if np.isscalar(delta):
        delta = (delta,) * config.n_users
    return tuple(
        _ball_point(rng, (nr, config.n_tx), float(d), surface_only)
        for nr, d in zip(config.n_rx, delta)
    )


def sphere_points(rng, dim, radius, count):
    """count uniform points on the complex sphere ||e|| = radius in C^dim."""
    g = complex_gaussian(rng, (count, dim))
    norms = np.sqrt(np.sum(np.abs(g) ** 2, axis=1, keepdims=True))
    norms[norms == 0.0] = 1.0
    return radius * g / norms
