"""Per-subcarrier device selection under truncated channel inversion.

The common received amplitude on a subcarrier is capped by the weakest
active device, p = min_k |h_k|^2 P_k, so dropping weak devices trades their
bit variance (prior guessing) against a higher amplitude for everyone else.
The closed-form detector MSE makes the trade explicit, and because the
objective only depends on the active set through (min effective gain, size),
some descending-gain prefix is always optimal: the greedy scan over prefixes
finds the global optimum in O(K log K).  A subset-enumeration oracle backs
that claim in tests.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .transceiver import mse_closed_form


@dataclass
class SelectionInstance:
    """One subcarrier's selection problem: per-device effective gains
    |h_est_k|^2 * P_k and the noise power."""

    effective_gains: np.ndarray
    noise_power: float

    def __post_init__(self):
        self.effective_gains = np.asarray(self.effective_gains, dtype=np.float64)
        if self.effective_gains.ndim != 1 or self.effective_gains.size == 0:
            raise ValueError("effective_gains must be a non-empty 1-D array")
        if np.any(self.effective_gains < 0):
            raise ValueError("effective gains must be >= 0")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be > 0")

    @property
    def num_devices(self) -> int:
        return self.effective_gains.size


class SelectionResult(NamedTuple):
    active: np.ndarray  # sorted device indices
    p: float
    mse: float


def optimal_scaling(active_set, instance: SelectionInstance) -> float:
    """Largest feasible common amplitude for a given active set: the minimum
    effective gain over its members."""
    idx = np.asarray(active_set, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("active set must be non-empty")
    return float(instance.effective_gains[idx].min())


def greedy_select(
    instance: SelectionInstance, allow_empty: bool = False
) -> SelectionResult:
    """Optimal active set via the descending-gain prefix scan.

    Devices are sorted by effective gain (ties by ascending index); prefix n
    transmits at p = n-th largest gain and costs the closed-form MSE; the
    first prefix attaining the minimum wins, so ties resolve to the smaller
    set.  With allow_empty=True a prefix no better than the no-transmission
    MSE K/4 yields an empty set.
    """
    g = instance.effective_gains
    K = instance.num_devices
    order = np.argsort(-g, kind="stable")
    sorted_g = g[order]
    sizes = np.arange(1, K + 1)
    mse = mse_closed_form(sorted_g, sizes, K, instance.noise_power)
    i = int(np.argmin(mse))
    best = float(mse[i])
    if allow_empty and best >= K / 4.0:
        return SelectionResult(np.array([], dtype=np.intp), 0.0, K / 4.0)
    active = np.sort(order[: i + 1])
    return SelectionResult(active, float(sorted_g[i]), best)


@functools.lru_cache(maxsize=None)
def _subset_table(num_devices: int) -> np.ndarray:
    masks = np.arange(1, 2**num_devices, dtype=np.int64)
    return ((masks[:, None] >> np.arange(num_devices)) & 1).astype(bool)


def brute_force_select(instance: SelectionInstance) -> SelectionResult:
    """Exhaustive subset oracle (K <= 20).  Ties resolve to the smaller set,
    then lexicographically smaller index tuple."""
    K = instance.num_devices
    if K > 20:
        raise ValueError(f"subset enumeration is limited to K <= 20, got {K}")
    g = instance.effective_gains
    members = _subset_table(K)
    p = np.where(members, g, np.inf).min(axis=1)
    sizes = members.sum(axis=1)
    mse = mse_closed_form(p, sizes, K, instance.noise_power)
    best = mse.min()
    candidates = np.flatnonzero(mse == best)
    key = min(
        (int(sizes[c]), tuple(np.flatnonzero(members[c])), int(c)) for c in candidates
    )
    active = np.array(key[1], dtype=np.intp)
    return SelectionResult(active, float(g[active].min()), float(best))


def greedy_select_batch(
    effective_gains: np.ndarray, noise_power, allow_empty: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized greedy selection with devices on axis 1.

    effective_gains is (T, K, L); noise_power a scalar or broadcastable
    array.  Returns (n_active (T, L), p (T, L), active mask (T, K, L)).
    """
    T, K, L = effective_gains.shape
    order = np.argsort(-effective_gains, axis=1, kind="stable")
    sorted_g = np.take_along_axis(effective_gains, order, axis=1)
    sizes = np.arange(1, K + 1).reshape(1, K, 1)
    mse = mse_closed_form(sorted_g, sizes, K, noise_power)
    i = np.argmin(mse, axis=1)  # first minimum: smaller set on ties
    n = i + 1
    p = np.take_along_axis(sorted_g, i[:, None, :], axis=1)[:, 0, :]
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(K).reshape(1, K, 1), axis=1)
    active = ranks < n[:, None, :]
    if allow_empty:
        best = np.take_along_axis(mse, i[:, None, :], axis=1)[:, 0, :]
        fallback = best >= K / 4.0
        n = np.where(fallback, 0, n)
        p = np.where(fallback, 0.0, p)
        active &= ~fallback[:, None, :]
    return n, p, active
