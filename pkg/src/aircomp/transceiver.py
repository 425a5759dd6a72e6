"""Per-subcarrier transmit/receive processing for bit-plane superposition.

Active devices invert their (estimated) channel so BPSK bit symbols arrive
phase-aligned at a common amplitude sqrt(p); the real part of the received
sum is then an affine function of the bit-position sum plus Gaussian noise.
The detector is the linear MMSE estimate of that sum under the symmetric
Bernoulli prior, with a closed-form residual MSE used both for evaluation and
as the device-selection objective.  An integer maximum-likelihood detector is
provided as the conventional baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def allocate_power(p_max: float, num_planes: int, varpi: float = 1.0) -> np.ndarray:
    """Split a per-device budget across bit planes with geometric ratio varpi.

    varpi = 1 is the uniform split; varpi > 1 weights later (more significant)
    planes, with P_1 = p_max*(varpi-1)/(varpi^b - 1) so the total meets p_max
    with equality.  varpi < 1 would starve the most significant plane and is
    rejected.
    """
    if not p_max > 0:
        raise ValueError(f"p_max must be positive, got {p_max}")
    if num_planes < 1:
        raise ValueError(f"num_planes must be >= 1, got {num_planes}")
    if varpi < 1:
        raise ValueError(f"varpi must be >= 1, got {varpi}")
    if varpi == 1:
        return np.full(num_planes, p_max / num_planes)
    first = p_max * (varpi - 1.0) / (varpi**num_planes - 1.0)
    return first * varpi ** np.arange(num_planes)


def reallocate_power(budgets: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Move budget a device cannot spend on truncated subcarriers to its
    active ones, proportionally.

    budgets is the (L,) per-plane budget, active a (..., K, L) activity mask.
    Returns per-device budgets (..., K, L); entries on inactive subcarriers
    are zeroed (the device is silent there).
    """
    budgets = np.asarray(budgets, dtype=np.float64)
    active = np.asarray(active, dtype=bool)
    full = np.broadcast_to(budgets, active.shape)
    spent = np.where(active, full, 0.0)
    freed = full.sum(axis=-1) - spent.sum(axis=-1)
    base = spent.sum(axis=-1)
    scale = np.ones_like(base)
    np.divide(freed, base, out=scale, where=base > 0)
    return spent * (1.0 + scale)[..., None]


def preprocess(h_est, p, active=True):
    """Truncated-channel-inversion precoder rho = sqrt(p) h_est* / |h_est|^2.

    Silent devices get rho = 0.  Inverting a zero channel is a contract
    violation (the scaling should have excluded the device).
    """
    h_est = np.asarray(h_est, dtype=np.complex128)
    p_arr = np.asarray(p, dtype=np.float64)
    active_arr = np.broadcast_to(np.asarray(active, dtype=bool), h_est.shape)
    gain = np.abs(h_est) ** 2
    if np.any(active_arr & (gain == 0) & (p_arr > 0)):
        raise ValueError("cannot invert a zero channel for an active device")
    out = np.zeros(np.broadcast_shapes(h_est.shape, p_arr.shape), np.complex128)
    np.divide(
        np.sqrt(p_arr) * h_est.conj(), gain, out=out, where=active_arr & (gain > 0)
    )
    if out.ndim == 0:
        return complex(out)
    return out


@dataclass
class SubcarrierPlan:
    """Resolved transmission plan for one subcarrier: who sends, at what
    common received amplitude, and the matching detector coefficients."""

    active: np.ndarray  # (K,) bool
    p: float
    noise_power: float
    num_devices: int

    def __post_init__(self):
        self.active = np.asarray(self.active, dtype=bool)
        if self.active.shape != (self.num_devices,):
            raise ValueError("active mask must have one entry per device")
        if self.p < 0 or self.noise_power < 0:
            raise ValueError("p and noise_power must be >= 0")

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def detector_coefficients(self) -> tuple[float, float]:
        lam, mu = lmmse_coefficients(
            self.p, self.n_active, self.num_devices, self.noise_power
        )
        return float(lam), float(mu)


def transmit_power_check(
    plan: SubcarrierPlan, h_est: np.ndarray, budgets: np.ndarray
) -> bool:
    """Feasibility: every active device's inversion power p/|h_est|^2 fits its
    budget.  Evaluated in product form (p <= |h|^2 * P) so the boundary case
    p = |h|^2 * P passes without division rounding."""
    gains = np.abs(np.asarray(h_est, dtype=np.complex128)) ** 2
    caps = gains * np.asarray(budgets, dtype=np.float64)
    return bool(np.all(plan.p <= caps[plan.active]))


def lmmse_coefficients(p, n_active, num_devices, noise_power):
    """Affine-MMSE detector r_hat = lam*Re{y} + mu for the bit-position sum.

    lam = sqrt(p)*n / (2 p n + sigma^2), mu = K/2.  Vectorized; lam -> 0 as
    p -> 0 or noise dominates, collapsing the estimate onto the prior mean.
    """
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n_active, dtype=np.float64)
    denom = 2.0 * p * n + noise_power
    lam = np.zeros(denom.shape, dtype=np.float64)
    np.divide(np.sqrt(p) * n, denom, out=lam, where=denom > 0)
    mu = num_devices / 2.0
    if lam.ndim == 0:
        return float(lam), mu
    return lam, mu


def lmmse_detect(y: complex, plan: SubcarrierPlan) -> float:
    """Estimate the bit-position sum from one received sample."""
    lam, mu = plan.detector_coefficients()
    return lam * np.real(y) + mu


def ml_lattice_estimate(re_y, p, n_active):
    """Integer ML estimate of the *active* bit sum on the BPSK lattice.

    The noiseless lattice points are 2 sqrt(p) r - sqrt(p) n for
    r in {0..n}; nearest-point rounding with ties resolved downward.
    Degenerate p*n = 0 returns 0 (every point coincides; lowest index wins).
    """
    re_y = np.asarray(re_y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n_active, dtype=np.float64)
    amp = 2.0 * np.sqrt(p)
    z = np.zeros(np.broadcast_shapes(re_y.shape, p.shape, n.shape), np.float64)
    np.divide(re_y + np.sqrt(p) * n, amp, out=z, where=(amp > 0) & (n > 0))
    r = np.ceil(z - 0.5)  # round half down: lower candidate wins ties
    return np.clip(r, 0.0, n)


def ml_detect(y: complex, plan: SubcarrierPlan) -> float:
    """ML detection of active bits plus the prior mean of truncated ones."""
    r = ml_lattice_estimate(np.real(y), plan.p, plan.n_active)
    return float(r) + (plan.num_devices - plan.n_active) / 2.0


def mse_closed_form(p, n_active, num_devices, noise_power):
    """Residual MSE of the affine-MMSE detector for the bit-position sum:

        e = (2 p n (K - n) + K sigma^2) / (8 p n + 4 sigma^2)

    with n active devices out of K.  p = 0 (or n = 0) degenerates to the
    prior variance K/4.  Vectorized over any broadcastable arguments.
    """
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n_active, dtype=np.float64)
    K = num_devices
    num = 2.0 * p * n * (K - n) + K * noise_power
    denom = 8.0 * p * n + 4.0 * noise_power
    out = np.full(denom.shape, K / 4.0)
    np.divide(num, denom, out=out, where=denom > 0)
    if out.ndim == 0:
        return float(out)
    return out
