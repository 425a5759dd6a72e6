"""End-to-end Monte Carlo engine for coded over-the-air aggregation.

A trial quantizes each device's value onto a signed lattice, expands it into
two's-complement bit-planes, and transmits each plane as BPSK on its own
fading subcarrier, where the multiple-access channel sums the planes in the
air.  The receiver detects every per-plane device sum with an affine-MMSE or
lattice-ML detector and applies the linear decoder to recover the sum of
quantized values.  An analog amplitude-modulation baseline and an
offset-binary + ML baseline ride exactly the same random draws, so scheme
comparisons at a common seed are trial-paired.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable, Iterable

import numpy as np

from . import codec
from .channel import ChannelParams, MimoParams, NetworkRealization, draw_channel_batch
from .codec import QuantizerSpec
from .selection import greedy_select_batch
from .transceiver import allocate_power, ml_lattice_estimate, reallocate_power

# Trials per vectorized batch; also the RNG sub-stream granularity, so two
# runs agree trial-for-trial only when they share the same batch layout.
BATCH = 8192

CODED_SCHEMES = ("proposed", "binary_ml")
SCHEMES = CODED_SCHEMES + ("analog",)
SOURCES = ("uniform", "gaussian")
POWER_MODES = ("uniform", "geometric")
DETECTORS = ("lmmse", "ml")


@dataclass(frozen=True)
class SimConfig:
    """Full description of one experiment.

    Defaults describe the reference setup: 20 devices, 8-bit quantization of
    uniform sources on [-1, 1], one subcarrier per bit-plane over a 4-tap
    Rayleigh channel, uniform power split, LMMSE detection.
    """

    num_devices: int = 20
    bit_depth: int = 8
    num_subcarriers: int = 8
    num_taps: int = 4
    source: str = "uniform"
    s_max: float = 1.0
    source_std: float | None = None  # gaussian only; None -> s_max / 3
    clamp: bool | None = None  # None -> clamp gaussian sources only
    scheme: str = "proposed"
    power_mode: str = "uniform"
    varpi: float = 1.0
    detector: str = "lmmse"
    snr_db_grid: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 100_000
    csi_error_radius: float = 0.0
    p_max: float = 1.0
    seed: int = 1
    n_tx: int = 1
    n_rx: int = 1
    analog_threshold: float = 0.1
    reallocate: bool = False
    round_estimates: bool = False
    allow_empty: bool = False

    def __post_init__(self):
        object.__setattr__(
            self, "snr_db_grid", tuple(float(x) for x in self.snr_db_grid)
        )
        self.validate()

    def validate(self) -> None:
        if self.num_devices < 1:
            raise ValueError("num_devices must be >= 1")
        if self.bit_depth < 1:
            raise ValueError("bit_depth must be >= 1")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if self.num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if not self.s_max > 0:
            raise ValueError("s_max must be > 0")
        if self.source_std is not None and not self.source_std > 0:
            raise ValueError("source_std must be > 0")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.power_mode not in POWER_MODES:
            raise ValueError(
                f"power_mode must be one of {POWER_MODES}, got {self.power_mode!r}"
            )
        if not self.varpi >= 1.0:
            raise ValueError(f"varpi must be >= 1, got {self.varpi}")
        if self.power_mode == "uniform" and self.varpi != 1.0:
            raise ValueError("varpi > 1 requires power_mode = geometric")
        if self.detector not in DETECTORS:
            raise ValueError(
                f"detector must be one of {DETECTORS}, got {self.detector!r}"
            )
        if self.scheme == "binary_ml" and self.detector != "ml":
            raise ValueError(
                "scheme binary_ml is defined with lattice-ML detection; set detector = ml"
            )
        if self.scheme == "analog" and self.power_mode != "uniform":
            raise ValueError(
                "the analog baseline repeats one symbol per subcarrier and "
                "uses a uniform power split"
            )
        if self.scheme in CODED_SCHEMES and self.num_subcarriers != self.bit_depth:
            raise ValueError(
                "coded transmission sends one bit-plane per subcarrier: "
                "num_subcarriers must equal bit_depth"
            )
        if len(self.snr_db_grid) == 0:
            raise ValueError("snr_db_grid must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 <= self.csi_error_radius < 1.0:
            raise ValueError("csi_error_radius must lie in [0, 1)")
        if not self.p_max > 0:
            raise ValueError("p_max must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("n_tx and n_rx must be >= 1")
        if not self.analog_threshold >= 0:
            raise ValueError("analog_threshold must be >= 0")

    @property
    def effective_source_std(self) -> float:
        return self.source_std if self.source_std is not None else self.s_max / 3.0

    @property
    def effective_clamp(self) -> bool:
        return self.clamp if self.clamp is not None else self.source == "gaussian"

    def quantizer(self) -> QuantizerSpec:
        return QuantizerSpec(self.bit_depth, self.s_max)

    def sigma2(self, snr_db: float) -> float:
        """Per-subcarrier noise power for a given SNR, defined as the total
        power budget over the aggregate noise: SNR = p_max / (sigma^2 L)."""
        return self.p_max / (10.0 ** (snr_db / 10.0) * self.num_subcarriers)

    def budgets(self) -> np.ndarray:
        return allocate_power(self.p_max, self.num_subcarriers, self.varpi)

    def mimo(self) -> MimoParams:
        return MimoParams(n_tx=self.n_tx, n_rx=self.n_rx)

    def channel_params(self, noise_power: float) -> ChannelParams:
        return ChannelParams(
            num_devices=self.num_devices,
            num_subcarriers=self.num_subcarriers,
            num_taps=self.num_taps,
            noise_power=noise_power,
            csi_error_radius=self.csi_error_radius,
        )


@dataclass
class TrialRecord:
    """Everything observable from one end-to-end trial."""

    s_true: float
    s_quant: float
    s_hat: float
    sources: np.ndarray  # (K,) raw device values
    lattice: np.ndarray | None  # (K,) quantized integers; None for analog
    active_counts: np.ndarray  # (L,) devices transmitting per subcarrier
    scalings: np.ndarray  # (L,) common received power p per subcarrier
    bit_sums: np.ndarray  # (L,) true bit-position sums (NaN for analog)
    estimates: np.ndarray  # (L,) detector outputs (analog: per-subcarrier sums)
    received: np.ndarray  # (L,) complex channel outputs
    active: np.ndarray  # (K, L) transmission mask
    squared_error_total: float
    squared_error_quantization: float
    squared_error_transmission: float


@dataclass
class SweepPoint:
    scheme: str
    snr_db: float
    nmse: float
    stderr: float
    mean_active: float
    mean_p: float
    trials: int
    seed: int
    runtime: float
    mse_total: float
    mse_quantization: float
    mse_transmission: float


@dataclass
class SweepResult:
    config: SimConfig
    points: list[SweepPoint]


def _abs2(z: np.ndarray) -> np.ndarray:
    # re^2 + im^2 rather than abs()**2: with perfect CSI the inversion ratio
    # h*conj(h)/|h|^2 then divides a float by itself and is exactly 1.0
    return np.square(z.real) + np.square(z.imag)


def _draw_sources(config: SimConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    if config.source == "uniform":
        return rng.uniform(-config.s_max, config.s_max, size=(n, config.num_devices))
    return config.effective_source_std * rng.standard_normal((n, config.num_devices))


def _inversion_coefficients(h, h_est, active, p) -> np.ndarray:
    """Per-device received coefficients sqrt(p) * h / h_est on active entries.

    The transmitter inverts its estimated channel; the true channel multiplies
    on the air, leaving sqrt(p) * h / h_est at the receiver (exactly sqrt(p)
    under perfect CSI, where the numerator h * conj(h_est) is the divisor
    |h_est|^2 with zero imaginary part).
    """
    a2 = _abs2(h_est)
    ratio = np.zeros_like(h)
    np.divide(h * np.conj(h_est), a2, out=ratio, where=active & (a2 > 0))
    return np.sqrt(p)[:, None, :] * ratio


def _coded_batch(config, spec, budgets, sources, h, h_est, noise, sigma2) -> dict:
    """Vectorized coded pipeline over a batch (leading axis = trials)."""
    K = config.num_devices
    L = config.num_subcarriers
    v = codec.quantize(sources, spec, clamp=config.effective_clamp)
    if config.scheme == "binary_ml":
        bits = codec.encode_offset_binary(v, L)
    else:
        bits = codec.encode(v, L)

    gains = _abs2(h_est) * budgets
    n_act, p, active = greedy_select_batch(gains, sigma2, config.allow_empty)
    if config.reallocate:
        per_device = reallocate_power(budgets, active)
        regained = np.where(active, _abs2(h_est) * per_device, np.inf).min(axis=1)
        p = np.where(n_act > 0, regained, 0.0)

    amp = _inversion_coefficients(h, h_est, active, p)
    symbols = 2 * bits - 1
    y = (amp * symbols).sum(axis=1) + np.sqrt(sigma2 / 2.0) * noise

    n_f = n_act.astype(np.float64)
    if config.detector == "ml":
        r_hat = ml_lattice_estimate(y.real, p, n_act) + (K - n_f) / 2.0
    else:
        denom = 2.0 * p * n_f + sigma2
        lam = np.zeros_like(denom)
        np.divide(np.sqrt(p) * n_f, denom, out=lam, where=denom > 0)
        r_hat = lam * y.real + K / 2.0
    if config.round_estimates:
        r_hat = np.clip(np.rint(r_hat), 0.0, float(K))

    if config.scheme == "binary_ml":
        s_hat = codec.decode_offset_binary(r_hat, spec.zeta, K)
    else:
        s_hat = codec.decode(r_hat, spec.zeta)

    return {
        "s_true": sources.sum(axis=1),
        "s_quant": v.sum(axis=1) / spec.zeta,
        "s_hat": s_hat,
        "lattice": v,
        "n_active": n_act,
        "p": p,
        "bit_sums": bits.sum(axis=1).astype(np.float64),
        "estimates": r_hat,
        "received": y,
        "active": active,
    }


def _analog_batch(config, sources, h, h_est, noise, sigma2) -> dict:
    """Analog baseline: every device repeats its amplitude-scaled value on
    all subcarriers, inverting its channel when the estimated gain clears the
    activation threshold; the receiver averages the per-subcarrier sums.
    Silent devices are compensated by the symmetric-source mean, zero."""
    L = config.num_subcarriers
    budget = config.p_max / L
    a2 = _abs2(h_est)
    active = a2 >= config.analog_threshold
    p = np.where(active, a2 * budget, np.inf).min(axis=1)
    p = np.where(np.isfinite(p), p, 0.0)

    amp = _inversion_coefficients(h, h_est, active, p)
    u = sources / config.s_max
    y = (amp * u[:, :, None]).sum(axis=1) + np.sqrt(sigma2 / 2.0) * noise

    scaled = np.zeros_like(p)
    np.divide(y.real, np.sqrt(p), out=scaled, where=p > 0)
    estimates = config.s_max * scaled
    s_true = sources.sum(axis=1)
    return {
        "s_true": s_true,
        "s_quant": s_true.copy(),  # no quantization stage
        "s_hat": estimates.mean(axis=1),
        "lattice": None,
        "n_active": active.sum(axis=1),
        "p": p,
        "bit_sums": np.full(p.shape, np.nan),
        "estimates": estimates,
        "received": y,
        "active": active,
    }


def _simulate(config, spec, budgets, sources, h, h_est, noise, sigma2) -> dict:
    if config.scheme == "analog":
        return _analog_batch(config, sources, h, h_est, noise, sigma2)
    return _coded_batch(config, spec, budgets, sources, h, h_est, noise, sigma2)


def run_trial(
    config: SimConfig, realization: NetworkRealization, rng: np.random.Generator
) -> TrialRecord:
    """One end-to-end trial on a fixed network realization.

    The rng supplies sources and receiver noise (in that order); the channel
    and its noise power come from the realization, so noiseless operation is
    expressed by a realization with noise_power = 0.
    """
    K, L = config.num_devices, config.num_subcarriers
    if realization.h.shape != (K, L):
        raise ValueError(
            f"realization shape {realization.h.shape} does not match config "
            f"({K} devices, {L} subcarriers)"
        )
    spec = config.quantizer()
    budgets = config.budgets()
    sources = _draw_sources(config, 1, rng)
    noise = rng.standard_normal((1, L)) + 1j * rng.standard_normal((1, L))
    out = _simulate(
        config,
        spec,
        budgets,
        sources,
        realization.h[None],
        realization.h_est[None],
        noise,
        realization.noise_power,
    )
    s_true = float(out["s_true"][0])
    s_quant = float(out["s_quant"][0])
    s_hat = float(out["s_hat"][0])
    return TrialRecord(
        s_true=s_true,
        s_quant=s_quant,
        s_hat=s_hat,
        sources=sources[0],
        lattice=None if out["lattice"] is None else out["lattice"][0],
        active_counts=out["n_active"][0],
        scalings=out["p"][0],
        bit_sums=out["bit_sums"][0],
        estimates=out["estimates"][0],
        received=out["received"][0],
        active=out["active"][0],
        squared_error_total=(s_hat - s_true) ** 2,
        squared_error_quantization=(s_quant - s_true) ** 2,
        squared_error_transmission=(s_hat - s_quant) ** 2,
    )


def run_analog_baseline(
    config: SimConfig, realization: NetworkRealization, rng: np.random.Generator
) -> TrialRecord:
    """Analog-baseline counterpart of run_trial (requires scheme = analog)."""
    if config.scheme != "analog":
        raise ValueError("run_analog_baseline requires scheme = analog")
    return run_trial(config, realization, rng)


def nmse(records: Iterable[TrialRecord]) -> float:
    """Ratio of summed squared decoding errors to summed squared true sums."""
    records = list(records)
    if not records:
        raise ValueError("need at least one trial record")
    den = sum(r.s_true**2 for r in records)
    if den == 0.0:
        raise ValueError("all true sums are zero; NMSE is undefined")
    return sum(r.squared_error_total for r in records) / den


def sweep(
    config: SimConfig, progress: Callable[[SweepPoint], None] | None = None
) -> SweepResult:
    """Monte Carlo NMSE-versus-SNR sweep with fresh channels every trial.

    Randomness: batch j of grid point i uses the stream seeded by the tuple
    (seed, i, j), and every batch draws sources, channel taps/delays, CSI
    perturbations, and receiver noise in a fixed order with fixed shapes.
    Two configs sharing (seed, grid, trials) therefore see identical draws
    wherever their pipelines coincide, which makes scheme and detector
    comparisons trial-paired.  The reported stderr is the standard error of
    the mean squared error divided by the mean squared true sum (the
    denominator's own fluctuation is second-order and ignored).
    """
    spec = config.quantizer()
    budgets = config.budgets()
    points: list[SweepPoint] = []
    for i, snr_db in enumerate(config.snr_db_grid):
        t0 = time.perf_counter()
        sigma2 = config.sigma2(snr_db)
        params = config.channel_params(noise_power=sigma2)
        mimo = config.mimo()
        sum_total = 0.0
        sum_total_sq = 0.0
        sum_quant = 0.0
        sum_tx = 0.0
        sum_s2 = 0.0
        sum_n = 0.0
        sum_p = 0.0
        done = 0
        batch_index = 0
        while done < config.trials:
            n = min(BATCH, config.trials - done)
            rng = np.random.default_rng(
                np.random.SeedSequence((config.seed, i, batch_index))
            )
            sources = _draw_sources(config, n, rng)
            h, h_est = draw_channel_batch(params, n, rng, mimo=mimo)
            noise = rng.standard_normal((n, config.num_subcarriers)) + (
                1j * rng.standard_normal((n, config.num_subcarriers))
            )
            out = _simulate(config, spec, budgets, sources, h, h_est, noise, sigma2)
            sq = (out["s_hat"] - out["s_true"]) ** 2
            sum_total += sq.sum()
            sum_total_sq += (sq**2).sum()
            sum_quant += ((out["s_quant"] - out["s_true"]) ** 2).sum()
            sum_tx += ((out["s_hat"] - out["s_quant"]) ** 2).sum()
            sum_s2 += (out["s_true"] ** 2).sum()
            sum_n += out["n_active"].sum()
            sum_p += out["p"].sum()
            done += n
            batch_index += 1
        T = config.trials
        mean_sq = sum_total / T
        var_sq = max(sum_total_sq / T - mean_sq**2, 0.0)
        point = SweepPoint(
            scheme=config.scheme,
            snr_db=snr_db,
            nmse=sum_total / sum_s2,
            stderr=math.sqrt(var_sq / T) / (sum_s2 / T),
            mean_active=sum_n / (T * config.num_subcarriers),
            mean_p=sum_p / (T * config.num_subcarriers),
            trials=T,
            seed=config.seed,
            runtime=time.perf_counter() - t0,
            mse_total=mean_sq,
            mse_quantization=sum_quant / T,
            mse_transmission=sum_tx / T,
        )
        points.append(point)
        if progress is not None:
            progress(point)
    return SweepResult(config=config, points=points)


CSV_COLUMNS = (
    "scheme",
    "snr_db",
    "nmse",
    "stderr",
    "mean_active",
    "mean_p",
    "trials",
    "seed",
)


def config_metadata(config: SimConfig) -> str:
    """Machine-readable one-line JSON description of a config."""
    return json.dumps(asdict(config), sort_keys=True)


def sweep_to_csv(result: SweepResult, path) -> None:
    """Write a sweep as delimited text.

    Line 1 is a '# '-prefixed JSON metadata block holding the full config,
    then a header row and one row per grid point.  Floats are written with
    repr so identical runs produce byte-identical files.
    """
    lines = ["# " + config_metadata(result.config), ",".join(CSV_COLUMNS)]
    for pt in result.points:
        lines.append(
            ",".join(
                (
                    pt.scheme,
                    repr(float(pt.snr_db)),
                    repr(float(pt.nmse)),
                    repr(float(pt.stderr)),
                    repr(float(pt.mean_active)),
                    repr(float(pt.mean_p)),
                    str(pt.trials),
                    str(pt.seed),
                )
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def quantization_nmse_floor(config: SimConfig) -> float:
    """NMSE remaining when transmission is error-free, from the quantizer
    geometry alone (no Monte Carlo).

    The decoded value then equals the sum of the K quantized values exactly,
    so the error is a sum of independent per-device truncation errors
    e = floor(zeta s)/zeta - s and

        NMSE = (K E[e^2] + K (K-1) E[e]^2) / (K E[s^2]).
    """
    spec = config.quantizer()
    K = config.num_devices
    if config.source == "uniform":
        mean_e, second_e = _uniform_truncation_moments(spec)
        source_power = config.s_max**2 / 3.0
    else:
        if not config.effective_clamp:
            raise ValueError(
                "an unclamped gaussian source can leave the representable "
                "range; no finite quantization floor exists"
            )
        mean_e, second_e = _gaussian_truncation_moments(
            spec, config.effective_source_std
        )
        source_power = config.effective_source_std**2
    return (K * second_e + K * (K - 1) * mean_e**2) / (K * source_power)


def _uniform_truncation_moments(spec: QuantizerSpec) -> tuple[float, float]:
    """Exact E[e], E[e^2] of the truncation error for s ~ U[-s_max, s_max].

    In lattice units u = zeta*s ~ U[-c, c] with c = zeta*s_max: each of the
    2*floor(c) full unit cells contributes mean -1/2 and second moment 1/3,
    and the two partial edge cells of width f = c - floor(c) complete the
    mean to exactly -1/2 while contributing the fractional terms below.
    """
    c = spec.zeta * spec.s_max
    n_full = math.floor(c)
    f = c - n_full
    mean_lattice = -0.5
    second_lattice = (2 * n_full + f**3 + 1 - (1 - f) ** 3) / (6 * c)
    return mean_lattice / spec.zeta, second_lattice / spec.zeta**2


def _gaussian_truncation_moments(spec: QuantizerSpec, std: float) -> tuple[float, float]:
    """E[e], E[e^2] for a clamped gaussian source via per-cell partial moments.

    Cell m holds s in [m/zeta, (m+1)/zeta) and maps to m/zeta; the edge cells
    absorb the clipped tails, so the bottom cell extends to -inf and the top
    cell to +inf.  Within a cell e = m/zeta - s, so the contributions follow
    from the cell's probability mass and first/second partial moments.
    """
    zeta = spec.zeta
    mean_e = 0.0
    second_e = 0.0
    for m in range(spec.lattice_min, spec.lattice_max + 1):
        lo = -math.inf if m == spec.lattice_min else m / zeta
        hi = math.inf if m == spec.lattice_max else (m + 1) / zeta
        prob, m1, m2 = _gaussian_cell_moments(std, lo, hi)
        q = m / zeta
        mean_e += q * prob - m1
        second_e += q**2 * prob - 2.0 * q * m1 + m2
    return mean_e, second_e


def _gaussian_cell_moments(std: float, lo: float, hi: float) -> tuple[float, float, float]:
    """(P, M1, M2): probability and first/second partial moments of
    N(0, std^2) over [lo, hi)."""
    sqrt2 = math.sqrt(2.0)

    def cdf(x: float) -> float:
        return 0.5 * (1.0 + math.erf(x / (std * sqrt2)))

    def pdf(x: float) -> float:
        return math.exp(-0.5 * (x / std) ** 2) / (std * math.sqrt(2.0 * math.pi))

    f_lo = 0.0 if math.isinf(lo) else pdf(lo)
    f_hi = 0.0 if math.isinf(hi) else pdf(hi)
    c_lo = 0.0 if lo == -math.inf else cdf(lo)
    c_hi = 1.0 if hi == math.inf else cdf(hi)
    prob = c_hi - c_lo
    m1 = std**2 * (f_lo - f_hi)
    lo_term = 0.0 if math.isinf(lo) else lo * f_lo
    hi_term = 0.0 if math.isinf(hi) else hi * f_hi
    m2 = std**2 * prob + std**2 * (lo_term - hi_term)
    return prob, m1, m2


def subcarrier_error_correlation(
    config: SimConfig, snr_db: float, trials: int = 20000
) -> np.ndarray:
    """Correlation matrix of per-subcarrier detection errors.

    The bit-planes of one device are functions of the same lattice value, so
    per-subcarrier errors are not exactly independent; this measures how far
    that matters at the detector output.  Diagnostic only.
    """
    if config.scheme not in CODED_SCHEMES:
        raise ValueError("error correlation is defined for coded schemes")
    spec = config.quantizer()
    budgets = config.budgets()
    sigma2 = config.sigma2(snr_db)
    params = config.channel_params(noise_power=sigma2)
    mimo = config.mimo()
    chunks = []
    done = 0
    batch_index = 0
    while done < trials:
        n = min(BATCH, trials - done)
        rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, 0, batch_index))
        )
        sources = _draw_sources(config, n, rng)
        h, h_est = draw_channel_batch(params, n, rng, mimo=mimo)
        noise = rng.standard_normal((n, config.num_subcarriers)) + (
            1j * rng.standard_normal((n, config.num_subcarriers))
        )
        out = _simulate(config, spec, budgets, sources, h, h_est, noise, sigma2)
        chunks.append(out["estimates"] - out["bit_sums"])
        done += n
        batch_index += 1
    errors = np.concatenate(chunks, axis=0)
    return np.corrcoef(errors, rowvar=False)
