"""Command-line front end: experiment configs, sweeps, self-checks, demo.

Config files are flat INI-style text, one ``[section]`` per experiment with
``key = value`` lines (``#`` starts a comment).  An optional ``[global]``
section holds output options.  An empty file describes one default
experiment.  Parse errors carry the offending line number.

Environment variables with the ``AIRCOMP_`` prefix mirror the command-line
flags (``AIRCOMP_SEED``, ``AIRCOMP_TRIALS``, ``AIRCOMP_OUT``,
``AIRCOMP_QUICK``); explicit flags win over the environment, which wins over
the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import codec
from .channel import ChannelParams, draw_channel, draw_channel_batch
from .selection import SelectionInstance, brute_force_select, greedy_select
from .simulator import (
    SCHEMES,
    SimConfig,
    run_trial,
    sweep,
    sweep_to_csv,
)
from .transceiver import lmmse_coefficients, mse_closed_form

ENV_PREFIX = "AIRCOMP_"


class ConfigError(ValueError):
    """Configuration text rejected; the message carries the line number."""


@dataclass
class ExperimentSpec:
    """Parsed config file: named experiments plus global output options."""

    experiments: dict[str, SimConfig] = field(default_factory=dict)
    out: str | None = None
    verbose: bool = False


def _conv_int(minimum: int | None = None):
    def conv(value: str, lineno: int) -> int:
        try:
            v = int(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: expected an integer, got {value!r}") from None
        if minimum is not None and v < minimum:
            raise ConfigError(f"line {lineno}: value must be >= {minimum}, got {v}")
        return v

    return conv


def _conv_float(minimum: float | None = None, strict: bool = False):
    def conv(value: str, lineno: int) -> float:
        try:
            v = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: expected a number, got {value!r}") from None
        if minimum is not None:
            if strict and not v > minimum:
                raise ConfigError(f"line {lineno}: value must be > {minimum}, got {value}")
            if not strict and not v >= minimum:
                raise ConfigError(f"line {lineno}: value must be >= {minimum}, got {value}")
        return v

    return conv


def _conv_choice(options: tuple[str, ...]):
    def conv(value: str, lineno: int) -> str:
        if value not in options:
            raise ConfigError(
                f"line {lineno}: expected one of {', '.join(options)}; got {value!r}"
            )
        return value

    return conv


def _conv_bool(value: str, lineno: int) -> bool:
    lowered = value.lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"line {lineno}: expected true or false, got {value!r}")


def _optional(conv):
    def wrapped(value: str, lineno: int):
        if value.lower() == "none":
            return None
        return conv(value, lineno)

    return wrapped


def _conv_varpi(value: str, lineno: int) -> float:
    v = _conv_float()(value, lineno)
    if not v >= 1.0:
        raise ConfigError(
            f"line {lineno}: varpi must be >= 1 (later bit-planes may not "
            f"receive more power than earlier ones), got {value}"
        )
    return v


def _conv_grid(value: str, lineno: int) -> tuple[float, ...]:
    parts = [p for p in value.replace(",", " ").split() if p]
    if not parts:
        raise ConfigError(f"line {lineno}: snr_db_grid must list at least one value")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"line {lineno}: snr_db_grid entries must be numbers, got {value!r}") from None


_CONVERTERS = {
    "num_devices": _conv_int(minimum=1),
    "bit_depth": _conv_int(minimum=1),
    "num_subcarriers": _conv_int(minimum=1),
    "num_taps": _conv_int(minimum=1),
    "source": _conv_choice(("uniform", "gaussian")),
    "s_max": _conv_float(minimum=0.0, strict=True),
    "source_std": _optional(_conv_float(minimum=0.0, strict=True)),
    "clamp": _optional(_conv_bool),
    "scheme": _conv_choice(SCHEMES),
    "power_mode": _conv_choice(("uniform", "geometric")),
    "varpi": _conv_varpi,
    "detector": _conv_choice(("lmmse", "ml")),
    "snr_db_grid": _conv_grid,
    "trials": _conv_int(minimum=1),
    "csi_error_radius": _conv_float(minimum=0.0),
    "p_max": _conv_float(minimum=0.0, strict=True),
    "seed": _conv_int(minimum=0),
    "n_tx": _conv_int(minimum=1),
    "n_rx": _conv_int(minimum=1),
    "analog_threshold": _conv_float(minimum=0.0),
    "reallocate": _conv_bool,
    "round_estimates": _conv_bool,
    "allow_empty": _conv_bool,
}


def parse_config(text: str) -> ExperimentSpec:
    """Parse config text into an ExperimentSpec.

    Raises ConfigError (with a line number) on unknown keys or sections,
    malformed or out-of-range values, duplicates, and inconsistent
    experiments; empty input yields one default experiment.
    """
    raw: dict[str, dict] = {}
    section_lines: dict[str, int] = {}
    out: str | None = None
    verbose = False
    seen_global = False
    current: str | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: empty section name")
            if name == "global":
                if seen_global:
                    raise ConfigError(f"line {lineno}: duplicate section [global]")
                seen_global = True
            else:
                if name in raw:
                    raise ConfigError(f"line {lineno}: duplicate section [{name}]")
                raw[name] = {}
                section_lines[name] = lineno
            current = name
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"line {lineno}: expected 'key = value' or '[section]', got {stripped!r}"
            )
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if current is None:
            raise ConfigError(
                f"line {lineno}: key {key!r} appears before any [section] header"
            )
        if current == "global":
            if key == "out":
                out = value
            elif key == "verbose":
                verbose = _conv_bool(value, lineno)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r} in [global]")
            continue
        if key not in _CONVERTERS:
            raise ConfigError(
                f"line {lineno}: unknown key {key!r} "
                f"(valid keys: {', '.join(sorted(_CONVERTERS))})"
            )
        if key in raw[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        raw[current][key] = _CONVERTERS[key](value, lineno)

    if not raw:
        raw = {"default": {}}
        section_lines["default"] = 0

    experiments: dict[str, SimConfig] = {}
    for name, kwargs in raw.items():
        if kwargs.get("scheme") == "binary_ml" and "detector" not in kwargs:
            kwargs["detector"] = "ml"
        try:
            experiments[name] = SimConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(
                f"experiment [{name}] (line {section_lines[name]}): {exc}"
            ) from exc
    return ExperimentSpec(experiments=experiments, out=out, verbose=verbose)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(spec: ExperimentSpec) -> str:
    """Render an ExperimentSpec back to config text.

    Every field is written explicitly, so parse(serialize(spec)) == spec.
    """
    lines: list[str] = []
    if spec.out is not None or spec.verbose:
        lines.append("[global]")
        if spec.out is not None:
            lines.append(f"out = {spec.out}")
        if spec.verbose:
            lines.append("verbose = true")
        lines.append("")
    for name, config in spec.experiments.items():
        lines.append(f"[{name}]")
        for f in dataclasses.fields(SimConfig):
            lines.append(f"{f.name} = {_format_value(getattr(config, f.name))}")
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# verification oracles


def oracle_exact_sum(seed: int = 1, quick: bool = False) -> tuple[bool, str]:
    """Noiseless coded aggregation is exact: the decoder applied to the true
    per-position bit sums returns the integer sum of quantized values with
    zero error.  Exhaustive over all device-value tuples for small (b, K),
    randomized for the reference size."""
    failures = 0
    counts = []
    for b, num in ((3, 3), (5, 3)):
        lattice = np.arange(-(2 ** (b - 1)), 2 ** (b - 1), dtype=np.int64)
        grids = np.meshgrid(*([lattice] * num), indexing="ij")
        values = np.stack([g.ravel() for g in grids], axis=-1)
        if quick:
            values = values[:: max(1, len(values) // 1000)]
        bits = codec.encode(values, b)
        decoded = codec.decode(bits.sum(axis=1), 1.0)
        if not np.array_equal(decoded, values.sum(axis=1).astype(np.float64)):
            failures += 1
        counts.append(f"b={b} K={num}: {len(values)} tuples")

    rng = np.random.default_rng(np.random.SeedSequence((seed, 811)))
    n_random = 10_000 if quick else 100_000
    values = rng.integers(-128, 128, size=(n_random, 20), dtype=np.int64)
    bits = codec.encode(values, 8)
    decoded = codec.decode(bits.sum(axis=1), 1.0)
    if not np.array_equal(decoded, values.sum(axis=1).astype(np.float64)):
        failures += 1
    counts.append(f"b=8 K=20: {n_random} random tuples")
    return failures == 0, "; ".join(counts) + (
        "; all exact" if failures == 0 else f"; {failures} case groups FAILED"
    )


def oracle_greedy_optimality(seed: int = 1, quick: bool = False) -> tuple[bool, str]:
    """Greedy device selection matches exhaustive subset search on random
    multipath-faded instances of up to 12 devices."""
    total = 1_000 if quick else 10_000
    rng = np.random.default_rng(np.random.SeedSequence((seed, 977)))
    sizes = range(2, 13)
    per = [total // len(sizes)] * len(sizes)
    for i in range(total - sum(per)):
        per[i] += 1
    worst = 0.0
    checked = 0
    for num_devices, group in zip(sizes, per):
        params = ChannelParams(num_devices=num_devices, num_subcarriers=8)
        h, _ = draw_channel_batch(params, group, rng)
        gains = (np.square(h.real) + np.square(h.imag))[:, :, 0] / 8.0
        noise = 10.0 ** rng.uniform(-2.0, 2.0, size=group)
        for t in range(group):
            inst = SelectionInstance(gains[t], float(noise[t]))
            greedy = greedy_select(inst)
            brute = brute_force_select(inst)
            rel = abs(greedy.mse - brute.mse) / max(brute.mse, 1e-300)
            worst = max(worst, rel)
            checked += 1
    ok = worst <= 1e-12
    return ok, f"{checked} instances (K=2..12), max relative MSE gap {worst:.1e}"


def oracle_lmmse(seed: int = 1, quick: bool = False) -> tuple[bool, str]:
    """The affine detector's empirical MSE matches the closed form within
    3 standard errors, and no detector perturbed away from the derived
    coefficients does better on the same samples."""
    n_tuples = 5 if quick else 20
    n_samples = 20_000 if quick else 100_000
    rng = np.random.default_rng(np.random.SeedSequence((seed, 953)))
    worst_z = 0.0
    perturbed_wins = 0
    for _ in range(n_tuples):
        num_devices = int(rng.integers(2, 25))
        n_active = int(rng.integers(1, num_devices + 1))
        sigma2 = float(10.0 ** rng.uniform(-1.0, 1.0))
        p = float(sigma2 * 10.0 ** rng.uniform(-1.3, 1.3))
        bits = rng.integers(0, 2, size=(n_samples, num_devices))
        r = bits.sum(axis=1)
        r_active = bits[:, :n_active].sum(axis=1)
        noise = math.sqrt(sigma2 / 2.0) * rng.standard_normal(n_samples)
        re_y = math.sqrt(p) * (2.0 * r_active - n_active) + noise

        lam, mu = lmmse_coefficients(p, n_active, num_devices, sigma2)
        sq = (lam * re_y + mu - r) ** 2
        empirical = float(sq.mean())
        se = float(sq.std(ddof=1)) / math.sqrt(n_samples)
        closed = mse_closed_form(p, n_active, num_devices, sigma2)
        worst_z = max(worst_z, abs(empirical - closed) / se)
        for lam2 in (0.9 * lam, 1.1 * lam):
            for mu2 in (mu - 0.5, mu + 0.5):
                if float(((lam2 * re_y + mu2 - r) ** 2).mean()) < empirical:
                    perturbed_wins += 1
    ok = worst_z <= 3.0 and perturbed_wins == 0
    return ok, (
        f"{n_tuples} parameter tuples x {n_samples} samples, worst |z| = "
        f"{worst_z:.2f} (limit 3), perturbed-detector wins: {perturbed_wins}"
    )


ORACLES = (
    ("exact-sum", oracle_exact_sum),
    ("greedy-optimality", oracle_greedy_optimality),
    ("lmmse-detector", oracle_lmmse),
)


# ---------------------------------------------------------------------------
# commands


def _env_str(name: str) -> str | None:
    value = os.environ.get(ENV_PREFIX + name)
    return value if value else None


def _env_int(name: str) -> int | None:
    value = _env_str(name)
    return int(value) if value is not None else None


def _env_flag(name: str) -> bool:
    value = _env_str(name)
    return value is not None and value.lower() in ("1", "true", "yes", "on")


def _output_path(out: str, name: str, multiple: bool) -> Path:
    if out.endswith(".csv"):
        path = Path(out)
        if multiple:
            path = path.with_name(f"{path.stem}-{name}.csv")
        return path
    return Path(out) / f"{name}.csv"


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            print(f"error: config file not found: {path}", file=sys.stderr)
            return 1
        spec = parse_config(path.read_text(encoding="utf-8"))
    else:
        spec = ExperimentSpec(experiments={"default": SimConfig()})

    seed = args.seed if args.seed is not None else _env_int("SEED")
    trials = args.trials if args.trials is not None else _env_int("TRIALS")
    quick = args.quick or _env_flag("QUICK")
    out = args.out or _env_str("OUT") or spec.out or "."
    verbose = args.verbose or spec.verbose

    multiple = len(spec.experiments) > 1
    for name, config in spec.experiments.items():
        updates: dict = {}
        if seed is not None:
            updates["seed"] = seed
        if trials is not None:
            updates["trials"] = trials
        if quick:
            updates["trials"] = min(updates.get("trials", config.trials), 2000)
        if updates:
            config = dataclasses.replace(config, **updates)
        print(
            f"[{name}] scheme={config.scheme} detector={config.detector} "
            f"power_mode={config.power_mode} trials={config.trials} "
            f"seed={config.seed}"
        )
        progress = None
        if verbose:
            progress = lambda pt: print(  # noqa: E731
                f"    snr {pt.snr_db:+6.1f} dB done in {pt.runtime:.1f}s"
            )
        result = sweep(config, progress=progress)
        for pt in result.points:
            print(
                f"  snr {pt.snr_db:+7.1f} dB   nmse {pt.nmse:.6e}   "
                f"stderr {pt.stderr:.2e}   active {pt.mean_active:6.2f}   "
                f"p {pt.mean_p:.4g}"
            )
        target = _output_path(out, name, multiple)
        if target.parent != Path(""):
            target.parent.mkdir(parents=True, exist_ok=True)
        sweep_to_csv(result, target)
        print(f"  wrote {target}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else (_env_int("SEED") or 1)
    quick = args.quick or _env_flag("QUICK")
    all_ok = True
    for label, fn in ORACLES:
        ok, detail = fn(seed=seed, quick=quick)
        print(f"{label}: {'PASS' if ok else 'FAIL'} ({detail})")
        all_ok = all_ok and ok
    return 0 if all_ok else 1


def cmd_demo(args: argparse.Namespace) -> int:
    detector = "ml" if args.scheme == "binary_ml" else "lmmse"
    config = SimConfig(
        num_devices=args.k,
        bit_depth=args.b,
        num_subcarriers=args.b,
        scheme=args.scheme,
        detector=detector,
        snr_db_grid=(args.snr_db,),
        trials=1,
        seed=args.seed,
        csi_error_radius=args.csi_error,
    )
    sigma2 = config.sigma2(args.snr_db)
    realization = draw_channel(config.channel_params(sigma2), args.seed, mimo=config.mimo())
    rng = np.random.default_rng(np.random.SeedSequence((args.seed, 0, 0)))
    record = run_trial(config, realization, rng)

    print(
        f"demo: {args.k} devices, {args.b}-bit quantization, "
        f"snr {args.snr_db:g} dB, scheme {args.scheme}, seed {args.seed}"
    )
    print(f"device values:    {np.array2string(record.sources, precision=4)}")
    if record.lattice is not None:
        spec = config.quantizer()
        print(f"lattice integers: {record.lattice}")
        if config.scheme == "binary_ml":
            words = codec.encode_offset_binary(record.lattice, args.b)
        else:
            words = codec.encode(record.lattice, args.b)
        rendered = " ".join(codec.format_codeword(w) for w in words)
        print(f"codewords (MSB first): {rendered}")
        print("subcarrier   budget     active   p          r_true   re_y      r_hat")
        budgets = config.budgets()
        for l in range(args.b):
            print(
                f"{l + 1:<12d} {budgets[l]:<10.4g} {int(record.active_counts[l]):<8d} "
                f"{record.scalings[l]:<10.4g} {record.bit_sums[l]:<8.0f} "
                f"{record.received[l].real:<9.4f} {record.estimates[l]:.4f}"
            )
    else:
        print("subcarrier   active   p          re_y      estimate")
        for l in range(config.num_subcarriers):
            print(
                f"{l + 1:<12d} {int(record.active_counts[l]):<8d} "
                f"{record.scalings[l]:<10.4g} {record.received[l].real:<9.4f} "
                f"{record.estimates[l]:.4f}"
            )
    print(f"decoded sum:   {record.s_hat:.6f}")
    print(f"quantized sum: {record.s_quant:.6f}")
    print(f"true sum:      {record.s_true:.6f}")
    print(
        f"squared error: total {record.squared_error_total:.3e}, "
        f"quantization {record.squared_error_quantization:.3e}, "
        f"transmission {record.squared_error_transmission:.3e}"
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aircomp",
        description="Simulate over-the-air aggregation of quantized values.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser("sweep", help="run NMSE-versus-SNR experiments")
    p_sweep.add_argument("config", nargs="?", help="experiment config file")
    p_sweep.add_argument("--out", help="output CSV file or directory")
    p_sweep.add_argument("--seed", type=int, default=None, help="override seed")
    p_sweep.add_argument("--trials", type=int, default=None, help="override trial count")
    p_sweep.add_argument(
        "--quick", action="store_true", help="cap trials at 2000 for a fast pass"
    )
    p_sweep.add_argument("-v", "--verbose", action="store_true", help="per-point timing")

    p_verify = sub.add_parser("verify", help="run the built-in correctness oracles")
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--quick", action="store_true", help="smaller oracle sizes")

    p_demo = sub.add_parser("demo", help="trace one aggregation trial end to end")
    p_demo.add_argument("--seed", type=int, default=1)
    p_demo.add_argument("--k", type=int, default=3, help="number of devices")
    p_demo.add_argument("--b", type=int, default=4, help="quantizer bit depth")
    p_demo.add_argument("--snr-db", type=float, default=10.0)
    p_demo.add_argument("--scheme", choices=SCHEMES, default="proposed")
    p_demo.add_argument("--csi-error", type=float, default=0.0)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_demo(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
