"""Signed lattice quantization and two's-complement bit-plane coding.

Each source value is floored onto a signed integer lattice, expanded into its
two's-complement bits (stored LSB first), and every bit position travels on its
own subcarrier.  The receiver only ever needs the *across-device sum* of each
bit position: because the two's-complement weight vector is fixed, the decoder
is a linear map from per-position sums back to the sum of the quantized
values, and adding codewords element-wise recovers the exact integer sum with
codeword length equal to the bit depth.  Offset-binary variants of the same
machinery back the conventional-coding baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuantizerSpec:
    """Signed b-bit lattice quantizer with scale zeta = 2^(b-1)/(s_max+eps).

    The guard term eps > 0 keeps zeta*s_max strictly below 2^(b-1), so every
    admissible input lands on the lattice {-2^(b-1), ..., 2^(b-1)-1}.  eps
    defaults to 2^(-b-4)*s_max, far below one lattice step.
    """

    b: int
    s_max: float
    eps: float | None = None
    zeta: float = field(init=False)

    def __post_init__(self):
        if self.b < 1:
            raise ValueError(f"bit depth must be >= 1, got {self.b}")
        if not self.s_max > 0:
            raise ValueError(f"s_max must be positive, got {self.s_max}")
        eps = self.eps
        if eps is None:
            eps = 2.0 ** (-self.b - 4) * self.s_max
        if not 0 < eps < 2.0 ** (1 - self.b) * self.s_max:
            raise ValueError(
                f"eps must lie in (0, 2^(1-b)*s_max); got eps={eps}, b={self.b}"
            )
        object.__setattr__(self, "eps", float(eps))
        object.__setattr__(self, "zeta", 2.0 ** (self.b - 1) / (self.s_max + eps))

    @property
    def lattice_min(self) -> int:
        return -(2 ** (self.b - 1))

    @property
    def lattice_max(self) -> int:
        return 2 ** (self.b - 1) - 1


def quantize(s, spec: QuantizerSpec, clamp: bool = False):
    """Map source values to lattice integers floor(zeta * s).

    Inputs must satisfy |s| <= s_max unless clamp=True, in which case values
    are saturated to [-s_max, s_max] first (out-of-range mass collapses onto
    the edge cells).  Returns a Python int for scalar input, else int64 array.
    """
    arr = np.asarray(s, dtype=np.float64)
    if clamp:
        arr = np.clip(arr, -spec.s_max, spec.s_max)
    elif np.any(np.abs(arr) > spec.s_max):
        bad = float(np.max(np.abs(arr)))
        raise ValueError(f"|s| <= s_max={spec.s_max} required, got |s|={bad}")
    v = np.floor(spec.zeta * arr).astype(np.int64)
    if np.isscalar(s):
        return int(v)
    return v


def _check_lattice_range(v: np.ndarray, length: int):
    lo, hi = -(2 ** (length - 1)), 2 ** (length - 1) - 1
    if np.any(v < lo) or np.any(v > hi):
        raise ValueError(
            f"value outside signed {length}-bit lattice [{lo}, {hi}]; "
            f"{length} bit positions cannot represent it"
        )


def encode(v, length: int) -> np.ndarray:
    """Two's-complement bits of lattice integer(s) v, LSB first.

    Output shape is v.shape + (length,).  Values must fit the signed lattice
    of the given length; with fewer positions than the quantizer bit depth at
    least one lattice value is unrepresentable (2^b values, 2^(length) < 2^b
    codewords), so the range check is what enforces minimality.
    """
    arr = np.asarray(v, dtype=np.int64)
    if length < 1:
        raise ValueError(f"codeword length must be >= 1, got {length}")
    _check_lattice_range(arr, length)
    unsigned = arr & ((1 << length) - 1)  # two's complement, int64-safe
    bits = (unsigned[..., None] >> np.arange(length)) & 1
    return bits.astype(np.int64)


def encode_offset_binary(v, length: int) -> np.ndarray:
    """Offset-binary bits (LSB first): plain binary of v + 2^(length-1)."""
    arr = np.asarray(v, dtype=np.int64)
    if length < 1:
        raise ValueError(f"codeword length must be >= 1, got {length}")
    _check_lattice_range(arr, length)
    unsigned = arr + (1 << (length - 1))
    bits = (unsigned[..., None] >> np.arange(length)) & 1
    return bits.astype(np.int64)


def _weights(length: int, signed: bool) -> np.ndarray:
    w = np.ones(length, dtype=np.int64) << np.arange(length, dtype=np.int64)
    if signed:
        w[-1] = -w[-1]
    return w


def decode(r, zeta: float):
    """Linear decoder: (sum_{l<L} r_l 2^(l-1) - r_L 2^(L-1)) / zeta.

    Accepts real-valued per-position estimates (detector outputs) as well as
    exact integer bit-position sums; integer input is reduced in int64 so the
    exact-sum identity holds with no floating-point tolerance.  The last axis
    is the bit-position axis.
    """
    arr = np.asarray(r)
    length = arr.shape[-1]
    if np.issubdtype(arr.dtype, np.integer):
        total = arr.astype(np.int64) @ _weights(length, signed=True)
    else:
        total = arr @ _weights(length, signed=True).astype(np.float64)
    out = total / zeta
    return float(out) if arr.ndim == 1 else out


def decode_offset_binary(r, zeta: float, num_devices: int):
    """Decoder for summed offset-binary codewords of num_devices senders."""
    arr = np.asarray(r)
    length = arr.shape[-1]
    w = _weights(length, signed=False)
    if np.issubdtype(arr.dtype, np.integer):
        total = arr.astype(np.int64) @ w
    else:
        total = arr @ w.astype(np.float64)
    out = total / zeta - num_devices * (2 ** (length - 1)) / zeta
    return float(out) if arr.ndim == 1 else out


def format_codeword(bits) -> str:
    """Render one codeword as an MSB-first bit string, e.g. '1101'."""
    arr = np.asarray(bits, dtype=np.int64)
    if arr.ndim != 1 or np.any((arr != 0) & (arr != 1)):
        raise ValueError("expected a 1-D array of 0/1 bits")
    return "".join(str(int(x)) for x in arr[::-1])


def parse_codeword(text: str) -> np.ndarray:
    """Inverse of format_codeword: MSB-first string to LSB-first bits."""
    if not text or any(c not in "01" for c in text):
        raise ValueError(f"not a bit string: {text!r}")
    return np.array([int(c) for c in reversed(text)], dtype=np.int64)
