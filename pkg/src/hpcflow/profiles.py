"""Closed-form profiles: processor speed α(x) and density fields ρ0 / ρ_bc.

Both are plain-data descriptions (a kind plus a parameter list) so they can be
echoed into configuration files and manifests and rebuilt exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ParameterError

ALPHA_KINDS = (
    "constant",
    "sine-power",
    "sine-power-6",
    "piecewise-linear-notch",
    "cosine",
    "tabulated",
)

FIELD_KINDS = ("zero", "constant", "indicator-below", "sine-power-band", "callable")

_ALPHA_NPARAMS = {
    "constant": 1,
    "sine-power": 3,
    "sine-power-6": 2,
    "piecewise-linear-notch": 2,
    "cosine": 3,
}

_FIELD_NPARAMS = {"zero": 0, "constant": 1, "indicator-below": 2, "sine-power-band": 5}


def _first_axis(x):
    # n-D coordinates arrive as a tuple of arrays; profiles vary along axis 0 only.
    if isinstance(x, tuple):
        return np.asarray(x[0], dtype=float)
    return np.asarray(x, dtype=float)


def notch_shape(x):
    """The localized-slowdown bump: 1 on |x-1/2|<1/40, 0 beyond |x-1/2|>1/20, linear ramps between."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    up = (x >= 0.45) & (x <= 0.475)
    down = (x >= 0.525) & (x <= 0.55)
    out = np.where(up, 40.0 * x - 18.0, out)
    out = np.where(down, -40.0 * x + 22.0, out)
    out = np.where(np.abs(x - 0.5) < 0.025, 1.0, out)
    return out


@dataclass(frozen=True)
class AlphaProfile:
    """Maximum-throughput profile α(x), 1-periodic in x.

    Kinds and parameters:

    - ``constant``: ``[c]``
    - ``sine-power``: ``[base, amp, p]`` giving ``base - amp*sin(pi x)**p``
    - ``sine-power-6``: ``[base, amp]``, the same with ``p = 6``
    - ``piecewise-linear-notch``: ``[base, depth]`` giving ``base - depth*c(x)``
    - ``cosine``: ``[base, amp, k]`` giving ``base + amp*cos(2 pi k x)`` (integer k)
    - ``tabulated``: values at ``x_j = j/L``, periodic linear interpolation
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in ALPHA_KINDS:
            raise ParameterError(f"unknown alpha profile kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        want = _ALPHA_NPARAMS.get(self.kind)
        if want is not None and len(params) != want:
            raise ParameterError(f"alpha kind {self.kind!r} takes {want} parameters, got {len(params)}")
        if self.kind == "tabulated" and len(params) < 1:
            raise ParameterError("tabulated alpha needs at least one value")
        if self.kind == "sine-power" and params[2] <= 0:
            raise ParameterError("sine-power exponent must be positive")
        if self.kind == "cosine" and (params[2] != round(params[2]) or params[2] == 0):
            raise ParameterError("cosine frequency must be a nonzero integer to keep period 1")
        lo, _ = self.bounds()
        if lo < 0:
            raise ParameterError(f"alpha profile {self.kind} {params} takes negative values (min {lo})")

    @classmethod
    def constant(cls, c: float) -> "AlphaProfile":
        return cls("constant", (c,))

    def bounds(self) -> tuple[float, float]:
        """Exact (inf, sup) of the profile over one period."""
        p = self.params
        if self.kind == "constant":
            return p[0], p[0]
        if self.kind in ("sine-power", "sine-power-6", "piecewise-linear-notch"):
            # shape factor ranges over [0, 1]
            base, amp = p[0], p[1]
            return base - max(amp, 0.0), base - min(amp, 0.0)
        if self.kind == "cosine":
            return p[0] - abs(p[1]), p[0] + abs(p[1])
        vals = np.asarray(p)
        return float(vals.min()), float(vals.max())

    def sup(self) -> float:
        return self.bounds()[1]

    def __call__(self, x):
        x = np.mod(_first_axis(x), 1.0)
        p = self.params
        if self.kind == "constant":
            out = np.full_like(x, p[0])
        elif self.kind == "sine-power":
            out = p[0] - p[1] * np.sin(np.pi * x) ** p[2]
        elif self.kind == "sine-power-6":
            out = p[0] - p[1] * np.sin(np.pi * x) ** 6
        elif self.kind == "piecewise-linear-notch":
            out = p[0] - p[1] * notch_shape(x)
        elif self.kind == "cosine":
            out = p[0] + p[1] * np.cos(2.0 * np.pi * p[2] * x)
        else:
            vals = np.asarray(p)
            L = len(vals)
            s = x * L
            j = np.floor(s).astype(int) % L
            frac = s - np.floor(s)
            out = (1.0 - frac) * vals[j] + frac * vals[(j + 1) % L]
        if out.ndim == 0:
            return float(out)
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


def _sin_even_power_antiderivative(u, m):
    """Antiderivative of sin(u)**(2m) in u (power-reduction expansion)."""
    total = math.comb(2 * m, m) * u
    for j in range(m):
        c = 2.0 * (-1) ** (m - j) * math.comb(2 * m, j)
        n = 2 * (m - j)
        total = total + c * np.sin(n * u) / n
    return total / 4.0**m


@dataclass(frozen=True)
class FieldSpec:
    """A nonnegative scalar field f(x, s), with s = z for ρ0 and s = t for ρ_bc.

    Kinds and parameters:

    - ``zero``: ``[]``
    - ``constant``: ``[c]``
    - ``indicator-below``: ``[c, s_cut]`` giving ``c`` where ``s <= s_cut``, else 0
    - ``sine-power-band``: ``[amp, p, k, lo, hi]`` giving
      ``amp*sin(2 pi k s)**p`` on ``[lo, hi]``, else 0
    - ``callable``: wraps ``func(x, s)``; no closed-form integral
    """

    kind: str
    params: tuple = ()
    func: Optional[Callable] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ParameterError(f"unknown field kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if self.kind == "callable":
            if self.func is None:
                raise ParameterError("callable field needs func")
            return
        want = _FIELD_NPARAMS[self.kind]
        if len(params) != want:
            raise ParameterError(f"field kind {self.kind!r} takes {want} parameters, got {len(params)}")

    @classmethod
    def zero(cls) -> "FieldSpec":
        return cls("zero")

    @classmethod
    def constant(cls, c: float) -> "FieldSpec":
        return cls("constant", (c,))

    @classmethod
    def from_callable(cls, func: Callable) -> "FieldSpec":
        return cls("callable", (), func)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or (self.kind in ("constant", "indicator-below", "sine-power-band")
                                       and self.params[0] == 0.0)

    def __call__(self, x, s):
        if self.kind == "callable":
            return np.asarray(self.func(x, s), dtype=float)
        xa = _first_axis(x)
        s = np.asarray(s, dtype=float)
        shape = np.broadcast(xa, s).shape
        p = self.params
        if self.kind == "zero":
            return np.zeros(shape)
        if self.kind == "constant":
            return np.full(shape, p[0])
        if self.kind == "indicator-below":
            return np.broadcast_to(np.where(s <= p[1], p[0], 0.0), shape).astype(float)
        amp, power, k, lo, hi = p
        band = (s >= lo) & (s <= hi)
        vals = amp * np.sin(2.0 * np.pi * k * s) ** power
        return np.broadcast_to(np.where(band, vals, 0.0), shape).astype(float)

    def has_closed_integral(self) -> bool:
        if self.kind in ("zero", "constant", "indicator-below"):
            return True
        if self.kind == "sine-power-band":
            power = self.params[1]
            return power == round(power) and int(power) % 2 == 0
        return False

    def integral_to_one(self, x, s):
        """Closed form of the integral of f(x, .) over [s, 1]."""
        if not self.has_closed_integral():
            raise ParameterError(f"field kind {self.kind!r} has no closed-form integral")
        xa = _first_axis(x)
        s = np.asarray(s, dtype=float)
        shape = np.broadcast(xa, s).shape
        p = self.params
        if self.kind == "zero":
            return np.zeros(shape)
        if self.kind == "constant":
            return np.broadcast_to(p[0] * (1.0 - s), shape).astype(float)
        if self.kind == "indicator-below":
            top = min(p[1], 1.0)
            return np.broadcast_to(p[0] * np.maximum(0.0, top - s), shape).astype(float)
        amp, power, k, lo, hi = p
        m = int(round(power)) // 2
        a = np.clip(s, lo, min(hi, 1.0))
        b = min(hi, 1.0)
        scale = 2.0 * np.pi * k
        if scale == 0.0:
            return np.zeros(shape)
        val = (_sin_even_power_antiderivative(scale * b, m) - _sin_even_power_antiderivative(scale * a, m)) / scale
        val = np.where(a >= b, 0.0, val)
        return np.broadcast_to(amp * val, shape).astype(float)

    def to_dict(self) -> dict:
        if self.kind == "callable":
            return {"kind": "callable", "params": []}
        return {"kind": self.kind, "params": list(self.params)}


def alpha_from_dict(d: dict) -> AlphaProfile:
    return AlphaProfile(d["kind"], tuple(d.get("params", ())))


def field_from_dict(d: dict) -> FieldSpec:
    return FieldSpec(d["kind"], tuple(d.get("params", ())))


def sample_max(profile: AlphaProfile, points: Sequence[float]) -> float:
    return float(np.max(profile(np.asarray(points, dtype=float))))
