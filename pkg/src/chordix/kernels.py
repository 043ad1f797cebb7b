"""Transfer kernels with closed-form first and second antiderivatives.

``phi`` is the radial kernel; the transfer integrand is phi(R) / (4 pi R^2).
``phi1(x)`` integrates phi from 0 to x and ``phi2(x)`` integrates phi1 from 0
to x.  Callers pass distances (nonnegative arguments).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Kernel:
    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    phi1: Callable[[np.ndarray], np.ndarray]
    phi2: Callable[[np.ndarray], np.ndarray]
    params: tuple = ()

    @property
    def spec(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={_fmt(v)}" for k, v in self.params)

    @property
    def singular_at_zero(self) -> bool:
        return float(self.phi(np.zeros(1))[0]) != 0.0

    def transfer_weight(self, r: np.ndarray) -> np.ndarray:
        """phi(r) / (4 pi r^2)."""
        r = np.asarray(r, dtype=float)
        return self.phi(r) / (4.0 * math.pi * r * r)


def _fmt(x: float) -> str:
    short = format(x, "g")
    return short if float(short) == x else repr(x)


def ball() -> Kernel:
    return Kernel(
        "ball",
        lambda r: 4.0 * math.pi * np.asarray(r, float) ** 2,
        lambda x: 4.0 * math.pi * np.asarray(x, float) ** 3 / 3.0,
        lambda x: math.pi * np.asarray(x, float) ** 4 / 3.0,
    )


def const() -> Kernel:
    return Kernel(
        "const",
        lambda r: np.ones_like(np.asarray(r, float)),
        lambda x: np.asarray(x, float) * 1.0,
        lambda x: np.asarray(x, float) ** 2 / 2.0,
    )


def exponential(sigma: float) -> Kernel:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    s = float(sigma)

    def phi2(x):
        u = s * np.asarray(x, float)
        # u - 1 + exp(-u) without cancellation for small u
        return (np.expm1(-u) + u) / (s * s)

    return Kernel(
        "exp",
        lambda r: np.exp(-s * np.asarray(r, float)),
        lambda x: -np.expm1(-s * np.asarray(x, float)) / s,
        phi2,
        (("sigma", s),),
    )


def builtin_kernels(sigma: float = 1.0) -> list[Kernel]:
    return [ball(), exponential(sigma), const()]


def parse_kernel(spec: str) -> Kernel:
    """``ball``, ``const`` or ``exp:sigma=<float>``."""
    name, _, rest = spec.strip().partition(":")
    if name == "ball" and not rest:
        return ball()
    if name == "const" and not rest:
        return const()
    if name == "exp":
        params = dict(p.split("=", 1) for p in rest.split(",") if p) if rest else {}
        if set(params) - {"sigma"}:
            raise ValueError(f"unknown exp parameter in {spec!r}")
        return exponential(float(params.get("sigma", 1.0)))
    raise ValueError(f"unknown kernel {spec!r}")
