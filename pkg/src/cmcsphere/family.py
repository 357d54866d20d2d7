"""Family parameters, unit-sphere volumes and the closed-form reference families."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache


@dataclass(frozen=True)
class FamilyParams:
    """Integer data selecting a family S^k x S^l x S^1 -> S^{n+1}, with n = k + l + 1.

    Construct with ``FamilyParams(k, l)`` or ``FamilyParams.from_nl(n, l)``.
    Passing ``n`` alongside ``k`` and ``l`` is accepted only if consistent.
    """

    k: int
    l: int
    n: int | None = None

    def __post_init__(self):
        for name in ("k", "l"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        n = self.k + self.l + 1
        if self.n is not None and self.n != n:
            raise ValueError(f"inconsistent family: k={self.k}, l={self.l} but n={self.n}")
        object.__setattr__(self, "n", n)

    @classmethod
    def from_nl(cls, n: int, l: int) -> "FamilyParams":
        if l < 1 or n - l - 1 < 1:
            raise ValueError(f"(n, l) = ({n}, {l}) needs 1 <= l <= n - 2")
        return cls(k=n - l - 1, l=l)

    @property
    def label(self) -> str:
        return f"({self.n},{self.l})"

    def as_dict(self) -> dict:
        return {"k": self.k, "l": self.l, "n": self.n}


@dataclass(frozen=True)
class CliffordDatum:
    r: float
    H: float
    volume: float


@lru_cache(maxsize=None)
def sphere_volume(m: int) -> float:
    """Volume of the unit m-sphere in R^{m+1}."""
    if m < 0:
        raise ValueError("sphere dimension must be nonnegative")
    if m == 0:
        return 2.0
    if m == 1:
        return 2.0 * math.pi
    return 2.0 * math.pi * sphere_volume(m - 2) / (m - 1)


def _check_radius(r: float) -> None:
    if not 0.0 < r < 1.0:
        raise ValueError(f"radius must lie in (0, 1), got {r!r}")


def clifford_mean_curvature(k: int, l: int, r: float) -> float:
    """H of S^k(r) x S^l(sqrt(1-r^2)) in S^{k+l+1}, normal (-sqrt(1-r^2) y, r z)."""
    _check_radius(r)
    s = math.sqrt(1.0 - r * r)
    return (k * s / r - l * r / s) / (k + l)


def clifford_datum(k: int, l: int, r: float) -> CliffordDatum:
    _check_radius(r)
    s = math.sqrt(1.0 - r * r)
    vol = r**k * sphere_volume(k) * s**l * sphere_volume(l)
    return CliffordDatum(r=r, H=clifford_mean_curvature(k, l, r), volume=vol)


def clifford_volume(n: int, l: int) -> float:
    """Volume of the minimal Clifford hypersurface S^{n-l} x S^l in S^{n+1}."""
    if not 1 <= l <= n - 1:
        raise ValueError(f"need 1 <= l <= n - 1, got (n, l) = ({n}, {l})")
    return clifford_datum(n - l, l, math.sqrt((n - l) / n)).volume


def clifford_comparison_ls(n: int) -> list[int]:
    """Second-factor dimensions of the minimal Clifford hypersurfaces compared against in S^{n+1}."""
    return list(range(1, n // 2 + 1))


def umbilical_mean_curvature(r: float) -> float:
    """H of the small sphere S^k(r) in S^{k+1} with respect to (-sqrt(1-r^2) y, r)."""
    _check_radius(r)
    return math.sqrt(1.0 - r * r) / r
