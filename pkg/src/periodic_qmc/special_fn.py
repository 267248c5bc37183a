"""
Special functions behind the SPOD weights and the lattice kernel.

Stirling numbers of the second kind, falling factorials, Bernoulli
polynomials, the Bernoulli-polynomial lattice kernel ``omega``, the Riemann
zeta function and a checker for the Stirling closed form of the derivative
recurrence that drives the parametric regularity bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
import scipy.special

__all__ = [
    "MultiIndex",
    "stirling2",
    "stirling2_max",
    "falling_factorial_ratio",
    "bernoulli_number",
    "bernoulli_poly",
    "omega_kernel",
    "riemann_zeta",
    "verify_regularity_identity",
]

STIRLING_MAX_N = 20


@dataclass(frozen=True)
class MultiIndex:
    """Multi-index with finite support; trailing zeros are dropped."""

    entries: tuple[int, ...] = ()

    def __post_init__(self):
        entries = tuple(int(v) for v in self.entries)
        if any(v < 0 for v in entries):
            raise ValueError("multi-index entries must be nonnegative")
        while entries and entries[-1] == 0:
            entries = entries[:-1]
        object.__setattr__(self, "entries", entries)

    @classmethod
    def unit(cls, j: int, k: int = 1) -> "MultiIndex":
        """``k * e_j`` with 0-based coordinate ``j``."""
        return cls((0,) * j + (k,))

    def __getitem__(self, j: int) -> int:
        return self.entries[j] if j < len(self.entries) else 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def order(self) -> int:
        return sum(self.entries)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(j for j, v in enumerate(self.entries) if v)

    def __le__(self, other: "MultiIndex") -> bool:
        n = max(len(self), len(other))
        return all(self[j] <= other[j] for j in range(n))

    def __lt__(self, other: "MultiIndex") -> bool:
        return self <= other and self != other

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        n = max(len(self), len(other))
        return MultiIndex(tuple(self[j] - other[j] for j in range(n)))

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        n = max(len(self), len(other))
        return MultiIndex(tuple(self[j] + other[j] for j in range(n)))

    def lower_set(self) -> Iterator["MultiIndex"]:
        """All ``m <= self``."""
        for m in itertools.product(*(range(v + 1) for v in self.entries)):
            yield MultiIndex(m)


@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind ``S(n, k)``.

    Evaluated exactly from the alternating-sum definition with
    ``S(0, 0) = 1`` and ``S(n, k) = 0`` for ``k > n``.

    Raises
    ------
    ValueError
        For negative arguments.
    OverflowError
        For ``n > 20``; the weights never need more and exactness is the point.
    """
    n, k = int(n), int(k)
    if n < 0 or k < 0:
        raise ValueError(f"stirling2 needs n, k >= 0, got ({n}, {k})")
    if n > STIRLING_MAX_N:
        raise OverflowError(f"stirling2 is only tabulated for n <= {STIRLING_MAX_N}")
    if k > n:
        return 0
    if n == 0:
        return 1
    total = sum((-1) ** (k - j) * math.comb(k, j) * j**n for j in range(k + 1))
    q, r = divmod(total, math.factorial(k))
    assert r == 0
    return q


def stirling2_max(n: int) -> int:
    """``max_{1<=k<=n} S(n, k)``."""
    return max(stirling2(n, k) for k in range(1, n + 1))


def falling_factorial_ratio(ell: int, w: int) -> int:
    """``ell! / (ell - w)!`` as the product ``ell (ell-1) ... (ell-w+1)``."""
    if w < 0 or ell < 0 or w > ell:
        raise ValueError(f"need 0 <= w <= ell, got ell={ell}, w={w}")
    return math.perm(ell, w)


@lru_cache(maxsize=None)
def bernoulli_number(m: int) -> Fraction:
    """Bernoulli number ``B_m`` (convention ``B_1 = -1/2``), exact."""
    if m < 0:
        raise ValueError("Bernoulli index must be nonnegative")
    if m == 0:
        return Fraction(1)
    acc = sum(math.comb(m + 1, k) * bernoulli_number(k) for k in range(m))
    return -acc / (m + 1)


@lru_cache(maxsize=None)
def _bernoulli_coeffs(alpha: int) -> np.ndarray:
    # coefficients of B_alpha(x) in decreasing powers, for np.polyval
    return np.array(
        [float(math.comb(alpha, k) * bernoulli_number(k)) for k in range(alpha + 1)]
    )


def bernoulli_poly(alpha: int, x):
    """Bernoulli polynomial ``B_alpha(x)`` on ``[0, 1]``.

    Degrees 2, 4 and 6 use nested closed forms; other degrees are expanded
    from the exact Bernoulli numbers. Accepts scalars or arrays.
    """
    if alpha < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("bernoulli_poly is defined here on [0, 1]")
    if alpha == 2:
        out = x * (x - 1.0) + 1.0 / 6.0
    elif alpha == 4:
        t = x * (x - 1.0)
        out = t * t - 1.0 / 30.0
    elif alpha == 6:
        out = x**2 * (x**2 * (x * (x - 3.0) + 2.5) - 0.5) + 1.0 / 42.0
    else:
        out = np.polyval(_bernoulli_coeffs(alpha), x)
    return out[()] if out.ndim == 0 else out


def omega_kernel(alpha: int, x):
    """Lattice kernel ``(2 pi)^alpha B_alpha(x) / ((-1)^(alpha/2+1) alpha!)``.

    Only defined for even ``alpha >= 2``. For ``alpha = 2`` this is
    ``2 pi^2 (x^2 - x + 1/6)``.
    """
    if alpha < 2 or alpha % 2:
        raise ValueError(f"omega_kernel needs an even alpha >= 2, got {alpha}")
    sign = -1.0 if (alpha // 2 + 1) % 2 else 1.0
    scale = (2.0 * math.pi) ** alpha / (sign * math.factorial(alpha))
    return scale * bernoulli_poly(alpha, x)


@lru_cache(maxsize=256)
def riemann_zeta(x: float) -> float:
    """Riemann zeta function for real ``x > 1``."""
    x = float(x)
    if not x > 1.0:
        raise ValueError(f"riemann_zeta needs x > 1, got {x}")
    return float(scipy.special.zeta(x))


def verify_regularity_identity(
    B: float, c: float, upsilon: Sequence[float], nu: MultiIndex | Sequence[int]
) -> tuple[float, float]:
    """Run the derivative-bound recurrence with equality and compare it to
    its Stirling closed form.

    The recurrence is ``A_0 = B`` and
    ``A_nu = sum_j sum_{k=1}^{nu_j} C(nu_j, k) c^k upsilon_j A_{nu - k e_j}``;
    the closed form is
    ``c^|nu| B sum_{m <= nu} |m|! upsilon^m prod_i S(nu_i, m_i)``.

    Returns
    -------
    (recursive_value, closed_form)
    """
    nu = nu if isinstance(nu, MultiIndex) else MultiIndex(tuple(nu))
    if len(nu) > len(upsilon):
        raise ValueError("support of nu exceeds the length of upsilon")
    if nu.order > 10:
        raise ValueError("|nu| <= 10 required for the exact recursion")
    ups = [float(u) for u in upsilon]

    memo: dict[tuple[int, ...], float] = {(): float(B)}

    def A(m: MultiIndex) -> float:
        key = m.entries
        if key in memo:
            return memo[key]
        total = 0.0
        for j in m.support:
            for k in range(1, m[j] + 1):
                total += math.comb(m[j], k) * c**k * ups[j] * A(m - MultiIndex.unit(j, k))
        memo[key] = total
        return total

    recursive = A(nu)

    closed = 0.0
    for m in nu.lower_set():
        term = float(math.factorial(m.order))
        for i, nu_i in enumerate(nu.entries):
            term *= ups[i] ** m[i] * stirling2(nu_i, m[i])
        closed += term
    closed *= c**nu.order * B
    return recursive, closed
