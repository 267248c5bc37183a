"""
Rank-1 lattice rules: point generation, equal-weight cubature and the
worst-case error ``P_alpha`` in the weighted Korobov space.

``P_alpha`` is available two ways. :func:`worst_case_error_kernel` runs the
SPOD order recursion along a fixed generating vector and is exact up to
rounding. :func:`worst_case_error_dual` sums ``1/r_alpha(gamma, h)`` over the
dual lattice inside an ``inf``-norm box; it is a test oracle that converges
to the kernel value from below as the box grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Iterator

import numpy as np

from .cbc import GeneratingVector, OrderVectors, kernel_row_sum
from .special_fn import omega_kernel
from .spod_weights import SpodWeightSpec, weight_of_subset

__all__ = [
    "LatticeRule",
    "IntegrandError",
    "points",
    "iter_points",
    "qmc_apply",
    "worst_case_error_kernel",
    "worst_case_error_dual",
    "dual_tail_bound",
]

SHIFT_MODES = ("unit_cube", "centered")
# largest box the dual-lattice oracle will enumerate: (2H+1)^s for s=3, H=200
DUAL_MAX_POINTS = 401**3


class IntegrandError(RuntimeError):
    """Integrand failure at lattice point ``index``."""

    def __init__(self, index: int, point: np.ndarray, cause: BaseException):
        super().__init__(f"integrand failed at lattice point k={index}, y={point}: {cause!r}")
        self.index = index
        self.point = point


@dataclass(frozen=True, eq=False)
class LatticeRule:
    """Rank-1 lattice rule ``y_k = {k z / n}``, ``k = 0..n-1``.

    With ``shift_mode="centered"`` every point is translated by ``-1/2`` so
    the rule integrates over ``[-1/2, 1/2)^s``.
    """

    n: int
    z: tuple[int, ...]
    shift_mode: str = "unit_cube"

    def __post_init__(self):
        z = tuple(int(v) % self.n for v in np.atleast_1d(self.z))
        if self.n < 1:
            raise ValueError("lattice modulus must be positive")
        if self.shift_mode not in SHIFT_MODES:
            raise ValueError(f"shift_mode must be one of {SHIFT_MODES}")
        if self.n > 1 and any(math.gcd(v, self.n) != 1 for v in z):
            raise ValueError("components of z must be units modulo n")
        object.__setattr__(self, "z", z)

    @classmethod
    def from_vector(cls, vec: GeneratingVector, s: int | None = None,
                    shift_mode: str = "unit_cube") -> "LatticeRule":
        s = vec.s if s is None else s
        return cls(vec.n, tuple(vec.z[:s]), shift_mode)

    @property
    def s(self) -> int:
        return len(self.z)

    def _offset(self) -> float:
        return 0.5 if self.shift_mode == "centered" else 0.0

    def block(self, start: int, stop: int) -> np.ndarray:
        """Points ``k = start..stop-1`` as a ``(stop-start, s)`` array."""
        k = np.arange(start, stop, dtype=np.int64)[:, None]
        z = np.asarray(self.z, dtype=np.int64)
        # integer residues first so every coordinate is an exact fraction j/n
        return (k * z % self.n) / self.n - self._offset()


def points(rule: LatticeRule) -> np.ndarray:
    """All ``n`` points as an ``(n, s)`` array; use :func:`iter_points` for large ``n``."""
    return rule.block(0, rule.n)


def iter_points(rule: LatticeRule, block_size: int = 4096) -> Iterator[np.ndarray]:
    """Yield the points one at a time, generated in blocks of ``block_size``."""
    for start in range(0, rule.n, block_size):
        yield from rule.block(start, min(start + block_size, rule.n))


def qmc_apply(rule: LatticeRule, F: Callable[[np.ndarray], Any]) -> Any:
    """Equal-weight average ``(1/n) sum_k F(y_k)``.

    ``F`` receives one ``s``-vector at a time and may return a real or a
    complex scalar. The sum uses numpy's pairwise summation, so its rounding
    does not depend on how the evaluations were scheduled.

    Raises
    ------
    IntegrandError
        Wrapping any exception from ``F`` together with the point index.
    """
    values = []
    for k, y in enumerate(iter_points(rule)):
        try:
            values.append(F(y))
        except Exception as exc:
            raise IntegrandError(k, y, exc) from exc
    return np.sum(np.asarray(values)) / rule.n


def _check_alpha(alpha: int) -> None:
    if alpha < 2 or alpha % 2:
        raise ValueError(f"kernel form needs an even alpha >= 2, got {alpha}")


def _spec_for(rule: LatticeRule, spec: SpodWeightSpec) -> SpodWeightSpec:
    if spec.s < rule.s:
        raise ValueError(f"weights cover {spec.s} dimensions, rule has {rule.s}")
    return spec if spec.s == rule.s else spec.truncate(rule.s)


def worst_case_error_kernel(rule: LatticeRule, spec: SpodWeightSpec, alpha: int) -> float:
    """``P_alpha = (1/n) sum_k sum_{u != 0} gamma_u prod_{j in u} omega({k z_j / n})``.

    Runs the order recursion along the fixed ``z``: ``O(n s sigma^2)`` work
    instead of ``2^s`` subsets.
    """
    _check_alpha(alpha)
    spec = _spec_for(rule, spec)
    n = rule.n
    k = np.arange(n, dtype=np.int64)
    omega_vals = np.asarray(omega_kernel(alpha, k / n), dtype=float)
    row_sum = kernel_row_sum(n, alpha, omega_kernel, omega_vals)
    state = OrderVectors(spec, n, spec.sigma * rule.s)

    total = 0.0
    for zj in rule.z:
        row = omega_vals[zj * k % n]
        x, M = state.x_vector()
        if np.isfinite(M):
            x_mean = float(np.mean(x))
            total += (x_mean * row_sum + float(row @ (x - x_mean))) / n * math.exp(M)
        state.update(row)
    return total


def dual_tail_bound(spec: SpodWeightSpec, alpha: int, H: int, s: int | None = None) -> float:
    """Upper bound on the part of the dual sum with ``|h|_inf > H``.

    Bounds it by the same sum over all of ``Z^s``:
    ``sum_u gamma_u |u| 2 t_H (2 zeta(alpha))^(|u|-1)`` with
    ``t_H = sum_{m > H} m^-alpha <= H^(1-alpha) / (alpha - 1)``.
    """
    from .special_fn import riemann_zeta

    s = spec.s if s is None else s
    tail = H ** (1.0 - alpha) / (alpha - 1.0)
    z2 = 2.0 * riemann_zeta(alpha)
    total = 0.0
    for mask in range(1, 1 << s):
        u = [j for j in range(s) if mask >> j & 1]
        total += weight_of_subset(spec, u) * len(u) * 2.0 * tail * z2 ** (len(u) - 1)
    return total


def worst_case_error_dual(rule: LatticeRule, spec: SpodWeightSpec, alpha: int, H: int) -> float:
    """Truncated dual-lattice sum
    ``sum_{h . z = 0 mod n, 0 < |h|_inf <= H} gamma_{supp h} prod_{j in supp h} |h_j|^-alpha``.

    Converges to :func:`worst_case_error_kernel` from below as ``H`` grows;
    the gap is of order ``(n/H)^(alpha-1)`` relative, so this is an oracle
    for small ``n`` only.
    """
    if alpha < 2:
        raise ValueError("need alpha >= 2")
    spec = _spec_for(rule, spec)
    s, n = rule.s, rule.n
    if H < 0 or (2 * H + 1) ** s > DUAL_MAX_POINTS:
        raise ValueError(f"(2H+1)^s = {(2 * H + 1) ** s} exceeds the enumeration budget")

    gamma_mask = np.zeros(1 << s)
    for mask in range(1, 1 << s):
        gamma_mask[mask] = weight_of_subset(spec, [j for j in range(s) if mask >> j & 1])

    h = np.arange(-H, H + 1, dtype=np.int64)
    habs = np.abs(h).astype(float)
    with np.errstate(divide="ignore"):
        inv = np.where(h != 0, habs**-alpha, 1.0)
    z = np.asarray(rule.z, dtype=np.int64)

    # tail coordinates 2..s as a flat grid; loop over the first coordinate
    if s > 1:
        grids = np.meshgrid(*([h] * (s - 1)), indexing="ij")
        rest_dot = sum(g.ravel() * z[j + 1] for j, g in enumerate(grids)) % n
        rest_prod = np.ones(rest_dot.size)
        rest_mask = np.zeros(rest_dot.size, dtype=np.int64)
        for j, g in enumerate(grids):
            g = g.ravel()
            rest_prod *= inv[g + H]
            rest_mask |= (g != 0).astype(np.int64) << (j + 1)
    else:
        rest_dot = np.zeros(1, dtype=np.int64)
        rest_prod = np.ones(1)
        rest_mask = np.zeros(1, dtype=np.int64)

    total = 0.0
    for h1 in h:
        on = (h1 * z[0] + rest_dot) % n == 0
        mask = rest_mask[on] | (1 if h1 != 0 else 0)
        terms = gamma_mask[mask] * rest_prod[on] * inv[h1 + H]
        total += float(np.sum(terms[mask != 0]))
    return total
