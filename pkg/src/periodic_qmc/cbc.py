"""
Component-by-component construction of rank-1 lattice rules with SPOD weights.

Both constructions run the same dynamic program over the order vectors
``p_{t,l}(k)``; they differ only in how the criterion ``Omega_n x`` is
evaluated for every candidate ``z``:

* :func:`cbc_naive` multiplies by the dense ``phi(n) x n`` matrix
  ``[omega({k z / n})]`` and works for any modulus ``n >= 2``;
* :func:`cbc_fast` (odd prime ``n``) reorders rows and columns by powers of
  a primitive root so that, after splitting off the ``k = 0`` column, the
  matrix is circulant, and multiplies by FFT in ``O(n log n)``.

Order vectors are stored with one log-scale per order so that the factorial
order weights ``Gamma_l = l!`` never overflow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.fft

from ._numtheory import factorize, is_prime
from .special_fn import omega_kernel
from .spod_weights import SpodWeightSpec

__all__ = [
    "GeneratingVector",
    "units_mod",
    "primitive_root",
    "convolve_cyclic",
    "permuted_omega",
    "kernel_row_sum",
    "OrderVectors",
    "cbc_naive",
    "cbc_fast",
]

Kernel = Callable[[int, np.ndarray], np.ndarray]

# candidates whose criterion lies within this fraction of the criterion's
# magnitude of the minimum are ties; the smallest z wins
TIE_RTOL = 1e-12
_BLOCK = 1024  # columns per pass in OrderVectors.update


@dataclass(eq=False)
class GeneratingVector:
    """Generating vector ``z`` of an ``n``-point rank-1 lattice with the
    criterion value ``P(z_1, ..., z_t)`` recorded after each step."""

    n: int
    z: np.ndarray
    step_values: np.ndarray
    alpha: int
    weight_spec_digest: str = ""

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.int64)
        self.step_values = np.asarray(self.step_values, dtype=float)
        if len(self.z) != len(self.step_values):
            raise ValueError("z and step_values differ in length")
        if any(math.gcd(int(zj), self.n) != 1 for zj in self.z):
            raise ValueError("every component of z must be a unit modulo n")

    @property
    def s(self) -> int:
        return len(self.z)

    def prefix(self, s: int) -> "GeneratingVector":
        return GeneratingVector(self.n, self.z[:s], self.step_values[:s], self.alpha,
                                self.weight_spec_digest)

    def to_text(self) -> str:
        lines = [f"{self.n} {self.s} {self.alpha}"]
        for j, (zj, pj) in enumerate(zip(self.z, self.step_values), start=1):
            lines.append(f"{j} {int(zj)} {pj:.16e}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GeneratingVector":
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        n, s, alpha = (int(v) for v in rows[0])
        body = rows[1:]
        if len(body) != s:
            raise ValueError(f"header declares s={s} but {len(body)} rows follow")
        for i, row in enumerate(body, start=1):
            if int(row[0]) != i:
                raise ValueError(f"row {i} is labelled {row[0]}")
        z = [int(r[1]) for r in body]
        p = [float(r[2]) for r in body]
        return cls(n, z, p, alpha)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def read(cls, path: str | Path) -> "GeneratingVector":
        return cls.from_text(Path(path).read_text())


def units_mod(n: int) -> np.ndarray:
    """Units of ``Z_n`` in ascending order."""
    if n < 2:
        raise ValueError(f"no lattice rule with modulus n={n}")
    k = np.arange(1, n, dtype=np.int64)
    return k[np.gcd(k, n) == 1]


def primitive_root(n: int) -> int:
    """Smallest primitive root of an odd prime ``n``."""
    if n < 3 or not is_prime(n):
        raise ValueError(f"primitive_root needs an odd prime, got {n}")
    m = n - 1
    factors = list(factorize(m))
    for g in range(2, n):
        if all(pow(g, m // q, n) != 1 for q in factors):
            return g
    raise AssertionError("unreachable: every prime has a primitive root")


def convolve_cyclic(a, b) -> np.ndarray:
    """Cyclic convolution ``c_i = sum_j a_j b_{(i-j) mod m}`` via FFT."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return _CyclicConvolver(a)(b)


class _CyclicConvolver:
    """Cyclic convolution with a fixed kernel; the kernel FFT is computed once.

    Lengths with large prime factors are zero-padded to a fast FFT size and
    the linear convolution is wrapped back.
    """

    def __init__(self, kernel: np.ndarray):
        self.m = m = len(kernel)
        if m < 1:
            raise ValueError("empty kernel")
        fast = scipy.fft.next_fast_len(m, real=True)
        if fast == m:
            self.size, self.wrap = m, False
        else:
            self.size, self.wrap = scipy.fft.next_fast_len(2 * m - 1, real=True), True
        self.kernel_hat = scipy.fft.rfft(kernel, self.size)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if len(x) != self.m:
            raise ValueError(f"length mismatch: kernel {self.m}, vector {len(x)}")
        y = scipy.fft.irfft(self.kernel_hat * scipy.fft.rfft(x, self.size), self.size)
        if not self.wrap:
            return y
        m = self.m
        out = y[:m].copy()
        out[: m - 1] += y[m : 2 * m - 1]
        return out


def permuted_omega(n: int, alpha: int, kernel: Kernel = omega_kernel) -> np.ndarray:
    """``Omega_n`` without its ``k = 0`` column, rows ``z = g^i`` and columns
    ``k = g^-j``; the result is circulant."""
    g = primitive_root(n)
    m = n - 1
    gpow = np.array([pow(g, t, n) for t in range(m)], dtype=np.int64)
    row_z = gpow
    col_k = gpow[(-np.arange(m)) % m]
    return kernel(alpha, (np.outer(row_z, col_k) % n) / n)


def kernel_row_sum(n: int, alpha: int, kernel: Kernel, omega_vals: np.ndarray) -> float:
    """``sum_k omega(k/n)``; every unit row of ``Omega_n`` is a permutation of it.

    For the Bernoulli kernel the multiplication theorem gives the exact value
    ``omega(0) n^(1-alpha)``, which the floating-point sum only reaches after
    cancelling ``n^alpha`` orders of magnitude.
    """
    if kernel is omega_kernel:
        return float(omega_vals[0]) * float(n) ** (1 - alpha)
    return math.fsum(omega_vals)


class _DenseCriterion:
    def __init__(self, n: int, omega_vals: np.ndarray):
        self.candidates = units_mod(n)
        k = np.arange(n, dtype=np.int64)
        self.matrix = omega_vals[np.outer(self.candidates, k) % n]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


class _CirculantCriterion:
    def __init__(self, n: int, omega_vals: np.ndarray):
        g = primitive_root(n)
        m = n - 1
        gpow = np.empty(m, dtype=np.int64)
        acc = 1
        for t in range(m):
            gpow[t] = acc
            acc = acc * g % n
        self.omega0 = omega_vals[0]
        self.col_index = gpow[(-np.arange(m)) % m]
        self.conv = _CyclicConvolver(omega_vals[gpow])
        self.order = np.argsort(gpow)
        self.candidates = gpow[self.order]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        crit = self.conv(x[self.col_index]) + self.omega0 * x[0]
        return crit[self.order]


class OrderVectors:
    """The order vectors ``p_{t,l}``, ``l = 0..sigma t``, of the SPOD recursion.

    Row ``l`` is stored as ``exp(log_scale[l]) * q[l]`` with
    ``log_peak[l] = log max |q[l]|``. Rows are not renormalized in place; the
    peaks enter the choice of the next scale instead, which keeps every
    stored entry bounded by ``sigma max |omega| + 1``.
    """

    def __init__(self, spec: SpodWeightSpec, n: int, max_order: int):
        self.spec = spec
        self.n = n
        self.L = max_order
        self.q = np.zeros((max_order + 1, n))
        self.q[0] = 1.0
        self.log_scale = np.full(max_order + 1, -np.inf)
        self.log_scale[0] = 0.0
        self.log_peak = np.full(max_order + 1, -np.inf)
        self.log_peak[0] = 0.0
        self.top = 0
        self.t = 0
        self._coef = None

    def x_vector(self) -> tuple[np.ndarray, float]:
        """``x = sum_l sum_w Gamma_l/Gamma_{l-w} gamma_{t,w} p_{t-1,l-w}`` for the
        next dimension, returned as ``(x * exp(-M), M)``; ``M = -inf`` when
        ``x`` vanishes."""
        spec, sigma, top, L = self.spec, self.spec.sigma, self.top, self.L
        with np.errstate(divide="ignore"):
            log_g = np.log(spec.gamma_jm[self.t])
        r = np.arange(top + 1)
        A = np.full((top + 1, sigma), -np.inf)
        for w in range(1, sigma + 1):
            ok = r + w <= L
            A[ok, w - 1] = spec.log_order_ratio(r[ok] + w, w) + log_g[w - 1] + self.log_scale[r[ok]]
        self._coef = A
        M = float((A + self.log_peak[: top + 1, None]).max())
        if not np.isfinite(M):
            return np.zeros(self.n), -math.inf
        return np.exp(A - M).sum(axis=1) @ self.q[: top + 1], M

    def update(self, omega_row: np.ndarray) -> None:
        """Advance to the next dimension with the chosen kernel row
        ``omega({k z_t / n})``; requires a preceding :meth:`x_vector` call."""
        A, sigma, top = self._coef, self.spec.sigma, self.top
        if A is None:
            raise RuntimeError("x_vector() must be called before update()")
        self._coef = None
        self.t += 1
        if not np.isfinite(A.max()):
            return
        new_top = min(top + sigma, self.L)
        ells = np.arange(1, new_top + 1)
        # new scale: the largest contribution, counting each old row's peak
        size = self.log_scale + self.log_peak
        log_new = np.where(ells <= top, size[np.minimum(ells, top)], -np.inf)
        Ap = A + self.log_peak[: top + 1, None]
        for w in range(1, sigma + 1):
            rr = ells - w
            ok = (rr >= 0) & (rr <= top)
            log_new[ok] = np.maximum(log_new[ok], Ap[rr[ok], w - 1])
        finite = np.isfinite(log_new)

        terms = []
        for w in range(1, sigma + 1):
            lo, hi = w, min(new_top, top + w)
            if lo > hi:
                continue
            sel = np.arange(lo, hi + 1)
            coef = np.zeros(len(sel))
            fin = finite[sel - 1]
            coef[fin] = np.exp(A[sel[fin] - w, w - 1] - log_new[sel[fin] - 1])
            terms.append((lo, hi, coef[:, None]))
        keep = np.zeros(new_top)
        old = (ells <= top) & finite
        keep[old] = np.exp(self.log_scale[ells[old]] - log_new[old])
        keep = keep[:, None]

        # columns are independent: work in cache-sized blocks, writing back in place
        peak = np.zeros(new_top)
        rows = self.q[1 : new_top + 1]
        for c0 in range(0, self.n, _BLOCK):
            cols = slice(c0, c0 + _BLOCK)
            Y = np.zeros((new_top, len(omega_row[cols])))
            for lo, hi, coef in terms:
                Y[lo - 1 : hi] += coef * self.q[: hi - lo + 1, cols]
            Y *= omega_row[cols]
            Y += keep * rows[:, cols]
            np.maximum(peak, np.abs(Y).max(axis=1), out=peak)
            rows[:, cols] = Y
        nz = peak > 0
        with np.errstate(divide="ignore"):
            self.log_peak[1 : new_top + 1] = np.log(peak)
        self.log_scale[1 : new_top + 1] = np.where(nz, log_new, -np.inf)
        self.top = new_top


def _select(crit: np.ndarray, scale: float) -> int:
    best = crit.min()
    tied = np.flatnonzero(crit <= best + TIE_RTOL * scale)
    return int(tied[0])


def _check_inputs(n, s, spec, alpha, max_order):
    if spec.sigma != alpha:
        raise ValueError(f"weight spec has sigma={spec.sigma} but alpha={alpha}")
    if s > spec.s:
        raise ValueError(f"weight spec covers {spec.s} dimensions, asked for {s}")
    if s < 1:
        raise ValueError("need at least one dimension")
    L = spec.sigma * s
    if max_order is not None and max_order < L:
        warnings.warn(f"order truncation at {max_order} < {L}; CBC criterion is approximate")
        L = max_order
    return L


def _construct(n, s, spec, alpha, criterion_cls, kernel, max_order):
    L = _check_inputs(n, s, spec, alpha, max_order)
    omega_vals = np.asarray(kernel(alpha, np.arange(n) / n), dtype=float)
    criterion = criterion_cls(n, omega_vals)
    candidates = criterion.candidates
    row_sum = kernel_row_sum(n, alpha, kernel, omega_vals)
    omega_max = float(np.max(np.abs(omega_vals)))
    k = np.arange(n, dtype=np.int64)
    state = OrderVectors(spec, n, L)

    z = np.empty(s, dtype=np.int64)
    steps = np.empty(s)
    P = 0.0
    for t in range(s):
        x, M = state.x_vector()
        if np.isfinite(M):
            # split off the mean of x: its contribution is the same exact
            # row sum for every candidate
            x_mean = float(np.mean(x))
            dx = x - x_mean
            crit = x_mean * row_sum + criterion(dx)
            idx = _select(crit, omega_max * float(np.abs(dx).sum()) + abs(x_mean * row_sum))
            P += float(crit[idx]) / n * math.exp(M)
        else:
            idx = 0
        z[t] = candidates[idx]
        steps[t] = P
        state.update(omega_vals[(int(z[t]) * k) % n])

    return GeneratingVector(n, z, steps, alpha, spec.digest())


def cbc_naive(
    n: int,
    s: int,
    spec: SpodWeightSpec,
    alpha: int,
    kernel: Kernel = omega_kernel,
    max_order: int | None = None,
) -> GeneratingVector:
    """CBC construction with a dense criterion matrix; any modulus ``n >= 2``.

    Cost ``O(s phi(n) n + sigma^2 s^2 n)``; intended for ``n`` up to a few
    thousand and as the reference for :func:`cbc_fast`.
    """
    if n < 2:
        raise ValueError(f"no lattice rule with modulus n={n}")
    return _construct(n, s, spec, alpha, _DenseCriterion, kernel, max_order)


def cbc_fast(
    n: int,
    s: int,
    spec: SpodWeightSpec,
    alpha: int,
    kernel: Kernel = omega_kernel,
    max_order: int | None = None,
) -> GeneratingVector:
    """Fast CBC construction for odd prime ``n``.

    Selects the same components as :func:`cbc_naive` at cost
    ``O(s n log n + sigma^2 s^2 n)`` and ``O(sigma s n)`` memory.
    """
    if n < 3 or not is_prime(n):
        raise ValueError(f"cbc_fast needs an odd prime modulus (got {n}); use cbc_naive")
    return _construct(n, s, spec, alpha, _CirculantCriterion, kernel, max_order)
