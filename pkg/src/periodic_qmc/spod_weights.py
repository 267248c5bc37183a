"""
SPOD weights for the periodic PDE model and the associated error-bound
constants.

A weight specification stores the per-dimension, per-order factors
``gamma_{j,m}`` as an ``s x sigma`` table together with a named rule for the
order factors ``Gamma_l``. Subset weights are

    gamma_u = sum_{m in {1..sigma}^|u|} Gamma_{|m|} prod_{j in u} gamma_{j, m_j}.

Coordinates are 0-based throughout: ``u = {0, 1}`` is the first two
dimensions.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from ._numtheory import is_prime_power, totient
from .special_fn import riemann_zeta, stirling2, stirling2_max

__all__ = [
    "SpodWeightSpec",
    "DecaySequence",
    "SeriesBound",
    "pde_spod_weights",
    "weight_of_subset",
    "error_bound_series",
    "check_p1_condition",
    "choose_alpha",
    "cbc_error_bound",
]

ORDER_RULES = ("factorial", "unit")
MAX_SUBSET_SIZE = 12


@dataclass(frozen=True, eq=False)
class SpodWeightSpec:
    """SPOD weight data.

    Parameters
    ----------
    sigma : int
        Smoothness degree; number of columns of ``gamma_jm``.
    gamma_jm : ndarray, shape (s, sigma)
        ``gamma_jm[j, m-1]`` is the factor for dimension ``j`` at order ``m``.
    gamma_order : {"factorial", "unit"}
        ``Gamma_l = l!`` or ``Gamma_l = 1``. Either way ``Gamma_0 = 1``.
    """

    sigma: int
    gamma_jm: np.ndarray
    gamma_order: str = "factorial"

    def __post_init__(self):
        table = np.array(self.gamma_jm, dtype=float, ndmin=2)
        if table.shape[1] != self.sigma:
            raise ValueError(f"gamma_jm has {table.shape[1]} columns, sigma is {self.sigma}")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ValueError("gamma_jm entries must be finite and nonnegative")
        if self.gamma_order not in ORDER_RULES:
            raise ValueError(f"unknown gamma_order {self.gamma_order!r}")
        table.setflags(write=False)
        object.__setattr__(self, "gamma_jm", table)

    @property
    def s(self) -> int:
        return self.gamma_jm.shape[0]

    def order_factor(self, ell: int) -> float:
        """``Gamma_ell`` as a float (may be inf for huge ``ell``)."""
        if self.gamma_order == "unit":
            return 1.0
        try:
            return float(math.factorial(ell))
        except OverflowError:
            return math.inf

    def log_order_ratio(self, ell: np.ndarray, w: int) -> np.ndarray:
        """``log(Gamma_ell / Gamma_{ell-w})`` elementwise, never forming factorials."""
        ell = np.asarray(ell)
        if self.gamma_order == "unit":
            return np.zeros(ell.shape)
        # log of the falling factorial ell (ell-1) ... (ell-w+1)
        out = np.zeros(ell.shape)
        for i in range(w):
            out += np.log(ell - i)
        return out

    def log_order_factor(self, ell: np.ndarray) -> np.ndarray:
        ell = np.asarray(ell, dtype=float)
        if self.gamma_order == "unit":
            return np.zeros(ell.shape)
        return gammaln(ell + 1.0)

    def truncate(self, s: int) -> "SpodWeightSpec":
        return SpodWeightSpec(self.sigma, self.gamma_jm[:s], self.gamma_order)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "s": self.s,
            "gamma_jm": self.gamma_jm.tolist(),
            "gamma_order": self.gamma_order,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SpodWeightSpec":
        table = np.array(doc["gamma_jm"], dtype=float, ndmin=2)
        if table.shape[0] != doc["s"]:
            raise ValueError("gamma_jm row count does not match s")
        return cls(int(doc["sigma"]), table, doc.get("gamma_order", "factorial"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SpodWeightSpec":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DecaySequence:
    """Nonincreasing sequence ``b_1 >= b_2 >= ... >= 0`` with summability exponent ``p``.

    ``rule``, when given as ``(c, beta)``, declares ``b_j = c j^-beta`` for
    every ``j >= 1`` so that infinite sums are available in closed form and
    the sequence can be extended beyond ``len(b)``.
    """

    b: np.ndarray
    p: float
    rule: tuple[float, float] | None = field(default=None)

    def __post_init__(self):
        b = np.array(self.b, dtype=float, ndmin=1)
        if np.any(b < 0):
            raise ValueError("decay sequence must be nonnegative")
        if np.any(np.diff(b) > 0):
            raise ValueError("decay sequence must be nonincreasing")
        if not 0 < self.p <= 1:
            raise ValueError(f"summability exponent must lie in (0, 1], got {self.p}")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @classmethod
    def power_law(cls, c: float, beta: float, s: int, p: float) -> "DecaySequence":
        j = np.arange(1, s + 1, dtype=float)
        return cls(c * j**-beta, p, (float(c), float(beta)))

    def __len__(self) -> int:
        return len(self.b)

    def extended(self, s: int) -> np.ndarray:
        """First ``s`` terms, continuing by the rule if needed."""
        if s <= len(self.b):
            return self.b[:s]
        if self.rule is None:
            raise ValueError(f"need {s} terms but only {len(self.b)} are known and no rule")
        c, beta = self.rule
        return c * np.arange(1, s + 1, dtype=float) ** -beta

    def power_sum(self, lam: float) -> float:
        """``sum_j b_j^lam`` over all ``j`` (infinite when a rule is declared)."""
        if self.rule is not None:
            c, beta = self.rule
            if c == 0:
                return 0.0
            if beta * lam <= 1:
                return math.inf
            return c**lam * riemann_zeta(beta * lam)
        return float(np.sum(self.b**lam))


class SeriesBound(NamedTuple):
    T: float
    value: float
    log_value: float
    converged: bool


def _check_even_alpha(alpha: int) -> None:
    if alpha < 2 or alpha % 2:
        raise ValueError(f"alpha must be an even integer >= 2, got {alpha}")


def pde_spod_weights(b: DecaySequence | Sequence[float], alpha: int, s: int) -> SpodWeightSpec:
    """Weights with ``sigma = alpha``, ``Gamma_l = l!`` and
    ``gamma_{j,m} = b_j^m S(alpha, m)``."""
    _check_even_alpha(alpha)
    if isinstance(b, DecaySequence):
        bj = b.extended(s)
    else:
        bj = np.asarray(b, dtype=float)[:s]
        if len(bj) < s:
            raise ValueError(f"need {s} decay values, got {len(bj)}")
    if np.any(bj < 0):
        raise ValueError("b must be nonnegative")
    m = np.arange(1, alpha + 1)
    stir = np.array([stirling2(alpha, k) for k in m], dtype=float)
    table = bj[:, None] ** m[None, :] * stir[None, :]
    return SpodWeightSpec(alpha, table, "factorial")


def weight_of_subset(spec: SpodWeightSpec, u: Iterable[int]) -> float:
    """``gamma_u`` summed over all ``sigma^|u|`` order assignments.

    The assignments are grouped by total order ``|m|`` (a product of
    polynomials in the order variable), which is the same finite sum.
    """
    u = sorted(set(int(j) for j in u))
    if len(u) > MAX_SUBSET_SIZE:
        raise OverflowError(f"|u| = {len(u)} exceeds {MAX_SUBSET_SIZE}; enumeration is exponential")
    if u and (u[0] < 0 or u[-1] >= spec.s):
        raise IndexError(f"subset {u} outside 0..{spec.s - 1}")
    poly = np.array([1.0])
    for j in u:
        row = np.concatenate(([0.0], spec.gamma_jm[j]))
        poly = np.convolve(poly, row)
    return float(sum(spec.order_factor(ell) * c for ell, c in enumerate(poly) if c))


def error_bound_series(b: DecaySequence, alpha: int, lam: float) -> SeriesBound:
    """``T`` and the majorant ``sum_{l>=0} (l!)^(lam-1) T^l``.

    ``T = alpha * sum_j beta_j^lam`` with
    ``beta_j = max(1, S_max(alpha) (2 zeta(alpha lam))^(1/lam)) b_j``.
    For ``lam = 1`` the series is geometric and only converges for ``T < 1``;
    otherwise ``converged`` is False and ``value`` is inf.
    """
    if alpha * lam <= 1:
        raise ValueError(f"need alpha * lambda > 1, got {alpha} * {lam}")
    if not 0 < lam <= 1:
        raise ValueError(f"lambda must lie in (1/alpha, 1], got {lam}")
    factor = max(1.0, stirling2_max(alpha) * (2.0 * riemann_zeta(alpha * lam)) ** (1.0 / lam))
    T = alpha * factor**lam * b.power_sum(lam)
    if T == 0:
        return SeriesBound(0.0, 1.0, 0.0, True)
    if not math.isfinite(T):
        return SeriesBound(T, math.inf, math.inf, False)
    if lam == 1:
        if T >= 1:
            return SeriesBound(T, math.inf, math.inf, False)
        return SeriesBound(T, 1.0 / (1.0 - T), -math.log1p(-T), True)

    logT = math.log(T)
    log_total = -math.inf
    start, chunk = 0, 100_000
    while start < 10**8:
        ell = np.arange(start, start + chunk, dtype=float)
        logterm = (lam - 1.0) * gammaln(ell + 1.0) + ell * logT
        log_total = float(logsumexp(np.append(logterm, log_total)))
        last = logterm[-1]
        past_peak = (lam - 1.0) * math.log(ell[-1] + 1.0) + logT < 0
        if past_peak and last < log_total + math.log(1e-16):
            value = math.exp(log_total) if log_total < 709 else math.inf
            return SeriesBound(T, value, log_total, True)
        start += chunk
    return SeriesBound(T, math.inf, math.inf, False)


def check_p1_condition(psi_norms_sum: float, alpha: int, a_min: float) -> tuple[bool, float]:
    """Admissibility for ``p = 1``:
    ``sum ||psi_j|| < sqrt(6) a_min / (2 alpha zeta(alpha) S_max(alpha))``.

    Returns ``(holds, threshold)``.
    """
    _check_even_alpha(alpha)
    if a_min <= 0:
        raise ValueError("a_min must be positive")
    threshold = math.sqrt(6.0) * a_min / (2.0 * alpha * riemann_zeta(alpha) * stirling2_max(alpha))
    return psi_norms_sum < threshold, threshold


def choose_alpha(p: float) -> int:
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    return math.floor(1.0 / p) + 1


def cbc_error_bound(spec: SpodWeightSpec, n: int, lam: float, s: int | None = None) -> float:
    """CBC worst-case error bound
    ``((1/phi(n)) sum_{u != {}} gamma_u^lam (2 zeta(alpha lam))^|u|)^(1/lam)``
    with ``alpha = spec.sigma``.

    Exact subset enumeration, so only for ``s <= 12``; use
    :func:`error_bound_series` for an s-independent majorant.
    """
    s = spec.s if s is None else s
    alpha = spec.sigma
    if s > MAX_SUBSET_SIZE:
        raise OverflowError(
            f"s = {s} too large for subset enumeration; use error_bound_series instead"
        )
    if not is_prime_power(n):
        raise ValueError(f"bound is only supported for prime-power n, got {n}")
    if not 1.0 / alpha < lam <= 1:
        raise ValueError(f"lambda must lie in (1/alpha, 1], got {lam}")
    two_zeta = 2.0 * riemann_zeta(alpha * lam)
    total = 0.0
    for size in range(1, s + 1):
        for u in itertools.combinations(range(s), size):
            total += weight_of_subset(spec, u) ** lam * two_zeta**size
    return (total / totient(n)) ** (1.0 / lam)
