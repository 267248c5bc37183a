"""
Periodic and affine random diffusion coefficients on the unit square.

The periodic model is ``a(x, y) = abar + (1/sqrt 6) sum_j sin(2 pi y_j) psi_j(x)``
and the affine model ``a(x, y) = abar + sum_j y_j psi_j(x)``, with ``y``
uniform on ``[-1/2, 1/2]^s``. Both have the same mean and covariance; the
fourth moments differ.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .special_fn import riemann_zeta
from .spod_weights import DecaySequence

__all__ = [
    "FieldSpec",
    "FieldEvaluator",
    "psi_values",
    "eval_field",
    "field_variance",
    "field_kurtosis",
    "ellipticity_bounds",
    "b_sequence",
    "sample_parameters",
]

MODELS = ("periodic", "affine")
THETA = {"periodic": 1.0 / math.sqrt(6.0), "affine": 0.5}
DEFAULT_P_EPS = 0.01


@dataclass(frozen=True, eq=False)
class FieldSpec:
    """Constant mean ``abar`` plus ``s`` fluctuations.

    The fluctuations are the sine family
    ``psi_j(x) = c j^-beta sin(j pi x_1) sin(j pi x_2)`` unless ``psi`` is
    given as a list of callables together with their sup-norms ``psi_sup``.
    """

    abar: float
    s: int
    model: str = "periodic"
    c: float = 0.0
    beta: float = 2.0
    psi: tuple[Callable[[np.ndarray], np.ndarray], ...] | None = None
    psi_sup: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.abar <= 0:
            raise ValueError("mean field must be positive")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.s < 0:
            raise ValueError("truncation dimension must be nonnegative")
        if self.psi is None:
            if self.c < 0 or self.beta <= 1:
                raise ValueError("sine family needs c >= 0 and beta > 1")
        else:
            if self.psi_sup is None or len(self.psi) != self.s or len(self.psi_sup) != self.s:
                raise ValueError("explicit family needs s functions and s sup-norms")
            sup = np.asarray(self.psi_sup, dtype=float)
            if np.any(sup < 0) or np.any(np.diff(sup) > 0):
                raise ValueError("sup-norms must be nonnegative and nonincreasing")
            object.__setattr__(self, "psi", tuple(self.psi))
            object.__setattr__(self, "psi_sup", tuple(float(v) for v in sup))

    @property
    def theta(self) -> float:
        return THETA[self.model]

    @property
    def is_sine(self) -> bool:
        return self.psi is None

    def with_model(self, model: str) -> "FieldSpec":
        return FieldSpec(self.abar, self.s, model, self.c, self.beta, self.psi, self.psi_sup)

    def with_s(self, s: int) -> "FieldSpec":
        if not self.is_sine:
            raise ValueError("only the sine family can change its truncation")
        return FieldSpec(self.abar, s, self.model, self.c, self.beta)

    def sup_norms(self) -> np.ndarray:
        """``||psi_j||_inf`` for ``j = 1..s``."""
        if self.is_sine:
            return self.c * np.arange(1, self.s + 1, dtype=float) ** -self.beta
        return np.asarray(self.psi_sup, dtype=float)

    def to_dict(self) -> dict:
        if not self.is_sine:
            raise ValueError("explicit families are not serializable")
        return {"model": self.model, "abar": self.abar, "c": self.c,
                "beta": self.beta, "s": self.s}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSpec":
        unknown = set(d) - {"model", "abar", "c", "beta", "s"}
        if unknown:
            raise ValueError(f"unknown field keys: {sorted(unknown)}")
        return cls(abar=float(d["abar"]), s=int(d["s"]), model=d.get("model", "periodic"),
                   c=float(d.get("c", 0.0)), beta=float(d.get("beta", 2.0)))


def psi_values(spec: FieldSpec, x) -> np.ndarray:
    """``psi_j(x)`` as an ``(s, npts)`` array for points ``x`` of shape ``(npts, 2)`` or ``(2,)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != 2:
        raise ValueError("points must have two coordinates")
    if spec.is_sine:
        j = np.arange(1, spec.s + 1, dtype=float)[:, None]
        return (spec.c * j**-spec.beta) * np.sin(j * math.pi * x[:, 0]) * np.sin(j * math.pi * x[:, 1])
    if spec.s == 0:
        return np.zeros((0, len(x)))
    return np.stack([np.broadcast_to(np.asarray(f(x), dtype=float), (len(x),)) for f in spec.psi])


def _theta_of_y(spec: FieldSpec, y: np.ndarray) -> np.ndarray:
    if spec.model == "periodic":
        # any real y is accepted: the periodic model is 1-periodic in each y_j
        return np.sin(2.0 * math.pi * y) / math.sqrt(6.0)
    if np.any(np.abs(y) > 0.5):
        raise ValueError("affine model needs parameters in [-1/2, 1/2]")
    return y


class FieldEvaluator:
    """Field on a fixed point set with ``psi_j`` tabulated once.

    ``evaluator(y)`` costs one ``s x npts`` product per parameter vector,
    which is what the PDE loop over lattice points needs.
    """

    def __init__(self, spec: FieldSpec, x):
        self.spec = spec
        self.psi = psi_values(spec, x)
        self.psi.setflags(write=False)

    def __call__(self, y) -> np.ndarray:
        """Values at all points for one ``y`` (shape ``(s,)``) or a batch ``(N, s)``."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.spec.s:
            raise ValueError(f"expected {self.spec.s} parameters, got {y.shape[-1]}")
        return self.spec.abar + _theta_of_y(self.spec, y) @ self.psi


def eval_field(spec: FieldSpec, x, y) -> np.ndarray | float:
    """``a(x, y)`` for one point ``x`` (scalar result) or an array of points."""
    x_arr = np.asarray(x, dtype=float)
    if np.any((x_arr < 0) | (x_arr > 1)):
        raise ValueError("x must lie in the unit square")
    out = FieldEvaluator(spec, x_arr)(y)
    if x_arr.ndim == 1:
        out = out[..., 0]
        return float(out) if out.ndim == 0 else out
    return out


def field_variance(spec: FieldSpec, x) -> np.ndarray | float:
    """``(1/12) sum_j psi_j(x)^2``; the same for both models."""
    out = np.sum(psi_values(spec, x) ** 2, axis=0) / 12.0
    return float(out[0]) if np.ndim(x) == 1 else out


def field_kurtosis(spec: FieldSpec, x) -> np.ndarray | float:
    """Fourth central moment ``E[(a - abar)^4]`` at ``x``.

    ``k sum_j psi_j^4 + (1/24) sum_{j<k} psi_j^2 psi_k^2`` with ``k = 1/96``
    (periodic) or ``1/80`` (affine).
    """
    psi2 = psi_values(spec, x) ** 2
    diag = np.sum(psi2**2, axis=0)
    cross = 0.5 * (np.sum(psi2, axis=0) ** 2 - diag)
    k = 1.0 / 96.0 if spec.model == "periodic" else 1.0 / 80.0
    out = k * diag + cross / 24.0
    return float(out[0]) if np.ndim(x) == 1 else out


def _norm_sum(spec: FieldSpec) -> float:
    # the sine family is summed to infinity so that a_min, and hence b_j,
    # do not depend on where the series is truncated
    if spec.is_sine:
        return spec.c * riemann_zeta(spec.beta) if spec.c > 0 else 0.0
    return float(np.sum(spec.sup_norms()))


def ellipticity_bounds(spec: FieldSpec) -> tuple[float, float]:
    """``(a_min, a_max) = abar -/+ theta sum_j ||psi_j||_inf``.

    ``theta`` is ``1/sqrt 6`` (periodic) or ``1/2`` (affine).

    Raises
    ------
    ValueError
        If ``a_min <= 0``.
    """
    spread = spec.theta * _norm_sum(spec)
    a_min, a_max = spec.abar - spread, spec.abar + spread
    if a_min <= 0:
        raise ValueError(f"field is not uniformly elliptic: a_min = {a_min:.6g}")
    return a_min, a_max


def b_sequence(spec: FieldSpec, p: float | None = None, eps: float = DEFAULT_P_EPS) -> DecaySequence:
    """``b_j = ||psi_j||_inf / (sqrt 6 a_min)`` for the periodic model.

    The affine model uses ``b_j = ||psi_j||_inf / a_min``. For the sine family
    the default summability exponent is ``p = 1/beta + eps``, which makes
    ``choose_alpha(p) = beta`` for integer ``beta``.
    """
    a_min, _ = ellipticity_bounds(spec)
    scale = (1.0 / math.sqrt(6.0) if spec.model == "periodic" else 1.0) / a_min
    if p is None:
        if not spec.is_sine:
            raise ValueError("explicit families need an explicit summability exponent p")
        p = min(1.0 / spec.beta + eps, 1.0)
    if spec.is_sine:
        return DecaySequence.power_law(spec.c * scale, spec.beta, spec.s, p)
    return DecaySequence(scale * spec.sup_norms(), p)


def sample_parameters(n_samples: int, s: int, seed: int) -> np.ndarray:
    """``n_samples`` i.i.d. uniform vectors on ``[-1/2, 1/2]^s``.

    Philox is counter based, so a seed names the same stream everywhere.
    """
    if n_samples <= 0:
        raise ValueError("need at least one sample")
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.random((n_samples, s)) - 0.5
