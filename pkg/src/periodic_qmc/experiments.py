"""
Convergence studies: lattice cubature in ``n``, dimension truncation in
``s``, finite elements in ``h``, and Monte Carlo checks of the field moments.

Every study takes an :class:`ExperimentConfig` and returns a report that can
be written as CSV plus a JSON sidecar.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy

from . import __version__
from ._numtheory import is_prime
from .cbc import GeneratingVector, cbc_fast, cbc_naive
from .fem import ParametricProblem, build_mesh
from .lattice import LatticeRule
from .random_field import (FieldEvaluator, FieldSpec, b_sequence, field_kurtosis,
                           field_variance, sample_parameters)
from .spod_weights import choose_alpha, pde_spod_weights

__all__ = [
    "ExperimentConfig",
    "ConvergenceReport",
    "MomentsReport",
    "estimate_rate",
    "construct_vector",
    "lattice_average",
    "run_cubature_convergence",
    "run_truncation_study",
    "run_fem_convergence",
    "run_field_moments",
    "PAPER_N_LIST",
    "PAPER_N_REF",
]

log = logging.getLogger(__name__)

DESK_N_LIST = (17, 31, 67, 127, 257, 503, 1009, 2003, 4001)
PAPER_N_LIST = DESK_N_LIST + (8009, 16007, 32003, 64007)
PAPER_N_REF = 128021


@dataclass
class ExperimentConfig:
    """Parameters of all studies; serialized as JSON with unknown keys rejected.

    ``qoi`` is ``"integral"`` or ``{"point": [x1, x2]}``. ``p`` is the
    summability exponent of the ``b_j``; ``None`` means ``1/beta + p_eps``.
    ``alpha`` defaults to ``choose_alpha(p)``.
    """

    field: dict = dataclasses.field(
        default_factory=lambda: {"model": "periodic", "abar": 2.0, "c": 0.1, "beta": 2.0, "s": 20}
    )
    alpha: int | None = None
    p: float | None = None
    p_eps: float = 0.01
    m: int = 5
    qoi: Any = "integral"
    n_list: list[int] = dataclasses.field(default_factory=lambda: list(DESK_N_LIST))
    n_ref: int = 8009
    fit_skip: int = 2
    relative: bool = False
    # dimension truncation
    s_list: list[int] = dataclasses.field(default_factory=lambda: [2, 4, 8, 16, 32])
    s_ref: int = 64
    n_trunc: int = 2003
    # finite element rate
    m_list: list[int] = dataclasses.field(default_factory=lambda: [3, 4, 5, 6])
    m_ref: int = 8
    fem_problem: str = "field"
    fem_n: int = 17
    # field moments
    n_samples: int = 10_000
    moment_grid: int = 3
    moment_s: int = 100
    seed: int = 0
    # linear algebra
    solver: str = "direct"
    cg_tol: float = 1e-12
    cg_maxit_factor: int = 10
    # bookkeeping
    threads: int = 1
    record_timings: bool = True
    cache_dir: str | None = None

    def __post_init__(self):
        self.field_spec()  # validates the block
        if self.m < 1:
            raise ValueError("mesh level must be at least 1")
        if self.n_list and self.n_ref <= max(self.n_list):
            raise ValueError("n_ref must exceed every n in n_list")
        if self.s_list and self.s_ref <= max(self.s_list):
            raise ValueError("s_ref must exceed every s in s_list")
        if self.m_list and self.m_ref <= max(self.m_list):
            raise ValueError("m_ref must exceed every level in m_list")
        if list(self.s_list) != sorted(self.s_list) or list(self.m_list) != sorted(self.m_list):
            raise ValueError("s_list and m_list must be ascending")
        if self.fem_problem not in ("field", "manufactured"):
            raise ValueError("fem_problem must be 'field' or 'manufactured'")
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        self.qoi_spec()

    def field_spec(self, s: int | None = None) -> FieldSpec:
        spec = FieldSpec.from_dict(self.field)
        return spec if s is None else spec.with_s(s)

    def qoi_spec(self):
        if self.qoi == "integral":
            return "integral"
        if isinstance(self.qoi, dict) and set(self.qoi) == {"point"}:
            x0 = np.asarray(self.qoi["point"], dtype=float)
            N = 2**self.m
            if x0.shape != (2,) or np.any(np.abs(x0 * N - np.round(x0 * N)) > 1e-12):
                raise ValueError(f"point QoI {x0} is not a node of the level-{self.m} mesh")
            return ("point", x0)
        raise ValueError(f"qoi must be 'integral' or {{'point': [x1, x2]}}, got {self.qoi!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        # bookkeeping keys do not change results
        d = {k: v for k, v in self.to_dict().items() if k not in ("threads", "cache_dir")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def paper_scale(self) -> "ExperimentConfig":
        """Full grid: ``s = 100``, ``m = 7``, ``n`` up to 64007, reference 128021."""
        warnings.warn("paper-scale runs take many hours on a single core", RuntimeWarning)
        fld = dict(self.field, s=100)
        return dataclasses.replace(self, field=fld, m=7, n_list=list(PAPER_N_LIST),
                                   n_ref=PAPER_N_REF)


def estimate_rate(pairs: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(param)``.

    Pairs with nonpositive error are ignored.

    Raises
    ------
    ValueError
        With fewer than three usable pairs.
    """
    pts = [(float(p), float(e)) for p, e in pairs if e > 0 and p > 0]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 pairs with positive error, have {len(pts)}")
    x, y = np.log(np.array(pts)).T
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ConvergenceReport:
    """Rows ``(param, error, seconds)``, the fitted slope and run metadata."""

    rows: list[tuple[float, float, float]]
    slope: float | None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(e < 0 for _, e, _ in self.rows):
            raise ValueError("errors must be nonnegative")

    @property
    def params(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self) -> str:
        lines = ["param,error,seconds"]
        for p, e, t in self.rows:
            ps = str(int(p)) if float(p).is_integer() else repr(float(p))
            lines.append(f"{ps},{e!r},{t:.6f}")
        return "\n".join(lines) + "\n"

    def sidecar(self) -> dict:
        return {"slope": self.slope, **self.meta}

    def write(self, out_dir: str | Path, name: str) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / f"{name}.csv", out / f"{name}.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


@dataclass
class MomentsReport:
    """Per grid point and model: exact and sampled variance and fourth moment."""

    rows: list[dict]
    meta: dict = field(default_factory=dict)

    COLUMNS = ("x1", "x2", "model", "var_exact", "var_mc", "var_se", "m4_exact", "m4_mc",
               "m4_se", "flag")

    @property
    def flagged(self) -> list[dict]:
        return [r for r in self.rows if r["flag"]]

    def to_csv(self) -> str:
        lines = [",".join(self.COLUMNS)]
        for r in self.rows:
            lines.append(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c])
                                  for c in self.COLUMNS))
        return "\n".join(lines) + "\n"

    def write(self, out_dir: str | Path, name: str = "moments") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / f"{name}.csv", out / f"{name}.json"
        csv_path.write_text(self.to_csv())
        json_path.write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")
        return csv_path, json_path


def _meta(cfg: ExperimentConfig, study: str, **extra) -> dict:
    return {
        "study": study,
        "config_digest": cfg.digest(),
        "versions": {"periodic_qmc": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        **extra,
    }


def _fit(rows, skip: int) -> float | None:
    pairs = [(p, e) for p, e, _ in rows[skip:]]
    try:
        return estimate_rate(pairs)
    except ValueError:
        return None


def _load(x: np.ndarray) -> np.ndarray:
    return x[:, 1]


def _manufactured_load(x: np.ndarray) -> np.ndarray:
    return 2.0 * math.pi**2 * np.sin(math.pi * x[:, 0]) * np.sin(math.pi * x[:, 1])


def _problem(cfg: ExperimentConfig, spec: FieldSpec, m: int) -> ParametricProblem:
    mesh = build_mesh(m)
    return ParametricProblem(mesh, FieldEvaluator(spec, mesh.centroids), _load, cfg.qoi_spec(),
                             solver=cfg.solver, rtol=cfg.cg_tol,
                             maxit_factor=cfg.cg_maxit_factor)


def construct_vector(cfg: ExperimentConfig, n: int, s: int) -> GeneratingVector:
    """CBC vector for the config's field with ``s`` dimensions."""
    spec = cfg.field_spec(s)
    b = b_sequence(spec, cfg.p, cfg.p_eps)
    alpha = cfg.alpha if cfg.alpha is not None else choose_alpha(b.p)
    weights = pde_spod_weights(b, alpha, s)
    build = cbc_fast if n > 2 and is_prime(n) else cbc_naive
    return build(n, s, weights, alpha)


def lattice_average(problem: ParametricProblem, rule: LatticeRule, threads: int = 1,
                    block: int = 256) -> float:
    """``(1/n) sum_k G(u(y_k))`` over the rule's points.

    Blocks of points may be solved on a thread pool; values are stored by
    point index and summed pairwise, so the result is independent of
    ``threads``.
    """
    values = np.empty(rule.n)

    def work(start: int) -> None:
        stop = min(start + block, rule.n)
        for k, y in zip(range(start, stop), rule.block(start, stop)):
            try:
                values[k] = problem.qoi(y)
            except Exception as exc:
                raise RuntimeError(f"PDE solve failed at lattice point k={k} (n={rule.n}): {exc}") from exc

    starts = range(0, rule.n, block)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(work, starts))
    else:
        for st in starts:
            work(st)
    return float(np.sum(values) / rule.n)


def _cached_reference(cfg: ExperimentConfig, key: dict, compute) -> tuple[float, bool]:
    if cfg.cache_dir is None:
        return compute(), False
    digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:20]
    path = Path(cfg.cache_dir) / f"ref-{digest}.json"
    if path.exists():
        return float(json.loads(path.read_text())["value"]), True
    value = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"key": key, "value": value}, sort_keys=True) + "\n")
    return value, False


def _error(q: float, ref: float, relative: bool) -> float:
    err = abs(q - ref)
    return err / abs(ref) if relative and ref != 0 else err


def _study_key(cfg: ExperimentConfig, **extra) -> dict:
    return {"field": cfg.field, "alpha": cfg.alpha, "p": cfg.p, "p_eps": cfg.p_eps,
            "m": cfg.m, "qoi": cfg.qoi, "solver": cfg.solver, "cg_tol": cfg.cg_tol, **extra}


def run_cubature_convergence(cfg: ExperimentConfig) -> ConvergenceReport:
    """Lattice-rule error ``|Q_n - Q_{n_ref}|`` of the QoI mean for each ``n`` in ``n_list``.

    One PDE solve per centered lattice point; the slope is fitted after
    dropping the first ``fit_skip`` values of ``n``.
    """
    spec = cfg.field_spec()
    problem = _problem(cfg, spec, cfg.m)

    def q_of(n: int) -> float:
        vec = construct_vector(cfg, n, spec.s)
        return lattice_average(problem, LatticeRule.from_vector(vec, shift_mode="centered"),
                               cfg.threads)

    ref, cached = _cached_reference(cfg, _study_key(cfg, n_ref=cfg.n_ref, study="cubature"),
                                    lambda: q_of(cfg.n_ref))
    rows = []
    for n in cfg.n_list:
        t0 = time.perf_counter()
        q = q_of(n)
        dt = time.perf_counter() - t0 if cfg.record_timings else 0.0
        rows.append((n, _error(q, ref, cfg.relative), dt))
        log.info("cubature n=%d error=%.3e", n, rows[-1][1])
    return ConvergenceReport(rows, _fit(rows, cfg.fit_skip),
                             _meta(cfg, "cubature", reference=ref, reference_cached=cached))


def run_truncation_study(cfg: ExperimentConfig) -> ConvergenceReport:
    """Truncation error ``|E_n[G(u^s)] - E_n[G(u^{s_ref})]|`` for ``s`` in ``s_list``.

    All truncations use prefixes of one ``s_ref``-dimensional CBC vector
    with ``n = n_trunc`` points.
    """
    spec_ref = cfg.field_spec(cfg.s_ref)
    vec = construct_vector(cfg, cfg.n_trunc, cfg.s_ref)

    def q_of(s: int) -> float:
        problem = _problem(cfg, cfg.field_spec(s), cfg.m)
        return lattice_average(problem, LatticeRule.from_vector(vec, s, "centered"), cfg.threads)

    ref, cached = _cached_reference(
        cfg, _study_key(cfg, n=cfg.n_trunc, s_ref=cfg.s_ref, study="truncation"),
        lambda: q_of(spec_ref.s))
    rows = []
    for s in cfg.s_list:
        t0 = time.perf_counter()
        q = q_of(s)
        dt = time.perf_counter() - t0 if cfg.record_timings else 0.0
        rows.append((s, _error(q, ref, cfg.relative), dt))
    return ConvergenceReport(rows, _fit(rows, 0),
                             _meta(cfg, "truncation", reference=ref, reference_cached=cached))


def run_fem_convergence(cfg: ExperimentConfig) -> ConvergenceReport:
    """QoI error against mesh level ``m_ref`` for each level in ``m_list``.

    ``fem_problem="field"`` averages the QoI over a ``fem_n``-point lattice
    in ``y`` with load ``f = x_2``; ``"manufactured"`` solves
    ``-Laplace u = 2 pi^2 sin(pi x_1) sin(pi x_2)`` once. The ``param`` column
    holds ``h = 2^-m``.
    """
    spec = cfg.field_spec()
    qoi = cfg.qoi_spec()
    if cfg.fem_problem == "field":
        rule = LatticeRule.from_vector(construct_vector(cfg, cfg.fem_n, spec.s),
                                       shift_mode="centered")

        def q_of(m: int) -> float:
            mesh = build_mesh(m)
            prob = ParametricProblem(mesh, FieldEvaluator(spec, mesh.centroids), _load, qoi,
                                     solver=cfg.solver, rtol=cfg.cg_tol,
                                     maxit_factor=cfg.cg_maxit_factor)
            return lattice_average(prob, rule, cfg.threads)
    else:
        def q_of(m: int) -> float:
            mesh = build_mesh(m)
            ones = lambda y: np.ones(len(mesh.elements))  # noqa: E731
            prob = ParametricProblem(mesh, ones, _manufactured_load, qoi, solver=cfg.solver,
                                     rtol=cfg.cg_tol, maxit_factor=cfg.cg_maxit_factor)
            return prob.qoi(np.zeros(0))

    key = _study_key(cfg, m_ref=cfg.m_ref, fem_problem=cfg.fem_problem, fem_n=cfg.fem_n,
                     study="fem")
    ref, cached = _cached_reference(cfg, key, lambda: q_of(cfg.m_ref))
    rows = []
    for m in cfg.m_list:
        t0 = time.perf_counter()
        q = q_of(m)
        dt = time.perf_counter() - t0 if cfg.record_timings else 0.0
        rows.append((2.0**-m, _error(q, ref, cfg.relative), dt))
    return ConvergenceReport(rows, _fit(rows, 0),
                             _meta(cfg, "fem", reference=ref, reference_cached=cached))


def _moment_grid(k: int) -> np.ndarray:
    g = np.arange(1, k + 1) / (k + 1)
    x1, x2 = np.meshgrid(g, g, indexing="xy")
    return np.column_stack([x1.ravel(), x2.ravel()])


def run_field_moments(cfg: ExperimentConfig, n_samples: int | None = None,
                      tol_se: float = 4.0) -> MomentsReport:
    """Sampled variance and fourth central moment of both models on an ``x`` grid.

    Both models see the same uniform draws. Moments are taken about the
    known mean ``abar``; a row is flagged when a sampled moment is more than
    ``tol_se`` standard errors from its closed form. The sidecar also holds
    the standardized difference between the two models' variances.
    """
    n_samples = cfg.n_samples if n_samples is None else n_samples
    if n_samples <= 0:
        raise ValueError("need at least one sample")
    base = cfg.field_spec(cfg.moment_s)
    x = _moment_grid(cfg.moment_grid)
    Y = sample_parameters(n_samples, base.s, cfg.seed)
    rows, dev = [], {}
    for model in ("periodic", "affine"):
        spec = base.with_model(model)
        d = FieldEvaluator(spec, x)(Y) - spec.abar
        d2, d4 = d**2, d**4
        dev[model] = d2
        var_ex, m4_ex = field_variance(spec, x), field_kurtosis(spec, x)
        for i, xi in enumerate(x):
            v_mc, v_se = d2[:, i].mean(), d2[:, i].std(ddof=1) / math.sqrt(n_samples)
            k_mc, k_se = d4[:, i].mean(), d4[:, i].std(ddof=1) / math.sqrt(n_samples)
            flag = bool(abs(v_mc - var_ex[i]) > tol_se * v_se or abs(k_mc - m4_ex[i]) > tol_se * k_se)
            rows.append({"x1": float(xi[0]), "x2": float(xi[1]), "model": model,
                         "var_exact": float(var_ex[i]), "var_mc": float(v_mc), "var_se": float(v_se),
                         "m4_exact": float(m4_ex[i]), "m4_mc": float(k_mc), "m4_se": float(k_se),
                         "flag": flag})
    diff = dev["periodic"] - dev["affine"]
    z = diff.mean(axis=0) / (diff.std(axis=0, ddof=1) / math.sqrt(n_samples))
    meta = _meta(cfg, "moments", n_samples=n_samples,
                 variance_difference_z=[float(v) for v in z])
    return MomentsReport(rows, meta)
