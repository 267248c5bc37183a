"""
Piecewise-linear finite elements for ``-div(a grad u) = f`` on the unit
square with homogeneous Dirichlet data.

The mesh at level ``m`` has ``h = 2^-m``, nodes numbered row by row and two
right triangles per cell split along the ``(0,0)-(1,1)`` diagonal. The
coefficient and the load are sampled at element centroids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "TriMesh",
    "FemSolution",
    "SolverError",
    "build_mesh",
    "assemble",
    "assemble_and_solve",
    "qoi_integral",
    "qoi_point",
    "h1_seminorm",
    "ParametricProblem",
]

MAX_LEVEL = 11
SOLVERS = ("cg", "direct")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Uniform triangulation of ``[0, 1]^2`` at level ``m``."""

    m: int
    nodes: np.ndarray  # (N, 2)
    elements: np.ndarray  # (E, 3), counterclockwise
    interior: np.ndarray  # node ids of the free nodes, ascending
    dof_of_node: np.ndarray  # node id -> dof index, -1 on the boundary

    @property
    def h(self) -> float:
        return 2.0**-self.m

    @property
    def n_side(self) -> int:
        return 2**self.m

    @property
    def n_dof(self) -> int:
        return len(self.interior)

    @property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def centroids(self) -> np.ndarray:
        return self.nodes[self.elements].mean(axis=1)


def build_mesh(m: int) -> TriMesh:
    """Level-``m`` mesh: ``(2^m+1)^2`` nodes, ``2 * 4^m`` elements."""
    if m < 1:
        raise ValueError("mesh level must be at least 1")
    if m > MAX_LEVEL:
        raise ValueError(f"mesh level {m} exceeds the supported maximum {MAX_LEVEL}")
    N = 2**m
    g = np.arange(N + 1) / N
    x1, x2 = np.meshgrid(g, g, indexing="xy")
    nodes = np.column_stack([x1.ravel(), x2.ravel()])

    i1, i2 = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
    v00 = (i2 * (N + 1) + i1).ravel()
    v10, v01 = v00 + 1, v00 + N + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    elements = np.empty((2 * N * N, 3), dtype=np.int64)
    elements[0::2], elements[1::2] = lower, upper

    on_bdry = (x1.ravel() == 0) | (x1.ravel() == 1) | (x2.ravel() == 0) | (x2.ravel() == 1)
    interior = np.flatnonzero(~on_bdry)
    dof = np.full(len(nodes), -1, dtype=np.int64)
    dof[interior] = np.arange(len(interior))
    return TriMesh(m, nodes, elements, interior, dof)


def _local_stiffness(mesh: TriMesh) -> np.ndarray:
    """``area * grad(phi_a) . grad(phi_b)`` per element, shape ``(E, 3, 3)``."""
    p = mesh.nodes[mesh.elements]
    # gradients of barycentric coordinates: rotate the opposite edge
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = mesh.areas
    grads = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2.0 * area)[:, None, None]
    return area[:, None, None] * np.einsum("eak,ebk->eab", grads, grads)


@dataclass(frozen=True, eq=False)
class _Pattern:
    """Scatter map from per-element 3x3 blocks to the CSR data of the interior system."""

    indptr: np.ndarray
    indices: np.ndarray
    slot: np.ndarray  # (kept local entries,) -> position in data
    keep: np.ndarray  # mask over the flattened (E*9,) local entries
    nnz: int


def _pattern(mesh: TriMesh) -> _Pattern:
    dof = mesh.dof_of_node[mesh.elements]
    rows = np.repeat(dof, 3, axis=1).ravel()
    cols = np.tile(dof, (1, 3)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    rows, cols = rows[keep], cols[keep]
    key = rows * mesh.n_dof + cols
    uniq, slot = np.unique(key, return_inverse=True)
    r, c = np.divmod(uniq, mesh.n_dof)
    indptr = np.searchsorted(r, np.arange(mesh.n_dof + 1))
    return _Pattern(indptr, c, slot, keep, len(uniq))


def _validate_coeff(a: np.ndarray) -> None:
    if not np.all(np.isfinite(a)) or np.any(a <= 0):
        raise ValueError(f"coefficient must be positive and finite; min sample {np.min(a):.6g}")


class _Assembler:
    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.kloc = _local_stiffness(mesh).reshape(len(mesh.elements), 9)
        self.pattern = _pattern(mesh)
        self.kflat = self.kloc.ravel()[self.pattern.keep]
        self.elem_of_entry = np.repeat(np.arange(len(mesh.elements)), 9)[self.pattern.keep]
        # load: int f phi_i ~ f(centroid) * area / 3 on each element
        self.load_weight = mesh.areas / 3.0

    def matrix(self, a_elem: np.ndarray) -> sp.csr_matrix:
        pat = self.pattern
        data = np.bincount(pat.slot, weights=self.kflat * a_elem[self.elem_of_entry],
                           minlength=pat.nnz)
        n = self.mesh.n_dof
        return sp.csr_matrix((data, pat.indices, pat.indptr), shape=(n, n))

    def load(self, f_elem: np.ndarray) -> np.ndarray:
        dof = self.mesh.dof_of_node[self.mesh.elements]
        contrib = np.repeat((f_elem * self.load_weight)[:, None], 3, axis=1)
        ok = dof >= 0
        return np.bincount(dof[ok], weights=contrib[ok], minlength=self.mesh.n_dof)


_ASSEMBLERS: dict[int, _Assembler] = {}


def _assembler(mesh: TriMesh) -> _Assembler:
    asm = _ASSEMBLERS.get(id(mesh))
    if asm is None or asm.mesh is not mesh:
        if len(_ASSEMBLERS) >= 8:
            _ASSEMBLERS.clear()
        asm = _ASSEMBLERS[id(mesh)] = _Assembler(mesh)
    return asm


@dataclass(eq=False)
class FemSolution:
    """Galerkin solution; ``coefficients`` holds the interior nodal values."""

    mesh: TriMesh
    coefficients: np.ndarray
    iterations: int = 0
    matrix: sp.csr_matrix | None = field(default=None, repr=False)
    rhs: np.ndarray | None = field(default=None, repr=False)

    def nodal_values(self) -> np.ndarray:
        """Values at every node, zero on the boundary."""
        out = np.zeros(len(self.mesh.nodes))
        out[self.mesh.interior] = self.coefficients
        return out


def _solve(A: sp.csr_matrix, b: np.ndarray, solver: str, rtol: float,
           maxit_factor: int, precondition: bool) -> tuple[np.ndarray, int]:
    if solver == "direct":
        return spla.spsolve(A.tocsc(), b), 0
    if solver != "cg":
        raise ValueError(f"solver must be one of {SOLVERS}")
    if maxit_factor < 1:
        raise ValueError("maxit_factor must be at least 1")
    if not np.any(b):
        return np.zeros_like(b), 0
    M = sp.diags(1.0 / A.diagonal()) if precondition else None
    count = [0]

    def tick(_):
        count[0] += 1

    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, maxiter=maxit_factor * len(b), M=M,
                      callback=tick)
    if info != 0:
        raise SolverError(f"CG did not reach relative residual {rtol} in {info} iterations")
    return x, count[0]


def assemble(mesh: TriMesh, coeff: Callable[[np.ndarray], np.ndarray] | np.ndarray,
             f: Callable[[np.ndarray], np.ndarray] | np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Stiffness matrix and load vector on the interior nodes.

    ``coeff`` and ``f`` are vectorized callables on ``(npts, 2)`` points, or
    arrays of their values at the element centroids.
    """
    c = mesh.centroids
    a = np.broadcast_to(np.asarray(coeff(c) if callable(coeff) else coeff, dtype=float),
                        (len(c),))
    fv = np.broadcast_to(np.asarray(f(c) if callable(f) else f, dtype=float), (len(c),))
    _validate_coeff(a)
    asm = _assembler(mesh)
    return asm.matrix(a), asm.load(fv)


def assemble_and_solve(
    mesh: TriMesh,
    coeff: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    f: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    solver: str = "cg",
    rtol: float = 1e-12,
    maxit_factor: int = 10,
    precondition: bool = False,
) -> FemSolution:
    """Galerkin solution with centroid quadrature for ``a`` and ``f``.

    Parameters
    ----------
    solver : {"cg", "direct"}
        Conjugate gradients to relative residual ``rtol`` (default), or a
        sparse LU solve.
    maxit_factor : int
        CG gives up after ``maxit_factor * n_dof`` iterations.

    Raises
    ------
    ValueError
        If a coefficient sample is not positive.
    SolverError
        If CG does not converge.
    """
    A, b = assemble(mesh, coeff, f)
    u, its = _solve(A, b, solver, rtol, maxit_factor, precondition)
    return FemSolution(mesh, u, its, A, b)


def qoi_integral(u: FemSolution) -> float:
    """Exact ``int_D u_h``: each element contributes ``area/3`` times its vertex sum."""
    mesh = u.mesh
    return float(np.sum(mesh.areas / 3.0 * u.nodal_values()[mesh.elements].sum(axis=1)))


def _integral_weights(mesh: TriMesh) -> np.ndarray:
    w = np.bincount(mesh.elements.ravel(), weights=np.repeat(mesh.areas / 3.0, 3),
                    minlength=len(mesh.nodes))
    return w[mesh.interior]


def _locate(mesh: TriMesh, x0) -> tuple[np.ndarray, np.ndarray]:
    """Vertex ids and barycentric weights of the element containing ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (2,) or np.any((x0 < 0) | (x0 > 1)):
        raise ValueError("x0 must be a point of the unit square")
    N = mesh.n_side
    t = x0 * N
    i = np.minimum(np.floor(t).astype(int), N - 1)
    r = t - i
    cell = i[1] * N + i[0]
    # lower triangle below the diagonal (r1 >= r2)
    if r[0] >= r[1]:
        el, lam = 2 * cell, np.array([1 - r[0], r[0] - r[1], r[1]])
    else:
        el, lam = 2 * cell + 1, np.array([1 - r[1], r[0], r[1] - r[0]])
    return mesh.elements[el], lam


def qoi_point(u: FemSolution, x0) -> float:
    """``u_h(x0)`` by linear interpolation; the nodal value when ``x0`` is a node."""
    verts, lam = _locate(u.mesh, x0)
    vals = u.nodal_values()[verts]
    hit = np.flatnonzero(lam == 1.0)
    if hit.size:
        return float(vals[hit[0]])
    return float(lam @ vals)


def h1_seminorm(u: FemSolution) -> float:
    """``||grad u_h||_L2``, exact since the gradient is constant per element."""
    kloc = _assembler(u.mesh).kloc.reshape(-1, 3, 3)
    v = u.nodal_values()[u.mesh.elements]
    return math.sqrt(max(float(np.einsum("ea,eab,eb->", v, kloc, v)), 0.0))


class ParametricProblem:
    """Repeated solves for coefficients that differ only in their centroid values.

    Parameters
    ----------
    mesh : TriMesh
    coeff_at_centroids : callable
        Maps a parameter vector ``y`` to the coefficient at every element
        centroid, e.g. a :class:`~periodic_qmc.random_field.FieldEvaluator`
        built on ``mesh.centroids``.
    f : callable or array
        Load, sampled once at the centroids.
    qoi : "integral" or ("point", x0)
    """

    def __init__(self, mesh: TriMesh, coeff_at_centroids: Callable[[np.ndarray], np.ndarray],
                 f, qoi="integral", solver: str = "direct", rtol: float = 1e-12,
                 maxit_factor: int = 10, precondition: bool = False):
        self.mesh = mesh
        self.coeff = coeff_at_centroids
        self.asm = _assembler(mesh)
        c = mesh.centroids
        fv = np.broadcast_to(np.asarray(f(c) if callable(f) else f, dtype=float), (len(c),))
        self.b = self.asm.load(fv)
        self.solver, self.rtol = solver, rtol
        self.maxit_factor, self.precondition = maxit_factor, precondition
        if qoi == "integral":
            self.functional = _integral_weights(mesh)
        elif isinstance(qoi, (tuple, list)) and qoi[0] == "point":
            verts, lam = _locate(mesh, qoi[1])
            w = np.zeros(len(mesh.nodes))
            np.add.at(w, verts, lam)
            self.functional = w[mesh.interior]
        else:
            raise ValueError(f"unknown quantity of interest {qoi!r}")

    def solve(self, y) -> np.ndarray:
        a = self.coeff(y)
        _validate_coeff(a)
        u, _ = _solve(self.asm.matrix(a), self.b, self.solver, self.rtol,
                      self.maxit_factor, self.precondition)
        return u

    def qoi(self, y) -> float:
        return float(self.functional @ self.solve(y))
