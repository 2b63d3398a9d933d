"""Core data model: system specification, grids, fields, energy and constraints.

The energy of a field vector u = (u_1, ..., u_k) is

    E(u) = 1/2 sum_j ||u_j||_{lam_j}^2 - 1/4 sum_j mu_j ||u_j||_4^4
           - 1/2 sum_{i<j} beta_ij ||u_i u_j||_2^2

with ||u||_lam^2 = int |grad u|^2 + lam u^2.  Everything in this module is
discretized consistently: the kinetic term is a sum of squared first
differences over grid cells (equivalently the quadratic form of the standard
second-order Laplacian with zero Dirichlet ghost nodes), all other integrals
use trapezoidal quadrature, and `gradient` is the exact Riesz representer of
the discrete energy differential in the weighted discrete L2 inner product.
Directional derivatives of `energy` therefore match `gradient` to O(eps^2)
in finite-difference checks, with no discretization mismatch.

All values are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "Grid",
    "SystemSpec",
    "FieldVector",
    "ConstraintPartition",
    "build_system",
    "energy",
    "gradient",
    "nehari_residuals",
    "gram_matrices",
    "inner",
    "norm",
    "boundary_mass_fraction",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform axis-aligned grid on [-extent, extent]^N.

    The point count per axis is 2*extent/spacing + 1, which must be an even
    integer + 1 so that the origin is a node.
    """

    N: int
    extent: float
    spacing: float
    npoints: int = field(init=False)

    def __post_init__(self):
        if self.N not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.N}")
        if self.extent <= 0 or self.spacing <= 0:
            raise ValueError("extent and spacing must be positive")
        ratio = 2.0 * self.extent / self.spacing
        n = int(round(ratio))
        if abs(ratio - n) > 1e-8 * max(1.0, ratio):
            raise ValueError(
                f"2*extent/spacing = {ratio} is not an integer; "
                "choose extent as a multiple of spacing"
            )
        if n % 2 != 0:
            raise ValueError("extent must be an even multiple of spacing/2 "
                             "so the origin is a grid node")
        object.__setattr__(self, "npoints", n + 1)
        # re-derive the exact extent so axis() spacing is exactly `spacing`
        object.__setattr__(self, "extent", 0.5 * n * self.spacing)

    @property
    def shape(self) -> tuple:
        return (self.npoints,) * self.N

    @property
    def size(self) -> int:
        return self.npoints ** self.N

    def axis(self) -> np.ndarray:
        n = self.npoints
        return (np.arange(n) - (n - 1) / 2) * self.spacing

    def axis_weights(self) -> np.ndarray:
        w = np.ones(self.npoints)
        w[0] = w[-1] = 0.5
        return w

    def weights(self) -> np.ndarray:
        """Tensor-product trapezoid weights (no spacing factor)."""
        w = self.axis_weights()
        out = w
        for _ in range(self.N - 1):
            out = np.multiply.outer(out, w)
        return out

    def integrate(self, values: np.ndarray) -> float:
        """Trapezoidal quadrature of a grid function."""
        if values.shape != self.shape:
            raise ValueError("values shape does not match grid")
        return float(np.sum(self.weights() * values) * self.spacing ** self.N)

    def coordinates(self) -> list:
        """Meshgrid coordinate arrays (ij indexing)."""
        ax = self.axis()
        return list(np.meshgrid(*([ax] * self.N), indexing="ij"))


def _kinetic(grid: Grid, v: np.ndarray) -> float:
    """Discrete int |grad v|^2 with zero Dirichlet ghost nodes."""
    h = grid.spacing
    total = 0.0
    for a in range(grid.N):
        d = np.diff(v, axis=a)
        total += np.sum(d * d)
        # ghost cells just outside both faces
        lead = np.take(v, 0, axis=a)
        trail = np.take(v, -1, axis=a)
        total += np.sum(lead * lead) + np.sum(trail * trail)
    return total * h ** (grid.N - 2)


def _neg_laplacian(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Standard (2N+1)-point -Laplacian with zero Dirichlet ghost nodes."""
    h2 = grid.spacing ** 2
    out = (2.0 * grid.N) * v
    for a in range(grid.N):
        out -= np.roll(v, 1, axis=a) + np.roll(v, -1, axis=a)
        # undo wraparound from roll
        sl = [slice(None)] * grid.N
        sl[a] = 0
        out[tuple(sl)] += np.take(v, -1, axis=a)
        sl[a] = -1
        out[tuple(sl)] += np.take(v, 0, axis=a)
    return out / h2


@dataclass(frozen=True)
class SystemSpec:
    """Parameters of a k-coupled cubic system on R^N.

    beta is the full symmetric coupling matrix with beta[j, j] = mu[j]; all
    off-diagonal entries are nonzero.
    """

    N: int
    k: int
    lam: np.ndarray
    mu: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lam", _readonly(self.lam))
        object.__setattr__(self, "mu", _readonly(self.mu))
        object.__setattr__(self, "beta", _readonly(self.beta))

    def subsystem(self, indices: Sequence[int]) -> "SystemSpec":
        """Restriction to a subset of components (0-based indices)."""
        idx = list(indices)
        return SystemSpec(
            N=self.N,
            k=len(idx),
            lam=self.lam[idx],
            mu=self.mu[idx],
            beta=self.beta[np.ix_(idx, idx)],
        )

    def coupling_pairs(self):
        """All (i, j, beta_ij) with i < j."""
        for i in range(self.k):
            for j in range(i + 1, self.k):
                yield i, j, float(self.beta[i, j])


def build_system(config: Mapping) -> SystemSpec:
    """Validate a parameter record and return a SystemSpec.

    Accepted keys: N, k, lambda (or lam), mu, beta.  beta may be a full k x k
    matrix or a list of [i, j, value] triples with 1-based indices (upper
    triangle suffices).
    """
    try:
        N = int(config["N"])
        k = int(config["k"])
    except KeyError as e:
        raise ValueError(f"missing system key: {e}") from None
    if N not in (1, 2, 3):
        raise ValueError(f"N must be 1, 2 or 3, got {N}")
    if k < 1:
        raise ValueError(f"component count must be >= 1, got {k}")

    lam = np.asarray(config.get("lambda", config.get("lam")), dtype=float)
    mu = np.asarray(config["mu"], dtype=float)
    if lam.shape != (k,) or mu.shape != (k,):
        raise ValueError("lambda and mu must each have k entries")
    if np.any(lam <= 0):
        raise ValueError("all lambda must be strictly positive")
    if np.any(mu <= 0):
        raise ValueError("all mu must be strictly positive")

    raw = config.get("beta", [])
    beta = np.zeros((k, k))
    arr = np.asarray(raw, dtype=float) if not isinstance(raw, Mapping) else None
    if arr is not None and arr.shape == (k, k):
        if not np.allclose(arr, arr.T, rtol=1e-12, atol=0.0):
            raise ValueError("explicit beta matrix is not symmetric")
        beta = arr.copy()
    else:
        triples = raw.items() if isinstance(raw, Mapping) else raw
        for entry in triples:
            if isinstance(raw, Mapping):
                key, value = entry
                i, j = (int(s) for s in str(key).replace(" ", "").split(","))
            else:
                i, j, value = entry
                i, j = int(i), int(j)
            if not (1 <= i <= k and 1 <= j <= k) or i == j:
                raise ValueError(f"bad coupling index pair ({i},{j})")
            i -= 1
            j -= 1
            if beta[i, j] != 0.0 and beta[i, j] != float(value):
                raise ValueError(f"conflicting values for beta[{i+1},{j+1}]")
            beta[i, j] = beta[j, i] = float(value)

    for i in range(k):
        for j in range(i + 1, k):
            if beta[i, j] == 0.0:
                raise ValueError(
                    f"coupling beta[{i+1},{j+1}] is zero; all off-diagonal "
                    "couplings must be nonzero"
                )
    np.fill_diagonal(beta, mu)
    return SystemSpec(N=N, k=k, lam=lam, mu=mu, beta=beta)


@dataclass(frozen=True)
class FieldVector:
    """k real fields sharing one grid; components has shape (k, *grid.shape)."""

    grid: Grid
    components: np.ndarray

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        if comps.ndim != self.grid.N + 1 or comps.shape[1:] != self.grid.shape:
            raise ValueError("component array does not match grid shape")
        if not np.all(np.isfinite(comps)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "components", _readonly(comps))

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @staticmethod
    def zeros(grid: Grid, k: int) -> "FieldVector":
        return FieldVector(grid, np.zeros((k,) + grid.shape))

    def replace(self, components: np.ndarray) -> "FieldVector":
        return FieldVector(self.grid, components)

    def masses(self) -> np.ndarray:
        """Per-component ||u_j||_2^2."""
        return np.array([self.grid.integrate(c * c) for c in self.components])

    def centroids(self) -> np.ndarray:
        """Per-component mass centers along the first axis."""
        x = self.grid.axis()
        out = np.zeros(self.k)
        for j, c in enumerate(self.components):
            dens = c * c
            m = self.grid.integrate(dens)
            if m <= 0:
                out[j] = 0.0
                continue
            xdens = dens * x.reshape((-1,) + (1,) * (self.grid.N - 1))
            out[j] = self.grid.integrate(xdens) / m
        return out


@dataclass(frozen=True)
class ConstraintPartition:
    """Ordered partition of components {0..k-1} into constraint groups.

    The singleton partition gives the full Nehari constraints (one per
    component); coarser partitions give grouped sums of them.
    """

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        seen = [i for g in groups for i in g]
        if not groups or any(len(g) == 0 for g in groups):
            raise ValueError("groups must be nonempty")
        if sorted(seen) != list(range(len(seen))) or len(set(seen)) != len(seen):
            raise ValueError("groups must partition 0..k-1")
        object.__setattr__(self, "groups", groups)

    @property
    def k(self) -> int:
        return sum(len(g) for g in self.groups)

    @staticmethod
    def singletons(k: int) -> "ConstraintPartition":
        return ConstraintPartition(tuple((j,) for j in range(k)))

    @staticmethod
    def single_group(k: int) -> "ConstraintPartition":
        return ConstraintPartition((tuple(range(k)),))

    def group_of(self) -> np.ndarray:
        out = np.empty(self.k, dtype=int)
        for g, members in enumerate(self.groups):
            for j in members:
                out[j] = g
        return out


def _check(spec: SystemSpec, u: FieldVector):
    if u.grid.N != spec.N:
        raise ValueError(f"grid dimension {u.grid.N} does not match system N={spec.N}")
    if u.k != spec.k:
        raise ValueError(f"field has {u.k} components, system has {spec.k}")


def _norm_lam_sq(grid: Grid, v: np.ndarray, lam: float) -> float:
    return _kinetic(grid, v) + lam * grid.integrate(v * v)


def energy(spec: SystemSpec, u: FieldVector) -> float:
    """Discrete energy functional of a field vector."""
    _check(spec, u)
    grid = u.grid
    c = u.components
    total = 0.0
    for j in range(spec.k):
        total += 0.5 * _norm_lam_sq(grid, c[j], spec.lam[j])
        total -= 0.25 * spec.mu[j] * grid.integrate(c[j] ** 4)
    for i in range(spec.k):
        for j in range(i + 1, spec.k):
            total -= 0.5 * spec.beta[i, j] * grid.integrate((c[i] * c[j]) ** 2)
    return total


def gradient(spec: SystemSpec, u: FieldVector) -> FieldVector:
    """L2 gradient of `energy`; component j is the discrete
    -Lap u_j + lam_j u_j - mu_j u_j^3 - sum_{i != j} beta_ij u_i^2 u_j."""
    _check(spec, u)
    grid = u.grid
    c = u.components
    w = grid.weights()
    out = np.empty_like(c)
    for j in range(spec.k):
        nl = spec.mu[j] * c[j] ** 3
        for i in range(spec.k):
            if i != j:
                nl += spec.beta[i, j] * c[i] ** 2 * c[j]
        out[j] = _neg_laplacian(grid, c[j]) / w + spec.lam[j] * c[j] - nl
    return FieldVector(grid, out)


def inner(u: FieldVector, v: FieldVector) -> float:
    """Weighted discrete L2 inner product summed over components."""
    if u.grid is not v.grid and u.grid != v.grid:
        raise ValueError("fields live on different grids")
    w = u.grid.weights()
    hN = u.grid.spacing ** u.grid.N
    return float(np.sum(w * u.components * v.components) * hN)


def norm(u: FieldVector) -> float:
    return math.sqrt(max(inner(u, u), 0.0))


def nehari_residuals(
    spec: SystemSpec, u: FieldVector, partition: ConstraintPartition
) -> np.ndarray:
    """Grouped Nehari constraint values: per group g, the sum over j in g of
    ||u_j||_{lam_j}^2 - mu_j ||u_j||_4^4 - sum_{i != j} beta_ij ||u_i u_j||_2^2.
    """
    _check(spec, u)
    if partition.k != spec.k:
        raise ValueError("partition size does not match component count")
    grid = u.grid
    c = u.components
    masses = u.masses()
    for g in partition.groups:
        if all(masses[j] == 0.0 for j in g):
            raise ValueError(f"constraint group {g} has no nonzero component")
    G = np.zeros(spec.k)
    cross = np.zeros((spec.k, spec.k))
    for i in range(spec.k):
        for j in range(i + 1, spec.k):
            cross[i, j] = cross[j, i] = grid.integrate((c[i] * c[j]) ** 2)
    for j in range(spec.k):
        G[j] = (
            _norm_lam_sq(grid, c[j], spec.lam[j])
            - spec.mu[j] * grid.integrate(c[j] ** 4)
            - sum(spec.beta[i, j] * cross[i, j] for i in range(spec.k) if i != j)
        )
    return np.array([sum(G[j] for j in g) for g in partition.groups])


def gram_matrices(
    spec: SystemSpec, u: FieldVector, partition: ConstraintPartition
) -> tuple:
    """Gram data (A, b) of the grouped multiplier system.

    Scaling group g by t_g and requiring all grouped constraints to vanish is
    the linear system A s = b in s = t^2, with

      A[g, g]  = sum_{j in g} mu_j ||u_j||_4^4
                 + sum_{i != j in g} beta_ij ||u_i u_j||_2^2
      A[g, g'] = sum_{j in g, i in g'} beta_ij ||u_i u_j||_2^2   (g != g')
      b[g]     = sum_{j in g} ||u_j||_{lam_j}^2
    """
    _check(spec, u)
    grid = u.grid
    c = u.components
    m = len(partition.groups)
    gof = partition.group_of()
    A = np.zeros((m, m))
    b = np.zeros(m)
    for j in range(spec.k):
        g = gof[j]
        b[g] += _norm_lam_sq(grid, c[j], spec.lam[j])
        A[g, g] += spec.mu[j] * grid.integrate(c[j] ** 4)
    for i in range(spec.k):
        for j in range(i + 1, spec.k):
            ov = spec.beta[i, j] * grid.integrate((c[i] * c[j]) ** 2)
            A[gof[j], gof[i]] += ov
            A[gof[i], gof[j]] += ov
    return A, b


def boundary_mass_fraction(u: FieldVector) -> float:
    """Fraction of the total L2 mass lying in the outer 10% shell of the box."""
    grid = u.grid
    cut = 0.9 * grid.extent
    ax = np.abs(grid.axis()) > cut
    mask = ax
    for _ in range(grid.N - 1):
        mask = np.logical_or.outer(mask, ax)
    total = 0.0
    outer = 0.0
    w = grid.weights()
    for c in u.components:
        dens = w * c * c
        total += float(np.sum(dens))
        outer += float(np.sum(dens[mask]))
    if total == 0.0:
        return 0.0
    return outer / total
