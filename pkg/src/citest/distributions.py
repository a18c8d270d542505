"""Finite joint distributions, conditional models and distances between them.

Probabilities live in plain numpy arrays indexed [x, y] with 0-based axes;
the public sample containers keep the 1-based category codes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "DistributionError",
    "DimensionError",
    "QuadratureError",
    "DiscreteJointTable",
    "DiscreteMarginalPair",
    "ConditionalDiscreteModel",
    "ContinuousConditionalModel",
    "QuadratureSpec",
    "tv_distance",
    "l2_distance_sq",
    "chi_sq_divergence",
    "product_of_marginals",
    "model_ci_distance",
]

PROB_TOL = 1e-12


class DistributionError(ValueError):
    """Raised when probabilities are negative or do not sum to one."""


class DimensionError(ValueError):
    """Raised when two tables of different shapes are combined."""


class QuadratureError(RuntimeError):
    """Raised when numerical integration fails its self-consistency check."""


def _validate_probs(p: np.ndarray, what: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < -PROB_TOL):
        raise DistributionError(f"{what} has negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > PROB_TOL:
        raise DistributionError(f"{what} sums to {total!r}, not 1")
    p = np.clip(p, 0.0, None)
    p.setflags(write=False)
    return p


@dataclass(frozen=True)
class DiscreteJointTable:
    """Joint pmf of a categorical pair, shape (ell1, ell2)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 2:
            raise DimensionError("joint table must be a matrix")
        object.__setattr__(self, "probs", _validate_probs(p, "joint table"))

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> "DiscreteJointTable":
        """Normalize nonnegative weights into a table."""
        w = np.asarray(weights, dtype=np.float64)
        if np.any(w < 0):
            raise DistributionError("weights must be nonnegative")
        total = w.sum()
        if total <= 0:
            raise DistributionError("weights sum to zero")
        return cls(w / total)

    @property
    def ell1(self) -> int:
        return self.probs.shape[0]

    @property
    def ell2(self) -> int:
        return self.probs.shape[1]

    def x_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=1)

    def y_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=0)

    def marginals(self) -> "DiscreteMarginalPair":
        return DiscreteMarginalPair(self.x_marginal(), self.y_marginal())


@dataclass(frozen=True)
class DiscreteMarginalPair:
    """The two marginal pmfs of a categorical pair."""

    px: np.ndarray
    py: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "px", _validate_probs(np.atleast_1d(self.px), "px"))
        object.__setattr__(self, "py", _validate_probs(np.atleast_1d(self.py), "py"))

    def outer(self) -> "DiscreteJointTable":
        return DiscreteJointTable(np.outer(self.px, self.py))


@dataclass(frozen=True)
class ConditionalDiscreteModel:
    """Conditional law of a categorical pair given a real z.

    ``table_at(z)`` returns the joint table of (X, Y) given Z = z; ``z`` is a
    scalar for d_z = 1 and a length-2 array for d_z = 2. ``pz_sampler(n, rng)``
    draws z values with shape (n,) or (n, 2). ``pz_density_at`` is the density
    of Z where known; None means uniform on the unit cube, which is what every
    built-in generator uses.
    """

    table_at: Callable[..., DiscreteJointTable]
    pz_sampler: Callable[[int, np.random.Generator], np.ndarray]
    d_z: int = 1
    pz_density_at: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.d_z not in (1, 2):
            raise DimensionError("d_z must be 1 or 2")


@dataclass(frozen=True)
class ContinuousConditionalModel:
    """Conditional density of a real pair on [0, 1]^2 given a real z.

    ``density_at(x, y, z)`` evaluates q(x, y | z) and must broadcast over
    numpy arrays in x and y for fixed scalar z. ``xy_sampler_given_z(z, n,
    rng)`` draws n pairs given a single z. The optional analytic marginals
    ``marginal_x_at(x, z)`` and ``marginal_y_at(y, z)`` let diagnostics avoid
    a numerical marginalization when the generator knows them in closed form.
    """

    density_at: Callable[..., np.ndarray]
    pz_sampler: Callable[[int, np.random.Generator], np.ndarray]
    xy_sampler_given_z: Callable[..., tuple[np.ndarray, np.ndarray]]
    d_z: int = 1
    pz_density_at: Callable[[np.ndarray], np.ndarray] | None = None
    marginal_x_at: Callable[..., np.ndarray] | None = None
    marginal_y_at: Callable[..., np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.d_z not in (1, 2):
            raise DimensionError("d_z must be 1 or 2")


def _paired(p: DiscreteJointTable | np.ndarray,
            q: DiscreteJointTable | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pa = p.probs if isinstance(p, DiscreteJointTable) else np.asarray(p, dtype=np.float64)
    qa = q.probs if isinstance(q, DiscreteJointTable) else np.asarray(q, dtype=np.float64)
    if pa.shape != qa.shape:
        raise DimensionError(f"shape mismatch {pa.shape} vs {qa.shape}")
    return pa, qa


def tv_distance(p, q) -> float:
    """Total variation distance, half the entrywise L1 difference."""
    pa, qa = _paired(p, q)
    return 0.5 * float(np.abs(pa - qa).sum())


def l2_distance_sq(p, q) -> float:
    """Squared L2 distance between two pmfs of equal shape."""
    pa, qa = _paired(p, q)
    return float(((pa - qa) ** 2).sum())


def chi_sq_divergence(p, q) -> float:
    """Chi-square divergence of p from q.

    Cells with q = 0 and p > 0 make the divergence infinite; cells with
    p = q = 0 contribute nothing.
    """
    pa, qa = _paired(p, q)
    if np.any((qa == 0) & (pa > 0)):
        return float("inf")
    diff_sq = (pa - qa) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(qa > 0, diff_sq / np.where(qa > 0, qa, 1.0), 0.0)
    return float(terms.sum())


def product_of_marginals(p: DiscreteJointTable) -> DiscreteJointTable:
    """The independent table with the same marginals as p."""
    return p.marginals().outer()


@dataclass(frozen=True)
class QuadratureSpec:
    """Midpoint-rule resolution for integrals over z and over (x, y).

    The self-consistency check compares against a half-resolution pass and
    reports the difference as the quadrature tolerance.
    """

    z_points: int = 512
    xy_points: int = 512

    def __post_init__(self) -> None:
        if self.z_points < 2 or self.xy_points < 2:
            raise ValueError("quadrature needs at least 2 points per axis")


def _midpoints(k: int) -> np.ndarray:
    return (np.arange(k) + 0.5) / k


def _discrete_ci_profile(model: ConditionalDiscreteModel, z_points: int) -> float:
    if model.d_z == 1:
        zs = _midpoints(z_points)
        grid = zs[:, None]
        weight = np.full(len(zs), 1.0 / z_points)
    else:
        m = _midpoints(z_points)
        a, b = np.meshgrid(m, m, indexing="ij")
        grid = np.column_stack([a.ravel(), b.ravel()])
        weight = np.full(len(grid), 1.0 / z_points ** 2)
    if model.pz_density_at is not None:
        weight = weight * np.asarray(model.pz_density_at(grid), dtype=np.float64)
    total = 0.0
    for zrow, w in zip(grid, weight):
        z = zrow[0] if model.d_z == 1 else zrow
        table = model.table_at(z)
        prod = product_of_marginals(table)
        total += w * float(np.abs(table.probs - prod.probs).sum())
    return total


def _continuous_ci_profile(model: ContinuousConditionalModel,
                           z_points: int, xy_points: int) -> float:
    if model.d_z != 1:
        raise DimensionError("continuous conditional distance supports d_z = 1")
    g = xy_points
    xs = _midpoints(g)
    xg = xs[:, None]
    yg = xs[None, :]
    zs = _midpoints(z_points)
    weight = np.full(z_points, 1.0 / z_points)
    if model.pz_density_at is not None:
        weight = weight * np.asarray(model.pz_density_at(zs[:, None]), dtype=np.float64)
    cell = 1.0 / g
    total = 0.0
    for z, w in zip(zs, weight):
        q = np.asarray(model.density_at(xg, yg, float(z)), dtype=np.float64)
        if q.shape != (g, g):
            q = np.broadcast_to(q, (g, g))
        qx = q.sum(axis=1) * cell
        qy = q.sum(axis=0) * cell
        total += w * float(np.abs(q - qx[:, None] * qy[None, :]).sum()) * cell * cell
    return total


def model_ci_distance(model, quadrature: QuadratureSpec | None = None,
                      return_tolerance: bool = False,
                      max_rel_tol: float | None = None):
    """Expected L1 gap between the conditional joint and its marginal product.

    Integrates E_Z of the entrywise L1 distance between q(., . | z) and the
    product of its conditional marginals by midpoint quadrature. A second
    half-resolution pass estimates the quadrature error; with
    ``return_tolerance`` the pair (value, tolerance) is returned, and with
    ``max_rel_tol`` a QuadratureError is raised when the estimated relative
    error exceeds it.
    """
    quad = quadrature or QuadratureSpec()
    if isinstance(model, ConditionalDiscreteModel):
        fine = _discrete_ci_profile(model, quad.z_points)
        coarse = _discrete_ci_profile(model, max(2, quad.z_points // 2))
    elif isinstance(model, ContinuousConditionalModel):
        fine = _continuous_ci_profile(model, quad.z_points, quad.xy_points)
        coarse = _continuous_ci_profile(
            model, max(2, quad.z_points // 2), max(2, quad.xy_points // 2))
    else:
        raise TypeError("model must be a conditional model")
    tol = abs(fine - coarse)
    if max_rel_tol is not None and tol > max_rel_tol * max(abs(fine), 1e-300):
        raise QuadratureError(
            f"quadrature disagreement {tol!r} exceeds requested tolerance")
    if return_tolerance:
        return fine, tol
    return fine
