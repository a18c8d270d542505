"""Empirical smoothness constants of conditional models and consistency
checks between the distance classes.

The classes are indexed by how the conditional law moves as z moves: the L1
gap of a marginal ("tv"), its square ("tv_sq"), the chi-square divergence of
a marginal ("chi_sq"), each relative to |z - z'|, and the L1 gap of the
joint ("joint_tv"). Estimates are suprema over a finite z grid, so they only
grow as the grid refines when the grids are nested; powers of two plus one
work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import (
    ConditionalDiscreteModel,
    ContinuousConditionalModel,
    DiscreteJointTable,
    chi_sq_divergence,
    product_of_marginals,
)

__all__ = [
    "CLASS_IDS",
    "SmoothnessReport",
    "InclusionReport",
    "empirical_lipschitz",
    "check_inclusions",
    "random_table_pair",
]

CLASS_IDS = ("tv", "tv_sq", "chi_sq", "joint_tv")

ALL_PAIRS_LIMIT = 128
MIN_Z_GAP = 1e-6


@dataclass(frozen=True)
class SmoothnessReport:
    """Empirical class constant of a model over a z grid."""

    class_id: str
    constant: float
    grid_size: int
    pair_strategy: str
    pairs_evaluated: int


def _pair_indices(grid_size: int) -> tuple[np.ndarray, np.ndarray, str]:
    if grid_size <= ALL_PAIRS_LIMIT:
        i, j = np.triu_indices(grid_size, k=1)
        return i, j, "all-pairs"
    i = np.arange(grid_size - 1)
    return i, i + 1, "adjacent"


def _l1(a: np.ndarray, b: np.ndarray, axis) -> np.ndarray:
    return np.abs(a - b).sum(axis=axis)


def _chi_sq_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Rowwise chi-square divergence of p from q, inf where support leaks."""
    bad = (q == 0) & (p > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > 0, (p - q) ** 2 / np.where(q > 0, q, 1.0), 0.0)
    out = terms.sum(axis=-1)
    out[bad.any(axis=-1)] = np.inf
    return out


def _continuous_marginals(model: ContinuousConditionalModel, zs: np.ndarray,
                          marginal_points: int, joint_points: int):
    """Marginal density values per z; falls back to summing the joint grid
    when no analytic marginals are provided."""
    analytic = model.marginal_x_at is not None and model.marginal_y_at is not None
    gm = marginal_points if analytic else joint_points
    xm = (np.arange(gm) + 0.5) / gm
    margx = np.empty((len(zs), gm))
    margy = np.empty((len(zs), gm))
    for a, z in enumerate(zs):
        z = float(z)
        if analytic:
            margx[a] = np.asarray(model.marginal_x_at(xm, z))
            margy[a] = np.asarray(model.marginal_y_at(xm, z))
        else:
            q = _joint_grid(model, z, joint_points)
            margx[a] = q.sum(axis=1) / joint_points
            margy[a] = q.sum(axis=0) / joint_points
    return margx, margy, gm


def _joint_grid(model: ContinuousConditionalModel, z: float,
                gj: int) -> np.ndarray:
    xj = (np.arange(gj) + 0.5) / gj
    q = np.asarray(model.density_at(xj[:, None], xj[None, :], z),
                   dtype=np.float64)
    if q.shape != (gj, gj):
        q = np.broadcast_to(q, (gj, gj))
    return q


def _marginal_ratios(margx, margy, i, j, gaps, class_id, marg_scale):
    """Per-pair ratios for the marginal classes, chunked to bound memory."""
    out = np.empty(len(gaps))
    chunk = max(1, (1 << 24) // max(1, margx.shape[1] * 8))
    for lo in range(0, len(gaps), chunk):
        sl = slice(lo, lo + chunk)
        ii, jj = i[sl], j[sl]
        if class_id in ("tv", "tv_sq"):
            dist = np.maximum(_l1(margx[ii], margx[jj], axis=-1),
                              _l1(margy[ii], margy[jj], axis=-1)) * marg_scale
            if class_id == "tv":
                out[sl] = dist / gaps[sl]
            else:
                out[sl] = dist ** 2 / gaps[sl]
        else:
            cx = np.maximum(_chi_sq_rows(margx[ii], margx[jj]),
                            _chi_sq_rows(margx[jj], margx[ii])) * marg_scale
            cy = np.maximum(_chi_sq_rows(margy[ii], margy[jj]),
                            _chi_sq_rows(margy[jj], margy[ii])) * marg_scale
            out[sl] = np.maximum(cx, cy) / np.maximum(gaps[sl], MIN_Z_GAP)
    return out


def empirical_lipschitz(model, class_id: str, grid_size: int = 64,
                        marginal_points: int = 65536,
                        joint_points: int = 512) -> SmoothnessReport:
    """Largest distance-to-gap ratio of the model over a z grid.

    The grid is linspace(0, 1, grid_size); all pairs are compared up to 128
    grid points and adjacent pairs beyond that. For the chi-square class the
    gap |z - z'| is floored at 1e-6 to keep near-coincident grids finite.
    Only univariate z is supported.
    """
    if class_id not in CLASS_IDS:
        raise ValueError(f"class_id must be one of {CLASS_IDS}")
    if grid_size < 2:
        raise ValueError("grid must hold at least 2 points")
    zs = np.linspace(0.0, 1.0, grid_size)
    i, j, strategy = _pair_indices(grid_size)
    gaps = zs[j] - zs[i]

    if isinstance(model, ConditionalDiscreteModel):
        if model.d_z != 1:
            raise ValueError("smoothness profiling supports univariate z")
        joints = np.stack([model.table_at(float(z)).probs for z in zs])
        margx = joints.sum(axis=2)
        margy = joints.sum(axis=1)
        if class_id == "joint_tv":
            ratio = _l1(joints[i], joints[j], axis=(-2, -1)) / gaps
        else:
            ratio = _marginal_ratios(margx, margy, i, j, gaps, class_id, 1.0)
    elif isinstance(model, ContinuousConditionalModel):
        if model.d_z != 1:
            raise ValueError("smoothness profiling supports univariate z")
        if class_id == "joint_tv":
            gj = joint_points
            ratio = np.empty(len(gaps))
            if strategy == "adjacent":
                # pairs are (a, a+1); roll one grid forward per step
                prev = _joint_grid(model, float(zs[0]), gj)
                for a in range(len(gaps)):
                    cur = _joint_grid(model, float(zs[a + 1]), gj)
                    ratio[a] = (np.abs(prev - cur).sum()
                                / (gj * gj)) / gaps[a]
                    prev = cur
            else:
                grids = np.empty((grid_size, gj, gj), dtype=np.float32)
                for a, z in enumerate(zs):
                    grids[a] = _joint_grid(model, float(z), gj)
                for idx in range(len(gaps)):
                    diff = np.abs(grids[i[idx]].astype(np.float64)
                                  - grids[j[idx]])
                    ratio[idx] = (diff.sum() / (gj * gj)) / gaps[idx]
        else:
            margx, margy, gm = _continuous_marginals(
                model, zs, marginal_points, joint_points)
            ratio = _marginal_ratios(margx, margy, i, j, gaps, class_id,
                                     1.0 / gm)
    else:
        raise TypeError("model must be a conditional model")
    return SmoothnessReport(
        class_id=class_id, constant=float(ratio.max()),
        grid_size=grid_size, pair_strategy=strategy,
        pairs_evaluated=len(gaps))


@dataclass(frozen=True)
class InclusionReport:
    """Worst slack seen for each cross-class inequality over random pairs.

    Violations are positive slacks beyond tolerance; ``passed`` summarizes.
    """

    trials: int
    max_violation: dict
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return all(v <= self.tolerance for v in self.max_violation.values())


def random_table_pair(rng: np.random.Generator, ell1: int = 3,
                      ell2: int = 4) -> tuple[DiscreteJointTable, DiscreteJointTable]:
    """Dirichlet pair on a shared shape; occasionally zeroes a cell so the
    chi-square branches with infinite divergence get exercised."""
    def draw() -> DiscreteJointTable:
        w = rng.dirichlet(np.ones(ell1 * ell2)).reshape(ell1, ell2)
        if rng.random() < 0.25:
            w[rng.integers(ell1), rng.integers(ell2)] = 0.0
            w = w / w.sum()
        return DiscreteJointTable(w)
    return draw(), draw()


def check_inclusions(pair_family=None, trials: int = 1000,
                     rng: np.random.Generator | None = None) -> InclusionReport:
    """Verify the distance-class inequalities on random table pairs.

    Checks, per draw: the squared L1 gap never exceeds the chi-square
    divergence; marginal L1 gaps never exceed the joint L1 gap; the L1 gap
    of the marginal products never exceeds the sum of marginal L1 gaps; and
    the chi-square divergence of products equals cx + cy + cx * cy.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if pair_family is None:
        pair_family = random_table_pair
    worst = {"l1_sq_vs_chi_sq": -np.inf, "marginal_vs_joint": -np.inf,
             "product_l1_subadd": -np.inf, "product_chi_sq_identity": -np.inf}
    for _ in range(trials):
        p, q = pair_family(rng)
        pa, qa = p.probs, q.probs
        l1_joint = float(np.abs(pa - qa).sum())
        chi = chi_sq_divergence(p, q)
        if np.isinf(chi):
            worst["l1_sq_vs_chi_sq"] = max(worst["l1_sq_vs_chi_sq"], -np.inf)
        else:
            worst["l1_sq_vs_chi_sq"] = max(worst["l1_sq_vs_chi_sq"],
                                           l1_joint ** 2 - chi)
        px, py = p.x_marginal(), p.y_marginal()
        qx, qy = q.x_marginal(), q.y_marginal()
        l1_margs = max(float(np.abs(px - qx).sum()),
                       float(np.abs(py - qy).sum()))
        worst["marginal_vs_joint"] = max(worst["marginal_vs_joint"],
                                         l1_margs - l1_joint)
        prod_gap = float(np.abs(np.outer(px, py) - np.outer(qx, qy)).sum())
        sum_margs = float(np.abs(px - qx).sum() + np.abs(py - qy).sum())
        worst["product_l1_subadd"] = max(worst["product_l1_subadd"],
                                         prod_gap - sum_margs)
        cx = _chi_sq_rows(px[None, :], qx[None, :])[0]
        cy = _chi_sq_rows(py[None, :], qy[None, :])[0]
        cj = chi_sq_divergence(product_of_marginals(p), product_of_marginals(q))
        if np.isinf(cx) or np.isinf(cy):
            gap = 0.0 if np.isinf(cj) else np.inf
        else:
            expected = cx + cy + cx * cy
            gap = abs(cj - expected) / max(1.0, expected)
        worst["product_chi_sq_identity"] = max(
            worst["product_chi_sq_identity"], gap)
    return InclusionReport(trials=trials, max_violation=worst)
