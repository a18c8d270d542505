"""Synthetic conditional models: smooth families, adversarial perturbations
around independence, and the cell coupling that forces conditional
independence on arbitrary dependent data.

All z values drawn here are uniform on [0, 1] (per axis) except the coupling,
which works on a symmetric box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, stats

from .data import REAL, TripleDataset
from .distributions import (
    ConditionalDiscreteModel,
    ContinuousConditionalModel,
    DiscreteJointTable,
)

__all__ = [
    "FeasibilityError",
    "BumpFunction",
    "default_bump",
    "scaled_bump_value",
    "eta_profile",
    "AdversarialDiscreteSpec",
    "AdversarialContinuousSpec",
    "make_tilde_delta",
    "adversarial_discrete_density",
    "adversarial_discrete_table",
    "adversarial_discrete_model",
    "adversarial_discrete_separation",
    "sample_adversarial_discrete",
    "adversarial_continuous_density",
    "adversarial_continuous_model",
    "adversarial_continuous_separation",
    "sample_adversarial_continuous",
    "gen_discrete_null",
    "gen_discrete_alt",
    "sample_discrete_null",
    "sample_discrete_alt",
    "discrete_null_model",
    "discrete_alt_model",
    "exp_family_discrete_model",
    "sample_continuous_null",
    "sample_continuous_alt",
    "continuous_null_model",
    "continuous_alt_model",
    "CouplingSpec",
    "ci_coupling",
    "coupling_displacement_bound",
    "coupling_cell_of",
    "coupling_uniformity",
]


class FeasibilityError(ValueError):
    """Raised when a perturbation amplitude would push a density negative."""


# ---------------------------------------------------------------------------
# mean-zero smooth bump


def _smooth_profile(t):
    """exp(-1 / (t (1 - t))) on (0, 1), zero outside; vanishes to all orders
    at the endpoints."""
    t = np.asarray(t, dtype=np.float64)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    out = np.zeros_like(t)
    inside = (t > 0.0) & (t < 1.0)
    ti = t[inside]
    out[inside] = np.exp(-1.0 / (ti * (1.0 - ti)))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class BumpFunction:
    """A mean-zero unit-energy bump on (0, 1).

    ``fn`` is vectorized; ``abs_integral``, ``sup_norm`` and
    ``deriv_sup_norm`` cache the constants every amplitude bound needs.
    Construction checks integral zero and unit squared integral to 1e-10.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    abs_integral: float
    sup_norm: float
    deriv_sup_norm: float

    def __post_init__(self) -> None:
        total, _ = integrate.quad(self.fn, 0.0, 1.0, limit=200)
        energy, _ = integrate.quad(lambda t: self.fn(t) ** 2, 0.0, 1.0,
                                   limit=200)
        if abs(total) > 1e-10:
            raise ValueError(f"bump integral {total!r} is not 0")
        if abs(energy - 1.0) > 1e-10:
            raise ValueError(f"bump squared integral {energy!r} is not 1")


@lru_cache(maxsize=1)
def default_bump() -> BumpFunction:
    """Antisymmetric pair of smooth profiles, normalized to unit energy.

    h(z) = kappa (profile(2z) - profile(2z - 1)); the positive half sits on
    (0, 1/2), the negative on (1/2, 1).
    """
    raw_energy, _ = integrate.quad(lambda t: _smooth_profile(t) ** 2,
                                   0.0, 1.0, limit=200)
    # integral of raw h^2 equals the profile's own energy after the change
    # of variables, both halves included
    kappa = 1.0 / math.sqrt(raw_energy)
    raw_abs, _ = integrate.quad(_smooth_profile, 0.0, 1.0, limit=200)

    def h(z):
        z = np.asarray(z, dtype=np.float64)
        return kappa * (_smooth_profile(2.0 * z)
                        - _smooth_profile(2.0 * z - 1.0))

    sup_norm = kappa * _smooth_profile(0.5)
    grid = np.linspace(0.0, 1.0, 200001)
    deriv = np.gradient(h(grid), grid)
    deriv_sup = float(np.abs(deriv).max())
    return BumpFunction(fn=h, abs_integral=kappa * raw_abs,
                        sup_norm=sup_norm, deriv_sup_norm=deriv_sup)


def scaled_bump_value(v, index: int, cells: int,
                      bump: BumpFunction) -> np.ndarray:
    """sqrt(cells) * h(cells * v - index + 1); the bump squeezed into the
    1-based cell ``index`` of an equipartition of [0, 1] into ``cells``."""
    v = np.asarray(v, dtype=np.float64)
    return math.sqrt(cells) * bump.fn(cells * v - index + 1.0)


def eta_profile(z, nu: np.ndarray, rho: float, bump: BumpFunction):
    """rho * sum_j nu_j (scaled bump in cell j) evaluated at z.

    The scaled bumps have disjoint supports, so each z sees only its own
    cell's term.
    """
    z = np.asarray(z, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    d = len(nu)
    j = np.clip(np.floor(z * d).astype(np.int64), 0, d - 1)
    local = z * d - j
    return rho * math.sqrt(d) * nu[j] * bump.fn(local)


# ---------------------------------------------------------------------------
# adversarial perturbations of the uniform table


def make_tilde_delta(delta: np.ndarray) -> np.ndarray:
    """Expand a sign matrix into 2x2 blocks [[s, -s], [-s, s]].

    Every row and column of the result sums to zero, so adding a multiple
    of it to a table never moves the marginals.
    """
    delta = np.asarray(delta, dtype=np.float64)
    if delta.ndim != 2:
        raise ValueError("delta must be a matrix")
    if not np.all(np.isin(delta, (-1.0, 1.0))):
        raise ValueError("delta entries must be +1 or -1")
    return np.kron(delta, np.array([[1.0, -1.0], [-1.0, 1.0]]))


@dataclass(frozen=True)
class AdversarialDiscreteSpec:
    """Perturbation of the uniform ell1 x ell2 table by sign-block tiles.

    The conditional table at z is 1 / (ell1 ell2) + tilde_delta * eta(z)
    where eta oscillates across d z-cells with amplitude rho. Support sizes
    must be even so the tiles fit; the amplitude must keep every cell
    nonnegative, otherwise FeasibilityError.
    """

    ell1: int
    ell2: int
    rho: float
    nu: np.ndarray
    delta: np.ndarray
    bump: BumpFunction

    def __post_init__(self) -> None:
        if self.ell1 < 2 or self.ell1 % 2 or self.ell2 < 2 or self.ell2 % 2:
            raise ValueError("support sizes must be even and at least 2")
        nu = np.asarray(self.nu, dtype=np.float64)
        if nu.ndim != 1 or len(nu) < 1 or not np.all(np.isin(nu, (-1.0, 1.0))):
            raise ValueError("nu must be a vector of +1/-1 signs")
        delta = np.asarray(self.delta, dtype=np.float64)
        if delta.shape != (self.ell1 // 2, self.ell2 // 2):
            raise ValueError("delta must have shape (ell1/2, ell2/2)")
        tilde = make_tilde_delta(delta)
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        slack = (1.0 / (self.ell1 * self.ell2)
                 - self.rho * math.sqrt(len(nu)) * self.bump.sup_norm)
        if slack < -1e-12:
            raise FeasibilityError(
                f"amplitude rho={self.rho!r} drives cells negative "
                f"(slack {slack!r})")
        nu.setflags(write=False)
        delta.setflags(write=False)
        tilde.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "_tilde", tilde)

    @property
    def d(self) -> int:
        return len(self.nu)

    @property
    def tilde_delta(self) -> np.ndarray:
        return self._tilde


def adversarial_discrete_table(spec: AdversarialDiscreteSpec,
                               z: float) -> DiscreteJointTable:
    """Conditional table of the perturbed model at a single z."""
    eta = float(eta_profile(np.float64(z), spec.nu, spec.rho, spec.bump))
    base = 1.0 / (spec.ell1 * spec.ell2)
    return DiscreteJointTable(base + spec.tilde_delta * eta)


def adversarial_discrete_density(spec: AdversarialDiscreteSpec,
                                 x, y, z) -> np.ndarray:
    """Cell probability at (x, y, z) with 1-based categorical x, y."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    eta = eta_profile(z, spec.nu, spec.rho, spec.bump)
    base = 1.0 / (spec.ell1 * spec.ell2)
    return base + spec.tilde_delta[x - 1, y - 1] * eta


def adversarial_discrete_model(spec: AdversarialDiscreteSpec) -> ConditionalDiscreteModel:
    return ConditionalDiscreteModel(
        table_at=lambda z: adversarial_discrete_table(spec, z),
        pz_sampler=lambda n, rng: rng.random(n),
        pz_density_at=lambda z: np.ones(np.atleast_1d(z).shape[0]),
    )


def adversarial_discrete_separation(spec: AdversarialDiscreteSpec) -> float:
    """Expected L1 gap from the product of marginals, in closed form:
    ell1 * ell2 * rho * sqrt(d) * (absolute integral of the bump)."""
    return (spec.ell1 * spec.ell2 * spec.rho * math.sqrt(spec.d)
            * spec.bump.abs_integral)


def sample_adversarial_discrete(spec: AdversarialDiscreteSpec, n: int,
                                rng: np.random.Generator) -> TripleDataset:
    """n draws with z uniform and (x, y) from the conditional table."""
    z = rng.random(n)
    eta = eta_profile(z, spec.nu, spec.rho, spec.bump)
    base = 1.0 / (spec.ell1 * spec.ell2)
    probs = base + spec.tilde_delta.ravel()[None, :] * eta[:, None]
    cum = np.cumsum(probs, axis=1)
    u = rng.random(n)
    cell = np.minimum((cum < u[:, None]).sum(axis=1),
                      spec.ell1 * spec.ell2 - 1)
    x = cell // spec.ell2 + 1
    y = cell % spec.ell2 + 1
    return TripleDataset(x, y, z, ell1=spec.ell1, ell2=spec.ell2)


@dataclass(frozen=True)
class AdversarialContinuousSpec:
    """Perturbation of the uniform density on the unit cube.

    q(x, y | z) = 1 + gamma(x, y) eta(z) where gamma tiles d' x d' sign
    bumps over (x, y) with amplitude rho^2 and eta is as in the discrete
    spec. Both conditional marginals stay exactly uniform. The envelope
    constant bounds the density for rejection sampling.
    """

    rho: float
    nu: np.ndarray
    delta: np.ndarray
    bump: BumpFunction

    def __post_init__(self) -> None:
        nu = np.asarray(self.nu, dtype=np.float64)
        if nu.ndim != 1 or len(nu) < 1 or not np.all(np.isin(nu, (-1.0, 1.0))):
            raise ValueError("nu must be a vector of +1/-1 signs")
        delta = np.asarray(self.delta, dtype=np.float64)
        if delta.ndim != 2 or delta.shape[0] != delta.shape[1]:
            raise ValueError("delta must be square")
        if not np.all(np.isin(delta, (-1.0, 1.0))):
            raise ValueError("delta entries must be +1 or -1")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        d = len(nu)
        d_prime = delta.shape[0]
        peak = (math.sqrt(d_prime * d_prime * d) * self.bump.sup_norm ** 3
                * self.rho ** 3)
        if peak > 1.0 + 1e-12:
            raise FeasibilityError(
                f"amplitude rho={self.rho!r} drives the density negative "
                f"(peak perturbation {peak!r})")
        nu.setflags(write=False)
        delta.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "delta", delta)

    @property
    def d(self) -> int:
        return len(self.nu)

    @property
    def d_prime(self) -> int:
        return self.delta.shape[0]

    @property
    def envelope(self) -> float:
        """Upper bound on the density, at most 2 for feasible amplitudes."""
        return 1.0 + (math.sqrt(self.d_prime ** 2 * self.d)
                      * self.bump.sup_norm ** 3 * self.rho ** 3)


def _gamma_delta(spec: AdversarialContinuousSpec, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dp = spec.d_prime
    i = np.clip(np.floor(x * dp).astype(np.int64), 0, dp - 1)
    j = np.clip(np.floor(y * dp).astype(np.int64), 0, dp - 1)
    hx = math.sqrt(dp) * spec.bump.fn(x * dp - i)
    hy = math.sqrt(dp) * spec.bump.fn(y * dp - j)
    return spec.rho ** 2 * spec.delta[i, j] * hx * hy


def adversarial_continuous_density(spec: AdversarialContinuousSpec,
                                   x, y, z) -> np.ndarray:
    """q(x, y | z) on the unit cube; broadcasts over array arguments."""
    eta = eta_profile(z, spec.nu, spec.rho, spec.bump)
    return 1.0 + _gamma_delta(spec, x, y) * eta


def adversarial_continuous_separation(spec: AdversarialContinuousSpec) -> float:
    """Expected L1 gap sqrt(d) * d' * (rho * abs integral)^3 ... spelled
    sqrt(d (d')^2) rho^3 c^3 with c the bump's absolute integral."""
    c = spec.bump.abs_integral
    return (math.sqrt(spec.d * spec.d_prime ** 2)
            * spec.rho ** 3 * c ** 3)


def _sample_xy_given_z(spec: AdversarialContinuousSpec, z: np.ndarray,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Rejection sampling under the constant envelope, per z entry."""
    n = len(z)
    x = np.empty(n)
    y = np.empty(n)
    pending = np.arange(n)
    bound = spec.envelope
    while len(pending):
        px = rng.random(len(pending))
        py = rng.random(len(pending))
        u = rng.random(len(pending))
        dens = adversarial_continuous_density(spec, px, py, z[pending])
        accept = u * bound <= dens
        idx = pending[accept]
        x[idx] = px[accept]
        y[idx] = py[accept]
        pending = pending[~accept]
    return x, y


def sample_adversarial_continuous(spec: AdversarialContinuousSpec, n: int,
                                  rng: np.random.Generator) -> TripleDataset:
    z = rng.random(n)
    x, y = _sample_xy_given_z(spec, z, rng)
    return TripleDataset(x, y, z, x_kind=REAL, y_kind=REAL)


def adversarial_continuous_model(spec: AdversarialContinuousSpec) -> ContinuousConditionalModel:
    ones_x = lambda x, z: np.ones_like(np.asarray(x, dtype=np.float64))
    return ContinuousConditionalModel(
        density_at=lambda x, y, z: adversarial_continuous_density(spec, x, y, z),
        pz_sampler=lambda n, rng: rng.random(n),
        xy_sampler_given_z=lambda z, n, rng: _sample_xy_given_z(
            spec, np.full(n, float(z)), rng),
        marginal_x_at=ones_x,
        marginal_y_at=ones_x,
    )


# ---------------------------------------------------------------------------
# smooth exponential families on a 2 x 3 table


def exp_family_discrete_model(exponents) -> ConditionalDiscreteModel:
    """Conditional table proportional to exp(g_xy(z)) cellwise.

    ``exponents`` is a nested sequence of callables, one per cell.
    """
    rows = len(exponents)
    cols = len(exponents[0])

    def table_at(z: float) -> DiscreteJointTable:
        w = np.empty((rows, cols))
        for a in range(rows):
            for b in range(cols):
                w[a, b] = math.exp(float(exponents[a][b](z)))
        return DiscreteJointTable(w / w.sum())

    return ConditionalDiscreteModel(
        table_at=table_at,
        pz_sampler=lambda n, rng: rng.random(n),
        pz_density_at=lambda z: np.ones(np.atleast_1d(z).shape[0]),
    )


def _null_exponent_parts(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Additive exponents: row part (z, cos z - 1), column part
    (tanh z, cos z, sin z)."""
    z = np.asarray(z, dtype=np.float64)
    gx = np.stack([z, np.cos(z) - 1.0], axis=-1)
    gy = np.stack([np.tanh(z), np.cos(z), np.sin(z)], axis=-1)
    return gx, gy


def _null_tables(z: np.ndarray) -> np.ndarray:
    gx, gy = _null_exponent_parts(z)
    w = np.exp(gx[..., :, None] + gy[..., None, :])
    return w / w.sum(axis=(-2, -1), keepdims=True)


def _alt_tables(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    g = np.stack([
        np.stack([z, np.tanh(z), np.sin(z)], axis=-1),
        np.stack([np.cos(z), z + 1.0, np.tanh(z) - 1.0], axis=-1),
    ], axis=-2)
    w = np.exp(g)
    return w / w.sum(axis=(-2, -1), keepdims=True)


def gen_discrete_null(z: float) -> DiscreteJointTable:
    """2 x 3 table with additive exponents; X and Y are independent at
    every z."""
    return DiscreteJointTable(_null_tables(np.float64(z)))


def gen_discrete_alt(z: float) -> DiscreteJointTable:
    """2 x 3 table whose exponents do not separate, so X and Y are
    dependent at every z."""
    return DiscreteJointTable(_alt_tables(np.float64(z)))


def _sample_from_tables(tables: np.ndarray,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, ell1, ell2 = tables.shape
    cum = np.cumsum(tables.reshape(n, ell1 * ell2), axis=1)
    u = rng.random(n)
    cell = np.minimum((cum < u[:, None]).sum(axis=1), ell1 * ell2 - 1)
    return cell // ell2 + 1, cell % ell2 + 1


def sample_discrete_null(n: int, rng: np.random.Generator) -> TripleDataset:
    z = rng.random(n)
    x, y = _sample_from_tables(_null_tables(z), rng)
    return TripleDataset(x, y, z, ell1=2, ell2=3)


def sample_discrete_alt(n: int, rng: np.random.Generator) -> TripleDataset:
    z = rng.random(n)
    x, y = _sample_from_tables(_alt_tables(z), rng)
    return TripleDataset(x, y, z, ell1=2, ell2=3)


def discrete_null_model() -> ConditionalDiscreteModel:
    return ConditionalDiscreteModel(
        table_at=gen_discrete_null,
        pz_sampler=lambda n, rng: rng.random(n),
        pz_density_at=lambda z: np.ones(np.atleast_1d(z).shape[0]),
    )


def discrete_alt_model() -> ConditionalDiscreteModel:
    return ConditionalDiscreteModel(
        table_at=gen_discrete_alt,
        pz_sampler=lambda n, rng: rng.random(n),
        pz_density_at=lambda z: np.ones(np.atleast_1d(z).shape[0]),
    )


# ---------------------------------------------------------------------------
# smooth continuous families on the unit cube


def sample_continuous_null(n: int, rng: np.random.Generator) -> TripleDataset:
    """X and Y are averages of fresh noise with the same z."""
    z = rng.random(n)
    x = (rng.random(n) + z) / 2.0
    y = (rng.random(n) + z) / 2.0
    return TripleDataset(x, y, z, x_kind=REAL, y_kind=REAL)


def sample_continuous_alt(n: int, rng: np.random.Generator) -> TripleDataset:
    """X and Y share one extra uniform, so they stay dependent given z."""
    z = rng.random(n)
    shared = rng.random(n)
    x = (rng.random(n) + shared + z) / 3.0
    y = (rng.random(n) + shared + z) / 3.0
    return TripleDataset(x, y, z, x_kind=REAL, y_kind=REAL)


def _box_indicator(v, lo, hi):
    return ((v >= lo) & (v <= hi)).astype(np.float64)


def continuous_null_model() -> ContinuousConditionalModel:
    def density_at(x, y, z):
        lo, hi = z / 2.0, (z + 1.0) / 2.0
        return 4.0 * _box_indicator(x, lo, hi) * _box_indicator(y, lo, hi)

    def marginal_at(v, z):
        return 2.0 * _box_indicator(v, z / 2.0, (z + 1.0) / 2.0)

    def xy_given_z(z, n, rng):
        return (rng.random(n) + z) / 2.0, (rng.random(n) + z) / 2.0

    return ContinuousConditionalModel(
        density_at=density_at,
        pz_sampler=lambda n, rng: rng.random(n),
        xy_sampler_given_z=xy_given_z,
        marginal_x_at=marginal_at,
        marginal_y_at=marginal_at,
    )


def _triangle(t):
    """Density of the sum of two independent uniforms."""
    t = np.asarray(t, dtype=np.float64)
    return np.clip(1.0 - np.abs(t - 1.0), 0.0, None)


def continuous_alt_model() -> ContinuousConditionalModel:
    def density_at(x, y, z):
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        a = np.minimum(np.minimum(3.0 * x - z, 3.0 * y - z), 1.0)
        b = np.maximum(np.maximum(3.0 * x - z - 1.0, 3.0 * y - z - 1.0), 0.0)
        return 9.0 * np.clip(a - b, 0.0, None)

    def marginal_at(v, z):
        return 3.0 * _triangle(3.0 * np.asarray(v, dtype=np.float64) - z)

    def xy_given_z(z, n, rng):
        shared = rng.random(n)
        x = (rng.random(n) + shared + z) / 3.0
        y = (rng.random(n) + shared + z) / 3.0
        return x, y

    return ContinuousConditionalModel(
        density_at=density_at,
        pz_sampler=lambda n, rng: rng.random(n),
        xy_sampler_given_z=xy_given_z,
        marginal_x_at=marginal_at,
        marginal_y_at=marginal_at,
    )


# ---------------------------------------------------------------------------
# coupling dependent data to a conditionally independent copy


@dataclass(frozen=True)
class CouplingSpec:
    """Equipartition geometry for the coupling on the box [-M, M]^3.

    ``big_m`` is the half-width M. Each axis is cut into ``m`` cells; the z
    cell is further cut into m^2 sub-intervals so the rebuilt z pins down
    the (x, y) cell pair exactly.
    """

    m: int
    big_m: float

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be positive")
        if self.big_m <= 0:
            raise ValueError("big_m must be positive")

    @property
    def cell_width(self) -> float:
        return 2.0 * self.big_m / self.m


def coupling_displacement_bound(spec: CouplingSpec) -> float:
    """Hard bound sqrt(3) * cell width on the per-point displacement."""
    return math.sqrt(3.0) * spec.cell_width


def _cell_index(v: np.ndarray, spec: CouplingSpec) -> np.ndarray:
    idx = np.floor((v + spec.big_m) / spec.cell_width).astype(np.int64)
    return np.clip(idx, 0, spec.m - 1)


def ci_coupling(data: TripleDataset, spec: CouplingSpec,
                rng: np.random.Generator) -> TripleDataset:
    """Conditionally independent copy of ``data`` within cell resolution.

    All three coordinates must be real-valued and inside the coupling box.
    The x and y cells are re-sampled uniformly inside their own cells; the
    new z lands in the sub-interval of its old cell whose position encodes
    the (x, y) cell pair, making (x, y) independent given the new z while
    no coordinate moves further than the displacement bound.
    """
    if data.x_kind != REAL or data.y_kind != REAL or data.d_z != 1:
        raise ValueError("coupling expects real x, y and univariate z")
    w = spec.big_m
    x = data.x
    y = data.y
    z = data.z[:, 0]
    for name, v in (("x", x), ("y", y), ("z", z)):
        if v.size and (v.min() < -w or v.max() > w):
            raise ValueError(f"{name} leaves the coupling box")
    i = _cell_index(x, spec)
    j = _cell_index(y, spec)
    k = _cell_index(z, spec)
    width = spec.cell_width
    n = data.n
    x_new = -w + (i + rng.random(n)) * width
    y_new = -w + (j + rng.random(n)) * width
    sub = width / spec.m ** 2
    z_new = -w + k * width + (i * spec.m + j + rng.random(n)) * sub
    return TripleDataset(x_new, y_new, z_new, x_kind=REAL, y_kind=REAL)


def coupling_cell_of(coupled_z: np.ndarray,
                     spec: CouplingSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recover (x cell, y cell, z cell) encoded in a coupled z value."""
    z = np.asarray(coupled_z, dtype=np.float64)
    sub = spec.cell_width / spec.m ** 2
    g = np.floor((z + spec.big_m) / sub).astype(np.int64)
    g = np.clip(g, 0, spec.m ** 3 - 1)
    k = g // spec.m ** 2
    r = g % spec.m ** 2
    return r // spec.m, r % spec.m, k


def coupling_uniformity(coupled: TripleDataset, spec: CouplingSpec,
                        level: float = 0.01,
                        min_count: int = 20) -> tuple[float, int]:
    """Fraction of populated coupling cells whose (x, y) values look
    uniform, and the number of cells tested.

    Cells with at least ``min_count`` points get a quadrant chi-square
    test; smaller cells pool both scaled coordinates into an exact
    one-sample KS test.
    """
    i, j, k = coupling_cell_of(coupled.z[:, 0], spec)
    cell_id = (i * spec.m + j) * spec.m + k
    ux = (coupled.x + spec.big_m) / spec.cell_width - i
    uy = (coupled.y + spec.big_m) / spec.cell_width - j
    order = np.argsort(cell_id, kind="stable")
    ids = cell_id[order]
    ux = ux[order]
    uy = uy[order]
    boundaries = np.flatnonzero(np.diff(ids)) + 1
    passed = 0
    total = 0
    for lo, hi in zip(np.r_[0, boundaries], np.r_[boundaries, len(ids)]):
        count = hi - lo
        if count == 0:
            continue
        total += 1
        u = ux[lo:hi]
        v = uy[lo:hi]
        if count >= min_count:
            quad = np.bincount((u >= 0.5).astype(int) * 2
                               + (v >= 0.5).astype(int), minlength=4)
            chi2 = ((quad - count / 4.0) ** 2 / (count / 4.0)).sum()
            p = float(stats.chi2.sf(chi2, df=3))
        else:
            pooled = np.concatenate([u, v])
            p = float(stats.kstest(pooled, "uniform").pvalue)
        if p > level:
            passed += 1
    return (passed / total if total else 1.0), total
