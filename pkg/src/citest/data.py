"""Observation triples (x, y, z) shared by the samplers, binning and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["TripleDataset", "CATEGORY", "REAL"]

CATEGORY = "category"
REAL = "real"


@dataclass(frozen=True)
class TripleDataset:
    """n observations of (X, Y, Z).

    X and Y are either categorical (1-based integer codes) or real values in
    [0, 1]. Z is real, univariate or bivariate; rows of ``z`` are points in
    the declared support (default [0, 1] per axis, wider for unbounded use).

    Parameters
    ----------
    x, y : arrays of shape (n,)
        Integer codes when the kind is ``category``, floats otherwise.
    z : array of shape (n,) or (n, d_z)
        Conditioning variable, d_z in {1, 2}.
    x_kind, y_kind : str
        ``category`` or ``real``.
    ell1, ell2 : int or None
        Support sizes for categorical axes. Inferred from the data maximum
        when omitted.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x_kind: str = CATEGORY
    y_kind: str = CATEGORY
    ell1: int | None = None
    ell2: int | None = None

    def __post_init__(self) -> None:
        x = np.asarray(self.x)
        y = np.asarray(self.y)
        z = np.asarray(self.z, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        if z.ndim != 2 or z.shape[1] not in (1, 2):
            raise ValueError("z must have shape (n,) or (n, d_z) with d_z in {1, 2}")
        if not (len(x) == len(y) == len(z)):
            raise ValueError("x, y, z must have equal length")
        for name, kind, v in (("x", self.x_kind, x), ("y", self.y_kind, y)):
            if kind not in (CATEGORY, REAL):
                raise ValueError(f"{name}_kind must be {CATEGORY!r} or {REAL!r}")
            if kind == CATEGORY and v.size and not np.issubdtype(v.dtype, np.integer):
                raise ValueError(f"categorical {name} must hold integers")
        x = x.astype(np.int64) if self.x_kind == CATEGORY else x.astype(np.float64)
        y = y.astype(np.int64) if self.y_kind == CATEGORY else y.astype(np.float64)
        ell1 = self.ell1
        ell2 = self.ell2
        if self.x_kind == CATEGORY:
            if x.size and x.min() < 1:
                raise ValueError("categorical x codes are 1-based")
            ell1 = int(ell1 if ell1 is not None else (x.max() if x.size else 1))
            if x.size and x.max() > ell1:
                raise ValueError("x code exceeds declared ell1")
        if self.y_kind == CATEGORY:
            if y.size and y.min() < 1:
                raise ValueError("categorical y codes are 1-based")
            ell2 = int(ell2 if ell2 is not None else (y.max() if y.size else 1))
            if y.size and y.max() > ell2:
                raise ValueError("y code exceeds declared ell2")
        for arr in (x, y, z):
            arr.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "ell1", ell1)
        object.__setattr__(self, "ell2", ell2)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def d_z(self) -> int:
        return self.z.shape[1]

    def head(self, count: int) -> "TripleDataset":
        """First ``count`` observations, metadata preserved."""
        return TripleDataset(
            self.x[:count], self.y[:count], self.z[:count],
            x_kind=self.x_kind, y_kind=self.y_kind,
            ell1=self.ell1, ell2=self.ell2,
        )

    def tail(self, start: int) -> "TripleDataset":
        """Observations from index ``start`` on, metadata preserved."""
        return TripleDataset(
            self.x[start:], self.y[start:], self.z[start:],
            x_kind=self.x_kind, y_kind=self.y_kind,
            ell1=self.ell1, ell2=self.ell2,
        )
