"""Parametric curve bases for per-pixel trajectories.

Three families share one interface:

* ``bspline``: clamped B-splines evaluated with the Cox-de Boor recursion.
  Cubic curves use the fixed knot vectors for 4, 7 and 10 control points.
* ``bezier``: Bernstein polynomials of degree ``D - 1``.
* ``polynomial``: monomials ``1, t, ..., t**(D-1)``.

All arithmetic is float64. ``basis_matrix`` and ``basis_derivative_matrix``
are the vectorized primitives; everything else is a thin wrapper around them.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ConfigError, DomainError, ShapeError

FAMILIES = ("bspline", "bezier", "polynomial")
CUBIC_CONTROL_COUNTS = (4, 7, 10)


def make_knot_vector(num_control_points: int, degree: int = 3) -> list[float]:
    """Clamped knot vector with C0 joints between Bezier-like segments.

    For cubic curves only 4, 7 and 10 control points are supported::

        >>> make_knot_vector(7)
        [0.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0]

    Other degrees accept any ``D`` with ``(D - 1) % degree == 0``; internal
    knots then sit at ``s / segments`` with multiplicity ``degree``.
    """
    D, p = int(num_control_points), int(degree)
    if p == 3:
        if D not in CUBIC_CONTROL_COUNTS:
            raise ConfigError(
                f"unsupported control-point count {D} for cubic B-splines; "
                f"supported: {', '.join(map(str, CUBIC_CONTROL_COUNTS))}"
            )
    elif p < 1 or D < p + 1 or (D - 1) % p:
        raise ConfigError(
            f"unsupported control-point count {D} for degree {p}; "
            f"need D >= {p + 1} and (D - 1) divisible by {p}"
        )
    segments = (D - 1) // p
    knots = [0.0] * (p + 1)
    for s in range(1, segments):
        knots += [s / segments] * p
    knots += [1.0] * (p + 1)
    return knots


@dataclass(frozen=True)
class CurveSpec:
    """Basis family, degree, control-point count and knots of a trajectory curve.

    Use :func:`curve_spec` to build one with consistent defaults.
    """

    family: str
    num_control_points: int
    degree: int
    knots: tuple[float, ...] = ()

    def __post_init__(self):
        fam, D, p = self.family, self.num_control_points, self.degree
        if fam not in FAMILIES:
            raise ConfigError(f"unknown curve family {fam!r}; expected one of {FAMILIES}")
        if D < 1 or p < 0:
            raise ConfigError("num_control_points must be >= 1 and degree >= 0")
        if fam in ("bezier", "polynomial"):
            if p != D - 1:
                raise ConfigError(f"{fam} curves need degree == num_control_points - 1")
            if fam == "polynomial" and self.knots:
                raise ConfigError("polynomial curves carry no knots")
            return
        knots = np.asarray(self.knots, dtype=float)
        if p < 1:
            raise ConfigError("bspline degree must be >= 1")
        if D < p + 1:
            raise ConfigError(f"need at least {p + 1} control points for degree {p}")
        if knots.size != D + p + 1:
            raise ConfigError(f"expected {D + p + 1} knots, got {knots.size}")
        if np.any(np.diff(knots) < 0):
            raise ConfigError("knots must be non-decreasing")
        if np.any(knots[: p + 1] != 0.0) or np.any(knots[-(p + 1):] != 1.0):
            raise ConfigError(f"knots must be clamped: multiplicity {p + 1} at 0 and 1")
        internal = knots[p + 1: -(p + 1)]
        if internal.size:
            if np.any((internal <= 0.0) | (internal >= 1.0)):
                raise ConfigError("internal knots must lie strictly inside (0, 1)")
            _, counts = np.unique(internal, return_counts=True)
            if counts.max() > p:
                raise ConfigError(f"internal knot multiplicity must be <= {p}")

    @property
    def is_clamped(self) -> bool:
        """True when the curve interpolates its first and last control points."""
        return self.family in ("bspline", "bezier")

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "num_control_points": self.num_control_points,
            "degree": self.degree,
            "knots": list(self.knots),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CurveSpec":
        return cls(
            family=d["family"],
            num_control_points=int(d["num_control_points"]),
            degree=int(d["degree"]),
            knots=tuple(float(k) for k in d.get("knots", ())),
        )


def curve_spec(family: str = "bspline", num_control_points: int = 10, degree: int | None = None) -> CurveSpec:
    """Build a :class:`CurveSpec` with the family's natural degree and knots."""
    D = int(num_control_points)
    if family == "bspline":
        p = 3 if degree is None else int(degree)
        return CurveSpec("bspline", D, p, tuple(make_knot_vector(D, p)))
    if family in ("bezier", "polynomial"):
        if degree is not None and degree != D - 1:
            raise ConfigError(f"{family} curves need degree == num_control_points - 1")
        return CurveSpec(family, D, D - 1)
    raise ConfigError(f"unknown curve family {family!r}; expected one of {FAMILIES}")


def _as_parameters(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.ndim != 1:
        raise ShapeError("curve parameters must be a scalar or a 1-D array")
    if not np.all((t >= 0.0) & (t <= 1.0)):
        raise DomainError("curve parameter outside [0, 1]; use forecast() to extrapolate")
    return t


def _cox_de_boor(knots: np.ndarray, p: int, t: np.ndarray) -> np.ndarray:
    """All degree-``p`` basis functions on ``knots`` at ``t``, shape (M, len(knots) - p - 1)."""
    left, right = knots[:-1], knots[1:]
    tt = t[:, None]
    N = ((tt >= left) & (tt < right)).astype(float)
    # the last non-empty span is closed so that t = 1 evaluates
    last = np.flatnonzero(left < right)[-1]
    N[:, last] = ((t >= left[last]) & (t <= right[last])).astype(float)
    for q in range(1, p + 1):
        n = len(knots) - 1 - q
        out = np.zeros((t.size, n))
        for k in range(n):
            d1 = knots[k + q] - knots[k]
            d2 = knots[k + q + 1] - knots[k + 1]
            if d1 > 0.0:
                out[:, k] += (t - knots[k]) / d1 * N[:, k]
            if d2 > 0.0:
                out[:, k] += (knots[k + q + 1] - t) / d2 * N[:, k + 1]
        N = out
    return N


def _bernstein(d: int, t: np.ndarray) -> np.ndarray:
    i = np.arange(d + 1)
    coeff = np.array([comb(d, k) for k in i], dtype=float)
    return coeff * t[:, None] ** i * (1.0 - t[:, None]) ** (d - i)


def basis_matrix(spec: CurveSpec, t) -> np.ndarray:
    """Basis weights ``phi_k(t)`` for every parameter in ``t``; shape (M, D)."""
    t = _as_parameters(t)
    if spec.family == "bspline":
        return _cox_de_boor(np.asarray(spec.knots), spec.degree, t)
    if spec.family == "bezier":
        return _bernstein(spec.degree, t)
    return t[:, None] ** np.arange(spec.num_control_points)


def basis_derivative_matrix(spec: CurveSpec, t) -> np.ndarray:
    """``d phi_k / dt`` for every parameter in ``t``; shape (M, D)."""
    t = _as_parameters(t)
    D, p = spec.num_control_points, spec.degree
    if spec.family == "bspline":
        knots = np.asarray(spec.knots)
        low = _cox_de_boor(knots, p - 1, t)
        out = np.zeros((t.size, D))
        for k in range(D):
            d1 = knots[k + p] - knots[k]
            d2 = knots[k + p + 1] - knots[k + 1]
            if d1 > 0.0:
                out[:, k] += p / d1 * low[:, k]
            if d2 > 0.0:
                out[:, k] -= p / d2 * low[:, k + 1]
        return out
    if spec.family == "bezier":
        if p == 0:
            return np.zeros((t.size, 1))
        low = _bernstein(p - 1, t)
        out = np.zeros((t.size, D))
        out[:, 1:] += p * low
        out[:, :-1] -= p * low
        return out
    k = np.arange(D)
    return k * t[:, None] ** np.maximum(k - 1, 0)


def basis_eval(spec: CurveSpec, t: float) -> np.ndarray:
    """Basis weights at a single parameter value; shape (D,)."""
    return basis_matrix(spec, float(t))[0]


def basis_derivative(spec: CurveSpec, t: float) -> np.ndarray:
    return basis_derivative_matrix(spec, float(t))[0]


def _check_points(points, spec: CurveSpec) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim < 2 or points.shape[-2] != spec.num_control_points:
        raise ShapeError(
            f"control points must have shape (..., {spec.num_control_points}, dim), got {points.shape}"
        )
    return points


def eval_curve(points, spec: CurveSpec, t: float) -> np.ndarray:
    """Curve position ``sum_k P_k phi_k(t)`` for control points of shape (..., D, 3)."""
    points = _check_points(points, spec)
    return np.einsum("...dc,d->...c", points, basis_eval(spec, t))


def eval_curve_velocity(points, spec: CurveSpec, t: float) -> np.ndarray:
    """Curve velocity ``sum_k P_k phi_k'(t)``."""
    points = _check_points(points, spec)
    return np.einsum("...dc,d->...c", points, basis_derivative(spec, t))


def eval_curve_many(points, spec: CurveSpec, ts) -> np.ndarray:
    """Curve positions at several parameters; returns (..., M, 3)."""
    points = _check_points(points, spec)
    return np.einsum("...dc,md->...mc", points, basis_matrix(spec, ts))
