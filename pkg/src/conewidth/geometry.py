"""Proper cones, cone-constrained piecewise-affine curves, and their
canonical (axis-parametrized) normal form.

A proper cone of axis ``e`` (unit vector) and amplitude ``sigma`` in (0,1)
is the open convex set ``{x : <x,e> > (1-sigma)|x|}``.  A curve "goes in
the direction of" the cone when every chord between two of its points lies
in the cone; such a curve can be rewritten as ``s -> s*e + eta(s)`` with
``eta`` valued in a translate of the hyperplane orthogonal to ``e`` and
Lipschitz with constant ``beta(sigma)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

# Absolute slack used when validating cone membership of stored curves;
# absorbs float rounding without admitting genuinely boundary chords.
CONE_SLACK = 1e-12

_UNIT_TOL = 1e-12


def beta(sigma: float) -> float:
    """Maximal transverse slope of a curve constrained to a cone of
    amplitude ``sigma``: sqrt(2*sigma - sigma^2) / (1 - sigma).

    Satisfies 1 + beta(sigma)^2 == (1 - sigma)^-2 identically.
    """
    if not 0.0 < sigma < 1.0:
        raise DomainError(f"cone amplitude must lie in (0,1), got {sigma}")
    return math.sqrt(2.0 * sigma - sigma * sigma) / (1.0 - sigma)


def _as_float_vector(v, name="vector") -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"{name} must be a non-empty 1-d vector")
    return arr


@dataclass(frozen=True)
class Direction:
    """Unit vector in R^n (Euclidean norm 1 within 1e-12)."""

    components: np.ndarray

    def __post_init__(self):
        arr = _as_float_vector(self.components, "direction")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "components", arr)
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > _UNIT_TOL:
            raise ValidationError(f"direction norm {norm!r} differs from 1 beyond 1e-12")

    @staticmethod
    def of(v) -> "Direction":
        """Normalize an arbitrary nonzero vector into a Direction."""
        arr = _as_float_vector(v, "direction")
        norm = float(np.linalg.norm(arr))
        if norm == 0.0:
            raise DomainError("cannot normalize the zero vector")
        return Direction(arr / norm)

    @staticmethod
    def axis(n: int, i: int, sign: float = 1.0) -> "Direction":
        e = np.zeros(n)
        e[i] = math.copysign(1.0, sign)
        return Direction(e)

    @property
    def n(self) -> int:
        return self.components.size

    def __iter__(self):
        return iter(self.components)


@dataclass(frozen=True)
class Cone:
    """Proper cone: axis direction plus amplitude sigma in (0,1)."""

    axis: Direction
    sigma: float

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise DomainError(f"cone amplitude must lie in (0,1), got {self.sigma}")

    @property
    def n(self) -> int:
        return self.axis.n

    @property
    def beta(self) -> float:
        return beta(self.sigma)

    def contains(self, x) -> bool:
        return cone_contains(self, x)


def cone_contains(cone: Cone, x) -> bool:
    """Strict membership test ``<x,e> > (1-sigma)|x|``.

    The zero vector is excluded (the inequality is strict).
    """
    arr = np.asarray(x, dtype=float)
    dot = float(arr @ cone.axis.components)
    return dot > (1.0 - cone.sigma) * float(np.linalg.norm(arr))


@dataclass(frozen=True)
class ConeCurve:
    """Piecewise-affine curve whose chords all lie in a fixed proper cone.

    Stored as an ordered vertex list in [0,1]^n.  Because the cone is
    convex and dilation-invariant, validating consecutive steps validates
    every chord.
    """

    vertices: np.ndarray
    cone: Cone

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 2:
            raise ValidationError("a cone curve needs at least 2 vertices")
        if verts.shape[1] != self.cone.n:
            raise ValidationError(
                f"vertex dimension {verts.shape[1]} != cone dimension {self.cone.n}"
            )
        verts = verts.copy()
        verts.flags.writeable = False
        object.__setattr__(self, "vertices", verts)
        e = self.cone.axis.components
        slackcos = 1.0 - self.cone.sigma
        steps = np.diff(verts, axis=0)
        norms = np.linalg.norm(steps, axis=1)
        dots = steps @ e
        for k, (d, r) in enumerate(zip(dots, norms)):
            if r == 0.0:
                raise ValidationError(f"vertices {k} and {k + 1} coincide")
            if d <= slackcos * r - CONE_SLACK:
                raise ValidationError(
                    f"step from vertex {k} to {k + 1} leaves the cone "
                    f"(<step,e>={d:.6g}, (1-sigma)|step|={slackcos * r:.6g})"
                )

    @property
    def n(self) -> int:
        return self.cone.n

    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1).sum())


@dataclass(frozen=True)
class CanonicalCurve:
    """Axis-parametrized form ``s -> s*e + eta(s)`` of a cone curve.

    ``breaks`` are the axis projections of the original vertices (strictly
    increasing, first entry 0, last entry the horizon T) and ``offsets``
    holds eta at each break. eta has constant component along the axis, so
    its increments are orthogonal to the axis exactly by construction.
    """

    cone: Cone
    breaks: np.ndarray
    offsets: np.ndarray
    _validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        s = np.asarray(self.breaks, dtype=float).copy()
        eta = np.asarray(self.offsets, dtype=float).copy()
        if s.ndim != 1 or s.size < 2 or eta.shape != (s.size, self.cone.n):
            raise ValidationError("breaks and offsets shapes are inconsistent")
        if abs(s[0]) > 1e-15:
            raise ValidationError("canonical parameter must start at 0")
        ds = np.diff(s)
        if np.any(ds <= 0):
            raise ValidationError("canonical breakpoints must strictly increase")
        if self._validate:
            b = self.cone.beta
            deta = np.linalg.norm(np.diff(eta, axis=0), axis=1)
            bad = deta > b * ds * (1.0 + 1e-9) + CONE_SLACK
            if np.any(bad):
                k = int(np.argmax(bad))
                raise ValidationError(
                    f"offset slope {deta[k] / ds[k]:.6g} between breaks {k},{k + 1} "
                    f"exceeds beta(sigma)={b:.6g}"
                )
        s.flags.writeable = False
        eta.flags.writeable = False
        object.__setattr__(self, "breaks", s)
        object.__setattr__(self, "offsets", eta)

    @property
    def T(self) -> float:
        """Axis horizon; at most sqrt(n) for curves inside the unit cube."""
        return float(self.breaks[-1])

    @property
    def n(self) -> int:
        return self.cone.n

    def point_at(self, s) -> np.ndarray:
        """Evaluate the curve at axis parameter(s) s by linear interpolation."""
        s = np.asarray(s, dtype=float)
        e = self.cone.axis.components
        eta = np.empty(s.shape + (self.n,))
        for d in range(self.n):
            eta[..., d] = np.interp(s, self.breaks, self.offsets[:, d])
        return np.multiply.outer(s, e) + eta

    def vertices(self) -> np.ndarray:
        return np.multiply.outer(self.breaks, self.cone.axis.components) + self.offsets

    def segment_slopes(self) -> np.ndarray:
        """|eta'| per affine piece (each strictly below beta for valid curves)."""
        ds = np.diff(self.breaks)
        deta = np.linalg.norm(np.diff(self.offsets, axis=0), axis=1)
        return deta / ds

    def arc_length(self) -> float:
        return curve_arc_length(self)


def canonicalize(curve: ConeCurve, cone: Cone | None = None) -> CanonicalCurve:
    """Rewrite a cone curve with the axis projection as its parameter.

    The image is unchanged; the horizon is ``T = <e, last - first>`` and
    the breakpoint count equals the input vertex count.  Raises a
    validation error naming the offending vertex pair when the input does
    not actually go in the direction of the cone.
    """
    cone = cone or curve.cone
    if cone is not curve.cone:
        # Revalidate against the requested cone.
        curve = ConeCurve(curve.vertices, cone)
    e = cone.axis.components
    s = (curve.vertices - curve.vertices[0]) @ e
    eta = curve.vertices - np.multiply.outer(s, e)
    return CanonicalCurve(cone, s, eta)


def curve_arc_length(curve: CanonicalCurve) -> float:
    """Total arc length: sum over pieces of sqrt(dt^2 + |d eta|^2).

    Always between T and (1 + beta(sigma)) * T.
    """
    ds = np.diff(curve.breaks)
    deta = np.diff(curve.offsets, axis=0)
    return float(np.sqrt(ds * ds + (deta * deta).sum(axis=1)).sum())


# --- serialization ---------------------------------------------------------

def curve_to_json(curve: ConeCurve) -> str:
    """Curves serialize as a bare JSON array of vertex arrays."""
    return json.dumps([list(map(float, v)) for v in curve.vertices])


def curve_from_json(text: str, cone: Cone) -> ConeCurve:
    return ConeCurve(np.asarray(json.loads(text), dtype=float), cone)


def canonical_to_json(curve: CanonicalCurve) -> str:
    return json.dumps(
        {
            "axis": list(map(float, curve.cone.axis.components)),
            "sigma": curve.cone.sigma,
            "T": curve.T,
            "breakpoints": [
                [float(s)] + list(map(float, eta))
                for s, eta in zip(curve.breaks, curve.offsets)
            ],
        }
    )


def canonical_from_json(text: str) -> CanonicalCurve:
    obj = json.loads(text)
    cone = Cone(Direction(np.asarray(obj["axis"], dtype=float)), float(obj["sigma"]))
    bp = np.asarray(obj["breakpoints"], dtype=float)
    return CanonicalCurve(cone, bp[:, 0], bp[:, 1:])
