"""Piecewise congruent mappings on the unit cube and their diagnostics:
scale-ladder tests for approximate directional differentiability, the
divergence set of two nearby maps, and maximal functions of derivatives
along cone curves.

A piecewise congruent map is continuous on [0,1]^n and equals an affine
isometry x -> A x + b (A with orthonormal columns) on each open simplex of
a finite partition whose closures cover the cube.  Maps are built either
from explicit cell lists or by composing folds (reflections applied to one
side of a hyperplane), which are continuous by construction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DomainError, ValidationError
from .geometry import CanonicalCurve, Cone, Direction
from .gridset import GridSet, _segment_cell_intervals

_VOL_TOL = 1e-9
_ISO_TOL = 1e-10
_CONT_TOL = 1e-9
_LOC_TOL = 1e-12


def _simplex_volume(verts: np.ndarray) -> float:
    d = verts[1:] - verts[0]
    return abs(float(np.linalg.det(d))) / math.factorial(verts.shape[1])


def _facet_halfplanes(verts: np.ndarray):
    """Inward-pointing facet inequalities <x, normal> >= offset of a simplex."""
    n = verts.shape[1]
    normals, offsets = [], []
    for drop in range(n + 1):
        facet = np.delete(verts, drop, axis=0)
        opposite = verts[drop]
        if n == 1:
            normal = np.asarray([1.0])
        else:
            d = facet[1:] - facet[0]
            # normal spans the null space of the facet directions
            _, _, vh = np.linalg.svd(d)
            normal = vh[-1]
        off = float(normal @ facet[0])
        if float(normal @ opposite) < off:
            normal, off = -normal, -off
        normals.append(normal)
        offsets.append(off)
    return np.asarray(normals), np.asarray(offsets)


@dataclass(frozen=True)
class SimplicialPartition:
    """Finite list of open n-simplexes whose closures cover [0,1]^n with
    pairwise disjoint interiors (checked by total volume and pairwise
    intersection volume)."""

    simplices: tuple  # of (n+1, n) float arrays

    def __post_init__(self):
        sims = tuple(np.asarray(s, dtype=float) for s in self.simplices)
        if not sims:
            raise ValidationError("partition needs at least one simplex")
        n = sims[0].shape[1]
        for s in sims:
            if s.shape != (n + 1, n):
                raise ValidationError("every cell must be an n-simplex (n+1 vertices)")
        object.__setattr__(self, "simplices", sims)
        total = sum(_simplex_volume(s) for s in sims)
        if abs(total - 1.0) > _VOL_TOL:
            raise ValidationError(f"simplex volumes sum to {total!r}, not 1")
        overlap = self._pairwise_overlap()
        if overlap > _VOL_TOL:
            raise ValidationError(f"simplices overlap with volume {overlap!r}")

    @property
    def n(self) -> int:
        return self.simplices[0].shape[1]

    def _pairwise_overlap(self) -> float:
        n = self.n
        worst = 0.0
        if n == 1:
            iv = sorted((float(min(s)), float(max(s))) for s in self.simplices)
            for (a0, b0), (a1, b1) in zip(iv[:-1], iv[1:]):
                worst = max(worst, b0 - a1)
            return max(worst, 0.0)
        if n == 2:
            from shapely.geometry import Polygon

            polys = [Polygon(s) for s in self.simplices]
            for i in range(len(polys)):
                for j in range(i + 1, len(polys)):
                    if polys[i].intersects(polys[j]):
                        worst = max(worst, polys[i].intersection(polys[j]).area)
            return worst
        # n >= 3: Monte-Carlo multiplicity check (structural partitions only).
        rng = np.random.default_rng(12345)
        pts = rng.random((2000, n))
        hits = np.zeros(len(pts), dtype=int)
        for s in self.simplices:
            normals, offs = _facet_halfplanes(s)
            inside = np.all(pts @ normals.T >= offs - 1e-9, axis=1)
            hits += inside
        return float(np.mean(hits > 1))


def kuhn_partition(n: int) -> SimplicialPartition:
    """Standard triangulation of the cube into n! simplices
    0 <= x_{p(1)} <= ... <= x_{p(n)} <= 1 over permutations p."""
    from itertools import permutations

    sims = []
    for perm in permutations(range(n)):
        verts = [np.zeros(n)]
        for axis in perm:
            v = verts[-1].copy()
            v[axis] = 1.0
            verts.append(v)
        sims.append(np.asarray(verts))
    return SimplicialPartition(tuple(sims))


@dataclass(frozen=True)
class PiecewiseCongruentMap:
    """Continuous map equal to an affine isometry on each partition cell."""

    partition: SimplicialPartition
    maps: tuple  # of (A (m,n), b (m,)) pairs, aligned with partition cells
    name: str = ""
    validate_continuity: bool = True
    _cache: dict = field(repr=False, default_factory=dict, compare=False)

    def __post_init__(self):
        n = self.partition.n
        maps = []
        for A, b in self.maps:
            A = np.asarray(A, dtype=float)
            b = np.asarray(b, dtype=float)
            if A.ndim != 2 or A.shape[1] != n or b.shape != (A.shape[0],):
                raise ValidationError("cell map shapes are inconsistent")
            gram = A.T @ A
            if not np.allclose(gram, np.eye(n), atol=_ISO_TOL):
                raise ValidationError("cell matrix columns are not orthonormal (not an isometry)")
            maps.append((A, b))
        if len(maps) != len(self.partition.simplices):
            raise ValidationError("one isometry per partition cell is required")
        m = maps[0][0].shape[0]
        if any(A.shape[0] != m for A, _ in maps):
            raise ValidationError("all cells must map into the same target space")
        if m < n:
            raise ValidationError("isometries require target dimension >= source dimension")
        object.__setattr__(self, "maps", tuple(maps))
        planes = [_facet_halfplanes(s) for s in self.partition.simplices]
        self._cache["planes"] = planes
        if self.validate_continuity:
            self._check_continuity()
            self._check_lipschitz()

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def m(self) -> int:
        return self.maps[0][0].shape[0]

    @property
    def card(self) -> int:
        """Number of partition cells."""
        return len(self.partition.simplices)

    # --- invariants ---------------------------------------------------------

    def _shared_face_samples(self, i: int, j: int, count: int = 100):
        n = self.n
        si, sj = self.partition.simplices[i], self.partition.simplices[j]
        if n == 1:
            lo = max(si.min(), sj.min())
            hi = min(si.max(), sj.max())
            if abs(hi - lo) < 1e-12:
                return np.asarray([[lo]])
            return None
        if n == 2:
            from shapely.geometry import Polygon

            inter = Polygon(si).intersection(Polygon(sj))
            if inter.is_empty or inter.length < 1e-9:
                return None
            lines = [inter] if inter.geom_type == "LineString" else [
                g for g in getattr(inter, "geoms", []) if g.geom_type == "LineString"
            ]
            pts = []
            for ln in lines:
                for t in np.linspace(0.0, 1.0, max(2, count // max(1, len(lines)))):
                    p = ln.interpolate(t, normalized=True)
                    pts.append([p.x, p.y])
            return np.asarray(pts) if pts else None
        return None  # higher dimensions rely on the Lipschitz sampling check

    def _check_continuity(self):
        for i in range(self.card):
            for j in range(i + 1, self.card):
                pts = self._shared_face_samples(i, j)
                if pts is None:
                    continue
                Ai, bi = self.maps[i]
                Aj, bj = self.maps[j]
                gap = np.linalg.norm(pts @ Ai.T + bi - (pts @ Aj.T + bj), axis=1)
                if gap.max() > _CONT_TOL:
                    raise ValidationError(
                        f"cells {i} and {j} disagree by {gap.max():.3g} on their shared face"
                    )

    def _check_lipschitz(self, samples: int = 200):
        rng = np.random.default_rng(0)
        x = rng.random((samples, self.n))
        y = rng.random((samples, self.n))
        fx, fy = self.evaluate(x), self.evaluate(y)
        num = np.linalg.norm(fx - fy, axis=1)
        den = np.linalg.norm(x - y, axis=1)
        good = den > 1e-9
        if np.any(num[good] > den[good] * (1.0 + 1e-7) + 1e-9):
            raise ValidationError("map is not 1-Lipschitz on sampled pairs")

    # --- evaluation -----------------------------------------------------------

    def locate(self, points: np.ndarray, tol: float = _LOC_TOL) -> np.ndarray:
        """Index of a cell whose closure contains each point (-1 if none)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(pts.shape[0], -1, dtype=np.int64)
        for ci, (normals, offs) in enumerate(self._cache["planes"]):
            todo = out < 0
            if not todo.any():
                break
            inside = np.all(pts[todo] @ normals.T >= offs - tol, axis=1)
            idx = np.flatnonzero(todo)[inside]
            out[idx] = ci
        return out

    def evaluate(self, points) -> np.ndarray:
        """Vectorized evaluation; on shared faces any incident cell gives
        the same value by the continuity invariant."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        single = np.asarray(points).ndim == 1
        if np.any(pts < -1e-9) or np.any(pts > 1.0 + 1e-9):
            raise DomainError("point outside the unit cube")
        cells = self.locate(pts)
        if np.any(cells < 0):
            cells2 = self.locate(pts, tol=1e-8)
            cells = np.where(cells < 0, cells2, cells)
            if np.any(cells < 0):
                raise DomainError("point could not be located in any partition cell")
        out = np.empty((pts.shape[0], self.m))
        for ci in np.unique(cells):
            sel = cells == ci
            A, b = self.maps[ci]
            out[sel] = pts[sel] @ A.T + b
        return out[0] if single else out

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)

    # --- segment decomposition -------------------------------------------------

    def segment_breakpoints(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        """Parameters t in [0,1] splitting the segment p->q into pieces on
        which the map is affine (entry/exit times through cell closures)."""
        p = np.asarray(p, dtype=float)
        d = np.asarray(q, dtype=float) - p
        ts = {0.0, 1.0}
        for normals, offs in self._cache["planes"]:
            t_in, t_out = 0.0, 1.0
            for normal, off in zip(normals, offs):
                denom = float(normal @ d)
                num = off - float(normal @ p)
                if abs(denom) < 1e-14:
                    if num > 1e-12:
                        t_in, t_out = 1.0, 0.0
                        break
                elif denom > 0:
                    t_in = max(t_in, num / denom)
                else:
                    t_out = min(t_out, num / denom)
            if t_out - t_in > 1e-12:
                ts.add(min(max(t_in, 0.0), 1.0))
                ts.add(min(max(t_out, 0.0), 1.0))
        return np.asarray(sorted(ts))

    # --- serialization -----------------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(
            {
                "partition": [s.tolist() for s in self.partition.simplices],
                "cells": [
                    {"A": [float(v) for v in A.ravel()], "b": b.tolist(), "m": A.shape[0]}
                    for A, b in self.maps
                ],
                "name": self.name,
            }
        )

    @staticmethod
    def from_json(text: str) -> "PiecewiseCongruentMap":
        obj = json.loads(text)
        partition = SimplicialPartition(tuple(np.asarray(s, dtype=float) for s in obj["partition"]))
        n = partition.n
        maps = []
        for cell in obj["cells"]:
            m = int(cell["m"])
            maps.append((np.asarray(cell["A"], dtype=float).reshape(m, n), np.asarray(cell["b"])))
        return PiecewiseCongruentMap(partition, tuple(maps), name=obj.get("name", ""))


def pcm_evaluate(pcm: PiecewiseCongruentMap, x) -> np.ndarray:
    """Evaluate A_P x + b_P for the cell whose closure contains x."""
    return pcm.evaluate(x)


# --- constructors -------------------------------------------------------------

def embedding_isometry(n: int, m: int, rng=None) -> np.ndarray:
    """An (m, n) matrix with orthonormal columns; identity-embedding by
    default, a random frame when an rng is supplied."""
    if m < n:
        raise ArgumentError("target dimension must be >= source dimension")
    if rng is None:
        return np.eye(m, n)
    q, _ = np.linalg.qr(rng.standard_normal((m, n)))
    return q[:, :n]


def identity_pcm(n: int, m: int | None = None, frame: np.ndarray | None = None) -> PiecewiseCongruentMap:
    m = m or n
    A = frame if frame is not None else embedding_isometry(n, m)
    part = kuhn_partition(n)
    maps = tuple((A, np.zeros(m)) for _ in part.simplices)
    return PiecewiseCongruentMap(part, maps, name=f"identity_{n}to{m}")


def tent_pcm(crease: float = 0.5) -> PiecewiseCongruentMap:
    """1-d fold: x on [0, c], 2c - x on [c, 1]."""
    if not 0.0 < crease < 1.0:
        raise DomainError("crease must be interior to (0,1)")
    part = SimplicialPartition(
        (np.asarray([[0.0], [crease]]), np.asarray([[crease], [1.0]]))
    )
    maps = ((np.asarray([[1.0]]), np.zeros(1)), (np.asarray([[-1.0]]), np.asarray([2.0 * crease])))
    return PiecewiseCongruentMap(part, maps, name=f"tent_{crease:g}")


def _halfplane_polygon(w: np.ndarray, off: float, side: int):
    """Large polygon representing {<x,w> >= off} (side=+1) or <= (side=-1)."""
    from shapely.geometry import Polygon

    w = w / np.linalg.norm(w)
    t = np.asarray([-w[1], w[0]])
    p0 = w * off
    big = 16.0
    if side > 0:
        pts = [p0 - big * t, p0 + big * t, p0 + big * t + big * w, p0 - big * t + big * w]
    else:
        pts = [p0 - big * t, p0 + big * t, p0 + big * t - big * w, p0 - big * t - big * w]
    return Polygon(pts)


def fold_pcm(
    folds,
    m: int | None = None,
    frame: np.ndarray | None = None,
    name: str = "",
) -> PiecewiseCongruentMap:
    """Compose reflective folds on the unit square (n = 2).

    Each fold is (normal, offset): points of the current image with
    <y, normal> > offset are reflected across the hyperplane; the map is
    continuous by construction since the reflection fixes the hyperplane.
    Cells are polygon preimages, fan-triangulated at the end.
    """
    from shapely.geometry import Polygon

    n = 2
    m = m or n
    A0 = frame if frame is not None else embedding_isometry(n, m)
    square = Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])
    cells = [(square, A0.copy(), np.zeros(m))]
    for normal, offset in folds:
        nu = np.asarray(normal, dtype=float)
        nu = nu / np.linalg.norm(nu)
        if nu.size != m:
            raise ArgumentError("fold normal must live in the target space")
        refl = np.eye(m) - 2.0 * np.outer(nu, nu)
        shift = 2.0 * offset * nu
        new_cells = []
        for poly, A, b in cells:
            w = A.T @ nu
            const = float(b @ nu) - offset
            wn = float(np.linalg.norm(w))
            if wn < 1e-12:
                if const > 0:
                    new_cells.append((poly, refl @ A, refl @ b + shift))
                else:
                    new_cells.append((poly, A, b))
                continue
            d0 = (offset - float(b @ nu)) / wn
            keep = poly.intersection(_halfplane_polygon(w, d0, -1))
            flip = poly.intersection(_halfplane_polygon(w, d0, +1))
            if keep.area > 1e-12:
                new_cells.append((keep, A, b))
            if flip.area > 1e-12:
                new_cells.append((flip, refl @ A, refl @ b + shift))
        cells = new_cells
    simplices, maps = [], []
    for poly, A, b in cells:
        coords = np.asarray(poly.exterior.coords)[:-1]
        # shapely may emit duplicate/collinear vertices after clipping
        for i in range(1, len(coords) - 1):
            tri = np.asarray([coords[0], coords[i], coords[i + 1]])
            if _simplex_volume(tri) > 1e-12:
                simplices.append(tri)
                maps.append((A.copy(), b.copy()))
    return PiecewiseCongruentMap(
        SimplicialPartition(tuple(simplices)), tuple(maps), name=name or "fold"
    )


def dihedral_pcm(m: int | None = None) -> PiecewiseCongruentMap:
    """Folds across the vertical midline and the main diagonal."""
    mm = m or 2
    folds = [(_embed(np.asarray([1.0, 0.0]), mm), 0.5), (_embed(np.asarray([1.0, -1.0]) / math.sqrt(2), mm), 0.0)]
    return fold_pcm(folds, m=mm, name="dihedral")


def _embed(v: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros(m)
    out[: v.size] = v
    return out


def random_fold_pcm(rng, fold_count: int = 2, m: int | None = None, name: str = "") -> PiecewiseCongruentMap:
    """Random composition of reflective folds; continuous by construction."""
    mm = m or 2
    folds = []
    for _ in range(fold_count):
        angle = rng.uniform(0.0, 2.0 * math.pi)
        nu = _embed(np.asarray([math.cos(angle), math.sin(angle)]), mm)
        if mm > 2:
            extra = rng.standard_normal(mm) * 0.2
            nu = nu + extra
            nu = nu / np.linalg.norm(nu)
        offset = rng.uniform(0.2, 0.8) * float(nu[:2] @ np.asarray([0.5, 0.5])) + rng.uniform(-0.2, 0.2)
        folds.append((nu, offset))
    return fold_pcm(folds, m=mm, name=name or f"random_fold_{fold_count}")


def pcm_catalog(m: int = 2, rng=None) -> list[PiecewiseCongruentMap]:
    """Built-in test maps: identity, tents/folds with grid-aligned creases,
    a dihedral composition, and random fold compositions."""
    rng = rng or np.random.default_rng(20240817)
    cat = [
        identity_pcm(2, m),
        fold_pcm([(_embed(np.asarray([1.0, 0.0]), m), 0.5)], m=m, name="fold_vertical"),
        fold_pcm([(_embed(np.asarray([0.0, 1.0]), m), 0.5)], m=m, name="fold_horizontal"),
        fold_pcm(
            [(_embed(np.asarray([1.0, -1.0]) / math.sqrt(2), m), 0.0)], m=m, name="fold_diagonal"
        ),
        dihedral_pcm(m),
        random_fold_pcm(rng, 2, m),
    ]
    return cat


# --- epsilon-differentiability ------------------------------------------------

def default_scale_ladder(N: int, octaves: int = 6) -> np.ndarray:
    """Dyadic scales 2^-k starting just below a quarter cell, so that the
    truncated scale-limit only sees sub-cell behavior."""
    k0 = int(math.ceil(math.log2(N))) + 2
    return np.asarray([2.0 ** -(k0 + j) for j in range(octaves)])


@dataclass(frozen=True)
class EpsDiffReport:
    """Per-lattice-node classification of approximate directional
    differentiability at the ladder's scales.

    class codes: 1 = epsilon-differentiable, 0 = not, -1 = untested
    (the whole ladder exits the cube at that node).
    """

    function_id: str
    direction: tuple
    epsilon: float
    ladder: tuple
    node_shape: tuple
    classes: np.ndarray = field(repr=False)
    witness: np.ndarray = field(repr=False)
    max_deviation: np.ndarray = field(repr=False)

    def counts(self) -> dict:
        c = self.classes.ravel()
        return {
            "differentiable": int((c == 1).sum()),
            "non_differentiable": int((c == 0).sum()),
            "untested": int((c == -1).sum()),
        }

    def csv_rows(self):
        flat_cls = self.classes.ravel()
        flat_dev = self.max_deviation.ravel()
        wit = self.witness.reshape(-1, self.witness.shape[-1])
        for idx in range(flat_cls.size):
            node = np.unravel_index(idx, self.node_shape)
            yield [*node, int(flat_cls[idx]), *wit[idx], flat_dev[idx]]


def xi_set(
    pcm: PiecewiseCongruentMap,
    e: Direction,
    epsilon: float,
    N: int,
    ladder=None,
) -> tuple[GridSet, EpsDiffReport]:
    """Grid nodes where no vector d keeps every ladder difference quotient
    within epsilon; flagged nodes are returned as the cells incident to
    them.

    The candidate d is the coordinate-wise median of the ladder quotients
    (both signs); a node fails when the worst ladder deviation from d
    exceeds epsilon. The ladder spans small dyadic scales only, so the
    classification is an explicitly scale-bounded statement at the
    ladder floor.
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon must lie in (0,1)")
    scales = np.asarray(ladder if ladder is not None else default_scale_ladder(N), dtype=float)
    if scales.size < 6:
        raise ArgumentError("scale ladder must span at least 6 octaves")
    n = pcm.n
    axes = [np.arange(N + 1) / N] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=1)
    ev = e.components
    quotients = np.full((nodes.shape[0], 2 * scales.size, pcm.m), np.nan)
    base = pcm.evaluate(nodes)
    for si, s in enumerate(scales):
        for pi, sign in enumerate((1.0, -1.0)):
            t = sign * s
            shifted = nodes + t * ev
            ok = np.all((shifted >= 0.0) & (shifted <= 1.0), axis=1)
            if ok.any():
                vals = pcm.evaluate(shifted[ok])
                quotients[ok, 2 * si + pi] = (vals - base[ok]) / t
    tested = ~np.isnan(quotients[:, :, 0])
    untested = ~tested.any(axis=1)
    witness = np.zeros((nodes.shape[0], pcm.m))
    maxdev = np.full(nodes.shape[0], np.nan)
    live = ~untested
    if live.any():
        witness[live] = np.nanmedian(quotients[live], axis=1)
        dev = np.linalg.norm(quotients[live] - witness[live, None, :], axis=2)
        maxdev[live] = np.nanmax(np.where(tested[live], dev, -np.inf), axis=1)
    classes = np.where(maxdev > epsilon + 1e-7, 0, 1).astype(np.int8)
    classes[untested] = -1
    shape = (N + 1,) * n
    mask = np.zeros((N,) * n, dtype=bool)
    flagged = np.argwhere(classes.reshape(shape) == 0)
    for node in flagged:
        lo = np.maximum(node - 1, 0)
        hi = np.minimum(node, N - 1)
        mask[tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))] = True
    report = EpsDiffReport(
        function_id=pcm.name,
        direction=tuple(map(float, ev)),
        epsilon=epsilon,
        ladder=tuple(map(float, scales)),
        node_shape=shape,
        classes=classes.reshape(shape),
        witness=witness.reshape(shape + (pcm.m,)),
        max_deviation=maxdev.reshape(shape),
    )
    return GridSet(mask, role="compact"), report


def incompatible_facets(pcm: PiecewiseCongruentMap, e: Direction, epsilon: float):
    """Shared faces across which the one-sided derivatives along e are more
    than 2*epsilon apart (the geometric description of the failure set for
    a piecewise congruent map); n = 2 only.  Returns segment endpoint
    pairs."""
    if pcm.n != 2:
        raise ArgumentError("facet extraction is implemented for n = 2")
    from shapely.geometry import Polygon

    ev = e.components
    polys = [Polygon(s) for s in pcm.partition.simplices]
    out = []
    for i in range(pcm.card):
        for j in range(i + 1, pcm.card):
            inter = polys[i].intersection(polys[j])
            if inter.is_empty or inter.length < 1e-9:
                continue
            Ai, _ = pcm.maps[i]
            Aj, _ = pcm.maps[j]
            jump = float(np.linalg.norm((Ai - Aj) @ ev))
            if jump <= 2.0 * epsilon:
                continue
            geoms = [inter] if inter.geom_type == "LineString" else list(getattr(inter, "geoms", []))
            for g in geoms:
                if g.geom_type == "LineString" and g.length > 1e-9:
                    c = np.asarray(g.coords)
                    out.append((c[0], c[-1]))
    return out


def rasterize_segments(segments, N: int, n: int = 2, pad: int = 1) -> GridSet:
    """Cells crossed by any of the segments, padded by ``pad`` cells."""
    mask = np.zeros((N,) * n, dtype=bool)
    for p, q in segments:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        if np.allclose(p, q):
            continue
        for _, _, cell in _segment_cell_intervals(p, q, N):
            lo = np.maximum(cell - pad, 0)
            hi = np.minimum(cell + pad, N - 1)
            mask[tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))] = True
    return GridSet(mask, role="compact")


def null_face_set(pcm: PiecewiseCongruentMap, cone: Cone, N: int) -> GridSet:
    """Rasterization of the internal faces whose direction lies outside the
    (closed) cone both ways, i.e. the faces a cone curve can only cross
    transversally; n = 2."""
    if pcm.n != 2:
        raise ArgumentError("face rasterization is implemented for n = 2")
    from shapely.geometry import Polygon

    ev = cone.axis.components
    polys = [Polygon(s) for s in pcm.partition.simplices]
    segs = []
    for i in range(pcm.card):
        for j in range(i + 1, pcm.card):
            inter = polys[i].intersection(polys[j])
            if inter.is_empty or inter.length < 1e-9:
                continue
            geoms = [inter] if inter.geom_type == "LineString" else list(getattr(inter, "geoms", []))
            for g in geoms:
                if g.geom_type != "LineString" or g.length < 1e-9:
                    continue
                c = np.asarray(g.coords)
                w = c[-1] - c[0]
                w = w / np.linalg.norm(w)
                if abs(float(w @ ev)) <= (1.0 - cone.sigma):
                    segs.append((c[0], c[-1]))
    return rasterize_segments(segs, N)


# --- divergence sets -----------------------------------------------------------

@dataclass(frozen=True)
class DivergenceWitness:
    node: tuple
    point: tuple
    r: float


def divergence_set(
    f: PiecewiseCongruentMap,
    g: PiecewiseCongruentMap,
    e: Direction,
    epsilon: float,
    k0: int,
    N: int,
    t_ladder=None,
) -> tuple[GridSet, list]:
    """Nodes whose increments along e differ between the two maps by at
    least epsilon*|t| for some admissible dyadic t (both signs, endpoint
    kept in the inset cube [1/2k0, 1-1/2k0]^n).

    For each hit the returned witness records r(x): the most negative
    admissible t when it dominates in magnitude, otherwise the most
    positive (a deterministic tie rule).
    """
    if f.n != g.n or f.m != g.m:
        raise ArgumentError("maps must share source and target dimensions")
    n = f.n
    lo, hi = 1.0 / (2.0 * k0), 1.0 - 1.0 / (2.0 * k0)
    if t_ladder is None:
        kmax = int(math.ceil(math.log2(N))) + 4
        t_ladder = [2.0**-k for k in range(1, kmax + 1)]
    scales = np.asarray(sorted(t_ladder, reverse=True), dtype=float)
    axes = [np.arange(N + 1) / N] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([gax.ravel() for gax in mesh], axis=1)
    inset = np.all((nodes >= lo - 1e-12) & (nodes <= hi + 1e-12), axis=1)
    nodes_in = nodes[inset]
    ev = e.components
    base = f.evaluate(nodes_in) - g.evaluate(nodes_in)
    tmin = np.full(nodes_in.shape[0], np.nan)
    tmax = np.full(nodes_in.shape[0], np.nan)
    hit = np.zeros(nodes_in.shape[0], dtype=bool)
    for s in scales:
        for sign in (1.0, -1.0):
            t = sign * s
            shifted = nodes_in + t * ev
            ok = np.all((shifted >= lo - 1e-12) & (shifted <= hi + 1e-12), axis=1)
            if not ok.any():
                continue
            delta = f.evaluate(shifted[ok]) - g.evaluate(shifted[ok]) - base[ok]
            trig = np.linalg.norm(delta, axis=1) >= epsilon * abs(t)
            idx = np.flatnonzero(ok)[trig]
            hit[idx] = True
            if sign < 0:
                tmin[idx] = np.fmin(np.where(np.isnan(tmin[idx]), t, tmin[idx]), t)
            else:
                tmax[idx] = np.fmax(np.where(np.isnan(tmax[idx]), t, tmax[idx]), t)
    mask = np.zeros((N,) * n, dtype=bool)
    witnesses = []
    node_idx = np.argwhere(inset.reshape((N + 1,) * n))
    for row, flag in zip(range(nodes_in.shape[0]), hit):
        if not flag:
            continue
        node = node_idx[row]
        lo_c = np.maximum(node - 1, 0)
        hi_c = np.minimum(node, N - 1)
        mask[tuple(slice(int(a), int(b) + 1) for a, b in zip(lo_c, hi_c))] = True
        a, b = tmin[row], tmax[row]
        if np.isnan(b) or (not np.isnan(a) and abs(a) >= abs(b)):
            r = a
        else:
            r = b
        witnesses.append(
            DivergenceWitness(node=tuple(int(v) for v in node), point=tuple(map(float, nodes_in[row])), r=float(r))
        )
    return GridSet(mask, role="compact"), witnesses


def derived_set_sample(func, x, e: Direction, scales) -> tuple[np.ndarray, bool]:
    """One-sided difference quotients (f(x+te)-f(x))/t over a scale ladder;
    the flag reports whether any scale had to be dropped for leaving the
    domain."""
    x = np.asarray(x, dtype=float)
    ev = e.components
    quotients = []
    truncated = False
    fx = np.asarray(func(x), dtype=float)
    for t in scales:
        y = x + t * ev
        if np.any(y < 0.0) or np.any(y > 1.0):
            truncated = True
            continue
        quotients.append((np.asarray(func(y), dtype=float) - fx) / t)
    return np.asarray(quotients), truncated


# --- maximal functions ----------------------------------------------------------

def maximal_envelope(ts: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Hardy-Littlewood maximal function of a nonnegative piecewise-constant
    signal, evaluated exactly: for each piece, the best average over
    subintervals with breakpoint endpoints spanning it (interior optima of
    the average always land on breakpoints for piecewise-constant data).

    Integrals accumulate left to right per start breakpoint, so the values
    agree bit for bit with a direct re-integration of every subinterval.
    """
    ts = np.asarray(ts, dtype=float)
    phi = np.asarray(phi, dtype=float)
    B = phi.size
    if ts.size != B + 1:
        raise ArgumentError("need one more breakpoint than pieces")
    out = np.array(phi, dtype=float)
    for j in range(B):
        acc = 0.0
        avgs = np.empty(B - j)
        for k in range(j + 1, B + 1):
            acc += phi[k - 1] * (ts[k] - ts[k - 1])
            avgs[k - j - 1] = acc / (ts[k] - ts[j])
        # avgs[r] is the average over (ts[j], ts[j+1+r]); it covers pieces
        # j..j+r, so piece i >= j sees the suffix starting at r = i - j.
        suffix = np.maximum.accumulate(avgs[::-1])[::-1]
        np.maximum(out[j:], suffix, out=out[j:])
    return out


def maximal_envelope_bruteforce(ts: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Independent oracle: re-integrates every candidate subinterval."""
    B = len(phi)
    out = np.array(phi, dtype=float)
    for i in range(B):
        for j in range(i + 1):
            for k in range(i + 1, B + 1):
                total = 0.0
                for piece in range(j, k):
                    total += phi[piece] * (ts[piece + 1] - ts[piece])
                out[i] = max(out[i], total / (ts[k] - ts[j]))
    return out


def composed_difference_pieces(
    f: PiecewiseCongruentMap, g: PiecewiseCongruentMap, curve: CanonicalCurve
):
    """Breakpoints of s -> (f-g)(curve(s)) and |derivative| per piece.

    The composition is piecewise affine: breaks come from curve vertices
    and from cell crossings of both maps; the derivative on a piece is
    (A_f - A_g) applied to the curve's segment velocity.
    """
    verts = curve.vertices()
    breaks_s = curve.breaks
    all_ts = [float(breaks_s[0])]
    piece_mid = []
    for j in range(len(verts) - 1):
        p, q = verts[j], verts[j + 1]
        local = np.union1d(f.segment_breakpoints(p, q), g.segment_breakpoints(p, q))
        s0, s1 = breaks_s[j], breaks_s[j + 1]
        seg_ts = s0 + local * (s1 - s0)
        for t in seg_ts[1:]:
            all_ts.append(float(t))
    ts = np.asarray(sorted(set(all_ts)))
    mids = 0.5 * (ts[:-1] + ts[1:])
    pts = curve.point_at(mids)
    pts = np.clip(pts, 0.0, 1.0)
    cf = f.locate(pts, tol=1e-9)
    cg = g.locate(pts, tol=1e-9)
    seg_of_mid = np.clip(np.searchsorted(breaks_s, mids) - 1, 0, len(verts) - 2)
    ds = np.diff(breaks_s)
    vel = (verts[1:] - verts[:-1]) / ds[:, None]
    phi = np.empty(mids.size)
    for i, (mf, mg, sj) in enumerate(zip(cf, cg, seg_of_mid)):
        Af, _ = f.maps[max(mf, 0)]
        Ag, _ = g.maps[max(mg, 0)]
        phi[i] = float(np.linalg.norm((Af - Ag) @ vel[sj]))
    return ts, phi


def maximal_along_curve(
    f: PiecewiseCongruentMap,
    g: PiecewiseCongruentMap,
    curve: CanonicalCurve,
    p: float,
) -> float:
    """L^p norm of the maximal function of |((f-g) o curve)'| over the
    curve's parameter interval, via exact per-interval integration of the
    piecewise-constant envelope power."""
    if p <= 4.0:
        raise ArgumentError("the maximal estimate is stated for p > 4")
    ts, phi = composed_difference_pieces(f, g, curve)
    if phi.size == 0:
        return 0.0
    env = maximal_envelope(ts, phi)
    lens = np.diff(ts)
    return float(np.sum(lens * env**p) ** (1.0 / p))
