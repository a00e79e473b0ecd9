"""Directional width of grid sets and width functions of open grid sets,
both computed by longest-path dynamic programming on a cone-constrained
DAG.

Graph model: nodes are cell centers of the N-grid; edges step by integer
stencil offsets whose directions lie strictly inside the cone, so every
source->sink path is a piecewise-affine curve going in the direction of
the cone.  Virtual source/sink layers (nodes with no in-cube predecessor
/ successor) make the generated paths maximal: they cannot be extended
inside the cube.  Edge weights are exact clipped lengths of the edge
segment inside the open cell union of the accounting set, so the DP value
is the exact supremum of in-set arc length over the discrete curve
family.

The width of a set E along a cone is estimated by running the DP on a
decreasing schedule of metric neighborhoods B_delta(E); the whole
schedule is reported so convergence toward the infimum is auditable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ResolutionError, ValidationError
from .geometry import CanonicalCurve, Cone, ConeCurve, Direction, beta, cone_contains
from .gridset import GridSet, dilate, interp_cell_centers

MIN_STENCIL_RADIUS = 2
MAX_STENCIL_RADIUS = 16  # criterion tolerances need slopes finer than radius 8 allows
DEFAULT_STENCIL_RADIUS = 4

_VALUE_TOL = 1e-9


def _primitive(o: np.ndarray) -> bool:
    g = 0
    for c in o:
        g = math.gcd(g, abs(int(c)))
    return g == 1


def cone_stencil(cone: Cone, radius: int) -> tuple[tuple[int, ...], ...]:
    """Primitive integer offsets with infinity norm <= radius lying
    strictly inside the cone, sorted descending lexicographically (the
    order realizes deterministic ties toward the smallest predecessor)."""
    n = cone.n
    rng = range(-radius, radius + 1)
    offsets = []
    for o in np.ndindex(*((2 * radius + 1,) * n)):
        vec = np.asarray(o, dtype=np.int64) - radius
        if not vec.any():
            continue
        if not _primitive(vec):
            continue
        if cone_contains(cone, vec.astype(float)):
            offsets.append(tuple(int(c) for c in vec))
    offsets.sort(reverse=True)
    return tuple(offsets)


def _edge_pattern(o: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cells crossed by the center-to-center segment for offset ``o`` (in
    cell units, relative to the start cell) with the fraction of the
    segment spent in each.  Center-to-center segments never run inside a
    grid face, so midpoint classification is unambiguous."""
    n = o.size
    a = np.full(n, 0.5)
    d = o.astype(float)
    ts = {0.0, 1.0}
    for axis in range(n):
        if d[axis] == 0.0:
            continue
        lo, hi = sorted((a[axis], a[axis] + d[axis]))
        for k in range(math.floor(lo) + 1, math.ceil(hi)):
            t = (k - a[axis]) / d[axis]
            if 0.0 < t < 1.0:
                ts.add(t)
    ts = sorted(ts)
    cells, fracs = [], []
    for t0, t1 in zip(ts[:-1], ts[1:]):
        if t1 - t0 < 1e-15:
            continue
        mid = a + 0.5 * (t0 + t1) * d
        cells.append(np.floor(mid).astype(np.int64))
        fracs.append(t1 - t0)
    return np.stack(cells), np.asarray(fracs)


@dataclass(frozen=True)
class ConeGraph:
    """Cone-constrained DAG over the cell centers of an N-grid.

    ``groups`` lists node batches in topological order: the axis
    projection strictly increases along every edge, and consecutive
    batches are separated by at least the minimal edge advance, so a
    band-by-band sweep sees every predecessor finalized.
    """

    N: int
    cone: Cone
    stencil_radius: int
    stencil: tuple = field(repr=False, default=())
    _arrays: dict = field(repr=False, default_factory=dict, compare=False)

    def __post_init__(self):
        if self.N < 8:
            raise ArgumentError(f"grid resolution must be >= 8, got {self.N}")
        if not MIN_STENCIL_RADIUS <= self.stencil_radius <= MAX_STENCIL_RADIUS:
            raise ArgumentError(
                f"stencil radius must lie in [{MIN_STENCIL_RADIUS}, {MAX_STENCIL_RADIUS}]"
            )
        stencil = self.stencil or cone_stencil(self.cone, self.stencil_radius)
        if not stencil:
            raise ResolutionError(
                f"no integer direction inside the cone at radius {self.stencil_radius}; "
                f"increase the stencil radius (amplitude sigma={self.cone.sigma:.3g} is "
                f"too small for this grid stencil)"
            )
        object.__setattr__(self, "stencil", tuple(stencil))
        n = self.cone.n
        e = self.cone.axis.components
        offs = np.asarray(self.stencil, dtype=np.int64)
        advances = offs @ e
        if np.any(advances <= 0):
            raise ValidationError("stencil offset with non-positive axis advance")
        shape = (self.N,) * n
        coords = np.stack(
            [g.ravel() for g in np.meshgrid(*[np.arange(self.N)] * n, indexing="ij")],
            axis=1,
        ).astype(np.int64)
        proj = coords.astype(float) @ e
        gap = float(advances.min())
        band = np.floor(proj / gap).astype(np.int64)
        order = np.argsort(band, kind="stable")
        sorted_band = band[order]
        cuts = np.flatnonzero(np.diff(sorted_band)) + 1
        groups = np.split(order, cuts)
        strides = np.asarray(
            [int(np.prod(shape[d + 1 :], dtype=np.int64)) for d in range(n)], dtype=np.int64
        )
        # No edge may stay inside a band; verified once, with an exact
        # projection-sorted fallback for pathological float alignments.
        ok = True
        for o in offs:
            pred = coords - o
            valid = np.all((pred >= 0) & (pred < self.N), axis=1)
            if np.any(band[(pred[valid] @ strides)] >= band[valid.nonzero()[0]]):
                ok = False
                break
        if not ok:
            uniq = np.unique(proj)
            band = np.searchsorted(uniq, proj)
            order = np.argsort(band, kind="stable")
            cuts = np.flatnonzero(np.diff(band[order])) + 1
            groups = np.split(order, cuts)
        has_pred = np.zeros(shape, dtype=bool)
        has_succ = np.zeros(shape, dtype=bool)
        for o in offs:
            sl_pred, sl_succ = [], []
            for d in range(n):
                od = int(o[d])
                sl_pred.append(slice(max(od, 0), self.N + min(od, 0)))
                sl_succ.append(slice(max(-od, 0), self.N + min(-od, 0)))
            has_pred[tuple(sl_pred)] = True
            has_succ[tuple(sl_succ)] = True
        patterns = {}
        for o in offs:
            cells, fracs = _edge_pattern(o)
            patterns[tuple(int(c) for c in o)] = (cells, fracs * np.linalg.norm(o))
        ray = int(np.argmax(advances / np.linalg.norm(offs, axis=1)))
        self._arrays.update(
            coords=coords,
            strides=strides,
            groups=groups,
            has_pred=has_pred.ravel(),
            has_succ=has_succ.ravel(),
            offsets=offs,
            patterns=patterns,
            ray_offset=offs[ray],
            shape=shape,
        )

    @property
    def n(self) -> int:
        return self.cone.n

    @property
    def h(self) -> float:
        return 1.0 / self.N

    def edge_pattern(self, o) -> tuple[np.ndarray, np.ndarray]:
        return self._arrays["patterns"][tuple(int(c) for c in o)]

    def edge_weight_field(self, mask: np.ndarray, o) -> np.ndarray:
        """In-set length of the edge with offset ``o`` from every start
        cell, as a flat array (garbage where the edge leaves the grid)."""
        cells, lens = self.edge_pattern(o)
        N = self.N
        out = np.zeros(mask.shape)
        for delta, ln in zip(cells, lens * self.h):
            tgt, src = [], []
            for d in range(mask.ndim):
                dd = int(delta[d])
                tgt.append(slice(max(-dd, 0), N + min(-dd, 0)))
                src.append(slice(max(dd, 0), N + min(dd, 0)))
            out[tuple(tgt)] += ln * mask[tuple(src)]
        return out.ravel()

    def weight_fields(self, mask: np.ndarray) -> dict:
        return {
            tuple(int(c) for c in o): self.edge_weight_field(mask, o)
            for o in self._arrays["offsets"]
        }


def build_cone_graph(N: int, cone: Cone, stencil_radius: int = DEFAULT_STENCIL_RADIUS) -> ConeGraph:
    """Build the cone-constrained grid DAG (see ConeGraph)."""
    return ConeGraph(N=N, cone=cone, stencil_radius=stencil_radius)


def _relax(graph: ConeGraph, value: np.ndarray, weights: dict, backptr=None):
    """One ascending band sweep relaxing every edge; mutates ``value``."""
    arr = graph._arrays
    coords, strides, offs = arr["coords"], arr["strides"], arr["offsets"]
    N = graph.N
    for group in arr["groups"]:
        cg = coords[group]
        for s, o in enumerate(offs):
            pred = cg - o
            valid = np.all((pred >= 0) & (pred < N), axis=1)
            if not valid.any():
                continue
            nodes = group[valid]
            pf = pred[valid] @ strides
            cand = value[pf] + weights[tuple(int(c) for c in o)][pf]
            cur = value[nodes]
            better = cand > cur
            if better.any():
                upd = nodes[better]
                value[upd] = cand[better]
                if backptr is not None:
                    backptr[upd] = s


def longest_maximal_path(graph: ConeGraph, weights: dict):
    """Longest-path DP over maximal paths (virtual source to virtual sink).

    Returns (sup, value array, backpointers); ties in the argmax are
    broken toward the lexicographically smallest predecessor by the
    stencil iteration order.
    """
    arr = graph._arrays
    size = int(np.prod(arr["shape"]))
    value = np.full(size, -np.inf)
    value[~arr["has_pred"]] = 0.0
    backptr = np.full(size, -1, dtype=np.int16)
    _relax(graph, value, weights, backptr)
    sinks = ~arr["has_succ"]
    sink_vals = np.where(sinks, value, -np.inf)
    end = int(np.argmax(sink_vals))
    return float(sink_vals[end]), value, backptr, end


def extract_witness(graph: ConeGraph, backptr: np.ndarray, end: int) -> ConeCurve:
    """Trace backpointers from a sink into a cone curve through cell centers."""
    arr = graph._arrays
    offs, strides = arr["offsets"], arr["strides"]
    cells = [np.asarray(np.unravel_index(end, arr["shape"]), dtype=np.int64)]
    cur = end
    while backptr[cur] >= 0:
        cells.append(cells[-1] - offs[backptr[cur]])
        cur = int(cells[-1] @ strides)
    cells.reverse()
    verts = (np.asarray(cells) + 0.5) * graph.h
    if len(verts) < 2:
        verts = np.vstack([verts[0], verts[0] + graph.h * np.asarray(offs[0], dtype=float)])
    return ConeCurve(verts, graph.cone)


def exhaustive_width_sup(graph: ConeGraph, weights: dict) -> float:
    """Oracle: enumerate every maximal path explicitly and return the best
    in-set length.  Exponential; only for small instances."""
    arr = graph._arrays
    coords = arr["coords"]
    offs = arr["offsets"]
    strides = arr["strides"]
    N = graph.N
    starts = np.flatnonzero(~arr["has_pred"])
    best = -np.inf
    wkeys = [tuple(int(c) for c in o) for o in offs]
    stack = [(int(s), 0.0) for s in starts]
    while stack:
        node, acc = stack.pop()
        c = coords[node]
        extended = False
        for o, key in zip(offs, wkeys):
            succ = c + o
            if np.all(succ >= 0) and np.all(succ < N):
                extended = True
                stack.append((int(succ @ strides), acc + weights[key][node]))
        if not extended and acc > best:
            best = acc
    return float(best)


# --- width of a set ----------------------------------------------------------

@dataclass(frozen=True)
class WidthReport:
    """Result of a width computation: the sup-curve value for each
    neighborhood radius of the schedule (non-increasing), the final value
    as the width estimate, and the witness curve achieving it."""

    cone: Cone
    set_id: str
    schedule: tuple  # ((delta, sup_value), ...) with decreasing delta
    witness: ConeCurve | None
    n: int

    def __post_init__(self):
        vals = [v for _, v in self.schedule]
        for a, b in zip(vals[:-1], vals[1:]):
            if b > a + _VALUE_TOL:
                raise ValidationError("sup-curve values must be non-increasing along the schedule")
        bound = math.sqrt(self.n) * (1.0 + self.cone.beta) + 1e-6
        if vals and vals[0] > bound:
            raise ValidationError(
                f"width {vals[0]:.6g} exceeds the diameter bound sqrt(n)(1+beta)={bound:.6g}"
            )

    @property
    def width(self) -> float:
        return self.schedule[-1][1]

    def csv_rows(self):
        e = self.cone.axis.components
        for delta, val in self.schedule:
            yield [self.cone.sigma, *e, delta, val]


def geometric_schedule(delta0: float, h: float, factor: float = 0.5) -> list[float]:
    """Geometric ladder delta0, delta0*factor, ... stopping at the 2h floor."""
    out = []
    d = delta0
    while d >= 2.0 * h - 1e-12:
        out.append(d)
        d *= factor
    if not out:
        raise ArgumentError(f"delta0={delta0} is already below the 2h floor")
    return out


def _check_schedule(schedule, h):
    sched = [float(d) for d in schedule]
    if not sched:
        raise ArgumentError("empty delta schedule")
    if any(b >= a for a, b in zip(sched[:-1], sched[1:])):
        raise ArgumentError("delta schedule must be strictly decreasing")
    if sched[-1] < 2.0 * h - 1e-12:
        raise ArgumentError(f"schedule floor {sched[-1]} is below 2h = {2 * h}")
    return sched


def width(
    gridset: GridSet,
    cone: Cone,
    schedule,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
    allow_boundary: bool = False,
    set_id: str = "",
    graph: ConeGraph | None = None,
    weights_by_delta: dict | None = None,
) -> WidthReport:
    """Width of a set along a proper cone.

    For each delta of the (strictly decreasing) schedule, computes the
    supremum over maximal discrete cone curves of arc length inside
    B_delta(set) and reports the final (smallest-delta) value as the width
    estimate.  Sets touching the cube boundary are refused unless
    ``allow_boundary`` is set.
    """
    if gridset.touches_boundary() and not allow_boundary:
        raise ArgumentError(
            "set touches the cube boundary; width is defined for compactly "
            "interior sets (pass allow_boundary=True to override)"
        )
    sched = _check_schedule(schedule, gridset.h)
    graph = graph or build_cone_graph(gridset.N, cone, stencil_radius)
    rows = []
    witness = None
    for delta in sched:
        omega = dilate(gridset, delta)
        weights = (
            weights_by_delta[delta]
            if weights_by_delta is not None
            else graph.weight_fields(omega.mask)
        )
        sup, _, backptr, end = longest_maximal_path(graph, weights)
        rows.append((delta, sup))
        witness = extract_witness(graph, backptr, end)
    return WidthReport(cone=cone, set_id=set_id, schedule=tuple(rows), witness=witness, n=gridset.n)


# --- width function of an open set -------------------------------------------

@dataclass(frozen=True)
class WidthFunctionField:
    """Grid-sampled width function of an open set along a cone.

    ``values`` (cell-center samples) are >= 0; the discrete Lipschitz
    constant along grid steps is measured at construction and exposed for
    validation against the (1+beta) law where it applies.
    """

    omega: GridSet
    cone: Cone
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        if v.shape != self.omega.mask.shape:
            raise ValidationError("width-function samples must live on the set grid")
        if v.min() < 0.0:
            raise ValidationError("width function must be nonnegative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def h(self) -> float:
        return self.omega.h

    def discrete_lipschitz(self) -> float:
        worst = 0.0
        for d in range(self.values.ndim):
            dv = np.abs(np.diff(self.values, axis=d))
            if dv.size:
                worst = max(worst, float(dv.max()) / self.h)
        return worst

    def __call__(self, points) -> np.ndarray:
        return interp_cell_centers(self.values, points, self.h)


def width_function(
    omega: GridSet,
    cone: Cone,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
    graph: ConeGraph | None = None,
) -> WidthFunctionField:
    """Width function of an open set: per node, the best value of
    (in-set arc length) - (endpoint offset along the axis ray) over
    discrete cone curves ending on the axis ray through the node.

    Realized as two sweeps: an ascending DP computing the best in-set
    length over curves ending exactly at each node (curves may start
    anywhere; the empty curve contributes 0, which also clips the field
    below at 0), then a descending axis-ray sweep applying the endpoint
    relaxation ``w(x) = max(w(x), w(x + ray) - |ray|)``.
    """
    graph = graph or build_cone_graph(omega.N, cone, stencil_radius)
    arr = graph._arrays
    weights = graph.weight_fields(omega.mask)
    size = int(np.prod(arr["shape"]))
    value = np.zeros(size)
    _relax(graph, value, weights)
    ray = arr["ray_offset"]
    ray_cost = float(np.linalg.norm(ray)) * graph.h
    coords, strides = arr["coords"], arr["strides"]
    N = graph.N
    for group in reversed(arr["groups"]):
        cg = coords[group]
        succ = cg + ray
        valid = np.all((succ >= 0) & (succ < N), axis=1)
        if not valid.any():
            continue
        nodes = group[valid]
        cand = value[succ[valid] @ strides] - ray_cost
        value[nodes] = np.maximum(value[nodes], cand)
    return WidthFunctionField(omega=omega, cone=cone, values=value.reshape(arr["shape"]))


# --- derived checks -----------------------------------------------------------

@dataclass(frozen=True)
class DifferenceReport:
    decision: str  # "positive" | "inconclusive"
    margin: float
    width_a: float
    width_e: float
    width_diff: float


def width_difference_positive(
    set_a: GridSet,
    set_e: GridSet,
    cone: Cone,
    schedule,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
    allow_boundary: bool = False,
) -> DifferenceReport:
    """Test whether removing E from A leaves positive width.

    Computes width(A minus B_delta(E)) at the schedule floor and compares
    it to half the width gap (the delta/2 margin of the underlying
    argument).  When the measured widths do not satisfy
    width(E) < width(A) the result is 'inconclusive' rather than an error:
    grid estimates may invert a true strict inequality.
    """
    kw = dict(stencil_radius=stencil_radius, allow_boundary=allow_boundary)
    wa = width(set_a, cone, schedule, set_id="A", **kw).width
    we = width(set_e, cone, schedule, set_id="E", **kw).width
    if we >= wa:
        return DifferenceReport("inconclusive", 0.0, wa, we, 0.0)
    delta = float(schedule[-1])
    remainder = set_a.difference(dilate(set_e, delta))
    if remainder.is_empty():
        return DifferenceReport("inconclusive", 0.0, wa, we, 0.0)
    wd = width(remainder, cone, schedule, set_id="A\\B_delta(E)", allow_boundary=True,
               stencil_radius=stencil_radius).width
    target = (wa - we) / 2.0
    tol = 3.0 * set_a.h * (1.0 + cone.beta)
    decision = "positive" if wd > target - tol else "inconclusive"
    return DifferenceReport(decision, wd - target, wa, we, wd)


def _directions_on_sphere(n: int, count: int) -> list[Direction]:
    if n == 1:
        return [Direction(np.asarray([s])) for s in (1.0, -1.0)][: max(count, 1)]
    if n == 2:
        angles = 2.0 * math.pi * np.arange(count) / count
        return [Direction(np.asarray([math.cos(a), math.sin(a)])) for a in angles]
    pts = []
    golden = math.pi * (3.0 - math.sqrt(5.0))
    for i in range(count):
        z = 1.0 - 2.0 * (i + 0.5) / count
        r = math.sqrt(max(0.0, 1.0 - z * z))
        pts.append(Direction(np.asarray([r * math.cos(golden * i), r * math.sin(golden * i), z])))
    return pts


def _directions_in_cone(cone: Cone, spacing: float) -> list[Direction]:
    """Net of directions inside the cone with chordal spacing ~``spacing``,
    starting from the axis."""
    e = cone.axis.components
    n = cone.n
    if n == 1:
        return [cone.axis]
    half_angle = math.acos(1.0 - cone.sigma)
    step = max(spacing, 1e-3)
    out = [cone.axis]
    if n == 2:
        base = math.atan2(e[1], e[0])
        k = 1
        while k * step < half_angle:
            for s in (1.0, -1.0):
                a = base + s * k * step
                out.append(Direction(np.asarray([math.cos(a), math.sin(a)])))
            k += 1
        return out
    # n == 3: rings of latitude around the axis.
    basis = _orthonormal_complement(e)
    k = 1
    while k * step < half_angle:
        theta = k * step
        ring = max(4, int(math.ceil(2.0 * math.pi * math.sin(theta) / step)))
        for j in range(ring):
            phi = 2.0 * math.pi * j / ring
            v = (
                math.cos(theta) * e
                + math.sin(theta) * (math.cos(phi) * basis[0] + math.sin(phi) * basis[1])
            )
            out.append(Direction.of(v))
        k += 1
    return out


def _orthonormal_complement(e: np.ndarray) -> np.ndarray:
    n = e.size
    basis = []
    for i in range(n):
        v = np.zeros(n)
        v[i] = 1.0
        v = v - (v @ e) * e
        for b in basis:
            v = v - (v @ b) * b
        norm = np.linalg.norm(v)
        if norm > 1e-9:
            basis.append(v / norm)
        if len(basis) == n - 1:
            break
    return np.asarray(basis)


def subcone_search(
    gridset: GridSet,
    cone: Cone,
    finer_sigma: float,
    schedule,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
    tolerance: float | None = None,
    allow_boundary: bool = False,
) -> Direction | None:
    """Heuristic search for a narrower sub-cone keeping positive width.

    Scans a finer_sigma/2 net of directions inside the cone and returns
    the first whose width stays above tolerance; ``None`` means no hit was
    found, which is not a disproof.
    """
    if finer_sigma >= cone.sigma:
        raise ArgumentError("finer_sigma must be smaller than the cone amplitude")
    if gridset.is_empty():
        return None
    h = gridset.h
    if tolerance is None:
        tolerance = 2.0 * (1.0 + beta(finer_sigma)) * (2.0 * float(schedule[-1]) + 2.0 * h)
    for e_prime in _directions_in_cone(cone, finer_sigma / 2.0):
        try:
            rep = width(
                gridset,
                Cone(e_prime, finer_sigma),
                schedule,
                stencil_radius=stencil_radius,
                allow_boundary=allow_boundary,
            )
        except ResolutionError:
            continue
        if rep.width > tolerance:
            return e_prime
    return None


@dataclass(frozen=True)
class SweepRow:
    direction: tuple
    schedule: tuple  # ((delta, value), ...)

    @property
    def final(self) -> float:
        return self.schedule[-1][1]


@dataclass(frozen=True)
class SweepTable:
    sigma: float
    rows: tuple

    @property
    def max_width(self) -> float:
        return max(r.final for r in self.rows)

    def csv_rows(self):
        for r in self.rows:
            for delta, val in r.schedule:
                yield [self.sigma, *r.direction, delta, val]


def uniform_unrectifiability_sweep(
    gridset: GridSet,
    direction_count: int,
    sigma: float,
    schedule,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
    allow_boundary: bool = False,
    workers: int = 1,
) -> SweepTable:
    """Widths along a uniform net of directions; the summary maximum is
    the quantity that must shrink for a purely unrectifiable input.

    Edge-weight fields are shared across directions per neighborhood
    radius (they depend only on the offset and the mask), and jobs merge
    by index so any execution order gives identical output.
    """
    if gridset.touches_boundary() and not allow_boundary:
        raise ArgumentError("set touches the cube boundary")
    sched = _check_schedule(schedule, gridset.h)
    dirs = _directions_on_sphere(gridset.n, direction_count)
    graphs = []
    for d in dirs:
        graphs.append(build_cone_graph(gridset.N, Cone(d, sigma), stencil_radius))
    needed = sorted({o for g in graphs for o in (tuple(int(c) for c in off) for off in g._arrays["offsets"])}, reverse=True)
    values = {i: [] for i in range(len(dirs))}
    for delta in sched:
        omega = dilate(gridset, delta)
        shared = {}
        for o in needed:
            # Pattern data is identical across graphs; borrow any graph that has it.
            for g in graphs:
                if o in g._arrays["patterns"]:
                    shared[o] = g.edge_weight_field(omega.mask, o)
                    break

        def job(i):
            g = graphs[i]
            w = {o: shared[o] for o in (tuple(int(c) for c in off) for off in g._arrays["offsets"])}
            sup, _, _, _ = longest_maximal_path(g, w)
            return sup

        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                sups = list(pool.map(job, range(len(dirs))))
        else:
            sups = [job(i) for i in range(len(dirs))]
        for i, sup in enumerate(sups):
            values[i].append((delta, sup))
    rows = tuple(
        SweepRow(direction=tuple(map(float, dirs[i].components)), schedule=tuple(values[i]))
        for i in range(len(dirs))
    )
    return SweepTable(sigma=sigma, rows=rows)
