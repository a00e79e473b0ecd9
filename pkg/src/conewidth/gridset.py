"""Binary occupancy grids on [0,1]^n and the set operations built on them:
fractal test-set generation, exact Euclidean dilation, smooth cutoff
construction, and exact curve/cell-union intersection length.

Grid conventions (shared package-wide): resolution N means N cells per
axis of size h = 1/N; ``mask[i0, ..., i_{n-1}]`` covers the open box
``prod_d (i_d*h, (i_d+1)*h)``; axis d of the mask is coordinate x_d; cell
centers sit at (i + 0.5)*h.  A grid set plays the "open" role (union of
open boxes) when it stands for a neighborhood in an infimum, and the
"compact" role (union of closed cells) when it stands for the set itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, DomainError, ResolutionError, ResourceError, ValidationError
from .geometry import CanonicalCurve, ConeCurve

SUPPORTED_DIMS = (1, 2, 3)
DEFAULT_CELL_CAP = 1 << 24  # refuse masks with more cells than this

ROLE_COMPACT = "compact"
ROLE_OPEN = "open"


def unit_ball_volume(n: int) -> float:
    """Volume of the Euclidean unit ball: pi^(n/2) / Gamma(n/2 + 1)."""
    return math.pi ** (n / 2.0) / math.gamma(n / 2.0 + 1.0)


@dataclass(frozen=True)
class GridSet:
    """Occupancy mask over a uniform grid on the unit cube."""

    mask: np.ndarray
    role: str = ROLE_COMPACT
    k0: int | None = None  # compactly-interior tag: empty within N/k0 of the boundary

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.ndim not in SUPPORTED_DIMS:
            raise ValidationError(f"supported dimensions are {SUPPORTED_DIMS}, got {m.ndim}")
        if any(s != m.shape[0] for s in m.shape):
            raise ValidationError(f"mask must be cubical, got shape {m.shape}")
        if m.size > DEFAULT_CELL_CAP:
            raise ResourceError(f"mask has {m.size} cells, above cap {DEFAULT_CELL_CAP}")
        if self.role not in (ROLE_COMPACT, ROLE_OPEN):
            raise ValidationError(f"unknown role {self.role!r}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)
        if self.k0 is not None:
            if self.k0 < 2:
                raise ValidationError("compactly-interior tag requires k0 >= 2")
            margin = self.margin_cells()
            if margin is not None and margin * self.k0 < self.N:
                raise ValidationError(
                    f"set tagged compactly interior with k0={self.k0} occupies cells "
                    f"within {margin} layers of the boundary (needs >= {self.N / self.k0:.1f})"
                )

    @property
    def n(self) -> int:
        return self.mask.ndim

    @property
    def N(self) -> int:
        return self.mask.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.N

    def occupied_count(self) -> int:
        return int(self.mask.sum())

    def is_empty(self) -> bool:
        return not self.mask.any()

    def margin_cells(self) -> int | None:
        """Smallest distance (in layers) from an occupied cell to the boundary."""
        if self.is_empty():
            return None
        idx = np.argwhere(self.mask)
        return int(min(idx.min(), (self.N - 1 - idx.max(initial=0)), *(
            min(idx[:, d].min(), self.N - 1 - idx[:, d].max()) for d in range(self.n)
        )))

    def touches_boundary(self) -> bool:
        m = self.margin_cells()
        return m is not None and m == 0

    def with_role(self, role: str) -> "GridSet":
        return GridSet(self.mask, role=role, k0=self.k0)

    def occupied_centers(self) -> np.ndarray:
        """Centers of occupied cells, shape (k, n)."""
        return (np.argwhere(self.mask) + 0.5) * self.h

    def refine(self, factor: int) -> "GridSet":
        """Re-express the same set on a grid ``factor`` times finer."""
        if factor < 1 or int(factor) != factor:
            raise ArgumentError("refinement factor must be a positive integer")
        m = self.mask
        for d in range(self.n):
            m = m.repeat(factor, axis=d)
        return GridSet(m, role=self.role, k0=self.k0)

    def union(self, other: "GridSet") -> "GridSet":
        self._check_compatible(other)
        return GridSet(self.mask | other.mask, role=self.role)

    def difference(self, other: "GridSet") -> "GridSet":
        self._check_compatible(other)
        return GridSet(self.mask & ~other.mask, role=self.role)

    def is_subset_of(self, other: "GridSet") -> bool:
        self._check_compatible(other)
        return bool(np.all(~self.mask | other.mask))

    def _check_compatible(self, other: "GridSet"):
        if self.mask.shape != other.mask.shape:
            raise ArgumentError("grid sets live on different grids")

    # --- file formats ------------------------------------------------------

    def to_rle(self) -> list[int]:
        """Row-major run lengths, alternating and starting with a 0-run."""
        flat = self.mask.ravel()
        runs: list[int] = []
        current = False
        count = 0
        for v in flat:
            if v == current:
                count += 1
            else:
                runs.append(count)
                current = bool(v)
                count = 1
        runs.append(count)
        return runs

    @staticmethod
    def _mask_from_rle(runs, n, N) -> np.ndarray:
        flat = np.zeros(N**n, dtype=bool)
        pos = 0
        val = False
        for r in runs:
            r = int(r)
            if r < 0 or pos + r > flat.size:
                raise ValidationError("run-length data does not fit the declared grid")
            flat[pos : pos + r] = val
            pos += r
            val = not val
        if pos != flat.size:
            raise ValidationError("run-length data does not cover the declared grid")
        return flat.reshape((N,) * n)

    def to_text(self) -> str:
        """Text format: header line ``n N k0 flag`` then wrapped RLE counts."""
        head = f"{self.n} {self.N} {self.k0 or 0} {self.role}"
        runs = self.to_rle()
        lines = [head]
        for i in range(0, len(runs), 16):
            lines.append(" ".join(str(r) for r in runs[i : i + 16]))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "GridSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValidationError("empty grid set file")
        head = lines[0].split()
        if len(head) != 4:
            raise ValidationError("grid set header must be 'n N k0 flag'")
        n, N, k0 = int(head[0]), int(head[1]), int(head[2])
        role = head[3]
        runs = [int(tok) for ln in lines[1:] for tok in ln.split()]
        mask = GridSet._mask_from_rle(runs, n, N)
        return GridSet(mask, role=role, k0=k0 or None)

    def to_json(self) -> str:
        return json.dumps(
            {"n": self.n, "N": self.N, "k0": self.k0, "role": self.role, "rle": self.to_rle()}
        )

    @staticmethod
    def from_json(text: str) -> "GridSet":
        obj = json.loads(text)
        mask = GridSet._mask_from_rle(obj["rle"], int(obj["n"]), int(obj["N"]))
        return GridSet(mask, role=obj.get("role", ROLE_COMPACT), k0=obj.get("k0"))


# --- generators ------------------------------------------------------------

@dataclass(frozen=True)
class IfsSpec:
    """Iterated function system with contraction ratio 1/base and images
    placed at integer corner offsets of the base subdivision.

    ``offsets`` are integer tuples in {0..base-1}^n selecting where each
    contracted copy lands; copies must be pairwise disjoint at depth 1.
    """

    base: int
    offsets: tuple
    depth: int

    def __post_init__(self):
        if self.base < 2:
            raise DomainError("contraction base must be >= 2")
        if self.depth < 0:
            raise DomainError("depth must be >= 0")
        offs = tuple(tuple(int(c) for c in o) for o in self.offsets)
        n = len(offs[0])
        for o in offs:
            if len(o) != n or any(c < 0 or c >= self.base for c in o):
                raise ValidationError("offsets must be integer corners of the subdivision")
        if len(set(offs)) != len(offs):
            raise ValidationError("offsets place depth-1 images on top of each other")
        object.__setattr__(self, "offsets", offs)

    @property
    def n(self) -> int:
        return len(self.offsets[0])

    def cells(self) -> np.ndarray:
        """Occupied cell indices on the native (base^depth)^n lattice."""
        idx = np.zeros((1, self.n), dtype=np.int64)
        offs = np.asarray(self.offsets, dtype=np.int64)
        for _ in range(self.depth):
            idx = (idx[:, None, :] * self.base + offs[None, :, :]).reshape(-1, self.n)
        return idx


def four_corner_cantor(
    depth: int,
    k0: int | None = None,
    cell_cap: int = DEFAULT_CELL_CAP,
) -> GridSet:
    """Self-similar union of 4^depth squares with contraction ratio 1/4 at
    the four corners of the unit square.

    With ``k0=None`` the set lives on the full square at resolution
    N = 4^depth.  With an integer ``k0 >= 3`` the set is rescaled into the
    window [1/k0, 1-1/k0]^2 and returned on the coarsest grid where both
    the window offset and the squares align exactly with cell boundaries
    (N = k0 * 4^depth / (k0 - 2)); misaligned combinations are refused.
    Either way the set occupies exactly 4^depth cells.
    """
    if depth < 0:
        raise DomainError("depth must be >= 0")
    spec = IfsSpec(base=4, offsets=((0, 0), (3, 0), (0, 3), (3, 3)), depth=depth)
    native = 4**depth
    if k0 is None:
        N, margin = native, 0
    else:
        if k0 < 3:
            raise DomainError("window inset requires k0 >= 3 (k0=2 leaves no window)")
        num = k0 * native
        if num % (k0 - 2) != 0 or (native % (k0 - 2) != 0):
            raise ResolutionError(
                f"window [1/{k0}, 1-1/{k0}] does not align with the depth-{depth} "
                f"lattice; choose k0 with (k0-2) dividing 4^depth"
            )
        N = num // (k0 - 2)
        margin = native // (k0 - 2)
    if N**2 > cell_cap:
        raise ResourceError(f"grid {N}^2 exceeds the cell cap {cell_cap}")
    mask = np.zeros((N, N), dtype=bool)
    cells = spec.cells() + margin
    mask[cells[:, 0], cells[:, 1]] = True
    return GridSet(mask, role=ROLE_COMPACT, k0=k0)


# --- metric operations ------------------------------------------------------

def center_distances(gridset: GridSet) -> np.ndarray:
    """Euclidean distance (absolute units) from each cell center to the
    nearest occupied cell center; zero on the set, inf when empty."""
    if gridset.is_empty():
        return np.full(gridset.mask.shape, np.inf)
    d = ndimage.distance_transform_edt(~gridset.mask)
    return d * gridset.h


def dilate(gridset: GridSet, delta: float) -> GridSet:
    """Metric neighborhood at grid scale: keep every cell whose center lies
    within delta + h/2 of an occupied cell center (exact distance
    transform, monotone in delta; delta=0 returns the set unchanged)."""
    if delta < 0:
        raise DomainError("dilation radius must be >= 0")
    if gridset.is_empty() or delta == 0.0:
        return GridSet(gridset.mask, role=ROLE_OPEN, k0=None)
    dist = center_distances(gridset)
    return GridSet(dist <= delta + gridset.h / 2.0, role=ROLE_OPEN, k0=None)


def interp_cell_centers(values: np.ndarray, points: np.ndarray, h: float) -> np.ndarray:
    """Multilinear interpolation of a field sampled at cell centers.

    ``values`` has shape (N,)*n, ``points`` (k, n) in [0,1]^n; coordinates
    are clamped to the center lattice so queries in the half-cell boundary
    collar extend the field constantly.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = values.ndim
    N = values.shape[0]
    u = pts / h - 0.5
    u = np.clip(u, 0.0, N - 1.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), N - 2) if N > 1 else np.zeros_like(u, dtype=np.int64)
    frac = u - i0
    out = np.zeros(pts.shape[0])
    for corner in range(1 << n):
        idx = []
        w = np.ones(pts.shape[0])
        for d in range(n):
            bit = (corner >> d) & 1
            idx.append(i0[:, d] + bit)
            w = w * (frac[:, d] if bit else 1.0 - frac[:, d])
        out += w * values[tuple(idx)]
    return out


@dataclass(frozen=True)
class CutoffFunction:
    """Grid-sampled bump: 1 on the base set, 0 outside its margin/2
    neighborhood, with slope 2/margin (well inside the 256*alpha(n)/margin
    Lipschitz budget)."""

    omega: GridSet
    margin: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if v.shape != self.omega.mask.shape:
            raise ValidationError("cutoff samples must live on the base grid")
        if v.min() < -1e-12 or v.max() > 1.0 + 1e-12:
            raise ValidationError("cutoff values must lie in [0,1]")
        if not np.all(v[self.omega.mask] >= 1.0 - 1e-12):
            raise ValidationError("cutoff must equal 1 on its base set")
        budget = self.lipschitz_budget()
        measured = self.discrete_lipschitz()
        if measured > budget * (1.0 + 1e-9):
            raise ValidationError(
                f"cutoff discrete Lipschitz constant {measured:.6g} exceeds "
                f"budget {budget:.6g}"
            )

    def lipschitz_budget(self) -> float:
        return 256.0 * unit_ball_volume(self.omega.n) / self.margin

    def discrete_lipschitz(self) -> float:
        worst = 0.0
        for d in range(self.omega.n):
            dv = np.abs(np.diff(self.values, axis=d))
            if dv.size:
                worst = max(worst, float(dv.max()) / self.omega.h)
        return worst

    def __call__(self, points) -> np.ndarray:
        return interp_cell_centers(self.values, points, self.omega.h)


def build_cutoff(omega: GridSet, margin: float) -> CutoffFunction:
    """Clamped scaled distance transform: psi = clip(1 - 2*dist/margin, 0, 1).

    Requires margin > 2h so the ramp is resolvable on the grid.
    """
    if margin <= 2.0 * omega.h:
        raise ResolutionError(
            f"cutoff margin {margin:.6g} is not above the 2h={2 * omega.h:.6g} floor"
        )
    dist = center_distances(omega)
    values = np.clip(1.0 - 2.0 * dist / margin, 0.0, 1.0)
    return CutoffFunction(omega, margin, values)


# --- curve clipping ---------------------------------------------------------

def _segment_cell_intervals(p: np.ndarray, q: np.ndarray, N: int):
    """Split the segment p->q (unit-cube coordinates) at every gridline of
    the N-grid it crosses; yield (t0, t1, cell_index) per piece with the
    cell classified by the piece midpoint."""
    h = 1.0 / N
    d = q - p
    ts = [0.0, 1.0]
    for axis in range(p.size):
        if d[axis] == 0.0:
            continue
        lo, hi = sorted((p[axis], q[axis]))
        k0 = math.floor(lo / h) + 1
        k1 = math.ceil(hi / h) - 1
        for k in range(k0, k1 + 1):
            t = (k * h - p[axis]) / d[axis]
            if 0.0 < t < 1.0:
                ts.append(t)
    ts = sorted(set(ts))
    for t0, t1 in zip(ts[:-1], ts[1:]):
        if t1 - t0 < 1e-15:
            continue
        mid = p + 0.5 * (t0 + t1) * d
        cell = np.floor(mid / h).astype(np.int64)
        yield t0, t1, cell


def curve_set_intersection_length(gridset: GridSet, curve) -> float:
    """Arc length of the curve portion inside the open cell union of the
    set, by exact segment/cell clipping (no sampling error beyond float
    rounding).

    Accepts either a ConeCurve or a CanonicalCurve; pieces are clipped
    against the grid and summed, so the result is additive over disjoint
    sets and monotone in the set argument.
    """
    if isinstance(curve, CanonicalCurve):
        verts = curve.vertices()
    elif isinstance(curve, ConeCurve):
        verts = curve.vertices
    else:
        verts = np.asarray(curve, dtype=float)
    if verts.shape[1] != gridset.n:
        raise ArgumentError("curve dimension does not match the grid")
    N = gridset.N
    total = 0.0
    for p, q in zip(verts[:-1], verts[1:]):
        seglen = float(np.linalg.norm(q - p))
        if seglen == 0.0:
            continue
        for t0, t1, cell in _segment_cell_intervals(p, q, N):
            if np.all(cell >= 0) and np.all(cell < N) and gridset.mask[tuple(cell)]:
                total += (t1 - t0) * seglen
    return total
