"""Construction that destroys directional differentiability of a smooth
map on a thin set E: a near-identity field G assembled from width
functions of a small neighborhood of E, a localized bump H along a chosen
direction, and the perturbed map

    F(x) = (1-eta) * ( f(x) - Df(x)[G(x)] + D2f(x)[G(x),G(x)]/2 + H(x)*u ).

On E the difference quotients of F along the bump direction point near u
while F stays uniformly close to f.  The smallness couplings between the
parameters (the budget) force sub-grid scales at desk resolutions, so a
"relaxed" mode scales every coupling by a recorded factor; results
produced that way are marked as outside the guaranteed regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, CalibrationError, ParameterError, ValidationError
from .geometry import Cone, Direction, beta
from .gridset import (
    CutoffFunction,
    GridSet,
    build_cutoff,
    dilate,
    interp_cell_centers,
    unit_ball_volume,
)
from .width import (
    DEFAULT_STENCIL_RADIUS,
    build_cone_graph,
    longest_maximal_path,
    width_function,
)

ETA_CAP = 0.05  # roughing strength lives in (0, 1/20)


# --- smooth inputs -----------------------------------------------------------

@dataclass(frozen=True)
class SmoothTestFunction:
    """Bundle of a smooth 1-Lipschitz map with exact derivative evaluators.

    Evaluators are vectorized: points (k, n) map to values (k, m),
    Jacobians (k, m, n), second derivatives (k, m, n, n), and third
    derivatives (k, m, n, n, n).  ``sup_f``, ``sup_d2``, ``sup_d3`` are
    conservative sup-norm bounds over the unit cube.
    """

    name: str
    n: int
    m: int
    f: callable = field(repr=False)
    df: callable = field(repr=False)
    d2f: callable = field(repr=False)
    d3f: callable = field(repr=False)
    sup_f: float = 0.0
    sup_d2: float = 0.0
    sup_d3: float = 0.0

    def validate(self, rng=None, points: int = 1000, tol: float = 1e-6):
        """Central-difference consistency of each derivative order with the
        one below it, plus the sampled 1-Lipschitz bound on the Jacobian."""
        rng = rng or np.random.default_rng(7)
        step = 1e-5
        x = rng.uniform(step, 1.0 - step, size=(points, self.n))
        jac = self.df(x)
        d2 = self.d2f(x)
        d3 = self.d3f(x)
        for axis in range(self.n):
            dx = np.zeros(self.n)
            dx[axis] = step
            fd1 = (self.f(x + dx) - self.f(x - dx)) / (2 * step)
            if np.max(np.abs(fd1 - jac[:, :, axis])) > tol:
                raise ValidationError(f"{self.name}: Jacobian mismatch along axis {axis}")
            fd2 = (self.df(x + dx) - self.df(x - dx)) / (2 * step)
            if np.max(np.abs(fd2 - d2[:, :, :, axis])) > tol:
                raise ValidationError(f"{self.name}: second derivative mismatch along axis {axis}")
            fd3 = (self.d2f(x + dx) - self.d2f(x - dx)) / (2 * step)
            if np.max(np.abs(fd3 - d3[:, :, :, :, axis])) > tol:
                raise ValidationError(f"{self.name}: third derivative mismatch along axis {axis}")
        norms = np.linalg.norm(jac, ord=2, axis=(1, 2))
        if norms.max() > 1.0 + 1e-9:
            raise ValidationError(f"{self.name}: sampled Jacobian norm {norms.max()} exceeds 1")
        return self


def zero_map(n: int, m: int) -> SmoothTestFunction:
    return SmoothTestFunction(
        name="zero",
        n=n,
        m=m,
        f=lambda x: np.zeros((np.atleast_2d(x).shape[0], m)),
        df=lambda x: np.zeros((np.atleast_2d(x).shape[0], m, n)),
        d2f=lambda x: np.zeros((np.atleast_2d(x).shape[0], m, n, n)),
        d3f=lambda x: np.zeros((np.atleast_2d(x).shape[0], m, n, n, n)),
        sup_f=0.0,
    )


def linear_isometry_map(n: int, m: int, scale: float = 0.9, frame: np.ndarray | None = None) -> SmoothTestFunction:
    if not 0.0 < scale <= 1.0:
        raise ArgumentError("scale must lie in (0,1]")
    A = frame if frame is not None else np.eye(m, n)
    sA = scale * A

    def f(x):
        return np.atleast_2d(x) @ sA.T

    def df(x):
        k = np.atleast_2d(x).shape[0]
        return np.broadcast_to(sA, (k, m, n)).copy()

    return SmoothTestFunction(
        name=f"linear_{scale:g}",
        n=n,
        m=m,
        f=f,
        df=df,
        d2f=lambda x: np.zeros((np.atleast_2d(x).shape[0], m, n, n)),
        d3f=lambda x: np.zeros((np.atleast_2d(x).shape[0], m, n, n, n)),
        sup_f=scale * math.sqrt(n),
    )


def sine_map(
    n: int,
    m: int,
    linear_scale: float = 0.65,
    amplitude: float = 0.1,
    frequency: float = 3.0,
) -> SmoothTestFunction:
    """Linear isometric part plus a one-mode sine ripple; the Jacobian norm
    is bounded by linear_scale + amplitude*frequency (kept below 1)."""
    if linear_scale + amplitude * frequency > 1.0:
        raise ArgumentError("parameters violate the 1-Lipschitz budget")
    A = np.eye(m, n)
    d = np.ones(n) / math.sqrt(n)
    w = np.zeros(m)
    w[m - 1] = 1.0
    a, om = amplitude, frequency

    def phase(x):
        return om * (np.atleast_2d(x) @ d)

    def f(x):
        return np.atleast_2d(x) @ (linear_scale * A.T) + a * np.sin(phase(x))[:, None] * w

    def df(x):
        k = np.atleast_2d(x).shape[0]
        out = np.broadcast_to(linear_scale * A, (k, m, n)).copy()
        out += a * om * np.cos(phase(x))[:, None, None] * np.multiply.outer(w, d)
        return out

    def d2f(x):
        return -a * om**2 * np.sin(phase(x))[:, None, None, None] * np.multiply.outer(
            w, np.multiply.outer(d, d)
        )

    def d3f(x):
        return -a * om**3 * np.cos(phase(x))[:, None, None, None, None] * np.multiply.outer(
            w, np.multiply.outer(d, np.multiply.outer(d, d))
        )

    return SmoothTestFunction(
        name=f"sine_{amplitude:g}x{frequency:g}",
        n=n,
        m=m,
        f=f,
        df=df,
        d2f=d2f,
        d3f=d3f,
        sup_f=linear_scale * math.sqrt(n) + amplitude,
        sup_d2=a * om**2,
        sup_d3=a * om**3,
    )


def smooth_catalog(n: int = 2, m: int = 2) -> dict:
    return {
        "zero": zero_map(n, m),
        "linear": linear_isometry_map(n, m),
        "sine": sine_map(n, m),
    }


# --- parameters ----------------------------------------------------------------

@dataclass(frozen=True)
class RoughingParams:
    """Parameter bundle for the roughing construction.

    ``relax_factor`` = 1 enforces the strict smallness budget; larger
    values scale every coupled bound (the budget itself, the /16 in the
    neighborhood radius, and the bump size target) by the factor, and mark
    all downstream reports as outside the guaranteed regime.
    """

    eta_rough: float
    epsilon: float
    sigma: float
    lam: float
    v: Direction
    u: np.ndarray
    basis: tuple = ()
    relax_factor: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.eta_rough < ETA_CAP:
            raise ParameterError(f"eta_rough must lie in (0, {ETA_CAP})", ["eta_range"])
        for nm, val in (("epsilon", self.epsilon), ("sigma", self.sigma), ("lam", self.lam)):
            if not 0.0 < val < 1.0:
                raise ParameterError(f"{nm} must lie in (0,1)", [f"{nm}_range"])
        if self.relax_factor < 1.0:
            raise ParameterError("relax_factor must be >= 1", ["relax_range"])
        u = np.asarray(self.u, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ParameterError("target direction u must be a unit vector", ["u_unit"])
        u = u.copy()
        u.flags.writeable = False
        object.__setattr__(self, "u", u)
        basis = self.basis or tuple(Direction.axis(self.v.n, i) for i in range(self.v.n))
        gram = np.asarray([b.components for b in basis])
        if not np.allclose(gram @ gram.T, np.eye(len(basis)), atol=1e-9):
            raise ParameterError("basis directions must be orthonormal", ["basis"])
        object.__setattr__(self, "basis", tuple(basis))

    @property
    def n(self) -> int:
        return self.v.n

    @property
    def strict(self) -> bool:
        return self.relax_factor == 1.0

    def budget_bounds(self, sup_d2: float, sup_d3: float) -> dict:
        n, eta = self.n, self.eta_rough
        return {
            "eta_sq_over_dim": eta**2 / (2**10 * (n + 1) ** 4),
            "eta_over_ball_volume": eta / (2**20 * unit_ball_volume(n)),
            "eta_over_d2": (eta / (2**10 * n * sup_d2)) if sup_d2 > 0 else math.inf,
            "sqrt_eta_over_d3": math.sqrt(eta) / (2**10 * n * (1.0 + sup_d3)),
        }

    def budget_violations(self, sup_d2: float, sup_d3: float) -> list:
        total = self.sigma + self.epsilon + self.lam
        cap = self.relax_factor * min(self.budget_bounds(sup_d2, sup_d3).values())
        if total < cap:
            return []
        return [
            f"sigma+epsilon+lam = {total:.3g} is not below "
            f"{'relaxed ' if not self.strict else ''}budget {cap:.3g}"
        ]

    def check_budget(self, f: SmoothTestFunction):
        bad = self.budget_violations(f.sup_d2, f.sup_d3)
        if bad:
            raise ParameterError("roughing parameter budget violated: " + "; ".join(bad), bad)


# --- calibration ----------------------------------------------------------------

def width_sup(gridset_open: GridSet, cone: Cone, stencil_radius: int, graph=None) -> float:
    """Supremum over maximal discrete cone curves of in-set arc length."""
    graph = graph or build_cone_graph(gridset_open.N, cone, stencil_radius)
    sup, _, _, _ = longest_maximal_path(graph, graph.weight_fields(gridset_open.mask))
    return sup


def calibrate_delta(
    E: GridSet,
    basis,
    sigma: float,
    epsilon: float,
    delta0: float = 0.25,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
):
    """Per basis direction, halve the neighborhood radius until the best
    cone curve collects less than epsilon inside B_delta(E); the 2h grid
    floor is a hard stop.

    Returns (deltas, achieved sup values), one pair per direction.
    """
    h = E.h
    deltas, values = [], []
    for e in basis:
        graph = build_cone_graph(E.N, Cone(e, sigma), stencil_radius)
        delta = delta0
        hit = None
        while delta >= 2.0 * h - 1e-12:
            val = width_sup(dilate(E, delta), graph.cone, stencil_radius, graph)
            if val < epsilon:
                hit = (delta, val)
                break
            delta /= 2.0
        if hit is None:
            raise CalibrationError(
                f"no neighborhood radius above the 2h floor keeps curve gain below "
                f"{epsilon:.3g} along {tuple(e.components)} (best {val:.3g}); the set is "
                f"not thin enough at this resolution",
                achieved=val,
            )
        deltas.append(hit[0])
        values.append(hit[1])
    return deltas, values


def calibrate_theta(
    E: GridSet,
    v: Direction,
    sigma: float,
    target: float,
    theta0: float,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
):
    """Largest dyadic bump radius theta <= theta0 whose neighborhood keeps
    the width function along the bump cone below target everywhere."""
    graph = build_cone_graph(E.N, Cone(v, sigma), stencil_radius)
    theta = theta0
    floor = E.h / 4.0
    while True:
        wf = width_function(dilate(E, theta), graph.cone, stencil_radius, graph=graph)
        sup = float(wf.values.max())
        if sup <= target:
            return theta, wf
        if theta <= floor:
            raise CalibrationError(
                f"bump radius floor reached with width-function sup {sup:.3g} > "
                f"target {target:.3g}",
                achieved=sup,
            )
        theta = max(theta / 2.0, floor)


# --- fields ----------------------------------------------------------------------

@dataclass(frozen=True)
class GField:
    """Near-identity field: component i is the width function of the
    delta_e-neighborhood of E along the i-th basis cone, scaled by
    1/(1+beta)."""

    values: np.ndarray = field(repr=False)  # (n, N, ..., N)
    h: float = 0.0
    sigma: float = 0.0
    delta_e: float = 0.0
    delta_i: tuple = ()

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.stack(
            [interp_cell_centers(self.values[i], pts, self.h) for i in range(self.values.shape[0])],
            axis=1,
        )

    def sup_norm(self) -> float:
        """max over grid nodes of the Euclidean norm of the field."""
        return float(np.sqrt((self.values**2).sum(axis=0)).max())


@dataclass(frozen=True)
class HField:
    """Localized bump: cutoff times the width function along the bump
    direction cone, scaled by 1/(1+beta)."""

    values: np.ndarray = field(repr=False)
    cutoff: CutoffFunction = None
    h: float = 0.0
    theta: float = 0.0
    target: float = 0.0

    def __call__(self, points) -> np.ndarray:
        return interp_cell_centers(self.values, np.atleast_2d(points), self.h)


def resolve_delta_e(params: RoughingParams, deltas) -> float:
    """Neighborhood radius for the G field: min(delta_i, epsilon)/16 in the
    strict regime; the relax factor scales it back up, capped at
    min(delta_i, epsilon) so the calibrated curve-gain bound still covers
    the neighborhood actually used."""
    base = min(list(deltas) + [params.epsilon])
    return min(base / 16.0 * params.relax_factor, base)


def build_G(
    E: GridSet,
    params: RoughingParams,
    deltas=None,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
) -> GField:
    """Assemble the near-identity field from per-direction width functions."""
    if deltas is None:
        deltas, _ = calibrate_delta(E, params.basis, params.sigma, params.epsilon,
                                    stencil_radius=stencil_radius)
    delta_e = resolve_delta_e(params, deltas)
    omega = dilate(E, delta_e)
    scale = 1.0 + beta(params.sigma)
    fields = []
    for e in params.basis:
        wf = width_function(omega, Cone(e, params.sigma), stencil_radius)
        fields.append(wf.values / scale)
    return GField(
        values=np.stack(fields),
        h=E.h,
        sigma=params.sigma,
        delta_e=delta_e,
        delta_i=tuple(deltas),
    )


def build_H(
    E: GridSet,
    params: RoughingParams,
    delta_e: float,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
) -> HField:
    """Assemble the bump field: calibrate the bump radius, build the cutoff
    with margin delta_e, and multiply pointwise.

    The strict regime requires theta < lam*delta_e/2 with the width
    function below the same value; relaxing scales that target, but the
    radius stays within delta_e/2 (so the bump support sits inside the G
    neighborhood) and the target within lam*epsilon (so the sup-distance
    bound keeps its lam*epsilon slack).
    """
    strict_cap = params.lam * delta_e / 2.0
    target = min(strict_cap * params.relax_factor, params.lam * params.epsilon)
    theta0 = min(0.999 * strict_cap * params.relax_factor, delta_e / 2.0)
    theta, wf = calibrate_theta(E, params.v, params.sigma, target, theta0,
                                stencil_radius=stencil_radius)
    support = dilate(E, theta)
    cutoff = build_cutoff(support, delta_e)
    scale = 1.0 + beta(params.sigma)
    values = cutoff.values * wf.values / scale
    return HField(values=values, cutoff=cutoff, h=E.h, theta=theta, target=target)


# --- the roughed function ----------------------------------------------------------

@dataclass(frozen=True)
class RoughenedFunction:
    """Composite evaluator of the roughing formula over sampled fields.

    At grid nodes the evaluator is the defining formula exactly; between
    nodes the fields G and H are interpolated multilinearly.
    """

    base: SmoothTestFunction
    params: RoughingParams
    gfield: GField
    hfield: HField
    E: GridSet
    outside_theorem: bool = False

    @property
    def m(self) -> int:
        return self.base.m

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        single = np.asarray(points).ndim == 1
        f = self.base
        eta = self.params.eta_rough
        G = self.gfield(pts)
        H = self.hfield(pts)
        val = f.f(pts)
        jac = f.df(pts)
        d2 = f.d2f(pts)
        out = (1.0 - eta) * (
            val
            - np.einsum("kmn,kn->km", jac, G)
            + 0.5 * np.einsum("kmnp,kn,kp->km", d2, G, G)
            + H[:, None] * self.params.u
        )
        return out[0] if single else out

    def jacobian_norms(self, points, step: float | None = None) -> np.ndarray:
        """Operator norms of central-difference Jacobians of the composite
        evaluator (the fields are piecewise multilinear, so this samples
        the a.e. derivative)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = step if step is not None else self.E.h / 4.0
        cols = []
        for axis in range(self.base.n):
            dx = np.zeros(self.base.n)
            dx[axis] = s
            hi = np.clip(pts + dx, 0.0, 1.0)
            lo = np.clip(pts - dx, 0.0, 1.0)
            denom = (hi - lo)[:, axis]
            cols.append((self(hi) - self(lo)) / denom[:, None])
        jac = np.stack(cols, axis=2)
        return np.linalg.norm(jac, ord=2, axis=(1, 2))


def rough(
    f: SmoothTestFunction,
    E: GridSet,
    params: RoughingParams,
    stencil_radius: int = DEFAULT_STENCIL_RADIUS,
) -> RoughenedFunction:
    """Build the roughed function; identical inputs produce bit-identical
    sampled fields.  Budget-violating parameters are rejected with the
    violated bound named."""
    if f.n != params.n:
        raise ArgumentError("function and parameters disagree on the source dimension")
    if np.asarray(params.u).size != f.m:
        raise ArgumentError("target direction u must live in the function's target space")
    params.check_budget(f)
    deltas, _ = calibrate_delta(E, params.basis, params.sigma, params.epsilon,
                                stencil_radius=stencil_radius)
    gf = build_G(E, params, deltas=deltas, stencil_radius=stencil_radius)
    hf = build_H(E, params, gf.delta_e, stencil_radius=stencil_radius)
    return RoughenedFunction(
        base=f,
        params=params,
        gfield=gf,
        hfield=hf,
        E=E,
        outside_theorem=not params.strict,
    )


def sup_distance_bound(F: RoughenedFunction) -> float:
    """The closed-form bound on max |f - F| implied by the field bounds:
    eta*|f| + (1-eta)(sqrt(n)*eps + |D2f|*n*eps^2 + lam*eps)."""
    p, f = F.params, F.base
    n = f.n
    return (
        p.eta_rough * f.sup_f
        + (1.0 - p.eta_rough)
        * (math.sqrt(n) * p.epsilon + f.sup_d2 * n * p.epsilon**2 + p.lam * p.epsilon)
    )


def estimate_h_star(
    F: RoughenedFunction,
    sample_points: np.ndarray | None = None,
) -> float:
    """Largest dyadic step where the Taylor remainders of the base map are
    dominated by the roughing strength, capped below min(eta, theta/2).

    The remainders are evaluated directly from the exact derivative
    bundle, so the estimate involves no truncation guesswork.
    """
    f = F.base
    p = F.params
    eta = p.eta_rough
    cap = 0.999 * min(eta, F.hfield.theta / 2.0)
    if sample_points is None:
        pts = F.E.occupied_centers()
    else:
        pts = np.atleast_2d(sample_points)
    v = p.v.components
    scale = cap
    for _ in range(60):
        y = np.clip(pts + scale * v, 0.0, 1.0)
        s = scale
        r = f.f(y) - f.f(pts) - s * np.einsum("kmn,n->km", f.df(pts), v) \
            - 0.5 * s * s * np.einsum("kmnp,n,p->km", f.d2f(pts), v, v)
        big_r = f.df(y) - f.df(pts) - s * np.einsum("kmnp,p->kmn", f.d2f(pts), v)
        cal_r = f.d2f(y) - f.d2f(pts) - s * np.einsum("kmnpq,q->kmnp", f.d3f(pts), v)
        c1 = np.abs(r).max() / s < eta
        c2 = (np.abs(big_r).max() + np.abs(cal_r).max()) / s <= 1.0
        if c1 and c2:
            return scale
        scale /= 2.0
    raise CalibrationError("no step scale dominates the Taylor remainders", achieved=scale)


@dataclass(frozen=True)
class QuotientReport:
    """verify_quotients outcome: per-E-node worst deviation of the
    difference quotient of F along the bump direction from the target u,
    against the bound 10*eta - h_star (+ stated grid tolerance)."""

    h_star: float
    bound: float
    grid_tolerance: float
    node_count: int
    pass_count: int
    worst_deviation: float
    worst_node: tuple
    outside_theorem: bool
    deviations: np.ndarray = field(repr=False, default=None)
    nodes: np.ndarray = field(repr=False, default=None)

    @property
    def pass_fraction(self) -> float:
        return self.pass_count / self.node_count if self.node_count else 1.0

    def csv_rows(self):
        for node, dev in zip(self.nodes, self.deviations):
            yield [*node, dev, self.bound + self.grid_tolerance, int(dev <= self.bound + self.grid_tolerance)]


def verify_quotients(
    F: RoughenedFunction,
    steps_per_side: int = 2,
    boundary_margin_cells: int = 2,
) -> QuotientReport:
    """Scan difference quotients of F over steps in (h*, 2h*) on both sides
    at every interior E-node and compare |quotient - u| against
    10*eta - h* plus the grid tolerance 3h(1+beta).

    Failures are report entries, never exceptions.
    """
    p = F.params
    E = F.E
    h_star = estimate_h_star(F)
    eta = p.eta_rough
    bound = 10.0 * eta - h_star
    tol = 3.0 * E.h * (1.0 + beta(p.sigma))
    nodes_idx = np.argwhere(E.mask)
    margin = boundary_margin_cells
    keep = np.all((nodes_idx >= margin) & (nodes_idx < E.N - margin), axis=1)
    nodes_idx = nodes_idx[keep]
    pts = (nodes_idx + 0.5) * E.h
    v = p.v.components
    u = p.u
    base = F(pts)
    worst = np.zeros(len(pts))
    fractions = np.linspace(1.0, 2.0, steps_per_side + 2)[1:-1]
    for frac in fractions:
        for sign in (1.0, -1.0):
            hstep = sign * frac * h_star
            q = (F(np.clip(pts + hstep * v, 0.0, 1.0)) - base) / hstep
            worst = np.maximum(worst, np.linalg.norm(q - u, axis=1))
    ok = worst <= bound + tol
    worst_i = int(np.argmax(worst)) if len(pts) else 0
    return QuotientReport(
        h_star=h_star,
        bound=bound,
        grid_tolerance=tol,
        node_count=len(pts),
        pass_count=int(ok.sum()),
        worst_deviation=float(worst.max()) if len(pts) else 0.0,
        worst_node=tuple(int(c) for c in nodes_idx[worst_i]) if len(pts) else (),
        outside_theorem=F.outside_theorem,
        deviations=worst,
        nodes=nodes_idx,
    )


def gradient_bound_chain(params: RoughingParams, f: SmoothTestFunction) -> dict:
    """Numeric evaluation of the two regional operator-norm bounds on the
    derivative of the roughed map (near the set and away from it); both
    must come out below 1 - eta^2 for budget-satisfying parameters."""
    n = params.n
    eta = params.eta_rough
    b = beta(params.sigma)
    interior = (1.0 - eta) * (
        2.0 * f.sup_d2 * math.sqrt(n) * params.epsilon
        + f.sup_d3 * n * params.epsilon**2
        + math.sqrt(n + 1.0) * b
        + 256.0 * unit_ball_volume(n) * params.lam
        + 1.0
    )
    exterior = (1.0 - eta) * (
        1.0
        + n**2 * b
        + 2.0 * f.sup_d2 * math.sqrt(n) * params.epsilon
        + f.sup_d3 * n * params.epsilon**2
    )
    return {
        "interior": interior,
        "exterior": exterior,
        "target": 1.0 - eta**2,
        "ok": max(interior, exterior) < 1.0 - eta**2,
    }
