"""Numerical topology diagnostics: winding numbers, loop contractibility in
planar complements of obstacles, reachable-tuple sampling, and bisection for
initial states that force a continuous policy into a constraint violation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, PreconditionError

POINT_ON_LOOP_TOL = 1e-9


@dataclass
class PlanarLoop:
    """Closed planar polyline: first point equals the last."""
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise ConfigError("loop needs at least 4 planar points")
        if not np.allclose(pts[0], pts[-1], atol=0.0):
            raise ConfigError("loop must be closed (first point == last)")
        if not np.all(np.isfinite(pts)):
            raise ConfigError("loop coordinates must be finite")
        self.points = pts

    def reversed(self) -> "PlanarLoop":
        return PlanarLoop(self.points[::-1].copy())


@dataclass
class DiscObstacle:
    center: np.ndarray
    radius: float

    def representative_point(self) -> np.ndarray:
        return np.asarray(self.center, dtype=np.float64)

    def intersects(self, loop: PlanarLoop) -> bool:
        c = np.asarray(self.center, dtype=np.float64)
        return bool(np.any(_segment_distances(loop.points, c) <= self.radius))


@dataclass
class PolygonObstacle:
    vertices: np.ndarray  # closed or open ring; interior point is the centroid

    def representative_point(self) -> np.ndarray:
        v = np.asarray(self.vertices, dtype=np.float64)
        if np.allclose(v[0], v[-1]):
            v = v[:-1]
        return v.mean(axis=0)

    def intersects(self, loop: PlanarLoop) -> bool:
        ring = np.asarray(self.vertices, dtype=np.float64)
        if not np.allclose(ring[0], ring[-1]):
            ring = np.vstack([ring, ring[0]])
        for p in loop.points:
            if abs(winding_angle_sum(ring, p)) > np.pi:
                return True
        return False


def _segment_distances(pts: np.ndarray, point: np.ndarray) -> np.ndarray:
    a, b = pts[:-1], pts[1:]
    ab = b - a
    ap = point - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.divide(np.einsum("ij,ij->i", ab, ap), denom,
                          out=np.zeros_like(denom), where=denom > 0), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(proj - point, axis=1)


def winding_angle_sum(pts: np.ndarray, point: np.ndarray) -> float:
    """Total signed angle swept by the polyline around `point` (radians)."""
    rel = pts - point
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    d = np.diff(ang)
    d = (d + np.pi) % (2.0 * np.pi) - np.pi
    return float(d.sum())


def winding_number(loop: PlanarLoop, point) -> int:
    """Signed revolutions of the loop about the point (nearest integer)."""
    point = np.asarray(point, dtype=np.float64)
    if np.min(_segment_distances(loop.points, point)) <= POINT_ON_LOOP_TOL:
        raise ConfigError("point lies on the loop")
    return int(round(winding_angle_sum(loop.points, point) / (2.0 * np.pi)))


@dataclass
class ContractibilityVerdict:
    contractible: bool
    windings: list  # per-obstacle winding numbers


def loop_contractible(loop: PlanarLoop, obstacles) -> ContractibilityVerdict:
    """A loop in the plane minus disjoint obstacles is null-homotopic iff its
    winding number about one interior point of every obstacle is zero."""
    windings = []
    for obs in obstacles:
        if obs.intersects(loop):
            raise ConfigError("loop intersects an obstacle")
        windings.append(winding_number(loop, obs.representative_point()))
    return ContractibilityVerdict(all(w == 0 for w in windings), windings)


@dataclass
class AugmentedState:
    x: np.ndarray
    t: float


def reachable_tuple_samples(policy_fn, env, initial_sampler, n: int,
                            rng: np.random.Generator) -> list:
    """Record (state vector, time) along n closed-loop trajectories.

    policy_fn maps an observation to an action; initial_sampler(rng) yields
    the reset override coordinate (or None for the task's default draw).
    """
    if n < 1:
        raise ConfigError("need at least one initial state")
    out = []
    for _ in range(n):
        state = env.reset(rng, override=initial_sampler(rng))
        out.append(AugmentedState(state.vector().copy(), state.t))
        done = False
        while not done:
            res = env.step(state, policy_fn(env.observe(state)))
            state, done = res.state, res.done
            out.append(AugmentedState(state.vector().copy(), state.t))
    return out


@dataclass
class WitnessReport:
    bracket_lo: float
    bracket_hi: float
    witness: float | None
    max_h: float
    trajectory: list = field(default_factory=list)  # rows of the violating episode
    found: bool = False

    def summary_line(self) -> str:
        w = repr(self.witness) if self.witness is not None else ""
        return f"{self.bracket_lo!r},{self.bracket_hi!r},{w},{self.max_h!r}"


def _rollout_detour(policy_fn, env, coord: float):
    """Run one episode from the override coordinate.

    Returns (side, max_h, rows): side is the sign of the bypass coordinate
    when the ego first reaches the obstacle's station, max_h the largest
    constraint value seen, and rows the trajectory log lines.
    """
    rng = np.random.default_rng(0)
    state = env.reset(rng, override=coord)
    max_h = -np.inf
    side = None
    rows = []
    done = False
    while not done:
        action = policy_fn(env.observe(state))
        res = env.step(state, action)
        rows.append(env.log_row(state, action, res.reward, res.h))
        max_h = max(max_h, res.h)
        if side is None and _at_station(env, res.state):
            side = np.sign(_bypass_coord(env, res.state))
        state, done = res.state, res.done
    if side is None:
        side = np.sign(_bypass_coord(env, state))
    return side, float(max_h), rows


def _at_station(env, state) -> bool:
    if env.task == "gap1d":
        return state.t >= env.window[0]
    if env.task == "bypass":
        return state.p_x >= env.obstacle_x
    return state.t >= (env.cross_start / abs(env.cross_speed))


def _bypass_coord(env, state) -> float:
    if env.task == "gap1d":
        return state.y
    if env.task == "bypass":
        return state.p_y
    return state.p_x - env.obstacle_x


def infeasibility_witness(policy_fn, env, lo: float, hi: float,
                          tol: float = 1e-4, max_iters: int = 60) -> WitnessReport:
    """Bisect the initial coordinate between two opposite-side detours,
    shrinking the bracket to width `tol` and recording any initial state whose
    trajectory violates the constraint along the way.

    Raises PreconditionError when the endpoints detour to the same side and
    neither violates (no bracket: the policy is effectively bifurcated on
    this interval).
    """
    witness, w_h, w_rows = None, 0.0, []

    def record(coord, h, rows):
        nonlocal witness, w_h, w_rows
        if h > 0.0 and h >= w_h:
            witness, w_h, w_rows = coord, h, rows

    side_lo, h_lo, rows_lo = _rollout_detour(policy_fn, env, lo)
    side_hi, h_hi, rows_hi = _rollout_detour(policy_fn, env, hi)
    record(lo, h_lo, rows_lo)
    record(hi, h_hi, rows_hi)
    if side_lo == side_hi or side_lo == 0 or side_hi == 0:
        if witness is not None:
            return WitnessReport(lo, hi, witness, w_h, w_rows, found=True)
        raise PreconditionError(
            "no bracket: both endpoint trajectories detour to the same side")
    worst_safe = max(h_lo, h_hi)
    for _ in range(max_iters):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        side_m, h_m, rows_m = _rollout_detour(policy_fn, env, mid)
        record(mid, h_m, rows_m)
        worst_safe = max(worst_safe, h_m)
        if side_m == side_lo:
            lo = mid
        else:
            hi = mid
    if witness is not None:
        return WitnessReport(lo, hi, witness, w_h, w_rows, found=True)
    return WitnessReport(lo, hi, None, worst_safe, [], found=False)
