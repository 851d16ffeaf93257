"""Triangle-loop controller for the M-ary residual map.

The unit parameter interval is bent onto the boundary of the triangle with
vertices a0=(0,0), a1=(1,1), a2=(1,0) by the embedding E; a CPwL field F on
the (convex) triangle satisfies F(E(t)) = E(R(t)), so iterating F tracks
the residual orbit of the digit map.  Readout fields recover scalar
functions of the parameter, and selector fields recover the current digit
away from a small transition set.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cpwl import CpwlCurve, ScalarCpwl, cpwl_combine, merge_grids
from .planar import PlanarCpwlField, fan_field
from .refinement import digit_residual

TRIANGLE = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class LoopConfig:
    """Geometry parameters of the controller and its readouts/selectors."""

    M: int
    n: int
    rho: float = 0.25
    epsilon: float = 0.125
    delta_bar: float = 0.5

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be >= 2")
        if not (0 < self.rho < 0.5):
            raise ValueError("rho must lie in (0, 1/2)")
        if not (0 < self.epsilon < self.rho):
            raise ValueError("epsilon must lie in (0, rho)")
        if not (0 < self.delta_bar <= 1):
            raise ValueError("delta_bar must lie in (0, 1]")

    @property
    def delta_n(self) -> float:
        """Transition half-width delta_bar * rho * M^-(n+1)."""
        return self.delta_bar * self.rho * float(self.M) ** (-(self.n + 1))

    def transition_intervals(self):
        d = self.delta_n
        return [(k / self.M, k / self.M + d) for k in range(self.M)]


def embed(t):
    """E(t): constant-speed-3 walk a0 -> a1 -> a2 -> a0 around the triangle."""
    t = np.asarray(t, dtype=float)
    x = np.empty(t.shape + (2,))
    b1 = t <= 1 / 3
    b2 = (t > 1 / 3) & (t <= 2 / 3)
    b3 = t > 2 / 3
    x[b1, 0] = 3 * t[b1]
    x[b1, 1] = 3 * t[b1]
    x[b2, 0] = 1.0
    x[b2, 1] = 2 - 3 * t[b2]
    x[b3, 0] = 3 - 3 * t[b3]
    x[b3, 1] = 0.0
    return x


def embed_curve() -> CpwlCurve:
    ts = np.array([0.0, 1 / 3, 2 / 3, 1.0])
    e1 = ScalarCpwl(ts, np.array([0.0, 1.0, 1.0, 0.0]))
    e2 = ScalarCpwl(ts, np.array([0.0, 1.0, 0.0, 0.0]))
    return CpwlCurve((e1, e2), 1)


def _boundary_params(M: int, extra=()) -> np.ndarray:
    """Loop vertex parameters in [0, 1): triangle corners, cell endpoints,
    and the pullbacks of the corners under the residual map."""
    pts = [0.0, 1 / 3, 2 / 3]
    for k in range(M):
        pts.append(k / M)
        pts.append((k + 1 / 3) / M)
        pts.append((k + 2 / 3) / M)
    pts.extend(extra)
    arr = merge_grids(np.array(pts))
    return arr[arr < 1 - 1e-12]


def _loop_fan(params: np.ndarray, boundary_values) -> PlanarCpwlField:
    bpts = embed(params)
    center = TRIANGLE.mean(axis=0)
    vals = np.atleast_2d(np.asarray(boundary_values, dtype=float).T).T
    cval = vals.mean(axis=0)
    return fan_field(center, cval, bpts, vals)


@lru_cache(maxsize=None)
def build_controller_field(M: int) -> PlanarCpwlField:
    """CPwL field F on the triangle with F(E(t)) = E(R(t))."""
    params = _boundary_params(M)
    vals = np.array([embed(digit_residual(t, M)[1]) for t in params])
    return _loop_fan(params, vals)


def controller_orbit(x: float, n: int, F) -> np.ndarray:
    """z_0 = E(x), z_{j+1} = F(z_j); returns (n+1, 2)."""
    z = np.empty((n + 1, 2))
    z[0] = embed(np.array(x))
    for j in range(n):
        z[j + 1] = F(z[j])
    return z


def readout_minus(epsilon: float) -> ScalarCpwl:
    """r^-: identity up to 1 - eps, then a steep return to 0 at t = 1."""
    return ScalarCpwl(np.array([0.0, 1 - epsilon, 1.0]),
                      np.array([0.0, 1 - epsilon, 0.0]))


def readout_plus(epsilon: float) -> ScalarCpwl:
    """r^+: steep drop from 1 to eps on [0, eps], then the identity."""
    return ScalarCpwl(np.array([0.0, epsilon, 1.0]),
                      np.array([1.0, epsilon, 1.0]))


def readout_fields(cfg: LoopConfig):
    """Planar fields rho^-/rho^+ with rho^±(E(t)) = r^±(t)."""
    params = _boundary_params(cfg.M, extra=(cfg.epsilon, 1 - cfg.epsilon))
    rm = readout_minus(cfg.epsilon)
    rp = readout_plus(cfg.epsilon)
    fm = _loop_fan(params, rm(params))
    fp = _loop_fan(params, rp(params))
    return fm, fp


def min_readout_scalar(h: ScalarCpwl, epsilon: float) -> ScalarCpwl:
    """min(h(r^-(t)), h(r^+(t))), equal to h on [0, 1] when eps < rho."""
    hm = _compose_scalar(h, readout_minus(epsilon))
    hp = _compose_scalar(h, readout_plus(epsilon))
    return cpwl_combine(hm, hp, "min")


def _compose_scalar(outer: ScalarCpwl, inner: ScalarCpwl) -> ScalarCpwl:
    """outer(inner(t)) as CPwL on [inner breakpoints + pullbacks]."""
    pull = []
    sl = inner.slopes()
    for i in range(inner.ts.size - 1):
        if sl[i] == 0:
            continue
        for b in outer.ts:
            t = inner.ts[i] + (b - inner.vs[i]) / sl[i]
            if inner.ts[i] < t < inner.ts[i + 1]:
                pull.append(t)
    ts = merge_grids(inner.ts, np.array(pull) if pull else np.zeros(0))
    return ScalarCpwl(ts, outer(inner(ts)))


def selector_scalars(cfg: LoopConfig) -> list:
    """theta_q on [0, 1]: exact indicator of cell q away from the
    transition set, affine ramps of width delta_n after each cell start.

    The outgoing and incoming selectors cross at the midpoint of every
    transition interval; at the seam theta_{M-1}(0) = theta_{M-1}(1) = 1.
    """
    M, d = cfg.M, cfg.delta_n
    out = []
    for q in range(M):
        if q == M - 1:
            pts = [(0.0, 1.0), (d, 0.0), ((M - 1) / M, 0.0),
                   ((M - 1) / M + d, 1.0), (1.0, 1.0)]
        else:
            pts = [(0.0, 0.0)]
            if q > 0:
                pts.append((q / M, 0.0))
            pts.extend([(q / M + d, 1.0), ((q + 1) / M, 1.0),
                        ((q + 1) / M + d, 0.0), (1.0, 0.0)])
        out.append(ScalarCpwl(np.array([p[0] for p in pts]),
                              np.array([p[1] for p in pts])))
    return out


def selector_fields(cfg: LoopConfig) -> list:
    """chi_q on the triangle with chi_q(E(t)) = theta_q(t)."""
    thetas = selector_scalars(cfg)
    extra = tuple(np.concatenate([th.ts[(th.ts > 0) & (th.ts < 1)] for th in thetas]))
    params = _boundary_params(cfg.M, extra=extra)
    return [_loop_fan(params, th(params)) for th in thetas]
