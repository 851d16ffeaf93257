"""Reductions of inhomogeneous / anchored / finite-state recursions to the
homogeneous compiler.

Stage-dependent forcing:  W_r gamma = V gamma + B_r unrolls to

    W_{n-1} .. W_0 gamma = V^n gamma + sum_r V^{n-1-r} B_r,

one homogeneous compile per summand, wired serially with a running
accumulator.  Anchored profiles Gamma (eventually constant) reduce to a
compactly supported defect; finite-state systems stack into one block
operator that commutes with stacking of the state tuple.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cpwl import (CpwlCurve, ScalarCpwl, SupportError, curve_add,
                   curve_scale, merge_grids, zero_curve)
from .compiler import CompiledIterate, compile_homogeneous
from .loop import LoopConfig
from .network import (affine_net, lower_curve_1d, net_stats, passthrough,
                      post_affine, serial, stack_nets)
from .refinement import RefinementOp, apply_v


@dataclass(frozen=True)
class ForcingSchedule:
    """Per-stage forcing curves B_0, B_1, ...

    Either an explicit list of curves, or a template pair/list with
    stage-dependent coefficients (curve_r = sum_a coeffs(r)[a] * template_a).
    """

    curves: tuple = None
    templates: tuple = None
    coeffs: object = None  # callable stage -> array

    def stage(self, r: int) -> CpwlCurve:
        if self.curves is not None:
            return self.curves[r]
        lam = np.asarray(self.coeffs(r), dtype=float)
        out = curve_scale(self.templates[0], lam[0])
        for a in range(1, len(self.templates)):
            out = curve_add(out, curve_scale(self.templates[a], lam[a]))
        return out


def constant_schedule(B: CpwlCurve) -> ForcingSchedule:
    return ForcingSchedule(templates=(B,), coeffs=lambda r: np.array([1.0]))


def iterate_w(op: RefinementOp, gamma: CpwlCurve, schedule: ForcingSchedule,
              n: int) -> CpwlCurve:
    """Direct oracle: gamma_{r+1} = V gamma_r + B_r."""
    cur = gamma
    for r in range(n):
        cur = curve_add(apply_v(op, cur), schedule.stage(r))
    return cur


def expand_stage_iterate(op: RefinementOp, gamma: CpwlCurve,
                         schedule: ForcingSchedule, n: int) -> list:
    """Homogeneous jobs [(curve, power)] whose V-powers sum to the iterate."""
    jobs = [(gamma, n)]
    for r in range(n):
        jobs.append((schedule.stage(r), n - 1 - r))
    return jobs


def compile_affine(op: RefinementOp, gamma: CpwlCurve,
                   schedule: ForcingSchedule, n: int,
                   cfg: LoopConfig = None) -> CompiledIterate:
    """Compile the stage-dependent iterate W_{n-1}..W_0 gamma."""
    cfg = cfg if cfg is not None else LoopConfig(op.M, max(n, 1))
    jobs = expand_stage_iterate(op, gamma, schedule, n)
    p = op.p
    nets = [compile_homogeneous(op, c, k, cfg).net for c, k in jobs]
    # serial accumulation over jobs: state (t, acc)
    cur = affine_net(np.vstack([np.ones((1, 1)), np.zeros((p, 1))]),
                     np.zeros(1 + p))
    for net in nets:
        d = net.depth
        stage = stack_nets(
            [passthrough(1, "general", d), passthrough(p, "general", d), net],
            [[0], list(range(1, 1 + p)), [0]], 1 + p)
        W = np.zeros((1 + p, 1 + 2 * p))
        W[0, 0] = 1.0
        W[1:, 1:1 + p] = np.eye(p)
        W[1:, 1 + p:] = np.eye(p)
        cur = serial(cur, post_affine(stage, W, np.zeros(1 + p)))
    Wout = np.hstack([np.zeros((p, 1)), np.eye(p)])
    net = post_affine(cur, Wout, np.zeros(p))
    return CompiledIterate(net, n, "affine", {"jobs": len(jobs)})


def anchor_mismatch(op: RefinementOp, B: CpwlCurve, Gamma: CpwlCurve,
                    tol: float = 1e-10):
    """Defect E = V Gamma + B - Gamma; returns (E, compact_flag).

    E is compact iff the anchor tails are fixed by the tail maps:
    S Gamma_- + B_- = Gamma_- and likewise at +infinity.
    """
    E = curve_add(apply_v(op, Gamma), curve_scale(Gamma, -1.0))
    if B is not None:
        E = curve_add(E, B)
    compact = E.is_compact(tol)
    if compact:
        # zero out the roundoff tails so the defect is exactly compact
        comps = []
        for c in E.components:
            vs = c.vs.copy()
            vs[0] = 0.0
            vs[-1] = 0.0
            comps.append(ScalarCpwl(c.ts, vs))
        E = CpwlCurve(tuple(comps), E.L)
    return E, compact


def compile_anchored(op: RefinementOp, B: CpwlCurve, Gamma: CpwlCurve,
                     eta: CpwlCurve, n: int,
                     cfg: LoopConfig = None) -> CompiledIterate:
    """Evaluator for W^n gamma = Gamma + (V + E)^n eta with gamma = Gamma + eta."""
    E, compact = anchor_mismatch(op, B, Gamma)
    if not compact:
        raise SupportError(
            "anchor tails are not fixed points of the tail recursion; "
            "the defect is not compactly supported")
    eta = eta if eta is not None else zero_curve(op.p, op.L)
    defect = compile_affine(op, eta, constant_schedule(E), n, cfg)
    anchor_net = lower_curve_1d(Gamma)
    both = stack_nets([defect.net, anchor_net], [[0], [0]], 1)
    W = np.hstack([np.eye(op.p), np.eye(op.p)])
    net = post_affine(both, W, np.zeros(op.p))
    return CompiledIterate(net, n, "anchored",
                           {"defect_stats": net_stats(defect.net)})


@dataclass(frozen=True)
class FiniteStateSystem:
    """Deterministic finite-state refinement system.

    State a picks, for digit j, a matrix C[a, j] and successor state
    transitions[a, j]:  (V Gamma)_a(t) = sum_j C[a,j] Gamma_{sigma(a,j)}(M t - j)
    plus optional per-state forcing B_a.
    """

    p: int
    M: int
    L: int
    transitions: np.ndarray  # (r, M) int
    C: np.ndarray            # (r, M, p, p)
    forcing: tuple = None    # per-state CpwlCurve or None

    def __post_init__(self):
        object.__setattr__(self, "transitions", np.asarray(self.transitions, dtype=int))
        object.__setattr__(self, "C", np.asarray(self.C, dtype=float))

    @property
    def r(self) -> int:
        return self.transitions.shape[0]

    def apply(self, curves: list) -> list:
        """Per-state direct recursion on a tuple of curves."""
        out = []
        for a in range(self.r):
            comps = None
            grids = []
            for j in range(self.M):
                grids.extend([(c.ts + j) / self.M
                              for c in curves[self.transitions[a, j]].components])
            ts = merge_grids(*grids)
            vals = np.zeros((ts.size, self.p))
            for j in range(self.M):
                g = curves[self.transitions[a, j]]
                vals += g(self.M * ts - j) @ self.C[a, j].T
            cur = CpwlCurve(tuple(ScalarCpwl(ts, vals[:, i]) for i in range(self.p)),
                            curves[a].L)
            if self.forcing is not None and self.forcing[a] is not None:
                cur = curve_add(cur, self.forcing[a])
            out.append(cur)
        return out


def stack_curves(curves: list) -> CpwlCurve:
    comps = []
    for c in curves:
        comps.extend(c.components)
    return CpwlCurve(tuple(comps), curves[0].L)


def stack_system(sys: FiniteStateSystem):
    """Block operator on p*r components equivalent to the state system.

    Returns (RefinementOp, stacked forcing CpwlCurve or None); applying the
    stacked operator to stacked curves commutes with per-state recursion.
    """
    r, p, M = sys.r, sys.p, sys.M
    mask = {}
    for j in range(M):
        A = np.zeros((p * r, p * r))
        for a in range(r):
            b = sys.transitions[a, j]
            A[a * p:(a + 1) * p, b * p:(b + 1) * p] = sys.C[a, j]
        if np.any(A):
            mask[j] = A
    op = RefinementOp(M, p * r, sys.L, mask)
    forcing = None
    if sys.forcing is not None:
        forcing = stack_curves(list(sys.forcing))
    return op, forcing
