"""M-ary vector refinement operators and the direct-recursion oracle.

The operator acts on p-component curves supported in [0, L]:

    (V gamma)(t) = sum_j A_j gamma(M t - j)

with p x p mask matrices A_j.  Support is preserved iff every nonzero
mask index satisfies 0 <= j <= (M - 1) * L.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .cpwl import (CpwlCurve, DegenerateDilationError, ScalarCpwl,
                   SupportError, merge_grids)

SNAP_TOL = 1e-12
DEFAULT_BREAKPOINT_CAP = 10_000_000


@dataclass(frozen=True)
class RefinementOp:
    """Dilation M, block size p, support width L and mask {j: A_j}."""

    M: int
    p: int
    L: int
    mask: dict

    def __post_init__(self):
        if self.M < 2:
            raise DegenerateDilationError("dilation factor must be >= 2")
        if self.p < 1 or self.L < 1:
            raise ValueError("p and L must be positive")
        mask = {}
        for j, A in self.mask.items():
            A = np.asarray(A, dtype=float)
            if A.shape != (self.p, self.p):
                raise ValueError(f"mask A_{j} has shape {A.shape}, want {(self.p, self.p)}")
            if not np.any(A):
                continue
            if j < 0 or j > (self.M - 1) * self.L:
                raise SupportError(
                    f"mask index j={j} outside support-preserving range "
                    f"[0, {(self.M - 1) * self.L}]")
            mask[int(j)] = A
        object.__setattr__(self, "mask", mask)

    @property
    def S(self) -> np.ndarray:
        """Mask sum, governing tail behaviour of anchored profiles."""
        S = np.zeros((self.p, self.p))
        for A in self.mask.values():
            S += A
        return S

    def mask_array(self):
        js = sorted(self.mask)
        return js, [self.mask[j] for j in js]


@dataclass(frozen=True)
class DigitStream:
    """M-ary digits q_1..q_n and residuals R^0(x)..R^n(x) of a point x."""

    x: float
    M: int
    digits: tuple
    residuals: tuple


def digit_residual(x: float, M: int):
    """One step of the M-ary digit map with the right-closed convention.

    Returns (q, r) with q = floor(M x) and r = M x - q for x in [0, 1),
    except that values of M x within 1e-12 of an integer are snapped to it
    (right-cell digit), and x = 1 maps to (M - 1, 1).
    """
    if x < -SNAP_TOL or x > 1 + SNAP_TOL:
        raise ValueError(f"digit map argument {x} outside [0, 1]")
    if x >= 1 - SNAP_TOL / M:
        return M - 1, 1.0
    y = M * x
    k = round(y)
    if abs(y - k) < SNAP_TOL:
        return int(k), 0.0
    q = int(np.floor(y))
    return q, y - q


def residual_iterate(x: float, M: int, n: int) -> DigitStream:
    digits = []
    res = [float(x)]
    r = float(x)
    for _ in range(n):
        q, r = digit_residual(r, M)
        digits.append(q)
        res.append(r)
    return DigitStream(float(x), M, tuple(digits), tuple(res))


def apply_v(op: RefinementOp, curve: CpwlCurve) -> CpwlCurve:
    """Exact CPwL image of ``curve`` under the refinement operator.

    Works for curves with constant (possibly nonzero) tails: the output
    tails are S times the input tails.
    """
    if curve.p != op.p:
        raise ValueError("curve dimension does not match operator")
    js, mats = op.mask_array()
    in_grid = merge_grids(*[c.ts for c in curve.components])
    if not js:
        from .cpwl import zero_curve
        return zero_curve(op.p, op.L)
    grids = [(in_grid + j) / op.M for j in js]
    ts = merge_grids(*grids)
    # between consecutive output breakpoints every gamma(M t - j) is affine
    vals = np.zeros((ts.size, op.p))
    for j, A in zip(js, mats):
        vals += curve(op.M * ts - j) @ A.T
    comps = tuple(ScalarCpwl(ts, vals[:, i]) for i in range(op.p))
    return CpwlCurve(comps, curve.L)


def apply_v_n(op: RefinementOp, curve: CpwlCurve, n: int,
              cap: int = None) -> CpwlCurve:
    """n-fold application of the operator (the direct-recursion oracle)."""
    cap = breakpoint_cap() if cap is None else cap
    est = estimated_breakpoints(op, curve, n)
    if est > cap:
        raise SupportError(
            f"direct recursion would need about {est} breakpoints, "
            f"above the cap {cap} (set REFINET_MAX_BREAKPOINTS to override)")
    out = curve
    for _ in range(n):
        out = apply_v(op, out)
    return out


def breakpoint_cap() -> int:
    env = os.environ.get("REFINET_MAX_BREAKPOINTS")
    return int(float(env)) if env else DEFAULT_BREAKPOINT_CAP


def estimated_breakpoints(op: RefinementOp, curve: CpwlCurve, n: int) -> int:
    k = max(c.ts.size for c in curve.components)
    m = max(len(op.mask), 1)
    est = k
    for _ in range(n):
        est = est * m
        if est > 10 * DEFAULT_BREAKPOINT_CAP:
            return est
    return est


def vectorize(curve: CpwlCurve):
    """The window vector G(x) = (gamma(x), gamma(x+1), .., gamma(x+L-1)).

    Returns a callable mapping x (scalar or array) to shape (..., p*L).
    """
    L, p = curve.L, curve.p

    def G(x):
        x = np.asarray(x, dtype=float)
        parts = [curve(x + k) for k in range(L)]
        return np.concatenate(parts, axis=-1)

    return G


def block_transition(op: RefinementOp, q: int) -> np.ndarray:
    """The p*L x p*L digit-indexed transition block T_q.

    Block (k, l), 1-based, is A_{q + M(k-1) - (l-1)} when present, else 0.
    """
    if not 0 <= q < op.M:
        raise ValueError(f"digit {q} outside 0..{op.M - 1}")
    p, L, M = op.p, op.L, op.M
    T = np.zeros((p * L, p * L))
    for k in range(L):
        for l in range(L):
            j = q + M * k - l
            A = op.mask.get(j)
            if A is not None:
                T[k * p:(k + 1) * p, l * p:(l + 1) * p] = A
    return T


def cascade_eval(op: RefinementOp, curve: CpwlCurve, x: float, n: int) -> np.ndarray:
    """G_n(x) via the digit-driven matrix cascade (no curve refinement)."""
    stream = residual_iterate(x, op.M, n)
    G = vectorize(curve)
    v = G(stream.residuals[-1])
    for q in reversed(stream.digits):
        v = block_transition(op, q) @ v
    return v


def transition_norm(op: RefinementOp) -> float:
    """max_q of the infinity norm of T_q transposed (cascade growth rate)."""
    return max(np.linalg.norm(block_transition(op, q).T, np.inf)
               for q in range(op.M))
