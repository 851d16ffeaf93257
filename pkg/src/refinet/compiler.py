"""Compiler from refinement operators to exact ReLU networks.

An atomic curve h(t) e_mu on one support cell is compiled by
  * a controller pass computing the scalar factor h(R^n(x)) through the
    min of two readout branches, with x carried alongside,
  * a second controller pass driving selector-gated transition blocks:
    Phi_0 = h(R^n x) e_l,  Phi_j = sum_q Pi_a(chi_q(z_{j-1}), T_q' Phi_{j-1}),
    one branch per output coordinate l, sharing the controller state and
    the selector values across branches.
Cell networks are glued over the support window [0, L] with clamped ramps,
and atomic contributions are summed with their shifts folded in.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .cpwl import CpwlCurve, SpecialHat, decompose_atomic
from .loop import (LoopConfig, build_controller_field, embed_curve,
                   readout_fields, selector_fields)
from .network import (Layer, ReluNetwork, affine_net, identity_net,
                      lower_curve_1d, lower_scalar_cpwl, min2_net, net_stats,
                      passthrough, post_affine, pre_affine, serial, stack_nets)
from .planar import lower_planar_field
from .refinement import RefinementOp, block_transition, transition_norm

GADGET_SAFETY = 2.0


@dataclass
class CompiledIterate:
    """A compiled network together with its stage and provenance."""

    net: ReluNetwork
    n: int
    builder: str
    info: dict = field(default_factory=dict)

    def __call__(self, t):
        return self.net.eval_scalar_input(t)

    @property
    def stats(self):
        return net_stats(self.net)


def product_gadget(a: float, N: int) -> ReluNetwork:
    """Depth-2, width-(2N+1) gate Pi_a(lambda, y).

    For lambda in [0, 1] and y in [-a, a]^N:
      Pi_a(1, y) = y,  Pi_a(0, y) = 0,  Pi_a(lambda, 0) = 0.
    """
    if a <= 0:
        raise ValueError("gadget bound must be positive")
    I = np.eye(N)
    # h1 = ReLU(a*lambda - y), h2 = ReLU(-y), h3 = ReLU(lambda)
    W1 = np.zeros((2 * N + 1, N + 1))
    W1[:N, 0] = a
    W1[:N, 1:] = -I
    W1[N:2 * N, 1:] = -I
    W1[2 * N, 0] = 1.0
    l1 = Layer(W1, np.zeros(2 * N + 1), "relu")
    # carry h1; g = ReLU(a - a*h3 - h2)
    W2 = np.zeros((2 * N, 2 * N + 1))
    W2[:N, :N] = I
    W2[N:, N:2 * N] = -I
    W2[N:, 2 * N] = -a
    b2 = np.concatenate([np.zeros(N), a * np.ones(N)])
    l2 = Layer(W2, b2, "relu")
    # out = -h1 - g + a
    W3 = np.hstack([-I, -I])
    l3 = Layer(W3, a * np.ones(N), "linear")
    return ReluNetwork(N + 1, [l1, l2, l3])


@dataclass
class LoopAssets:
    """Lowered controller pieces shared by every atomic net of one stage."""

    cfg: LoopConfig
    net_E: ReluNetwork
    net_F: ReluNetwork
    net_rho_minus: ReluNetwork
    net_rho_plus: ReluNetwork
    net_chi: list


@lru_cache(maxsize=None)
def loop_assets(M: int, n: int, rho: float, epsilon: float,
                delta_bar: float) -> LoopAssets:
    cfg = LoopConfig(M, n, rho, epsilon, delta_bar)
    net_E = lower_curve_1d(embed_curve())
    net_F = lower_planar_field(build_controller_field(M))
    fm, fp = readout_fields(cfg)
    chis = [lower_planar_field(f) for f in selector_fields(cfg)]
    return LoopAssets(cfg, net_E, net_F, lower_planar_field(fm),
                      lower_planar_field(fp), chis)


def scalar_factor_net(h: SpecialHat, assets: LoopAssets, n: int) -> ReluNetwork:
    """x in [0, 1] -> (h(R^n(x)), x), x carried on a nonnegative channel."""
    net_h = lower_scalar_cpwl(h.base)
    # x -> (z, x)
    start = stack_nets([assets.net_E, passthrough(1, "nonneg", 1)], [[0], [0]], 1)
    dF = assets.net_F.depth
    step = stack_nets([assets.net_F, passthrough(1, "nonneg", dF)],
                      [[0, 1], [2]], 3)
    chain = [start] + [step] * n
    branch_m = serial(assets.net_rho_minus, net_h)
    branch_p = serial(assets.net_rho_plus, net_h)
    db = branch_m.depth
    head = stack_nets([branch_m, branch_p, passthrough(1, "nonneg", db)],
                      [[0, 1], [0, 1], [2]], 3)
    tail = stack_nets([min2_net(), passthrough(1, "nonneg", 1)], [[0, 1], [2]], 3)
    return serial(*(chain + [head, tail]))


def gadget_bound(op: RefinementOp, h: SpecialHat, n: int) -> float:
    lam = max(1.0, transition_norm(op))
    return GADGET_SAFETY * max(h.base.max_abs(), 1e-30) * lam ** n


def _recursion_stage(op: RefinementOp, assets: LoopAssets, a: float) -> ReluNetwork:
    """One selector-gated transition update on state (z, Phi_all).

    Phi_all holds p*L branch vectors of length p*L each (branch-major).
    """
    pL = op.p * op.L
    B = pL * pL
    M = op.M
    dchi = assets.net_chi[0].depth
    # substage 1: (z, Phi) -> (z, c_0..c_{M-1}, Phi)
    sub1 = stack_nets(
        [passthrough(2, "nonneg", dchi)] + list(assets.net_chi)
        + [passthrough(B, "general", dchi)],
        [[0, 1]] + [[0, 1]] * M + [list(range(2, 2 + B))],
        2 + B)
    # substage 2: controller step in parallel with M * pL gated products
    Ts = [block_transition(op, q).T for q in range(M)]
    parts = [assets.net_F]
    slices = [[0, 1]]
    gad = product_gadget(a, pL)
    for q in range(M):
        for l in range(pL):
            W = np.zeros((pL + 1, 2 + M + B))
            W[0, 2 + q] = 1.0
            W[1:, 2 + M + l * pL:2 + M + (l + 1) * pL] = Ts[q]
            parts.append(pre_affine(gad, W, np.zeros(pL + 1)))
            slices.append(list(range(2 + M + B)))
    sub2 = stack_nets(parts, slices, 2 + M + B)
    # collect: z' then Phi'_l = sum_q gadget(q, l)
    Wc = np.zeros((2 + B, sub2.output_dim))
    Wc[0, 0] = Wc[1, 1] = 1.0
    col = 2
    for q in range(M):
        for l in range(pL):
            Wc[2 + l * pL:2 + (l + 1) * pL, col:col + pL] += np.eye(pL)
            col += pL
    sub2 = post_affine(sub2, Wc, np.zeros(2 + B))
    return serial(sub1, sub2)


def atomic_core_net(op: RefinementOp, h: SpecialHat, cfg: LoopConfig,
                    n: int) -> ReluNetwork:
    """x in [0, 1] -> all branch vectors Phi^{(l)}_n (p*L * p*L channels)."""
    assets = loop_assets(op.M, n, cfg.rho, cfg.epsilon, cfg.delta_bar)
    pL = op.p * op.L
    B = pL * pL
    a = gadget_bound(op, h, n)
    factor = scalar_factor_net(h, assets, n)  # (s, x)
    # re-embed: (s, x) -> (z, Phi_0) with Phi_0^{(l)} = s e_l
    reembed = stack_nets([assets.net_E, passthrough(1, "nonneg", 1)], [[1], [0]], 2)
    W = np.zeros((2 + B, 3))
    W[0, 0] = W[1, 1] = 1.0
    for l in range(pL):
        W[2 + l * pL + l, 2] = 1.0
    reembed = post_affine(reembed, W, np.zeros(2 + B))
    stage = _recursion_stage(op, assets, a)
    core = serial(*([factor, reembed] + [stage] * n))
    Wsel = np.hstack([np.zeros((B, 2)), np.eye(B)])
    return post_affine(core, Wsel, np.zeros(B))


def atomic_unit_interval_net(op: RefinementOp, h: SpecialHat, mu: int,
                             cfg: LoopConfig, n: int) -> ReluNetwork:
    """Exact net for G_n of the atomic curve h e_mu on the unit cell."""
    core = atomic_core_net(op, h, cfg, n)
    pL = op.p * op.L
    W = np.zeros((pL, pL * pL))
    for l in range(pL):
        W[l, l * pL + mu] = 1.0
    return post_affine(core, W, np.zeros(pL))


def glue_blocks(block_nets, p: int, L: int, tol: float = 1e-9) -> ReluNetwork:
    """Glue per-cell networks f_1..f_L over [0, L] with clamped ramps.

    Requires matching endpoint values f_k(1) = f_{k+1}(0) and vanishing
    outer endpoints; the glued function is zero outside [0, L].
    """
    if len(block_nets) != L:
        raise ValueError("need one block net per support cell")
    vals0 = [bn.eval_scalar_input(np.array([0.0, 1.0])) for bn in block_nets]
    if np.max(np.abs(vals0[0][0])) > tol or np.max(np.abs(vals0[-1][1])) > tol:
        raise ValueError("glued curve does not vanish at the support ends")
    for k in range(L - 1):
        if np.max(np.abs(vals0[k][1] - vals0[k + 1][0])) > tol:
            raise ValueError(f"block endpoint mismatch between cells {k} and {k + 1}")
    # sigma_k(t) = ReLU(t - k + 1) - ReLU(t - k), built from shared ramps
    W1 = np.ones((L + 1, 1))
    b1 = -np.arange(L + 1, dtype=float)
    Ws = np.zeros((L, L + 1))
    for k in range(L):
        Ws[k, k] = 1.0
        Ws[k, k + 1] = -1.0
    ramps = ReluNetwork(1, [Layer(W1, b1, "relu"), Layer(Ws, np.zeros(L), "linear")])
    blocks = stack_nets(block_nets, [[k] for k in range(L)], L)
    glued = serial(ramps, blocks)
    Wsum = np.hstack([np.eye(p)] * L)
    bias = -np.sum([vals0[k][0] for k in range(1, L)], axis=0) if L > 1 else np.zeros(p)
    return post_affine(glued, Wsum, bias)


def compile_homogeneous(op: RefinementOp, curve: CpwlCurve, n: int,
                        cfg: LoopConfig = None) -> CompiledIterate:
    """Compile V^n(curve) into an exact ReLU network on the real line."""
    cfg = cfg if cfg is not None else LoopConfig(op.M, n)
    if cfg.M != op.M or cfg.n != n:
        cfg = LoopConfig(op.M, n, cfg.rho, cfg.epsilon, cfg.delta_bar)
    if n == 0:
        net = lower_curve_1d(curve)
        return CompiledIterate(net, 0, "homogeneous", {"terms": 0})
    curve.check_support()
    terms = decompose_atomic(curve, cfg.rho)
    p, L, pL = op.p, op.L, op.p * op.L
    if not terms:
        net = affine_net(np.zeros((p, 1)), np.zeros(p))
        return CompiledIterate(net, n, "homogeneous", {"terms": 0})
    groups = {}
    for t in terms:
        key = (t.shift, tuple(t.hat.base.ts), tuple(t.hat.base.vs))
        groups.setdefault(key, []).append(t)
    scale = float(op.M) ** (-n)
    group_nets = []
    for (shift, _, _), ts in groups.items():
        core = atomic_core_net(op, ts[0].hat, cfg, n)
        blocks = []
        for k in range(L):
            Wk = np.zeros((p, pL * pL))
            for t in ts:
                for r in range(p):
                    Wk[r, (k * p + r) * pL + t.direction] += t.coeff
            blocks.append(post_affine(core, Wk, np.zeros(p)))
        g = glue_blocks(blocks, p, L, tol=1e-7)
        group_nets.append(pre_affine(g, np.array([[1.0]]),
                                     np.array([-scale * shift])))
    total = stack_nets(group_nets, [[0]] * len(group_nets), 1)
    Wsum = np.hstack([np.eye(p)] * len(group_nets))
    net = post_affine(total, Wsum, np.zeros(p))
    return CompiledIterate(net, n, "homogeneous",
                           {"terms": len(terms), "groups": len(groups)})
