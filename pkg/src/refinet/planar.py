"""Planar CPwL fields on a triangulated convex region, and their exact
lowering to ReLU networks via a max-min lattice of the facet planes.

On a convex domain every CPwL function f with affine pieces l_1..l_P
satisfies f = max_i min_{j in J_i} l_j where J_i collects the pieces whose
plane dominates piece i on its own cell; dominance on a triangle is checked
at its three vertices.  The min/max trees are realized with pairwise ReLU
gadgets of fixed depth ceil(log2 P) each, independent of the legal sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import Layer, ReluNetwork, stack_nets


@dataclass(frozen=True)
class PlanarCpwlField:
    """Vertices (V, 2), triangles (T, 3) int, values (V, d)."""

    vertices: np.ndarray
    triangles: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "triangles", np.asarray(self.triangles, dtype=int))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def piece_planes(self) -> np.ndarray:
        """Affine coefficients (T, d, 3): value = a x + b y + c per triangle."""
        T = self.triangles.shape[0]
        out = np.zeros((T, self.d, 3))
        for i, tri in enumerate(self.triangles):
            P = self.vertices[tri]
            A = np.column_stack([P, np.ones(3)])
            out[i] = np.linalg.solve(A, self.values[tri]).T
        return out

    def __call__(self, pts, tol: float = 1e-9):
        """Direct barycentric evaluation (oracle path)."""
        pts = np.asarray(pts, dtype=float)
        single = pts.ndim == 1
        P = np.atleast_2d(pts)
        out = np.full((P.shape[0], self.d), np.nan)
        best = np.full(P.shape[0], -np.inf)
        for tri in self.triangles:
            V = self.vertices[tri]
            A = np.column_stack([V, np.ones(3)])
            lam = np.linalg.solve(A.T, np.column_stack([P, np.ones(P.shape[0])]).T).T
            m = lam.min(axis=1)
            upd = m > best
            if np.any(upd):
                out[upd] = lam[upd] @ self.values[tri]
                best[upd] = m[upd]
        if np.any(best < -tol):
            raise ValueError("point outside the triangulated region")
        return out[0] if single else out


def fan_field(center, center_value, boundary_pts, boundary_values) -> PlanarCpwlField:
    """Fan triangulation over a closed boundary polygon (cyclic order)."""
    bpts = np.asarray(boundary_pts, dtype=float)
    bvals = np.atleast_2d(np.asarray(boundary_values, dtype=float).T).T
    if bvals.ndim == 1:
        bvals = bvals[:, None]
    n = bpts.shape[0]
    verts = np.vstack([np.asarray(center, dtype=float)[None, :], bpts])
    vals = np.vstack([np.atleast_1d(center_value)[None, :], bvals])
    tris = np.array([[0, 1 + i, 1 + (i + 1) % n] for i in range(n)])
    return PlanarCpwlField(verts, tris, vals)


def _legal_sets(field: PlanarCpwlField, planes_c: np.ndarray, tol_rel: float = 1e-9):
    """J_i = pieces whose plane dominates piece i on triangle i (one component)."""
    T = field.triangles.shape[0]
    # plane values at every triangle vertex: (T planes, T tris, 3 verts)
    vert_xy = field.vertices[field.triangles]  # (T, 3, 2)
    ones = np.ones(vert_xy.shape[:2] + (1,))
    X = np.concatenate([vert_xy, ones], axis=2)  # (T, 3, 3)
    vals = np.einsum("jk,tvk->jtv", planes_c, X)  # (planes j, tri t, vert v)
    scale = 1.0 + np.max(np.abs(vals))
    groups = []
    for i in range(T):
        ok = np.all(vals[:, i, :] >= vals[i, i, :][None, :] - tol_rel * scale, axis=1)
        groups.append(list(np.nonzero(ok)[0]))
    return groups


def _tree_reduce_layers(init_A, init_c, groups, n_stages, op):
    """Min (op='min') or max tree over affine values, fixed stage count.

    init_A/init_c express the leaf values as an affine map of the network
    input; returns (layers, final_W, final_b) with one value per group.
    """
    layers = []
    # current values = A @ (last relu output) + c; initially of the raw input
    A = np.asarray(init_A, dtype=float)
    c = np.asarray(init_c, dtype=float)
    sizes = [len(g) for g in groups]
    offs = np.cumsum([0] + sizes)
    order = []  # row index per (group, member)
    for gi, g in enumerate(groups):
        order.append(list(range(offs[gi], offs[gi + 1])))
    for _ in range(n_stages):
        rows_W = []
        rows_b = []
        new_order = []
        recon = []  # per new value: list of (relu_row, coeff)
        r = 0
        for g in order:
            new_g = []
            i = 0
            while i < len(g):
                if i + 1 < len(g):
                    u, v = g[i], g[i + 1]
                    if op == "min":
                        rows_W.append(A[u] - A[v]); rows_b.append(c[u] - c[v])
                    else:
                        rows_W.append(A[v] - A[u]); rows_b.append(c[v] - c[u])
                    rows_W.append(A[u]); rows_b.append(c[u])
                    rows_W.append(-A[u]); rows_b.append(-c[u])
                    sgn = -1.0 if op == "min" else 1.0
                    recon.append([(r, sgn), (r + 1, 1.0), (r + 2, -1.0)])
                    r += 3
                    i += 2
                else:
                    w = g[i]
                    rows_W.append(A[w]); rows_b.append(c[w])
                    rows_W.append(-A[w]); rows_b.append(-c[w])
                    recon.append([(r, 1.0), (r + 1, -1.0)])
                    r += 2
                    i += 1
                new_g.append(len(recon) - 1)
            new_order.append(new_g)
        W = np.vstack(rows_W)
        b = np.array(rows_b)
        layers.append(Layer(W, b, "relu"))
        A = np.zeros((len(recon), r))
        c = np.zeros(len(recon))
        for vi, combo in enumerate(recon):
            for row, coeff in combo:
                A[vi, row] = coeff
        order = new_order
    final_rows = [g[0] for g in order]
    for g in order:
        if len(g) != 1:
            raise RuntimeError("tree reduction did not converge")
    return layers, A[final_rows], c[np.array(final_rows)]


def lower_planar_component(field: PlanarCpwlField, comp: int) -> ReluNetwork:
    planes = field.piece_planes()[:, comp, :]  # (P, 3)
    P = planes.shape[0]
    groups = _legal_sets(field, planes)
    stages = max(1, math.ceil(math.log2(P))) if P > 1 else 1
    # leaves: member plane values, affine in (x, y)
    leaf_A = np.vstack([planes[j, :2] for g in groups for j in g])
    leaf_c = np.array([planes[j, 2] for g in groups for j in g])
    layers, A, c = _tree_reduce_layers(leaf_A, leaf_c, groups, stages, "min")
    # max tree over the per-piece minima
    mgroups = [list(range(P))]
    mlayers, A2, c2 = _tree_reduce_layers(A, c, mgroups, stages, "max")
    out = layers + mlayers + [Layer(A2, c2, "linear")]
    return ReluNetwork(2, out)


def lower_planar_field(field: PlanarCpwlField) -> ReluNetwork:
    """Exact ReLU realization of the field on its convex domain."""
    nets = [lower_planar_component(field, k) for k in range(field.d)]
    return stack_nets(nets, [[0, 1]] * len(nets), 2)
