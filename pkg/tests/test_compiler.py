import numpy as np
import pytest

from refinet.cpwl import CpwlCurve, SpecialHat, SupportError, hat
from refinet.compiler import (atomic_unit_interval_net, compile_homogeneous,
                              glue_blocks, loop_assets, product_gadget,
                              scalar_factor_net)
from refinet.loop import LoopConfig
from refinet.network import affine_net, lower_scalar_cpwl, post_affine
from refinet.refinement import RefinementOp, apply_v_n, residual_iterate, vectorize


def scalar_op():
    return RefinementOp(2, 1, 1, {0: [[1.0]], 1: [[1.0]]})


def test_product_gadget_contracts():
    rng = np.random.default_rng(0)
    a, N = 2.5, 3
    g = product_gadget(a, N)
    y = rng.uniform(-a, a, (500, N))
    lam = rng.uniform(0, 1, 500)
    on = g(np.column_stack([np.ones(500), y]))
    off = g(np.column_stack([np.zeros(500), y]))
    zero = g(np.column_stack([lam, np.zeros((500, N))]))
    assert np.max(np.abs(on - y)) < 1e-12 * a
    assert np.max(np.abs(off)) < 1e-12 * a
    assert np.max(np.abs(zero)) < 1e-12 * a
    assert g.depth == 2


def test_product_gadget_needs_positive_bound():
    with pytest.raises(ValueError):
        product_gadget(0.0, 2)


def test_scalar_factor_net_tracks_residual():
    h = SpecialHat(hat(0.3, 0.5, 0.7))
    for M, n in [(2, 3), (3, 2)]:
        assets = loop_assets(M, n, 0.25, 0.125, 0.5)
        net = scalar_factor_net(h, assets, n)
        rng = np.random.default_rng(M)
        xs = rng.uniform(0, 1, 200)
        out = net.eval_scalar_input(xs)
        want = np.array([h.base(np.array([residual_iterate(x, M, n).residuals[-1]]))[0]
                         for x in xs])
        assert np.max(np.abs(out[:, 0] - want)) < 1e-9
        # the input parameter rides along unchanged
        assert np.max(np.abs(out[:, 1] - xs)) < 1e-12


def test_atomic_unit_interval_net():
    op = scalar_op()
    h = SpecialHat(hat(0.25, 0.5, 0.75))
    cfg = LoopConfig(2, 2)
    net = atomic_unit_interval_net(op, h, 0, cfg, 2)
    curve = CpwlCurve((h.base,), 1)
    G2 = vectorize(apply_v_n(op, curve, 2))
    xs = np.linspace(0, 1, 501)
    got = net.eval_scalar_input(xs)
    want = np.array([G2(x) for x in xs])
    assert np.max(np.abs(got - want)) < 1e-10


def test_glue_blocks_simple():
    # two cells of a tent over [0, 2]: f1(s) = s, f2(s) = 1 - s
    up = affine_net(np.array([[1.0]]), np.array([0.0]))
    down = affine_net(np.array([[-1.0]]), np.array([1.0]))
    g = glue_blocks([up, down], 1, 2)
    ts = np.linspace(-1, 3, 801)
    want = np.clip(np.minimum(ts, 2 - ts), 0.0, None)
    assert np.max(np.abs(g.eval_scalar_input(ts)[:, 0] - want)) < 1e-12


def test_glue_blocks_rejects_mismatch():
    up = affine_net(np.array([[1.0]]), np.array([0.0]))
    with pytest.raises(ValueError):
        glue_blocks([up, up], 1, 2)      # f1(1) = 1 != f2(0) = 0 tail
    with pytest.raises(ValueError):
        glue_blocks([up], 1, 1)          # does not vanish at the right end


def test_compile_homogeneous_scalar_exact():
    op = scalar_op()
    gam = CpwlCurve((hat(0.25, 0.5, 0.75),), 1)
    for n in [0, 1, 2, 3]:
        ci = compile_homogeneous(op, gam, n)
        oracle = apply_v_n(op, gam, n)
        ts = np.sort(np.concatenate([np.linspace(-0.5, 1.5, 801),
                                     np.arange(2 ** n + 1) / 2 ** n]))
        err = np.max(np.abs(ci(ts)[:, 0] - oracle(ts).ravel()))
        assert err < 1e-12


def test_compile_homogeneous_vector_multicell():
    mask = {0: [[0.5]], 1: [[0.3]], 2: [[0.4]], 3: [[-0.2]], 4: [[0.6]]}
    op = RefinementOp(3, 1, 2, mask)
    gam = CpwlCurve((hat(0.25, 0.6, 0.75),), 2)
    for n in [1, 2]:
        ci = compile_homogeneous(op, gam, n)
        oracle = apply_v_n(op, gam, n)
        ts = np.linspace(-0.5, 2.5, 901)
        err = np.max(np.abs(ci(ts)[:, 0] - oracle(ts).ravel()))
        assert err < 1e-11


def test_compile_requires_compact_support():
    op = scalar_op()
    bad = CpwlCurve((hat(-0.25, 0.25, 0.75),), 1)
    with pytest.raises(SupportError):
        compile_homogeneous(op, bad, 2)


def test_compiled_structure_constant_width():
    op = scalar_op()
    gam = CpwlCurve((hat(0.25, 0.5, 0.75),), 1)
    stats = [compile_homogeneous(op, gam, n).stats for n in [2, 3, 4]]
    widths = {s["width"] for s in stats}
    assert len(widths) == 1
    diffs = {stats[i + 1]["depth"] - stats[i]["depth"] for i in range(2)}
    assert len(diffs) == 1
