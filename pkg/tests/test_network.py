import numpy as np
import pytest

from refinet.cpwl import CpwlCurve, ScalarCpwl, hat
from refinet.network import (Layer, ReluNetwork, affine_net, from_json_dict,
                             identity_net, lower_curve_1d, lower_scalar_cpwl,
                             min2_net, net_stats, parallel, passthrough,
                             post_affine, pre_affine, serial, stack_nets,
                             to_json_dict)


def rand_pts(rng, n, d):
    return rng.normal(size=(n, d))


def test_canonical_form():
    net = affine_net(np.array([[2.0]]), np.array([1.0]))
    assert net.depth == 0
    assert len(net.layers) == 1
    assert net.layers[-1].activation == "linear"


def test_lower_scalar_cpwl_exact():
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = rng.integers(2, 8)
        f = ScalarCpwl(np.sort(rng.uniform(-1, 2, k)), rng.normal(size=k))
        net = lower_scalar_cpwl(f)
        ts = np.sort(np.concatenate([np.linspace(-2, 3, 400), f.ts]))
        got = net.eval_scalar_input(ts)[:, 0]
        assert np.max(np.abs(got - f(ts))) < 1e-12
        assert net.depth == 1
        assert net_stats(net)["width"] == k


def test_serial_and_affine_fold():
    rng = np.random.default_rng(1)
    f = lower_scalar_cpwl(hat(0.0, 0.5, 1.0))
    g = pre_affine(post_affine(f, np.array([[3.0]]), np.array([1.0])),
                   np.array([[0.5]]), np.array([0.25]))
    # affine composition must not add depth
    assert g.depth == f.depth
    ts = rng.uniform(-1, 2, 200)
    want = 3.0 * hat(0.0, 0.5, 1.0)(0.5 * ts + 0.25) + 1.0
    assert np.max(np.abs(g.eval_scalar_input(ts)[:, 0] - want)) < 1e-12


def test_passthrough_exact():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(100, 3))
    for depth in [1, 2, 4]:
        pg = passthrough(3, "general", depth)
        assert pg.depth == depth
        assert np.max(np.abs(pg(x) - x)) < 1e-12
    pn = passthrough(3, "nonneg", 2)
    xn = np.abs(x)
    assert np.max(np.abs(pn(xn) - xn)) < 1e-12


def test_stack_nets_pads_depth():
    f = lower_scalar_cpwl(hat(0.0, 0.5, 1.0))        # depth 1
    g = serial(f, lower_scalar_cpwl(hat(0.0, 0.5, 1.0)))  # depth 2
    st = stack_nets([f, g], [[0], [0]], 1)
    assert st.depth == 2
    ts = np.linspace(-1, 2, 150)
    out = st.eval_scalar_input(ts)
    h = hat(0.0, 0.5, 1.0)
    assert np.max(np.abs(out[:, 0] - h(ts))) < 1e-12
    assert np.max(np.abs(out[:, 1] - h(h(ts)))) < 1e-12


def test_parallel_disjoint_inputs():
    a = lower_scalar_cpwl(hat(0.0, 0.5, 1.0))
    b = lower_scalar_cpwl(hat(0.25, 0.5, 0.75))
    net = parallel(a, b)
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, (50, 2))
    out = net(x)
    assert np.max(np.abs(out[:, 0] - hat(0.0, 0.5, 1.0)(x[:, 0]))) < 1e-12
    assert np.max(np.abs(out[:, 1] - hat(0.25, 0.5, 0.75)(x[:, 1]))) < 1e-12


def test_min2():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(200, 2))
    out = min2_net()(x)[:, 0]
    assert np.max(np.abs(out - np.min(x, axis=1))) < 1e-12


def test_lower_curve_1d():
    curve = CpwlCurve((hat(0.25, 0.5, 0.75), hat(0.3, 0.5, 0.7, height=-2.0)), 1)
    net = lower_curve_1d(curve)
    ts = np.linspace(-0.5, 1.5, 300)
    assert np.max(np.abs(net.eval_scalar_input(ts) - curve(ts))) < 1e-12


def test_sparse_stacking_is_exact():
    # enough copies to push the block-diagonal layers over the sparse cutoff
    base = lower_scalar_cpwl(ScalarCpwl(np.linspace(0, 1, 40),
                                        np.sin(np.linspace(0, 6, 40))))
    wide = stack_nets([serial(base, passthrough(1, "general", 1))] * 100,
                      [[0]] * 100, 1)
    from scipy import sparse
    assert any(sparse.issparse(l.weights) for l in wide.layers)
    ts = np.linspace(-0.2, 1.2, 200)
    out = wide.eval_scalar_input(ts)
    want = base.eval_scalar_input(ts)[:, 0]
    assert np.max(np.abs(out - want[:, None])) < 1e-12


def test_json_roundtrip_dense_and_sparse():
    base = lower_scalar_cpwl(hat(0.0, 0.5, 1.0))
    wide = stack_nets([serial(base, passthrough(1, "general", 1))] * 100,
                      [[0]] * 100, 1)
    for net in [base, wide]:
        back = from_json_dict(to_json_dict(net, builder="test"))
        ts = np.linspace(-1, 2, 100)
        assert np.max(np.abs(back.eval_scalar_input(ts)
                             - net.eval_scalar_input(ts))) < 1e-15


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        serial(identity_net(2), identity_net(3))
    with pytest.raises(ValueError):
        ReluNetwork(1, [Layer(np.eye(2), np.zeros(2), "relu")])
