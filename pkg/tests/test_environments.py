import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from iotopt.core import BoxSet, RngStream
from iotopt.environments import (ArmSet, DemandProcess, FeedbackError, FeedbackMode, FiniteMDP, FogNetwork,
                                 QueueNetwork, QueueState, SlotFunctions, availability_masks,
                                 default_fog_network, default_queue_network, demand_next, fog_arm_grid,
                                 fog_arm_instance, fog_slot, make_fog_instance, queue_step, random_mdp,
                                 stationary_arm_instance)
from iotopt.environments.slots import QuadraticSlot


def test_single_node_loss():
    net = FogNetwork(1, (), BoxSet.uniform(2, 0, 5), a=[1.0, 1.0], b=[0.0, 0.0])
    fns = fog_slot(net, [0.0])
    assert fns.value([2.0, 1.0]) == pytest.approx(5.0)


def test_node_balance_arithmetic():
    net = default_fog_network(3)
    x = np.zeros(net.dim)
    x[0], x[1] = 1.0, 2.0  # inflow 0->1 and outflow 1->2
    x[net.cloud_index(1)] = 1.0
    x[net.local_index(1)] = 3.0
    g = fog_slot(net, [0.0, 5.0, 0.0]).constraint(x)
    assert g[1] == pytest.approx(0.0)


def test_gradient_matches_finite_differences():
    gen = np.random.default_rng(7)
    net = default_fog_network(3)
    fns = fog_slot(net, gen.uniform(0.5, 1.5, 3), RngStream(7, 2))
    x = gen.uniform(0, 1, net.dim)
    h = 1e-6
    fd = np.array([(fns.oracle().value(x + h * e) - fns.oracle().value(x - h * e)) / (2 * h)
                   for e in np.eye(net.dim)])
    assert np.max(np.abs(fd - fns.gradient(x))) <= 1e-5


def test_fog_slot_errors():
    net = default_fog_network(3)
    with pytest.raises(ValueError):
        fog_slot(net, [-1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        fog_slot(net, [1.0, 1.0])
    with pytest.raises(ValueError):
        fog_slot(net, [1.0, 1.0, 1.0]).value(np.zeros(3))


def test_default_network_dimension():
    net = default_fog_network(3)
    assert net.dim == 8
    assert net.caps.lower.min() >= 0


def test_iid_demand_replays():
    lo, hi = np.zeros(2), np.ones(2)
    a = DemandProcess("iid-uniform", lo, hi, RngStream(1, 1)).sample(50)
    b = DemandProcess("iid-uniform", lo, hi, RngStream(1, 1))
    assert np.array_equal(a, np.array([demand_next(b) for _ in range(50)]))


def test_markov_rho_zero_is_iid():
    lo, hi = np.zeros(3), np.ones(3)
    a = DemandProcess("iid-uniform", lo, hi, RngStream(2, 1)).sample(100)
    b = DemandProcess("markov-ar1", lo, hi, RngStream(2, 1), rho=0.0).sample(100)
    assert np.allclose(a, b, rtol=0, atol=1e-15)


def test_markov_autocorrelation():
    z = DemandProcess("markov-ar1", [0.0], [1.0], RngStream(3, 1), rho=0.9).sample(100_000)[:, 0]
    z = z - z.mean()
    r1 = (z[1:] @ z[:-1]) / (z @ z)
    assert abs(r1 - 0.9) <= 0.02


def test_sample_equals_repeated_next():
    for kind in ("markov-ar1", "adversarial-switch", "adversarial-ramp"):
        a = DemandProcess(kind, [0.2, 0.1], [1.0, 2.0], RngStream(4, 1), rho=0.5, period=7, slope=0.05)
        b = DemandProcess(kind, [0.2, 0.1], [1.0, 2.0], RngStream(4, 1), rho=0.5, period=7, slope=0.05)
        seq = np.array([a.next() for _ in range(40)])
        assert np.allclose(seq, b.sample(40), rtol=0, atol=1e-14)


def test_adversarial_switch_alternates():
    proc = DemandProcess("adversarial-switch", [0.0], [1.0], RngStream(5, 1), period=10)
    z = proc.sample(200)[:, 0]
    assert set(np.unique(z)) == {0.0, 1.0}
    changes = np.flatnonzero(np.diff(z) != 0)
    assert np.all(np.diff(changes) == 10)


@given(st.sampled_from(["iid-uniform", "markov-ar1", "adversarial-switch", "adversarial-ramp"]),
       st.integers(0, 2**32), st.floats(0, 0.99))
def test_demand_bounded(kind, seed, rho):
    proc = DemandProcess(kind, [0.5, 0.0], [1.5, 2.0], RngStream(seed, 1), rho=rho, period=5, slope=0.1)
    z = proc.sample(64)
    assert np.all(z >= 0) and np.all(z <= proc.d_max + 1e-12)


def test_demand_validation():
    with pytest.raises(ValueError):
        DemandProcess("brownian", [0.0], [1.0], RngStream(0))
    with pytest.raises(ValueError):
        DemandProcess("iid-uniform", [-1.0], [1.0], RngStream(0))
    with pytest.raises(ValueError):
        DemandProcess("markov-ar1", [0.0], [1.0], RngStream(0), rho=1.0)


def test_fog_instance_prefix_consistent():
    net = default_fog_network(3)
    long = make_fog_instance(net, 500, seed=3)
    short = make_fog_instance(net, 200, seed=3)
    assert np.array_equal(long.demands[:200], short.demands)
    assert np.array_equal(long.multipliers[:200], short.multipliers)


def _two_node_net():
    arrivals = DemandProcess("iid-uniform", [0.0, 0.0], [1.0, 1.0], RngStream(0, 21))
    return QueueNetwork(np.array([[-1.0], [1.0]]), arrivals, np.zeros(2), BoxSet.uniform(1, 0, 1),
                        np.ones(1), np.zeros(1))


def test_queue_recursion_example():
    net = _two_node_net()
    seen = []
    for c in [10.0, 5.0] + [0.0] * 6:
        seen.append(queue_step(net, [0.0], [c, 0.0]).q[0])
    assert seen[0] == 10.0
    assert all(v == 15.0 for v in seen[1:])


def test_queue_clamps_at_zero():
    net = _two_node_net()
    assert queue_step(net, [0.0], [-3.0, 0.0]).q[0] == 0.0


def test_queue_matches_scalar_oracle():
    net = default_queue_network(seed=4)
    gen = np.random.default_rng(4)
    X = gen.uniform(0, 3, (300, net.n_edges))
    C = net.exogenous(300)
    q_ref = [0.0] * net.n_nodes
    for x, c in zip(X, C):
        q = queue_step(net, x, c).q
        for n in range(net.n_nodes):
            inflow = 0.0
            for e in range(net.n_edges):
                inflow += net.incidence[n, e] * x[e]
            q_ref[n] = max(q_ref[n] + inflow + c[n], 0.0)
        assert np.allclose(q, q_ref, rtol=0, atol=1e-12)


def test_queue_dimension_errors():
    net = _two_node_net()
    with pytest.raises(ValueError):
        queue_step(net, [0.0, 1.0], [0.0, 0.0])


def test_incidence_validation():
    arrivals = DemandProcess("iid-uniform", [0.0, 0.0], [1.0, 1.0], RngStream(0))
    with pytest.raises(ValueError):
        QueueNetwork(np.array([[1.0], [1.0]]), arrivals, np.zeros(2), BoxSet.uniform(1, 0, 1),
                     np.ones(1), np.zeros(1))


@given(arrays(float, 4, elements=st.floats(0, 50)), arrays(float, 5, elements=st.floats(0, 3)),
       arrays(float, 4, elements=st.floats(-50, 50)), st.permutations(range(4)))
def test_queue_nonnegative_and_order_free(q0, x, c, perm):
    net = default_queue_network()
    net.queues = QueueState(q0)
    q = queue_step(net, x, c).q
    assert np.all(q >= 0)
    # Updating coordinates one at a time in any order gives the same vector.
    flow = net.incidence @ x
    manual = q0.copy()
    for n in perm:
        manual[n] = max(manual[n] + flow[n] + c[n], 0.0)
    assert np.array_equal(q, manual)


def test_random_mdp_trivial():
    m = random_mdp(1, 1, 0.5, RngStream(0, 99))
    assert np.array_equal(m.transition, [[[1.0]]])


@given(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32))
def test_random_mdp_rows_stochastic(nS, nA, seed):
    m = random_mdp(nS, nA, 0.9, RngStream(seed, 99))
    assert np.max(np.abs(m.transition.sum(-1) - 1)) <= 1e-12
    assert np.all((m.cost >= 0) & (m.cost <= 1))


def test_random_mdp_determinism_and_errors():
    a, b = random_mdp(4, 2, 0.9, RngStream(8, 99)), random_mdp(4, 2, 0.9, RngStream(8, 99))
    assert np.array_equal(a.transition, b.transition) and np.array_equal(a.cost, b.cost)
    with pytest.raises(ValueError):
        random_mdp(0, 2, 0.9, RngStream(0))
    with pytest.raises(ValueError):
        random_mdp(2, 2, 1.0, RngStream(0))
    with pytest.raises(ValueError):
        FiniteMDP(np.full((1, 2, 2), 0.4), np.zeros((2, 1)), 0.9, np.ones((2, 1), bool))


@st.composite
def fog_point(draw):
    net = default_fog_network(3)
    span = net.caps.upper
    x = draw(arrays(float, net.dim, elements=st.floats(0, 1))) * span
    dem = draw(arrays(float, 3, elements=st.floats(0, 3)))
    return net, x, dem


@given(fog_point(), st.integers(0, 7), st.floats(1e-3, 0.5))
def test_sign_convention(case, i, h):
    net, x, dem = case
    fns = fog_slot(net, dem)
    g0 = fns.constraint(x)
    e = np.zeros(net.dim)
    e[i] = h
    g1 = fns.constraint(x + e)
    if i < net.n_edges:
        src, dst = net.edges[i]
        assert g1[src] < g0[src] and g1[dst] > g0[dst]
    else:
        n = (i - net.n_edges) % net.n_nodes
        assert g1[n] < g0[n]
    more = fog_slot(net, dem + h).constraint(x)
    assert np.all(more > g0)


@given(fog_point(), arrays(float, 8, elements=st.floats(0, 1)), st.floats(0, 1), st.integers(0, 2**32))
def test_loss_convex(case, y, theta, seed):
    net, x, dem = case
    y = y * net.caps.upper
    fns = fog_slot(net, dem, RngStream(seed, 2)).oracle()
    lhs = fns.value(theta * x + (1 - theta) * y)
    assert lhs <= theta * fns.value(x) + (1 - theta) * fns.value(y) + 1e-9


def test_one_point_budget_enforced():
    net = default_fog_network(3)
    fns = fog_slot(net, [1.0, 1.0, 1.0], mode=FeedbackMode.ONE_POINT)
    fns.value(np.zeros(8))
    with pytest.raises(FeedbackError):
        fns.value(np.zeros(8))
    with pytest.raises(FeedbackError):
        fns.gradient(np.zeros(8))
    assert fns.evaluations == 1
    # The benchmark view is unrestricted.
    oracle = fns.oracle()
    oracle.value(np.zeros(8)), oracle.value(np.zeros(8))
    assert oracle.gradient(np.zeros(8)).shape == (8,)


def test_multi_point_budget():
    fns = QuadraticSlot([1.0], [0.0], [0.0], [[1.0]], mode="multi-point", budget=4)
    for _ in range(4):
        fns.value([0.0])
    with pytest.raises(FeedbackError):
        fns.value([0.0])


def test_feedback_mode_parse():
    assert FeedbackMode.parse("one-point") is FeedbackMode.ONE_POINT
    with pytest.raises(ValueError):
        FeedbackMode.parse("psychic")


def test_quadratic_slot_rejects_concave():
    with pytest.raises(ValueError):
        QuadraticSlot([-1.0], [0.0], [0.0], [[1.0]])


def test_generic_slot_functions():
    fns = SlotFunctions(lambda x: float(x @ x), lambda x: 2 * x, lambda x: x[:1], lambda x: np.eye(1, 2), 2, 1)
    assert fns.value([1.0, 2.0]) == 5.0 and fns.jacobian([0.0, 0.0]).shape == (1, 2)


@given(st.integers(1, 6), st.integers(1, 3000), st.floats(0.05, 1.0), st.integers(0, 2**32))
def test_availability_nonempty_and_prefix(K, T, rate, seed):
    m = availability_masks(K, T, rate, seed)
    assert m.shape == (T, K) and np.all(m.any(1))
    assert np.array_equal(availability_masks(K, T // 2 + 1, rate, seed), m[: T // 2 + 1])


def test_adversarial_availability():
    m = availability_masks(4, 400, 0.5, 3, kind="adversarial", period=25)
    assert np.all(m[:, 0]) and 0.3 < m[:, 1:].mean() < 0.7
    assert np.array_equal(m, availability_masks(4, 400, 0.5, 3, kind="adversarial", period=25))


def test_arm_set_validation():
    with pytest.raises(ValueError):
        ArmSet(np.zeros((2, 1)), np.array([[True, False], [False, False]]))


def test_stationary_arms_shape():
    inst = stationary_arm_instance(100, 0)
    assert inst.F.shape == (100, 5) and inst.G.shape == (100, 5, 1)
    assert inst.prefix(10).horizon == 10


def test_fog_arm_grid_and_indicator():
    net = default_fog_network(2)
    arms = fog_arm_grid(net, 2)
    assert arms.shape == (2 ** net.dim, net.dim)
    inst = fog_arm_instance(make_fog_instance(net, 30, 1, "iid-uniform", 0.0), arms, 3.0)
    assert set(np.unique(inst.F)) <= {0.0, 1.0}
    assert np.allclose(inst.G[:, 0], make_fog_instance(net, 30, 1, "iid-uniform", 0.0).demands)
