import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iotopt.core import BoxSet, RngStream, shrink_box
from iotopt.environments import FeedbackError, FeedbackMode, default_fog_network, make_fog_instance
from iotopt.environments.slots import QuadraticSlot, SlotFunctions
from iotopt.saddle_point import (AlgoState, InfeasiblePerturbation, SaddleConfig, bansp_step, draw_directions,
                                 mosp_step, multi_point_gradient, one_point_gradient, run_saddle,
                                 run_saddle_batch, run_saddle_generic)

BOX3 = BoxSet([0.0], [3.0])


def toy_slot(mode=FeedbackMode.FULL, budget=None):
    # f(x) = (x - 1)^2, g(x) = x - 2
    return QuadraticSlot([1.0], [-2.0], [-2.0], [[1.0]], f0=1.0, mode=mode, budget=budget)


class ListEnv:
    """Environment over an explicit list of slot factories."""

    def __init__(self, make, box, T, mode=FeedbackMode.FULL):
        self.make, self.box, self.T, self.mode, self.name = make, box, T, mode, "toy"

    def slot(self, t):
        return self.make(t)


def test_mosp_single_step():
    st_ = AlgoState.init([0.0], 1)
    new = mosp_step(st_, toy_slot(), SaddleConfig(0.5, 0.5), BOX3)
    assert new.x_hat[0] == pytest.approx(1.0, abs=1e-15)
    assert new.lam[0] == 0.0


def test_mosp_fixed_point():
    fns = QuadraticSlot([0.0], [0.0], [0.0], [[0.0]])
    st_ = AlgoState.init([1.3], 1, lam0=[0.7])
    new = mosp_step(st_, fns, SaddleConfig(0.5, 0.5), BOX3)
    assert new.x_hat[0] == 1.3 and new.lam[0] == 0.7


def test_mosp_dual_clamp():
    # g(x_t) + grad_g * dx <= 0 keeps a zero multiplier at zero.
    new = mosp_step(AlgoState.init([0.0], 1), toy_slot(), SaddleConfig(0.1, 0.1), BOX3)
    assert new.lam[0] == 0.0


def test_mosp_dual_positive_with_correction():
    # f = (x - 3)^2 pulls x upward; g = x - 0.5 is violated after the step.
    fns = QuadraticSlot([1.0], [-6.0], [-0.5], [[1.0]], f0=9.0)
    new = mosp_step(AlgoState.init([0.0], 1), fns, SaddleConfig(0.25, 0.5), BOX3)
    assert new.x_hat[0] == pytest.approx(1.5)
    assert new.lam[0] == pytest.approx(0.5 * (-0.5 + 1.5))


def test_mosp_rejects_bandit():
    with pytest.raises(FeedbackError):
        mosp_step(AlgoState.init([0.0], 1), toy_slot(FeedbackMode.ONE_POINT), SaddleConfig(0.5, 0.5), BOX3)


def linear_slot(slope, mode=FeedbackMode.ONE_POINT, budget=None):
    return QuadraticSlot([0.0], [slope], [0.0], [[0.0]], mode=mode, budget=budget)


def square_slot(mode=FeedbackMode.ONE_POINT, budget=None, d=1):
    return QuadraticSlot(np.ones(d), np.zeros(d), [0.0], np.zeros((1, d)), mode=mode, budget=budget)


@pytest.mark.parametrize("u", [1.0, -1.0])
def test_one_point_exact_on_linear(u):
    est, xp, val = one_point_gradient(linear_slot(3.0), [0.0], 0.1, u=np.array([u]))
    assert est[0] == pytest.approx(3.0) and xp[0] == pytest.approx(0.1 * u)


def test_one_point_two_point_average():
    e1, _, _ = one_point_gradient(square_slot(), [1.0], 0.1, u=np.array([1.0]))
    e2, _, _ = one_point_gradient(square_slot(), [1.0], 0.1, u=np.array([-1.0]))
    assert e1[0] == pytest.approx(12.1) and e2[0] == pytest.approx(-8.1)
    assert 0.5 * (e1[0] + e2[0]) == pytest.approx(2.0)


def test_one_point_monte_carlo_bias():
    H = np.array([1.0, 2.0, 3.0])
    fns = QuadraticSlot(H, [1.0, -1.0, 0.5], [0.0], np.zeros((1, 3)), mode="one-point", budget=10**6)
    x = np.array([0.3, -0.2, 0.1])
    delta = 0.1
    gen = RngStream(11, 0)
    est = np.mean([one_point_gradient(fns, x, delta, gen)[0] for _ in range(100_000)], axis=0)
    assert np.linalg.norm(est - (2 * H * x + [1.0, -1.0, 0.5])) <= 5 * delta * 2 * H.max()


def test_one_point_rejects_infeasible():
    with pytest.raises(InfeasiblePerturbation):
        one_point_gradient(linear_slot(1.0), [0.0], 0.1, u=np.array([-1.0]), box=BoxSet([0.0], [1.0]))


def test_one_point_consumes_budget():
    fns = linear_slot(1.0)
    one_point_gradient(fns, [0.5], 0.1, u=np.array([1.0]))
    with pytest.raises(FeedbackError):
        one_point_gradient(fns, [0.5], 0.1, u=np.array([1.0]))


def test_multi_point_linear_exact():
    slot = QuadraticSlot([0.0], [3.0], [0.0], [[0.0]], mode="multi-point", budget=2)
    est, pts, vals = multi_point_gradient(slot, [0.5], 0.1, 2, U=np.array([[-1.0]]))
    assert est[0] == pytest.approx(3.0) and pts.shape == (2, 1) and vals.shape == (2,)


def test_multi_point_quadratic_pair():
    est, _, _ = multi_point_gradient(square_slot("multi-point", 2), [1.0], 0.1, 2, U=np.array([[1.0]]))
    assert est[0] == pytest.approx(2.0, abs=1e-12)


def test_multi_point_lower_bias_than_one_point():
    d, delta = 4, 0.1
    a = np.array([1.0, 0.5, 2.0, 1.5])
    b = np.array([0.3, -0.4, 0.1, 0.2])
    x = np.array([0.2, 0.1, -0.3, 0.4])
    grad = 2 * a * x + b
    multi = QuadraticSlot(a, b, [0.0], np.zeros((1, d)), mode="multi-point", budget=10**6)
    one = QuadraticSlot(a, b, [0.0], np.zeros((1, d)), mode="one-point", budget=10**6)
    g1, g2 = RngStream(12, 0), RngStream(13, 0)
    m = np.mean([multi_point_gradient(multi, x, delta, 8, g1)[0] for _ in range(10_000)], axis=0)
    o = np.mean([one_point_gradient(one, x, delta, g2)[0] for _ in range(80_000)], axis=0)
    assert np.linalg.norm(m - grad) <= 10 * delta ** 2
    assert np.linalg.norm(o - grad) > np.linalg.norm(m - grad)


def test_multi_point_rejects_odd():
    with pytest.raises(ValueError):
        multi_point_gradient(square_slot("multi-point", 4), [0.0], 0.1, 3, RngStream(0))


def test_bansp_fixed_point():
    fns = QuadraticSlot([0.0], [0.0], [0.0], [[0.0]], mode="one-point")
    st_ = AlgoState.init([1.5], 1)
    cfg = SaddleConfig(0.5, 0.5, delta=0.1, gamma=0.2)
    new = bansp_step(st_, fns, cfg, shrink_box(BOX3, 0.2), grad_estimate=np.zeros(1))
    assert new.x_hat[0] == 1.5 and new.lam[0] == 0.0


def test_bansp_supplied_estimate_hand_values():
    # f's gradient replaced by the value 2 at x_hat = 1.5 with g(x) = x.
    fns = QuadraticSlot([1.0], [0.0], [0.0], [[1.0]], mode="one-point")
    new = bansp_step(AlgoState.init([1.5], 1), fns, SaddleConfig(0.5, 0.5), shrink_box(BOX3, 0.0),
                     grad_estimate=np.array([2.0]))
    assert new.x_hat[0] == pytest.approx(0.5)
    assert new.lam[0] == pytest.approx(0.5 * (1.5 + (0.5 - 1.5)))


def test_bansp_with_true_gradient_equals_mosp():
    cfg = SaddleConfig(0.3, 0.7)
    st_ = AlgoState.init([0.4], 1, lam0=[0.2])
    a = mosp_step(st_, toy_slot(), cfg, BOX3)
    b = bansp_step(st_, toy_slot(), cfg, shrink_box(BOX3, 0.0), grad_estimate=2 * 0.4 - 2.0)
    assert np.array_equal(a.x_hat, b.x_hat) and np.array_equal(a.lam, b.lam)


def test_config_validation():
    with pytest.raises(ValueError):
        SaddleConfig(0.1, 0.1, M=3)
    with pytest.raises(ValueError):
        SaddleConfig(0.0, 0.1)
    with pytest.raises(ValueError):
        SaddleConfig(0.1, 0.1, delta=0.3, gamma=0.1).check_bandit(BOX3)
    box = default_fog_network().caps
    for T in (10, 1000, 65536):
        for cfg in (SaddleConfig.bansp_one_point(T, box), SaddleConfig.bansp_multi_point(T, box)):
            cfg.check_bandit(box)
    with pytest.raises(ValueError):
        SaddleConfig.default("sgd", 10, box)


@pytest.fixture(scope="module")
def fog_env():
    net = default_fog_network(3)
    return make_fog_instance(net, 400, seed=5)


def _with_mode(inst, mode, budget=None):
    from iotopt.environments import FogInstance

    return FogInstance(inst.net, inst.demands, inst.multipliers, mode, budget)


def test_run_rejects_empty_horizon(fog_env):
    with pytest.raises(ValueError):
        run_saddle(fog_env, "mosp", SaddleConfig.mosp(10), 0, 0)


def test_run_one_slot(fog_env):
    tr = run_saddle(fog_env, "mosp", SaddleConfig.mosp(1), 1, 0)
    assert tr.horizon == 1 and tr.decision.shape == (1, 8)


def test_run_feedback_mismatch(fog_env):
    with pytest.raises(FeedbackError):
        run_saddle(fog_env, "bansp-1", SaddleConfig.bansp_one_point(10, fog_env.box), 10, 0)


@pytest.mark.parametrize("algo,mode", [("mosp", "full-info"), ("bansp-1", "one-point"),
                                       ("bansp-M", "multi-point")])
def test_run_deterministic(fog_env, algo, mode):
    env = _with_mode(fog_env, mode, 4 if algo == "bansp-M" else None)
    cfg = SaddleConfig.default(algo, 400, env.box)
    a, b = run_saddle(env, algo, cfg, 400, 3), run_saddle(env, algo, cfg, 400, 3)
    assert a.equals(b)
    if algo != "mosp":
        assert not a.equals(run_saddle(env, algo, cfg, 400, 4))


@pytest.mark.parametrize("algo,mode", [("mosp", "full-info"), ("bansp-1", "one-point"),
                                       ("bansp-M", "multi-point")])
def test_batch_matches_slotwise(fog_env, algo, mode):
    env = _with_mode(fog_env, mode, 4 if algo == "bansp-M" else None)
    cfg = SaddleConfig.default(algo, 300, env.box)
    fast = run_saddle(env, algo, cfg, 300, 2)
    slow = run_saddle_generic(env, algo, cfg, 300, 2)
    for x, y in zip(fast.matrix(), slow.matrix()):
        assert np.allclose(x, y, rtol=1e-10, atol=1e-10)


def test_batch_independent_of_batch_size(fog_env):
    env = _with_mode(fog_env, "one-point")
    cfg = SaddleConfig.bansp_one_point(200, env.box)
    other = _with_mode(make_fog_instance(fog_env.net, 200, seed=9), "one-point")
    pair = run_saddle_batch([other, env], "bansp-1", cfg, 200, [9, 5])
    assert pair[1].equals(run_saddle(env, "bansp-1", cfg, 200, 5))


def test_bandit_played_points_in_box(fog_env):
    for algo, mode, M in (("bansp-1", "one-point", None), ("bansp-M", "multi-point", 4)):
        env = _with_mode(fog_env, mode, M)
        cfg = SaddleConfig.default(algo, 400, env.box)
        tr = run_saddle_generic(env, algo, cfg, 400, 1)  # raises if any played point leaves the box
        U = draw_directions(1, 400, 8, max((M or 2) // 2, 1))
        for t in range(400):
            pts = tr.decision[t] + cfg.delta * U[t] if algo == "bansp-M" else tr.decision[t][None]
            assert np.all(pts >= env.box.lower - 1e-12) and np.all(pts <= env.box.upper + 1e-12)


def test_mosp_converges_to_grid_optimum():
    # f = (x1 - 1)^2 + (x2 - 2)^2 s.t. x1 + x2 <= 2 on [0, 3]^2.
    box = BoxSet.uniform(2, 0, 3)
    env = ListEnv(lambda t: QuadraticSlot([1.0, 1.0], [-2.0, -4.0], [-2.0], [[1.0, 1.0]], f0=5.0), box, 10_000)
    T = 10_000
    tr = run_saddle_generic(env, "mosp", SaddleConfig.mosp(T, c=1.0), T, 0)
    h = 0.0025
    g = np.arange(0, 3 + h / 2, h)
    X1, X2 = np.meshgrid(g, g, indexing="ij")
    F = np.where(X1 + X2 <= 2 + 1e-12, (X1 - 1) ** 2 + (X2 - 2) ** 2, np.inf)
    i = np.unravel_index(np.argmin(F), F.shape)
    assert np.linalg.norm(tr.decision[-1] - [X1[i], X2[i]]) <= 1e-2


def _ogd_env(T):
    gen = np.random.default_rng(3)
    targets = gen.uniform(0, 2, (T, 3))
    box = BoxSet.uniform(3, 0, 1.5)
    return ListEnv(lambda t: QuadraticSlot(np.ones(3), -2 * targets[t], [0.0], np.zeros((1, 3))), box, T), targets


def test_mosp_without_constraints_is_ogd():
    T = 300
    env, targets = _ogd_env(T)
    cfg = SaddleConfig(0.05, 0.05)
    tr = run_saddle_generic(env, "mosp", cfg, T, 0)
    x = env.box.lower.copy()
    for t in range(T):
        assert np.array_equal(tr.decision[t], x)
        x = np.clip(x - 0.05 * (2 * x - 2 * targets[t]), 0, 1.5)
    assert np.all(tr.multiplier == 0)


def test_dual_correction_is_used(fog_env):
    T = 300
    cfg = SaddleConfig.mosp(T)
    tr = run_saddle(fog_env, "mosp", cfg, T, 0)
    B, box = fog_env.incidence, fog_env.box

    def replay(corrected):
        x, lam, X = box.lower.copy(), np.zeros(3), []
        for t in range(T):
            a, b, dm = fog_env.a[t], fog_env.b[t], fog_env.demands[t]
            X.append(x)
            g = dm + B @ x
            xn = np.clip(x - cfg.alpha * (2 * a * x + b + B.T @ lam), box.lower, box.upper)
            lam = np.maximum(lam + cfg.mu * (g + (B @ (xn - x) if corrected else 0.0)), 0.0)
            x = xn
        return np.array(X)

    assert np.allclose(tr.decision, replay(True), rtol=0, atol=1e-12)
    assert not np.allclose(tr.decision, replay(False), rtol=0, atol=1e-6)


@st.composite
def small_problem(draw):
    d = draw(st.integers(1, 3))
    N = draw(st.integers(1, 2))
    seed = draw(st.integers(0, 2**32))
    return d, N, seed


def _random_slot(gen, d, N, mode):
    return QuadraticSlot(gen.uniform(0.1, 2, d), gen.uniform(-2, 2, d), gen.uniform(-1, 1, N),
                         gen.uniform(-1, 1, (N, d)), mode=mode, budget=None if mode == "full-info" else 10)


@given(small_problem(), st.booleans())
def test_mosp_invariants(prob, adaptive):
    d, N, seed = prob
    gen = np.random.default_rng(seed)
    box = BoxSet(-gen.uniform(0, 1, d), gen.uniform(0, 1, d))
    cfg = SaddleConfig(gen.uniform(0.01, 1), gen.uniform(0.01, 1), adaptive=adaptive)
    st_ = AlgoState.init(box.center, N)
    step = cfg.alpha / np.sqrt(cfg.eps0)
    for _ in range(10):
        new = mosp_step(st_, _random_slot(gen, d, N, "full-info"), cfg, box)
        assert np.all(new.lam >= 0) and box.contains(new.x_hat)
        assert np.all(new.grad_accum >= st_.grad_accum)
        nstep = cfg.alpha / np.sqrt(cfg.eps0 + new.grad_accum) if adaptive else cfg.alpha
        assert np.all(nstep <= step)
        step, st_ = nstep, new


@given(small_problem())
def test_bansp_invariants(prob):
    d, N, seed = prob
    gen = np.random.default_rng(seed)
    box = BoxSet(-gen.uniform(0.5, 1, d), gen.uniform(0.5, 1, d))
    gamma = gen.uniform(0.05, 0.9)
    cfg = SaddleConfig(gen.uniform(0.01, 1), gen.uniform(0.01, 1), delta=gamma * box.inradius, gamma=gamma)
    sh = shrink_box(box, gamma)
    st_ = AlgoState.init(box.center, N)
    for _ in range(10):
        new = bansp_step(st_, _random_slot(gen, d, N, "one-point"), cfg, sh, gen)
        assert np.all(new.lam >= 0) and sh.box.contains(new.x_hat, tol=1e-12)
        assert box.contains(new.played[0], tol=1e-12)
        st_ = new


def test_one_point_mean_matches_smoothed_gradient():
    # In one dimension the smoothed gradient is the symmetric difference quotient.
    fns = SlotFunctions(lambda x: float(np.exp(x[0])), None, lambda x: np.zeros(1), lambda x: np.zeros((1, 1)),
                        1, 1, mode="one-point", budget=10**6)
    x, delta = np.array([0.2]), 0.1
    grad_smooth = (np.exp(0.3) - np.exp(0.1)) / (2 * delta)
    gen = RngStream(21, 0)
    means = [np.mean([one_point_gradient(fns, x, delta, gen)[0][0] for _ in range(n)]) for n in (1000, 20_000)]
    sd = (1 / delta) * np.exp(0.3)
    assert abs(means[1] - grad_smooth) <= 4 * sd / np.sqrt(20_000)
    assert abs(grad_smooth - np.exp(0.2)) <= np.exp(0.3) * delta
