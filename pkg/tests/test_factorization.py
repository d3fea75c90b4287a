import numpy as np
import pytest

from ds2cf.errors import ShapeError
from ds2cf.factorization import (
    Hyperparams,
    LayerStack,
    LayerState,
    compute_prefix_products,
    evaluate_objective,
    init_factors,
    update_w,
    update_z,
)

HYPERS = [Hyperparams(0, 0, 0), Hyperparams(0.1, 1e-4, 1e-3), Hyperparams(1.0, 0.5, 2.0), Hyperparams(10, 10, 10)]


def total(prob, hyper, state=None):
    state = state or prob.state
    return evaluate_objective(state, prob.x, prob.a, prob.q, prob.s_u, prob.s_v, prob.p,
                              prob.x_l, prob.a_l, hyper).total


def naive_objective(ws, zs, x, a, q, s_u, s_v, p, x_l, a_l, hyper):
    """Independent evaluation from the full factor chains."""
    pi = ws[0]
    for w in ws[1:]:
        pi = pi @ w
    lam = zs[0]
    for z in zs[1:]:
        lam = lam @ z
    v = a @ lam
    r = pi @ v.T
    u = x @ pi

    def fro2(m):
        return float(np.trace(m.T @ m))

    l21 = sum(np.sqrt(sum(p[i, j] ** 2 for j in range(p.shape[1]))) for i in range(p.shape[0]))
    n = x.shape[1]
    return (fro2(x @ (np.eye(n) - r))
            + hyper.alpha * (fro2(q - r) + fro2(r))
            + hyper.beta * (fro2(u.T @ (np.eye(u.shape[0]) - s_u)) + fro2(v.T @ (np.eye(n) - s_v)))
            + hyper.gamma * (fro2(a_l - x_l.T @ p) + fro2(p.T @ x @ (np.eye(n) - r)) + l21))


class TestHyperparams:
    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            Hyperparams(-1, 0, 0)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            Hyperparams(0, float("nan"), 0)


class TestStack:
    def test_shapes(self):
        st = LayerStack(10, 4, [3, 2])
        assert st.shapes(1) == ((10, 3), (4, 3))
        assert st.shapes(2) == ((3, 2), (3, 2))

    def test_bad_layer_rejected(self):
        st = LayerStack(10, 4, [3, 2])
        with pytest.raises(ShapeError):
            st.set_layer(2, np.ones((2, 2)), np.ones((3, 2)))

    def test_first_layer_prefix_is_identity(self):
        st = LayerStack(5, 4, [3])
        assert compute_prefix_products(st, 1) == (None, None)
        state = LayerState(None, None, np.ones((5, 3)), np.ones((4, 3)))
        x = np.random.default_rng(0).uniform(size=(2, 5))
        a = np.random.default_rng(1).uniform(size=(5, 4))
        np.testing.assert_array_equal(state.basis(x), x @ np.ones((5, 3)))
        np.testing.assert_array_equal(state.representation(a), a @ np.ones((4, 3)))

    def test_identity_second_layer(self):
        st = LayerStack(6, 4, [3, 3, 2])
        w1, z1 = init_factors(1, st.shapes(1), 0)
        st.set_layer(1, w1, z1)
        st.set_layer(2, np.eye(3), np.eye(3))
        pi, lam = compute_prefix_products(st, 3)
        np.testing.assert_array_equal(pi, w1)
        np.testing.assert_array_equal(lam, z1)

    def test_prefix_matches_fold(self):
        st = LayerStack(7, 4, [5, 4, 3])
        for m in (1, 2, 3):
            st.set_layer(m, *init_factors(m, st.shapes(m), 5))
        pi, lam = compute_prefix_products(st, 3)
        np.testing.assert_allclose(pi, np.linalg.multi_dot(st.w[:2]), rtol=1e-14)
        np.testing.assert_allclose(lam, np.linalg.multi_dot(st.z[:2]), rtol=1e-14)

    def test_uninitialized_prefix(self):
        st = LayerStack(7, 4, [5, 4])
        with pytest.raises(ShapeError):
            compute_prefix_products(st, 2)


class TestInitFactors:
    def test_deterministic_and_in_range(self):
        a = init_factors(2, ((4, 3), (3, 3)), 9)
        b = init_factors(2, ((4, 3), (3, 3)), 9)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
            assert x.min() >= 0.01 and x.max() < 1.01

    def test_seeds_differ(self):
        firsts = {init_factors(1, ((2, 2), (2, 2)), s)[0][0, 0] for s in (0, 1, 2)}
        assert len(firsts) == 3


class TestUpdates:
    def test_cf_collapse(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(size=(5, 6))
        w, v = rng.uniform(0.1, 1, (6, 3)), rng.uniform(0.1, 1, (6, 3))
        k = x.T @ x
        st = LayerState(None, None, w, v)
        args = (x, np.eye(6), np.zeros((6, 6)))
        w_new = update_w(st, *args, np.eye(5), np.zeros((5, 1)), Hyperparams())
        np.testing.assert_allclose(w_new, w * (k @ v) / (k @ w @ v.T @ v + 1e-12), rtol=1e-12)
        st.w = w_new
        z_new = update_z(st, *args, np.eye(6), np.zeros((5, 1)), Hyperparams())
        np.testing.assert_allclose(z_new, v * (k @ w_new) / (v @ w_new.T @ k @ w_new + 1e-12), rtol=1e-12)

    def test_exact_factorization_is_fixed_point(self):
        x = np.random.default_rng(1).uniform(size=(4, 3))
        st = LayerState(None, None, np.eye(3), np.eye(3))
        args = (x, np.eye(3), np.zeros((3, 3)))
        np.testing.assert_allclose(update_w(st, *args, np.eye(4), np.zeros((4, 1)), Hyperparams()), np.eye(3), atol=1e-10)
        np.testing.assert_allclose(update_z(st, *args, np.eye(3), np.zeros((4, 1)), Hyperparams()), np.eye(3), atol=1e-10)

    @pytest.mark.parametrize("m", [1, 2])
    @pytest.mark.parametrize("hyper", HYPERS)
    def test_w_updates_descend(self, layer_problem, m, hyper):
        prob = layer_problem(3, m=m)
        vals = [total(prob, hyper)]
        for _ in range(20):
            prob.state.w = update_w(prob.state, prob.x, prob.a, prob.q, prob.s_u, prob.p, hyper)
            vals.append(total(prob, hyper))
        assert np.all(np.diff(vals) <= 1e-9 * vals[0])

    @pytest.mark.parametrize("m", [1, 2])
    @pytest.mark.parametrize("hyper", HYPERS)
    def test_z_updates_descend(self, layer_problem, m, hyper):
        prob = layer_problem(4, m=m)
        vals = [total(prob, hyper)]
        for _ in range(20):
            prob.state.z = update_z(prob.state, prob.x, prob.a, prob.q, prob.s_v, prob.p, hyper)
            vals.append(total(prob, hyper))
        assert np.all(np.diff(vals) <= 1e-9 * vals[0])

    @pytest.mark.parametrize("which", ["w", "z"])
    def test_step_opposes_numerical_gradient(self, layer_problem, which):
        hyper = Hyperparams(0.7, 0.3, 1.5)
        prob = layer_problem(5, m=2)
        st = prob.state
        base = getattr(st, which).copy()
        if which == "w":
            new = update_w(st, prob.x, prob.a, prob.q, prob.s_u, prob.p, hyper)
        else:
            new = update_z(st, prob.x, prob.a, prob.q, prob.s_v, prob.p, hyper)
        h = 1e-6
        grad = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            for sign in (1, -1):
                pert = base.copy()
                pert[idx] += sign * h
                setattr(st, which, pert)
                grad[idx] += sign * total(prob, hyper) / (2 * h)
        setattr(st, which, base)
        step = new - base
        big = np.abs(grad) > 1e-4 * np.abs(grad).max()
        assert big.sum() > 0
        assert np.all(np.sign(step[big]) == -np.sign(grad[big]))

    def test_zero_locking(self, layer_problem):
        prob = layer_problem(6, m=1)
        prob.state.w[0, 0] = 0.0
        prob.state.z[1, 2] = 0.0
        hyper = Hyperparams(1, 1, 1)
        for _ in range(5):
            prob.state.w = update_w(prob.state, prob.x, prob.a, prob.q, prob.s_u, prob.p, hyper)
            prob.state.z = update_z(prob.state, prob.x, prob.a, prob.q, prob.s_v, prob.p, hyper)
        assert prob.state.w[0, 0] == 0.0 and prob.state.z[1, 2] == 0.0
        assert prob.state.w.min() >= 0 and prob.state.z.min() >= 0

    def test_misshaped_factor_rejected(self, layer_problem):
        prob = layer_problem(7, m=2)
        prob.state.w = prob.state.w[:-1]
        with pytest.raises(ShapeError):
            update_w(prob.state, prob.x, prob.a, prob.q, prob.s_u, prob.p, Hyperparams())


class TestObjective:
    def test_term_elimination(self):
        n = 3
        x = np.random.default_rng(0).uniform(size=(4, n))
        st = LayerState(None, None, np.eye(n), np.eye(n))
        a = np.eye(n)
        r = st.coefficient(a)
        out = evaluate_objective(st, x, a, r, np.eye(4), np.eye(n), np.zeros((4, 2)), x[:, :1],
                                 np.zeros((1, 2)), Hyperparams(0.3, 5.0, 7.0))
        assert out.total == pytest.approx(0.3 * n)  # alpha * ||I||_F^2

    def test_zero_hypers_is_reconstruction(self, layer_problem):
        prob = layer_problem(1)
        out = evaluate_objective(prob.state, prob.x, prob.a, prob.q, prob.s_u, prob.s_v, prob.p,
                                 prob.x_l, prob.a_l, Hyperparams())
        assert out.total == out.recon

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_naive(self, layer_problem, seed):
        prob = layer_problem(seed, m=2)
        hyper = Hyperparams(0.4, 0.2, 0.9)
        st = prob.state
        got = total(prob, hyper)
        want = naive_objective([st.pi_prev, st.w], [st.lam_prev, st.z], prob.x, prob.a, prob.q, prob.s_u,
                               prob.s_v, prob.p, prob.x_l, prob.a_l, hyper)
        assert got == pytest.approx(want, rel=1e-9)

    def test_breakdown_groups(self, layer_problem):
        prob = layer_problem(2)
        o = evaluate_objective(prob.state, prob.x, prob.a, prob.q, prob.s_u, prob.s_v, prob.p,
                               prob.x_l, prob.a_l, Hyperparams(1, 1, 1))
        assert o.total == pytest.approx(o.recon + o.structure + o.dualgraph + o.predictor)
        assert len(o.terms()) == 8
