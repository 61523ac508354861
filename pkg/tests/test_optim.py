import numpy as np
import pytest

from qnmlp import (
    CurvatureError,
    Dataset,
    GdConfig,
    LineSearchError,
    Network,
    Objective,
    StopCriteria,
    Topology,
    WolfeConfig,
    bfgs_minimize,
    bfgs_train,
    bfgs_update_hessian,
    bfgs_update_inv_hessian,
    finite_diff_grad,
    gd_train,
    grad_backprop,
    init_params,
    loss_mse,
    sample_dataset,
    wolfe_line_search,
)
from qnmlp import BOOTH, linalg
from qnmlp.optim import (
    STATUS_CONVERGED_FTOL,
    STATUS_CONVERGED_GRAD,
    STATUS_LINE_SEARCH_FAILED,
    STATUS_MAX_ITERS,
)


def quadratic_objective(a, b):
    """f(x) = 0.5 x.A.x - b.x with gradient A x - b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return Objective(lambda x: (0.5 * x @ a @ x - b @ x, a @ x - b), b.size)


def random_spd_quadratic(n, seed, eig_lo=1.0, eig_hi=4.0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = (q * rng.uniform(eig_lo, eig_hi, n)) @ q.T
    b = rng.standard_normal(n)
    x0 = rng.standard_normal(n)
    return quadratic_objective(a, b), x0


def assert_strong_wolfe(obj, x, p, f0, g0, alpha, cfg):
    """Re-verify both inequalities by direct evaluation at the returned step."""
    d0 = float(np.dot(g0, p))
    f_new, g_new = obj.eval(x + alpha * p)
    assert f_new <= f0 + cfg.c1 * alpha * d0, "sufficient decrease violated"
    assert abs(float(np.dot(g_new, p))) <= cfg.c2 * abs(d0), "curvature condition violated"


class TestConfigValidation:
    def test_gd_eta_positive(self):
        with pytest.raises(ValueError):
            GdConfig(eta=0.0)

    def test_gd_eta_finite(self):
        with pytest.raises(ValueError):
            GdConfig(eta=float("inf"))

    def test_gd_mode(self):
        with pytest.raises(ValueError):
            GdConfig(mode="minibatch")

    def test_wolfe_constant_ordering(self):
        with pytest.raises(ValueError):
            WolfeConfig(c1=0.5, c2=0.4)
        with pytest.raises(ValueError):
            WolfeConfig(c1=0.0)
        with pytest.raises(ValueError):
            WolfeConfig(c2=1.0)

    def test_stop_criteria_bounds(self):
        with pytest.raises(ValueError):
            StopCriteria(max_iters=0)
        with pytest.raises(ValueError):
            StopCriteria(grad_tol=-1.0)


class TestWolfeLineSearch:
    def test_parabola_returns_wolfe_step(self):
        obj = Objective(lambda x: (x[0] ** 2, np.array([2.0 * x[0]])), 1)
        cfg = WolfeConfig()
        x = np.array([1.0])
        p = np.array([-1.0])
        f0, g0 = obj.eval(x)
        alpha, f_new, g_new, evals = wolfe_line_search(obj, x, p, f0, g0, cfg)
        assert alpha > 0 and evals >= 1
        assert_strong_wolfe(obj, x, p, f0, g0, alpha, cfg)
        # returned values must be the direct evaluation at the returned step
        f_check, g_check = obj.eval(x + alpha * p)
        assert f_new == f_check and np.array_equal(g_new, g_check)

    def test_ascent_direction_rejected(self):
        obj = Objective(lambda x: (x[0] ** 2, np.array([2.0 * x[0]])), 1)
        x = np.array([1.0])
        f0, g0 = obj.eval(x)
        with pytest.raises(ValueError):
            wolfe_line_search(obj, x, np.array([1.0]), f0, g0, WolfeConfig())

    @pytest.mark.parametrize("seed", range(8))
    def test_random_convex_quadratics(self, seed):
        obj, x0 = random_spd_quadratic(5, seed)
        cfg = WolfeConfig()
        f0, g0 = obj.eval(x0)
        p = -g0
        alpha, _, _, _ = wolfe_line_search(obj, x0, p, f0, g0, cfg)
        assert_strong_wolfe(obj, x0, p, f0, g0, alpha, cfg)

    def test_unbounded_linear_descent_fails(self):
        # f(x) = -x has constant slope: the curvature condition can never hold
        obj = Objective(lambda x: (-x[0], np.array([-1.0])), 1)
        x = np.array([0.0])
        f0, g0 = obj.eval(x)
        with pytest.raises(LineSearchError) as failure:
            wolfe_line_search(obj, x, np.array([1.0]), f0, g0, WolfeConfig())
        assert failure.value.f < f0  # best trial is still a descent point
        assert failure.value.evals > 0


class TestBfgsUpdates:
    def test_inverse_update_fixed_point(self):
        out = bfgs_update_inv_hessian(np.eye(2), np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert np.allclose(out, np.eye(2), atol=1e-15)

    def test_inverse_update_hand_value(self):
        out = bfgs_update_inv_hessian(np.eye(2), np.array([1.0, 0.0]), np.array([2.0, 0.0]))
        assert np.allclose(out, [[0.5, 0.0], [0.0, 1.0]], atol=1e-15)

    def test_direct_update_fixed_point(self):
        out = bfgs_update_hessian(np.eye(2), np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        assert np.allclose(out, np.eye(2), atol=1e-15)

    def test_direct_update_hand_value(self):
        out = bfgs_update_hessian(np.eye(2), np.array([1.0, 0.0]), np.array([2.0, 0.0]))
        assert np.allclose(out, [[2.0, 0.0], [0.0, 1.0]], atol=1e-15)

    @pytest.mark.parametrize("seed", range(10))
    def test_secant_conditions(self, seed):
        rng = np.random.default_rng(seed)
        n = 6
        h = np.eye(n)
        b = np.eye(n)
        s = rng.standard_normal(n)
        m = rng.standard_normal((n, n))
        y = (m @ m.T + np.eye(n)) @ s  # SPD map guarantees y.s > 0
        h_new = bfgs_update_inv_hessian(h, s, y)
        b_new = bfgs_update_hessian(b, s, y)
        assert np.all(np.abs(h_new @ y - s) <= 1e-10 * np.maximum(1.0, np.abs(s)))
        assert np.all(np.abs(b_new @ s - y) <= 1e-10 * np.maximum(1.0, np.abs(y)))

    def test_curvature_violation_raises(self):
        s = np.array([1.0, 0.0])
        with pytest.raises(CurvatureError):
            bfgs_update_inv_hessian(np.eye(2), s, -s)
        with pytest.raises(CurvatureError):
            bfgs_update_hessian(np.eye(2), s, np.array([0.0, 1.0]))  # y.s == 0

    @pytest.mark.parametrize("seed", range(10))
    def test_inverse_consistency_over_sequences(self, seed):
        rng = np.random.default_rng(seed)
        n = 5
        h = np.eye(n)
        b = np.eye(n)
        for _ in range(8):
            s = rng.standard_normal(n)
            m = rng.standard_normal((n, n))
            y = (m @ m.T + np.eye(n)) @ s
            h = bfgs_update_inv_hessian(h, s, y)
            b = bfgs_update_hessian(b, s, y)
        v = rng.standard_normal(n)
        back = b @ (h @ v)
        assert np.all(np.abs(back - v) <= 1e-8 * np.maximum(1.0, np.abs(v)))


class TestBfgsMinimize:
    def test_isotropic_quadratic_converges_immediately(self):
        obj = quadratic_objective(np.eye(2), np.zeros(2))
        res = bfgs_minimize(obj, np.array([1.0, 1.0]), StopCriteria(grad_tol=1e-10, max_iters=10))
        assert res.status == STATUS_CONVERGED_GRAD
        assert res.iters <= 2
        assert res.grad_norm_final <= 1e-10

    def test_already_converged_returns_iteration_zero(self):
        obj = quadratic_objective(np.eye(3), np.zeros(3))
        res = bfgs_minimize(obj, np.zeros(3), StopCriteria(grad_tol=1e-8))
        assert res.iters == 0
        assert res.status == STATUS_CONVERGED_GRAD
        assert len(res.history) == 1

    @pytest.mark.parametrize("seed", range(5))
    def test_quadratic_iteration_bound(self, seed):
        n = 4
        obj, x0 = random_spd_quadratic(n, seed)
        res = bfgs_minimize(obj, x0, StopCriteria(grad_tol=1e-8, max_iters=50),
                            WolfeConfig(c2=0.1))
        assert res.status == STATUS_CONVERGED_GRAD
        assert res.iters <= 2 * (n + 1)

    def test_history_length_matches_iterations(self):
        obj, x0 = random_spd_quadratic(3, 5)
        res = bfgs_minimize(obj, x0, StopCriteria(grad_tol=1e-9, max_iters=40))
        assert len(res.history) == res.iters + 1
        assert res.history[0][0] == 0

    def test_step_invariants_on_quadratic(self):
        records = []
        obj, x0 = random_spd_quadratic(6, 12)
        wolfe = WolfeConfig()
        res = bfgs_minimize(obj, x0, StopCriteria(grad_tol=1e-8, max_iters=60), wolfe,
                            step_observer=records.append)
        assert res.status == STATUS_CONVERGED_GRAD
        assert records, "expected at least one accepted step"
        for rec in records:
            assert linalg.dot(rec.g, rec.p) < 0  # descent
            assert_strong_wolfe(obj, rec.x, rec.p, rec.f, rec.g, rec.alpha, wolfe)
            assert rec.f_new < rec.f  # monotone decrease
            assert linalg.is_symmetric(rec.h_inv_after, 1e-10)
            assert linalg.is_spd(rec.h_inv_after, 1e-14)
            if not rec.update_skipped:
                secant = rec.h_inv_after @ rec.y
                assert np.all(np.abs(secant - rec.s) <= 1e-9 * np.maximum(1.0, np.abs(rec.s)))

    def test_deterministic_histories(self):
        obj, x0 = random_spd_quadratic(5, 21)
        res1 = bfgs_minimize(obj, x0, StopCriteria(grad_tol=1e-9, max_iters=50))
        res2 = bfgs_minimize(obj, x0, StopCriteria(grad_tol=1e-9, max_iters=50))
        assert res1.history == res2.history
        assert np.array_equal(res1.x_final, res2.x_final)

    def test_f_tol_stopping(self):
        obj = quadratic_objective(np.eye(2), np.zeros(2))
        res = bfgs_minimize(obj, np.array([1.0, 0.0]),
                            StopCriteria(grad_tol=0.0, max_iters=50, f_tol=0.9))
        assert res.status == STATUS_CONVERGED_FTOL
        assert res.iters >= 1

    def test_max_iters_status(self):
        obj, x0 = random_spd_quadratic(6, 3)
        res = bfgs_minimize(obj, x0, StopCriteria(grad_tol=1e-15, max_iters=2))
        assert res.status in (STATUS_MAX_ITERS, STATUS_CONVERGED_GRAD)
        if res.status == STATUS_MAX_ITERS:
            assert res.iters == 2

    def test_line_search_failure_reported(self):
        obj = Objective(lambda x: (-x[0], np.array([-1.0])), 1)
        res = bfgs_minimize(obj, np.array([0.0]), StopCriteria(grad_tol=1e-8, max_iters=10))
        assert res.status == STATUS_LINE_SEARCH_FAILED
        assert len(res.history) == res.iters + 1
        # the salvage step keeps the best point the failed search saw
        assert res.f_final <= 0.0

    def test_dimension_mismatch(self):
        obj = quadratic_objective(np.eye(2), np.zeros(2))
        with pytest.raises(ValueError):
            bfgs_minimize(obj, np.zeros(3))

    def test_zero_gradient_with_grad_tol_disabled(self):
        # constant objective: no descent direction exists anywhere
        obj = Objective(lambda x: (1.0, np.zeros(2)), 2)
        res = bfgs_minimize(obj, np.zeros(2),
                            StopCriteria(grad_tol=0.0, max_iters=5, f_tol=0.5))
        assert res.status == STATUS_LINE_SEARCH_FAILED
        assert res.iters == 0

    def test_booth_direct(self):
        from qnmlp import booth_objective
        res = bfgs_minimize(booth_objective(), np.array([0.0, 0.0]),
                            StopCriteria(grad_tol=1e-6, max_iters=50))
        assert res.status == STATUS_CONVERGED_GRAD
        assert np.allclose(res.x_final, [1.0, 3.0], atol=1e-5)


def tiny_training_setup(seed=0, rows=6, hidden=3):
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(-1.0, 1.0, size=(rows, 2))
    raw = rng.uniform(0.0, 1.0, size=rows)
    data = Dataset.from_samples(inputs, raw, rows - 1)
    topology = Topology(2, hidden, 1)
    net = Network(topology, init_params(topology, seed + 1))
    return net, data


class TestGdTrain:
    def test_vanishing_eta_changes_nothing(self):
        net, data = tiny_training_setup()
        initial = loss_mse(net, data, "train")
        trained, res = gd_train(net, data, GdConfig(eta=1e-9, epochs=3))
        assert abs(res.f_final - initial) <= 1e-6
        assert res.status == STATUS_MAX_ITERS

    def test_one_epoch_eta_1e12_moves_below_1e10(self):
        net, data = tiny_training_setup()
        trained, _ = gd_train(net, data, GdConfig(eta=1e-12, epochs=1))
        assert np.all(np.abs(trained.params - net.params) <= 1e-10)

    def test_batch_step_is_minus_eta_grad(self):
        net, data = tiny_training_setup(seed=5, rows=2, hidden=1)
        eta = 0.05
        grad = grad_backprop(net, data, "train")
        trained, _ = gd_train(net, data, GdConfig(eta=eta, epochs=1, mode="batch"))
        assert np.array_equal(trained.params, net.params - eta * grad)
        # the output-bias coordinate of the gradient agrees with the oracle
        oracle = finite_diff_grad(net, data, "train", 1e-5)
        assert abs(grad[-1] - oracle[-1]) <= 1e-9

    def test_online_matches_batch_on_single_row_after_factor(self):
        # one training example: the per-example rule with eta equals the
        # batch rule with eta/2 (the averaged loss carries the factor 2/N)
        net, data = tiny_training_setup(seed=9, rows=2, hidden=2)
        online, _ = gd_train(net, data, GdConfig(eta=0.2, epochs=1, mode="online"))
        batch, _ = gd_train(net, data, GdConfig(eta=0.1, epochs=1, mode="batch"))
        assert np.all(np.abs(online.params - batch.params) <= 1e-12)

    def test_history_once_per_epoch(self):
        net, data = tiny_training_setup()
        _, res = gd_train(net, data, GdConfig(eta=0.1, epochs=4))
        assert len(res.history) == 5
        assert [entry[0] for entry in res.history] == [0, 1, 2, 3, 4]
        assert len(res.test_mse_history) == 5

    def test_deterministic(self):
        net, data = tiny_training_setup(seed=2)
        first, res1 = gd_train(net, data, GdConfig(eta=0.1, epochs=5))
        second, res2 = gd_train(net, data, GdConfig(eta=0.1, epochs=5))
        assert np.array_equal(first.params, second.params)
        assert res1.history == res2.history

    def test_divergence_halts_with_partial_history(self, monkeypatch):
        import qnmlp.optim as optim_module

        net, data = tiny_training_setup()
        real = optim_module.loss_and_grad
        calls = {"n": 0}

        def poisoned(n, d, rows="train"):
            calls["n"] += 1
            if calls["n"] > 2:
                return float("nan"), np.zeros(n.topology.n_params)
            return real(n, d, rows)

        monkeypatch.setattr(optim_module, "loss_and_grad", poisoned)
        trained, res = gd_train(net, data, GdConfig(eta=0.1, epochs=10))
        assert res.status == STATUS_LINE_SEARCH_FAILED
        assert res.iters < 10
        assert len(res.history) == res.iters + 1
        assert np.all(np.isfinite(trained.params))


class TestBfgsTrain:
    def test_fixed_point_converges_at_zero(self):
        net, _ = tiny_training_setup(seed=3)
        rng = np.random.default_rng(3)
        inputs = rng.uniform(-1.0, 1.0, size=(5, 2))
        from qnmlp.mlp import _forward_batch

        _, outs = _forward_batch(net.topology, net.params, inputs)
        data = Dataset(inputs, np.arange(5.0), outs[:, 0], 0.0, 1.0, 4)
        trained, res = bfgs_train(net, data)
        assert res.iters == 0
        assert res.status == STATUS_CONVERGED_GRAD
        assert res.grad_norm_final == 0.0
        assert np.array_equal(trained.params, net.params)

    def test_monotone_loss_history(self):
        net, data = tiny_training_setup(seed=4, rows=12)
        _, res = bfgs_train(net, data, StopCriteria(grad_tol=1e-7, max_iters=40))
        losses = [f for _, f, _ in res.history]
        assert all(b < a for a, b in zip(losses, losses[1:]))
        assert len(res.test_mse_history) == len(res.history)

    def test_beats_gd_on_booth(self):
        data = sample_dataset(BOOTH, 200, 0.8, 42)
        topology = Topology(2, 10, 1)
        net = Network(topology, init_params(topology, 42))
        _, bfgs_res = bfgs_train(net, data, StopCriteria(grad_tol=1e-6, max_iters=500))
        _, gd_res = gd_train(net, data, GdConfig(eta=0.1, epochs=500))
        assert bfgs_res.f_final < gd_res.f_final

    def test_longer_budget_never_increases_final_loss(self):
        net, data = tiny_training_setup(seed=6, rows=10)
        _, short = bfgs_train(net, data, StopCriteria(grad_tol=1e-12, max_iters=5))
        _, long = bfgs_train(net, data, StopCriteria(grad_tol=1e-12, max_iters=10))
        assert long.f_final <= short.f_final
