import numpy as np
import pytest

from csdip import generator as gen
from csdip import linops, solver
from csdip.regularization import PriorStats, tv
from numeric import fd_grad, rel_err
from test_generator import tiny_config, random_weights


def small_problem(seed=0, m=32):
    cfg = tiny_config()
    target = gen.forward(random_weights(cfg, 100 + seed), gen.make_latent(4, 100 + seed))
    op = linops.make_gaussian(m, 64, seed)
    return cfg, op, linops.apply(op, target), target


def test_rmsprop_hand_values():
    cfg = solver.SolverConfig()
    w, state = solver.rmsprop_update(np.array([0.5]), np.array([1.0]),
                                     solver.RMSPropState.zeros(1), cfg)
    assert state.square_avg[0] == pytest.approx(0.01, abs=1e-15)
    assert state.momentum_buf[0] == pytest.approx(1 / np.sqrt(0.01 + 1e-8), rel=1e-15)
    assert 0.5 - w[0] == pytest.approx(1e-3 * 10.0, rel=1e-6)
    w2, _ = solver.rmsprop_update(np.arange(4.0), np.zeros(4), solver.RMSPropState.zeros(4), cfg)
    assert np.array_equal(w2, np.arange(4.0))
    with pytest.raises(ValueError):
        solver.rmsprop_update(np.zeros(2), np.zeros(3), solver.RMSPropState.zeros(2), cfg)


def test_rmsprop_elementwise():
    cfg = solver.SolverConfig()
    rng = np.random.default_rng(0)
    w, g = rng.standard_normal(6), rng.standard_normal(6)
    perm = rng.permutation(6)
    a, _ = solver.rmsprop_update(w, g, solver.RMSPropState.zeros(6), cfg)
    b, _ = solver.rmsprop_update(w[perm], g[perm], solver.RMSPropState.zeros(6), cfg)
    assert np.array_equal(a[perm], b)


def test_config_validation():
    with pytest.raises(ValueError):
        solver.SolverConfig(steps=10, stop_window=20)
    with pytest.raises(ValueError):
        solver.SolverConfig(lambda_T=-1.0)
    with pytest.raises(ValueError):
        solver.SolverConfig(learning_rate=0.0)


def test_exact_fit_has_zero_objective():
    cfg = tiny_config()
    w, z = random_weights(cfg, 0), gen.make_latent(4, 0)
    op = linops.make_gaussian(20, 64, 1)
    y = linops.apply(op, gen.forward(w, z))
    obj, mloss, grad = solver.objective_and_grad(w, z, y, op)
    assert obj == 0.0 and mloss == 0.0 and not grad.any()


@pytest.mark.parametrize("lt,ll", [(0.0, 0.0), (0.05, 0.0), (0.0, 0.5), (0.05, 0.5)])
def test_objective_gradient_fd(lt, ll):
    cfg, op, y, _ = small_problem(1)
    w, z = random_weights(cfg, 3), gen.make_latent(4, 3)
    stats = PriorStats([0.1, -0.1], [0.5, 2.0])
    _, _, grad = solver.objective_and_grad(w, z, y, op, lt, ll, stats)
    num = fd_grad(lambda f: solver.objective_and_grad(w.with_flat(f), z, y, op, lt, ll, stats)[0],
                  w.flat, h=1e-6)
    assert rel_err(grad, num) <= 1e-4


def test_objective_decomposition_with_l2_prior():
    cfg, op, y, _ = small_problem(2)
    w, z = random_weights(cfg, 4), gen.make_latent(4, 4)
    obj, mloss, _ = solver.objective_and_grad(w, z, y, op, 0.01, 100.0, PriorStats.standard(2))
    image = gen.forward(w, z)
    r = y - linops.apply(op, image)
    assert mloss == pytest.approx(r @ r, rel=1e-12)
    expected = mloss + 0.01 * tv(image)[0] + 100.0 * float(w.flat @ w.flat)
    assert obj == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError, match="stats"):
        solver.objective_and_grad(w, z, y, op, 0.0, 1.0, None)


def test_recover_selection_rule_and_determinism():
    cfg, op, y, _ = small_problem(3)
    sc = solver.SolverConfig(steps=60, lambda_T=0.0, seed=5)
    a = solver.recover(y, op, cfg, sc)
    b = solver.recover(y, op, cfg, sc)
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.measurement_loss_trace, b.measurement_loss_trace)
    window = a.measurement_loss_trace[60 - 20:]
    assert 40 <= a.chosen_step < 60
    assert a.measurement_loss_trace[a.chosen_step] == window.min()
    r = y - linops.apply(op, a.image)
    assert r @ r == a.measurement_loss_trace[a.chosen_step]


def test_restart_zero_path_is_shared():
    cfg, op, y, _ = small_problem(4)
    one = solver.recover(y, op, cfg, solver.SolverConfig(steps=40, lambda_T=0.0, seed=2))
    three = solver.recover(y, op, cfg,
                           solver.SolverConfig(steps=40, lambda_T=0.0, seed=2, restarts=3))
    assert three.restart_losses[0] == one.measurement_loss_trace[one.chosen_step]
    assert three.measurement_loss_trace[three.chosen_step] == min(three.restart_losses)
    if three.restart_index == 0:
        assert np.array_equal(three.image, one.image)


def test_latent_is_not_mutated():
    cfg, op, y, _ = small_problem(5)
    before = solver.restart_latent(cfg, 7, 0).z.copy()
    res = solver.recover(y, op, cfg, solver.SolverConfig(steps=25, seed=7))
    assert np.array_equal(res.latent.z, before)
    assert np.array_equal(solver.restart_latent(cfg, 7, 0).z, before)


def test_failed_restart_is_contained():
    cfg, op, y, _ = small_problem(6)

    def poison(restart):
        def monitor(r, step, image, mloss):
            if r in restart and step == 3:
                raise FloatingPointError("injected")
        return monitor

    sc = solver.SolverConfig(steps=25, seed=0, restarts=3)
    res = solver.recover(y, op, cfg, sc, monitor=poison({1}))
    assert res.restart_losses[1] is None
    assert res.restart_index in (0, 2)
    with pytest.raises(RuntimeError):
        solver.recover(y, op, cfg, sc, monitor=poison({0, 1, 2}))


def test_recover_input_errors():
    cfg, op, y, _ = small_problem(0)
    with pytest.raises(ValueError):
        solver.recover(y[:-1], op, cfg, solver.SolverConfig(steps=20))
    with pytest.raises(ValueError, match="stats"):
        solver.recover(y, op, cfg, solver.SolverConfig(steps=20, lambda_L=1.0))
    with pytest.raises(ValueError, match="layers"):
        solver.recover(y, op, cfg, solver.SolverConfig(steps=20, lambda_L=1.0),
                       PriorStats.standard(4))


def test_weight_decay_effect():
    cfg, op, y, _ = small_problem(7)
    base = solver.SolverConfig(steps=150, lambda_T=0.0, seed=1)
    free = solver.recover(y, op, cfg, base)
    decayed = solver.recover(y, op, cfg, solver.SolverConfig(
        steps=150, lambda_T=0.0, lambda_L=0.05, seed=1), PriorStats.standard(2))
    assert np.linalg.norm(decayed.weights.flat) <= np.linalg.norm(free.weights.flat)


def test_grid_search_picks_smallest_loss():
    cfg, op, y, _ = small_problem(8)
    lam, res, table = solver.grid_search(y, op, cfg, solver.SolverConfig(steps=30),
                                         [0.0, 0.1, 1.0])
    assert [row[0] for row in table] == [0.0, 0.1, 1.0]
    assert min(table, key=lambda row: row[1])[0] == lam
    assert res.measurement_loss_trace[res.chosen_step] == min(row[1] for row in table)
