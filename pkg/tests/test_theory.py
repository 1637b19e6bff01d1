import numpy as np
import pytest

from csdip import theory
from numeric import fd_grad, rel_err


def net_and_target(n=5, d=40, k=6, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(n)
    return theory.make_net(y, d, k, rng), y


def signed_net(net, sign):
    # flip rows so every <W_l, z> has the requested sign
    s = np.sign(net.W @ net.z)
    return net.with_W(sign * s[:, None] * net.W)


def test_dead_units():
    net, y = net_and_target()
    dead = signed_net(net, -1.0)
    L, g = theory.loss_and_grad(dead, y)
    assert L == pytest.approx(0.5 * y @ y, rel=1e-15)
    assert not g.any()
    assert not theory.jjt(dead).any()


def test_all_active_jjt():
    net, _ = net_and_target(seed=1)
    live = signed_net(net, 1.0)
    np.testing.assert_allclose(theory.jjt(live), (net.z @ net.z) * net.V @ net.V.T, rtol=1e-13)


def test_gradient_fd_and_zero_residual():
    net, y = net_and_target(seed=2)
    L, g = theory.loss_and_grad(net, y)
    num = fd_grad(lambda W: theory.loss_and_grad(net, y, W, check=False)[0], net.W)
    assert rel_err(g, num) <= 1e-6
    _, g0 = theory.loss_and_grad(net, net.output())
    assert not g0.any()


def test_khatri_rao_rows():
    net, _ = net_and_target(seed=3)
    J = theory.jacobian(net)
    B = net.V * (net.W @ net.z >= 0)
    for i in range(net.n):
        assert np.abs(J[i] - np.kron(B[i], net.z)).max() <= 1e-12
    assert np.abs(J @ J.T - theory.jjt(net)).max() <= 1e-10


def test_nu_homogeneity():
    net, y = net_and_target(seed=4)
    base = np.linalg.eigvalsh(theory.jjt(net))
    scaled = theory.OneLayerNet(net.z, 3.0 * net.V, net.W, 3.0 * net.nu)
    np.testing.assert_allclose(np.sqrt(np.linalg.eigvalsh(theory.jjt(scaled))),
                               3.0 * np.sqrt(np.clip(base, 0, None)), rtol=1e-10, atol=1e-12)


def test_convergence_nu():
    rng = np.random.default_rng(5)
    y, z = rng.standard_normal(7), rng.standard_normal(4)
    assert theory.convergence_nu(y, z, 30) == pytest.approx(
        np.linalg.norm(y) / (np.sqrt(30 * 7) * np.linalg.norm(z)), rel=1e-15)


def test_step_and_bound_formulas():
    y = np.full(10, 0.5)
    assert theory.step_size(1.0, y, 2000) == pytest.approx(1 / 2.5 * 80 / 2040, rel=1e-15)
    b = theory.bound_curve(0.5, y, 2000, 3)
    rate = 1 - 0.5 / (8 * 2040)
    np.testing.assert_allclose(b, 3 * np.linalg.norm(y) * rate ** np.arange(4), rtol=1e-15)


def test_gd_fixed_point():
    net, _ = net_and_target(seed=6)
    tr = theory.gd_denoise(net, net.output(), 1.0, 50)
    assert np.all(tr.residual_norms == 0.0)
    with pytest.raises(ValueError):
        theory.gd_denoise(net, net.output(), 1.5, 5)


def test_gd_small_instance_within_bound():
    rng = np.random.default_rng(7)
    y = rng.standard_normal(4)
    y /= np.linalg.norm(y)
    tr = theory.gd_denoise(theory.make_net(y, 400, 8, rng), y, 1.0, 1500)
    assert tr.within_bound()
    assert tr.residual_norms[-1] < tr.residual_norms[0]


def test_sign_changes():
    net, _ = net_and_target(d=200, seed=8)
    assert theory.sign_change_count(net, net.W0, R=0.1) == 0
    assert theory.sign_change_count(net, -net.W0, R=None) == np.count_nonzero(net.W0 @ net.z)
    with pytest.raises(ValueError, match="radius"):
        theory.sign_change_count(net, -net.W0, R=0.1)
    assert theory.sign_change_bound(4000, 0.1) == 2 * int(np.ceil(800 ** (2 / 3)))


def test_bound_report_structure():
    rep = theory.verify_lemmas(2, 300, 5, 3, seed=1)
    counts = rep.pass_counts()
    assert set(counts) == {"sigma_min_lower", "spectral_norm_upper", "initial_misfit",
                           "sign_changes"}
    assert all(total == 3 for _, total in counts.values())
    assert not rep.sigma_min_applicable
    assert rep.summary()["spectral_norm_upper"]["trials"] == 3
