import numpy as np
import pytest

from eqtracer import (
    LoadNetwork,
    ShiftingQuadratic,
    balanced_state,
    diffusion_step,
    diffusion_tracking_bound,
    gd_contraction,
    gd_regret_bound,
    gd_step,
    gd_steady_state,
    gd_tracking_bound,
    second_eigenvalue,
    simulate_diffusion,
    simulate_shifting_quadratic,
)
from eqtracer.instances import (
    complete_edges,
    cycle_edges,
    default_diffusivity,
    drifting_speeds,
    make_network,
    path_edges,
)


class TestGdStep:
    def test_zero_gradient_no_move(self):
        x = np.array([1.0, -2.0])
        assert np.array_equal(gd_step(x, np.zeros(2), 0.1), x)

    def test_isotropic_lands_on_optimum_in_one_step(self):
        curv = np.full(4, 3.0)
        problem = ShiftingQuadratic(
            curvatures=curv, optima=np.zeros((2, 4)), eta=1 / 3.0
        )
        trace = simulate_shifting_quadratic(problem, np.array([1.0, 2.0, -1.0, 0.5]))
        assert trace.distances[1] == 0.0

    def test_per_axis_contraction_matches_rate(self):
        # Starting on an extreme-curvature axis attains the worst-case factor
        # sqrt(1 - delta) = (beta - alpha) / (alpha + beta) exactly.
        alpha, beta = 1.0, 4.0
        eta = 2.0 / (alpha + beta)
        delta = gd_contraction(alpha, beta, eta)
        for axis_curv in (alpha, beta):
            x = np.array([1.0 if axis_curv == alpha else 0.0,
                          1.0 if axis_curv == beta else 0.0])
            moved = gd_step(x, np.array([alpha, beta]) * x, eta)
            ratio = np.linalg.norm(moved) / np.linalg.norm(x)
            assert ratio == pytest.approx((1 - delta) ** 0.5, abs=1e-9)

    def test_contraction_rate_bounds_random_quadratics(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            curv = rng.uniform(0.5, 4.0, 6)
            eta = 2.0 / (curv.min() + curv.max())
            delta = gd_contraction(curv.min(), curv.max(), eta)
            x = rng.normal(size=6)
            moved = gd_step(x, curv * x, eta)
            assert np.linalg.norm(moved) <= (1 - delta) ** 0.5 * np.linalg.norm(x) + 1e-12

    def test_step_size_domain(self):
        with pytest.raises(ValueError):
            gd_contraction(1.0, 2.0, 1.0)


class TestGdBounds:
    def test_zero_shifts_pure_decay(self):
        assert gd_tracking_bound(2.0, 0.36, [0.0] * 4, 4) == pytest.approx(
            2.0 * 0.8**4
        )

    def test_steady_state_radius(self):
        assert gd_steady_state(0.75, 1.0) == pytest.approx(8.0 / 3.0 / 2.0 * 2.0)
        assert gd_steady_state(0.75, 0.5) == pytest.approx(4.0 / 3.0)

    def test_constant_shift_sum_below_radius_plus_decay(self):
        phi0, delta, d, T = 3.0, 0.4, 0.05, 200
        bound = gd_tracking_bound(phi0, delta, [d] * T, T)
        assert bound <= (1 - delta) ** (T / 2) * phi0 + gd_steady_state(delta, d) + 1e-12

    def test_regret_zero_when_static_from_optimum(self):
        assert gd_regret_bound(0.0, 0.5, 0.0, 2.0, 100) == 0.0
        problem = ShiftingQuadratic(
            curvatures=np.array([1.0, 2.0]), optima=np.zeros((51, 2)), eta=2 / 3.0
        )
        trace = simulate_shifting_quadratic(problem, np.zeros(2))
        assert trace.regret == 0.0

    def test_regret_linear_in_horizon(self):
        r1 = gd_regret_bound(1.0, 0.5, 0.1, 2.0, 100)
        r2 = gd_regret_bound(1.0, 0.5, 0.1, 2.0, 200)
        tail = gd_regret_bound(0.0, 0.5, 0.1, 2.0, 100)
        assert r2 - r1 == pytest.approx(tail)

    def test_drifting_simulation_within_bounds(self):
        rng = np.random.default_rng(1)
        for seed in range(20):
            curv = rng.uniform(0.5, 3.0, 5)
            steps = rng.normal(size=(301, 5))
            steps /= np.linalg.norm(steps, axis=1, keepdims=True)
            optima = np.cumsum(0.01 * steps, axis=0)
            problem = ShiftingQuadratic(
                curvatures=curv, optima=optima, eta=2.0 / (curv.min() + curv.max())
            )
            trace = simulate_shifting_quadratic(problem, optima[0] + rng.normal(size=5))
            assert np.all(trace.distances <= trace.bounds + 1e-9)
            cap = gd_regret_bound(
                trace.distances[0], problem.delta, 0.01, problem.beta_smooth, 300
            )
            assert trace.regret <= cap


class TestNetworkValidation:
    def test_rejects_asymmetric_matrix(self):
        P = np.array([[0.8, 0.2], [0.3, 0.7]])
        with pytest.raises(ValueError, match="symmetric"):
            LoadNetwork(speeds=np.ones(2), loads=np.ones(2), diffusivity=P)

    def test_rejects_light_diagonal(self):
        P = np.array([[0.4, 0.6], [0.6, 0.4]])
        with pytest.raises(ValueError, match="diagonal"):
            LoadNetwork(speeds=np.ones(2), loads=np.ones(2), diffusivity=P)

    def test_default_diffusivity_properties(self):
        for edges, n in ((path_edges(7), 7), (cycle_edges(8), 8), (complete_edges(5), 5)):
            P = default_diffusivity(n, edges)
            assert np.allclose(P, P.T)
            assert np.allclose(P.sum(axis=1), 1.0)
            assert np.all(np.diag(P) >= 0.5 - 1e-15)


class TestDiffusion:
    def test_two_machines_balance_in_one_step(self):
        net = make_network("complete", 2, speeds=[1.0, 1.0], loads=[2.0, 0.0])
        stepped = diffusion_step(net)
        assert stepped.loads == pytest.approx([1.0, 1.0])
        assert second_eigenvalue(net.diffusivity) == pytest.approx(0.0, abs=1e-12)

    def test_balanced_state_plugin(self):
        net = make_network("complete", 2, speeds=[1.0, 3.0], loads=[2.0, 2.0])
        loads, finish = balanced_state(net)
        assert loads == pytest.approx([1.0, 3.0])
        assert finish == pytest.approx(1.0)
        assert loads.sum() == pytest.approx(net.total_load, rel=1e-15)

    def test_balanced_state_is_fixed_point(self):
        net = make_network("cycle", 6, speeds=np.linspace(0.5, 2.0, 6), loads=np.ones(6))
        loads, finish = balanced_state(net)
        balanced = LoadNetwork(speeds=net.speeds, loads=loads, diffusivity=net.diffusivity)
        stepped = diffusion_step(balanced)
        assert np.allclose(stepped.loads, loads, atol=1e-12)
        times = loads / net.speeds
        assert np.abs(net.diffusivity @ times - times).max() <= 1e-12

    def test_conservation_heterogeneous_speeds(self):
        net = make_network(
            "path", 9, speeds=np.linspace(0.5, 2.0, 9), loads=None, seed=2,
            load_total=7.0,
        )
        for _ in range(100):
            net = diffusion_step(net)
            assert net.total_load == pytest.approx(7.0, rel=1e-12)
            assert np.all(net.loads >= 0)

    def test_l2_contraction_uniform_speeds(self):
        for graph in ("path", "cycle", "complete"):
            net = make_network(graph, 10, loads=None, seed=3, load_total=10.0)
            lam = second_eigenvalue(net.diffusivity)
            trace = simulate_diffusion(net, [net.speeds] * 101, 100)
            assert np.nanmax(trace.contractions) <= lam + 1e-9

    def test_second_eigenvalue_matches_dense_solver(self):
        rng = np.random.default_rng(4)
        for graph, n in (("path", 11), ("cycle", 12), ("complete", 9)):
            net = make_network(graph, n, seed=int(rng.integers(100)))
            dense = np.sort(np.abs(np.linalg.eigvalsh(net.diffusivity)))[-2]
            assert second_eigenvalue(net.diffusivity) == pytest.approx(dense, abs=1e-9)

    def test_static_bound_is_pure_decay(self):
        net = make_network("cycle", 6, loads=None, seed=5, load_total=3.0)
        lam = second_eigenvalue(net.diffusivity)
        trace = simulate_diffusion(net, [net.speeds] * 51, 50)
        assert trace.bounds[-1] == pytest.approx(lam**50 * trace.potentials[0], rel=1e-9)
        assert diffusion_tracking_bound(
            trace.potentials[0], lam, [net.speeds] * 51, net.total_load, 6, 50
        ) == pytest.approx(trace.bounds[-1], rel=1e-9)

    def test_complete_mixing_bound_is_last_jump(self):
        # lambda2 = 0 on two fully mixed machines: only the newest speed
        # change survives in the envelope.
        net = make_network("complete", 2, speeds=[1.0, 1.0], loads=[2.0, 0.0])
        path = [np.array([1.0, 1.0]), np.array([1.1, 1.1])]
        bound = diffusion_tracking_bound(5.0, 0.0, path, net.total_load, 2, 1)
        expected = net.total_load * 2 * abs(1 / 2.2 - 1 / 2.0)
        assert bound == pytest.approx(expected, rel=1e-12)

    def test_common_drift_traces_dominated(self):
        for graph in ("path", "cycle", "complete"):
            net = make_network(graph, 8, loads=None, seed=6, load_total=5.0)
            path = drifting_speeds(7, 8, 300, 0.002, 0.9, 1.1, mode="common")
            trace = simulate_diffusion(net, path, 300)
            assert np.all(trace.potentials <= np.sqrt(8) * trace.bounds + 1e-9)

    def test_speed_path_must_match_network(self):
        net = make_network("path", 4, seed=8)
        with pytest.raises(ValueError, match="match"):
            simulate_diffusion(net, [np.full(4, 2.0)] * 11, 10)
