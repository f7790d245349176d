import numpy as np
import pytest

from efpsn.network import build_network, complete_graph, ring_chord_graph
from efpsn.noise import NoiseConfig, generate_keyring, run_phase1
from efpsn.objectives import logistic_objective, perturb, quadratic_objective, synthetic_classification
from efpsn.optim import (
    AgentState,
    DivergenceError,
    Schedule,
    avg_gradient_norm,
    centralized_gd,
    deviation,
    dsgd,
)
from efpsn.polybasis import generate_system, to_polynomial


def shared_q_family(n, dim, seed):
    # Common curvature keeps the mean iterate exactly on the centralized
    # gradient-descent path, so tight closed-form tolerances are attainable.
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, dim))
    q = a @ a.T / (2 * dim) + np.eye(dim)
    return [quadratic_objective(q, rng.standard_normal(dim)) for _ in range(n)]


def closed_form_optimum(objectives):
    q = np.sum([o.q for o in objectives], axis=0)
    b = np.sum([o.b for o in objectives], axis=0)
    return np.linalg.solve(q, -b)


def test_schedule_endpoints():
    sched = Schedule(0.2, 4e-5, hold_steps=2000, total_steps=10000)
    assert sched.rate(0) == 0.2
    assert sched.rate(2000) == 0.2
    assert sched.rate(10000) == pytest.approx(4e-5, abs=1e-12)
    assert sched.rate(1234) == 0.2
    assert 4e-5 < sched.rate(6000) < 0.2


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(0.0, 1e-3, 0, 10)
    with pytest.raises(ValueError):
        Schedule(0.1, 1e-3, 20, 10)
    with pytest.raises(ValueError):
        Schedule(0.1, 1e-3, 10, 10)
    Schedule(0.1, 0.1, 10, 10)  # flat schedule is fine


def test_dsgd_complete_graph_reaches_closed_form():
    objectives = shared_q_family(4, 3, seed=1)
    net = complete_graph(4)
    sched = Schedule(0.3, 1e-8, hold_steps=100, total_steps=4000)
    final = dsgd(net, objectives, sched)[-1]
    assert deviation(final, closed_form_optimum(objectives)) <= 1e-6


def test_dsgd_heterogeneous_curvature_converges_coarsely():
    # Distinct Hessians leave a consensus-coupling bias that only decays
    # like 1/total_steps under an exponential step schedule.
    rng = np.random.default_rng(1)
    objectives = [
        quadratic_objective(np.diag(rng.uniform(0.5, 2.0, size=3)), rng.standard_normal(3))
        for _ in range(4)
    ]
    net = complete_graph(4)
    sched = Schedule(0.3, 1e-8, hold_steps=100, total_steps=4000)
    final = dsgd(net, objectives, sched)[-1]
    assert deviation(final, closed_form_optimum(objectives)) <= 1e-3


def test_dsgd_single_agent_equals_centralized_trajectory():
    objectives = shared_q_family(1, 3, seed=2)
    net = build_network([], 1)
    sched = Schedule(0.1, 1e-4, hold_steps=10, total_steps=50)
    traj = dsgd(net, objectives, sched, record_every=1)
    x = np.zeros(3)
    for step in range(sched.total_steps):
        x = x - sched.rate(step) * objectives[0].gradient(x)
    assert np.allclose(traj[-1].x[0], x, atol=1e-14)
    assert np.allclose(traj[-1].x[0], centralized_gd(objectives, sched), atol=1e-14)


def test_dsgd_quantize_first_perturbations_keep_accuracy():
    # Linear perturbations with exact zero-sum leave the mean dynamics
    # exactly on the centralized path for a shared curvature family.
    n, dim = 5, 3
    objectives = shared_q_family(n, dim, seed=3)
    net = ring_chord_graph(n)
    system = generate_system(1, 2, 3, seed=5)
    keys = generate_keyring(n, 48, seed=6)
    # Keep initial_rate * max curvature below 1 + min mixing eigenvalue.
    sched = Schedule(0.1, 1e-7, hold_steps=200, total_steps=3000)
    x_star = closed_form_optimum(objectives)
    for gamma in (1.0, 1e3):
        coeffs = run_phase1(
            net, NoiseConfig(gamma, 1.0, 3, precision=8), keys, seed=7
        )
        hats = [
            perturb(obj, to_polynomial(coeffs.eta_bar[i], system), coordinates=(0, 1))
            for i, obj in enumerate(objectives)
        ]
        final = dsgd(net, hats, sched)[-1]
        assert deviation(final, x_star) <= 1e-4


def test_dsgd_divergence_guard():
    objectives = [quadratic_objective(np.eye(2) * 50.0, np.ones(2)) for _ in range(2)]
    net = build_network([(0, 1)], 2)
    sched = Schedule(1.0, 1.0, hold_steps=0, total_steps=200)
    with pytest.raises(DivergenceError):
        dsgd(net, objectives, sched)


def test_dsgd_deterministic_with_batches():
    features, labels = synthetic_classification(40, 4, 2, seed=8)
    objectives = [
        logistic_objective(features[i::2], labels[i::2], classes=2) for i in range(2)
    ]
    net = build_network([(0, 1)], 2)
    sched = Schedule(0.2, 1e-3, hold_steps=5, total_steps=60)
    a = dsgd(net, objectives, sched, batch_size=4, seed=9)[-1]
    b = dsgd(net, objectives, sched, batch_size=4, seed=9)[-1]
    c = dsgd(net, objectives, sched, batch_size=4, seed=10)[-1]
    assert np.array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)


def test_centralized_gd_quadratic_matches_linear_solve():
    objectives = shared_q_family(4, 3, seed=11)
    sched = Schedule(0.3, 1e-9, hold_steps=100, total_steps=4000)
    x = centralized_gd(objectives, sched)
    assert np.linalg.norm(x - closed_form_optimum(objectives)) <= 1e-8


def test_centralized_gd_logistic_stationarity():
    features, labels = synthetic_classification(60, 3, 2, seed=12, separation=1.0)
    obj = logistic_objective(features, labels, classes=2)
    sched = Schedule(1.5, 1.5, hold_steps=0, total_steps=6000)
    x = centralized_gd([obj], sched)
    assert np.linalg.norm(obj.gradient(x)) <= 1e-6


def test_centralized_gd_deterministic():
    objectives = shared_q_family(3, 2, seed=13)
    sched = Schedule(0.2, 1e-6, hold_steps=10, total_steps=500)
    assert np.array_equal(centralized_gd(objectives, sched), centralized_gd(objectives, sched))


def test_deviation_basics():
    state = AgentState(0, np.array([[1.0, 0.0], [1.0, 0.0]]))
    assert deviation(state, np.array([1.0, 0.0])) == 0.0
    assert deviation(state, np.array([0.0, 0.0])) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        deviation(state, np.zeros(3))


def test_deviation_permutation_invariant():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((5, 3))
    ref = rng.standard_normal(3)
    d1 = deviation(AgentState(0, x), ref)
    d2 = deviation(AgentState(0, x[::-1].copy()), ref)
    assert d1 == pytest.approx(d2, rel=1e-15)


def test_avg_gradient_norm_cases():
    obj = quadratic_objective(np.eye(2), np.array([1.0, 0.0]))
    # Both agents at the stationary point of the average objective.
    x_star = obj.minimizer()
    state = AgentState(0, np.stack([x_star, x_star]))
    assert avg_gradient_norm(state, [obj, obj]) == pytest.approx(0.0, abs=1e-24)
    # Single agent: squared norm of its own gradient.
    state1 = AgentState(0, np.zeros((1, 2)))
    assert avg_gradient_norm(state1, [obj]) == pytest.approx(1.0)
    # Opposite gradients cancel.
    a = quadratic_objective(np.eye(2), np.array([1.0, 0.0]))
    b = quadratic_objective(np.eye(2), np.array([-1.0, 0.0]))
    state2 = AgentState(0, np.zeros((2, 2)))
    assert avg_gradient_norm(state2, [a, b]) == pytest.approx(0.0, abs=1e-24)


def test_avg_gradient_norm_uses_unperturbed_gradients():
    from efpsn.polybasis import Polynomial

    obj = quadratic_objective(np.eye(2), np.array([1.0, 0.0]))
    hat = perturb(obj, Polynomial.monomial((1,), 100.0), coordinates=(0,))
    state = AgentState(0, np.stack([obj.minimizer()]))
    assert avg_gradient_norm(state, [hat]) == pytest.approx(0.0, abs=1e-24)


def test_consensus_contraction_and_mean_preservation():
    # With zero gradients one dsgd step is pure mixing.
    rng = np.random.default_rng(15)
    net = ring_chord_graph(6)
    x = rng.standard_normal((6, 4))
    for _ in range(10):
        mixed = net.weights @ x
        assert np.allclose(mixed.mean(axis=0), x.mean(axis=0), atol=1e-12)
        spread_before = np.max(np.linalg.norm(x - x.mean(axis=0), axis=1))
        spread_after = np.max(np.linalg.norm(mixed - mixed.mean(axis=0), axis=1))
        assert spread_after <= spread_before + 1e-12
        x = mixed


def test_dsgd_records_trajectory():
    objectives = shared_q_family(3, 2, seed=16)
    net = complete_graph(3)
    sched = Schedule(0.1, 1e-3, hold_steps=2, total_steps=20)
    traj = dsgd(net, objectives, sched, record_every=5)
    assert [s.step for s in traj] == [0, 5, 10, 15, 20]
