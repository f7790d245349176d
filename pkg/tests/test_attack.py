import numpy as np
import pytest

from efpsn.attack import (
    AttackConfig,
    LinearSoftmax,
    attack_under_noise,
    infer_label,
    matching_loss,
    perturbed_target_gradient,
    random_model,
    run_attack,
    write_pgm,
)
from efpsn.attack import _loss_and_gradients, _softmax  # internal, exercised directly
from efpsn.network import ring_chord_graph
from efpsn.objectives import synthetic_images
from efpsn.polybasis import generate_system


@pytest.fixture(scope="module")
def setup():
    images, labels = synthetic_images(4, side=8, classes=10, seed=1)
    model = random_model(64, 10, seed=2)
    return model, images[0], int(labels[0])


def test_infer_label_sign_rule():
    assert infer_label(np.array([0.2, -0.7, 0.5])) == 1
    assert infer_label(np.array([0.2, 0.7, 0.5])) is None
    assert infer_label(np.array([-0.2, -0.7, 0.5])) is None


def test_infer_label_from_softmax_structure():
    rng = np.random.default_rng(3)
    for _ in range(50):
        z = rng.standard_normal(6)
        y = int(rng.integers(6))
        grad_b = _softmax(z)
        grad_b[y] -= 1.0
        assert infer_label(grad_b) == y


def test_infer_label_on_model_gradients(setup):
    model, _, _ = setup
    rng = np.random.default_rng(4)
    for _ in range(100):
        x = rng.random(64)
        y = int(rng.integers(10))
        _, grad_b = model.sample_gradient(x, y)
        assert infer_label(grad_b) == y


@pytest.mark.parametrize("joint", [False, True])
def test_matching_loss_gradients_match_finite_differences(setup, joint):
    model, x_true, y_true = setup
    grad_w, grad_b = model.sample_gradient(x_true, y_true)
    rng = np.random.default_rng(5)
    x = rng.standard_normal(64)
    logits = rng.standard_normal(10)
    target = _softmax(logits)

    _, grad_x, grad_s = _loss_and_gradients(model, x, target, grad_w, grad_b, joint)
    step = 1e-6
    for j in rng.choice(64, size=8, replace=False):
        hi, lo = x.copy(), x.copy()
        hi[j] += step
        lo[j] -= step
        numeric = (
            matching_loss(model, hi, target, grad_w, grad_b)
            - matching_loss(model, lo, target, grad_w, grad_b)
        ) / (2 * step)
        assert grad_x[j] == pytest.approx(numeric, rel=1e-4, abs=1e-7)
    if joint:
        for c in range(10):
            hi, lo = logits.copy(), logits.copy()
            hi[c] += step
            lo[c] -= step
            numeric = (
                matching_loss(model, x, _softmax(hi), grad_w, grad_b)
                - matching_loss(model, x, _softmax(lo), grad_w, grad_b)
            ) / (2 * step)
            assert grad_s[c] == pytest.approx(numeric, rel=1e-4, abs=1e-7)


def test_self_consistency_recovery(setup):
    model, x_true, y_true = setup
    grad_w, grad_b = model.sample_gradient(x_true, y_true)
    result = run_attack(model, grad_w, grad_b, AttackConfig(seed=6), ground_truth=x_true)
    assert not result.diverged
    assert result.label == y_true
    assert result.mse <= 1e-3


def test_zero_target_gives_no_information(setup):
    model, x_true, _ = setup
    result = run_attack(
        model, np.zeros((10, 64)), np.zeros(10), AttackConfig(seed=7), ground_truth=x_true
    )
    assert result.mse > 0.1


def test_attack_deterministic(setup):
    model, x_true, y_true = setup
    grad_w, grad_b = model.sample_gradient(x_true, y_true)
    a = run_attack(model, grad_w, grad_b, AttackConfig(seed=8), ground_truth=x_true)
    b = run_attack(model, grad_w, grad_b, AttackConfig(seed=8), ground_truth=x_true)
    assert np.array_equal(a.recovered, b.recovered)
    assert np.array_equal(a.losses, b.losses)
    assert a.mse == b.mse


def test_attack_loss_monotone_for_small_steps(setup):
    model, x_true, y_true = setup
    grad_w, grad_b = model.sample_gradient(x_true, y_true)
    result = run_attack(model, grad_w, grad_b, AttackConfig(step_size=0.01, seed=9))
    assert np.all(np.diff(result.losses) <= 1e-12)


def test_attack_divergence_flag(setup):
    # An absurdly scaled target gradient (what an extreme perturbation
    # magnitude produces) throws the iterate past the guard radius.
    model, _, _ = setup
    rng = np.random.default_rng(0)
    grad_w = 1e8 * rng.standard_normal((10, 64))
    result = run_attack(
        model, grad_w, rng.standard_normal(10), AttackConfig(iterations=50, seed=10)
    )
    assert result.diverged
    assert np.isinf(result.losses[-1])


def test_snapshots_recorded(setup):
    model, x_true, y_true = setup
    grad_w, grad_b = model.sample_gradient(x_true, y_true)
    result = run_attack(
        model, grad_w, grad_b, AttackConfig(iterations=100, snapshot_every=25, seed=11)
    )
    assert [it for it, _ in result.snapshots] == [25, 50, 75, 100]


def test_perturbed_target_gradient_shifts_bias():
    model = random_model(4, 3, seed=12)
    x = np.random.default_rng(13).random(4)
    clean_w, clean_b = model.sample_gradient(x, 1)
    coords = tuple(range(12, 15))  # the bias entries
    shifted_w, shifted_b = perturbed_target_gradient(
        model, (x, 1), np.array([1.0, -2.0, 3.0]), coords
    )
    assert np.array_equal(shifted_w, clean_w)
    assert np.allclose(shifted_b - clean_b, [1.0, -2.0, 3.0])


def test_attack_under_noise_zero_gamma_matches_clean(setup):
    model, x_true, y_true = setup
    system = generate_system(1, 10, 10, seed=14)
    net = ring_chord_graph(5)
    cfg = AttackConfig(seed=15)
    sweep = attack_under_noise(model, (x_true, y_true), [0.0], cfg, system, net, seed=16)
    grad_w, grad_b = model.sample_gradient(x_true, y_true)
    clean = run_attack(model, grad_w, grad_b, cfg, ground_truth=x_true)
    assert np.array_equal(sweep[0.0].recovered, clean.recovered)


def test_attack_mse_rises_with_noise(setup):
    model, x_true, y_true = setup
    system = generate_system(1, 10, 10, seed=14)
    net = ring_chord_graph(5)
    cfg = AttackConfig(seed=17)
    gammas = [0.0, 1e1, 1e3]
    per_seed = []
    for seed in range(5):
        sweep = attack_under_noise(
            model, (x_true, y_true), gammas, cfg, system, net, seed=seed
        )
        per_seed.append([sweep[g].mse for g in gammas])
    means = np.mean(per_seed, axis=0)
    assert means[2] >= 10 * means[0]
    assert means[0] <= means[1] <= means[2]


def test_attack_under_noise_validates_coordinates(setup):
    model, x_true, y_true = setup
    system = generate_system(1, 10, 10, seed=14)
    net = ring_chord_graph(5)
    with pytest.raises(ValueError):
        attack_under_noise(
            model, (x_true, y_true), [1.0], AttackConfig(), system, net, coordinates=(0, 1)
        )


def test_write_pgm(tmp_path, setup):
    _, x_true, _ = setup
    path = tmp_path / "recon.pgm"
    write_pgm(path, x_true, side=8)
    lines = path.read_text().splitlines()
    assert lines[0] == "P2"
    assert lines[1] == "8 8"
    assert lines[2] == "255"
    values = [int(v) for row in lines[3:] for v in row.split()]
    assert len(values) == 64
    assert all(0 <= v <= 255 for v in values)


def test_linear_softmax_validation():
    with pytest.raises(ValueError):
        LinearSoftmax(np.zeros((3, 4)), np.zeros(2))
