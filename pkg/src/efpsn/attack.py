"""Gradient-inversion attack on a single-layer softmax model.

The attacker sees one (possibly perturbed) per-sample gradient of a
linear softmax classifier and reconstructs the input by gradient
descent on the squared gradient-matching loss.  The true label is read
off the bias gradient when its sign structure survives (the entry for
the true class is the only negative one on a clean single-sample
gradient); otherwise the label is optimized jointly through its own
softmax logits.  All derivatives of the matching loss are closed-form,
so no autodiff is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network
from .noise import NoiseConfig, generate_keyring, run_phase1
from .polybasis import OrthonormalSystem, to_polynomial

ATTACK_DIVERGENCE_LIMIT = 1e6

_ATTACK_STREAM_TAG = 0xA77AC
_SWEEP_STREAM_TAG = 0x53EE9


@dataclass(frozen=True)
class LinearSoftmax:
    """Weights (classes x features) and bias of the attacked model."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValueError("weights must be (classes, features) with one bias per class")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def classes(self) -> int:
        return self.weights.shape[0]

    @property
    def features(self) -> int:
        return self.weights.shape[1]

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        logits = self.weights @ x + self.bias
        logits -= logits.max()
        e = np.exp(logits)
        return e / e.sum()

    def sample_gradient(self, x: np.ndarray, label: int) -> tuple[np.ndarray, np.ndarray]:
        """Cross-entropy gradient for one sample: ((p - onehot) x^T, p - onehot)."""
        u = self.probabilities(x)
        u[label] -= 1.0
        return np.outer(u, x), u


def random_model(features: int, classes: int, seed: int, scale: float = 0.01) -> LinearSoftmax:
    rng = np.random.default_rng([_ATTACK_STREAM_TAG, seed])
    return LinearSoftmax(
        scale * rng.standard_normal((classes, features)), np.zeros(classes)
    )


@dataclass(frozen=True)
class AttackConfig:
    step_size: float = 0.1
    iterations: int = 300
    seed: int = 0
    snapshot_every: int | None = None

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step size must be positive")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")


@dataclass(frozen=True)
class AttackResult:
    """Reconstruction, inferred label, per-iteration matching loss, final MSE."""

    recovered: np.ndarray
    label: int | None
    losses: np.ndarray
    mse: float | None
    diverged: bool = False
    snapshots: tuple[tuple[int, np.ndarray], ...] = field(default=(), repr=False)


def infer_label(bias_gradient: np.ndarray) -> int | None:
    """Index of the unique negative bias-gradient entry, or None.

    On a clean single-sample softmax gradient the true class is the only
    entry below zero; batching or perturbation breaks the pattern, in
    which case the caller falls back to optimizing the label.
    """
    negatives = np.flatnonzero(np.asarray(bias_gradient) < 0)
    return int(negatives[0]) if negatives.size == 1 else None


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def matching_loss(
    model: LinearSoftmax,
    x: np.ndarray,
    target_soft: np.ndarray,
    grad_w: np.ndarray,
    grad_b: np.ndarray,
) -> float:
    u = model.probabilities(x) - target_soft
    return float(np.sum((np.outer(u, x) - grad_w) ** 2) + np.sum((u - grad_b) ** 2))


def _loss_and_gradients(model, x, target_soft, grad_w, grad_b, with_label_grad):
    p = model.probabilities(x)
    u = p - target_soft
    residual_w = np.outer(u, x) - grad_w
    residual_b = u - grad_b
    loss = float(np.sum(residual_w**2) + np.sum(residual_b**2))
    # dD/du = 2a + 2(u - grad_b) with a_c = u_c |x|^2 - (grad_w x)_c
    a = u * (x @ x) - grad_w @ x
    ddu = a + residual_b
    jp = np.diag(p) - np.outer(p, p)
    grad_x = 2.0 * (model.weights.T @ (jp @ ddu) + (u @ u) * x - grad_w.T @ u)
    grad_s = None
    if with_label_grad:
        jt = np.diag(target_soft) - np.outer(target_soft, target_soft)
        grad_s = -2.0 * (jt @ ddu)
    return loss, grad_x, grad_s


def run_attack(
    model: LinearSoftmax,
    grad_w: np.ndarray,
    grad_b: np.ndarray,
    cfg: AttackConfig,
    ground_truth: np.ndarray | None = None,
) -> AttackResult:
    """Gradient descent on the matching loss from a seeded random start.

    Fixes the label through the bias-gradient sign rule when possible;
    otherwise descends jointly on soft label logits.  Divergence is
    reported through the `diverged` flag, not an exception.
    """
    rng = np.random.default_rng([_ATTACK_STREAM_TAG, cfg.seed, 1])
    x = rng.standard_normal(model.features)
    label = infer_label(grad_b)
    joint = label is None
    logits = rng.standard_normal(model.classes)
    target_soft = _softmax(logits) if joint else _onehot(label, model.classes)

    losses = np.empty(cfg.iterations)
    snapshots: list[tuple[int, np.ndarray]] = []
    diverged = False
    for it in range(cfg.iterations):
        loss, grad_x, grad_s = _loss_and_gradients(
            model, x, target_soft, grad_w, grad_b, with_label_grad=joint
        )
        losses[it] = loss
        x = x - cfg.step_size * grad_x
        if joint:
            logits = logits - cfg.step_size * grad_s
            target_soft = _softmax(logits)
        if cfg.snapshot_every and (it + 1) % cfg.snapshot_every == 0:
            snapshots.append((it + 1, x.copy()))
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > ATTACK_DIVERGENCE_LIMIT:
            losses[it + 1 :] = np.inf
            diverged = True
            break
    final_label = label if not joint else int(np.argmax(target_soft))
    mse = None
    if ground_truth is not None:
        mse = float(np.mean((x - np.asarray(ground_truth)) ** 2))
    return AttackResult(
        recovered=x,
        label=final_label,
        losses=losses,
        mse=mse,
        diverged=diverged,
        snapshots=tuple(snapshots),
    )


def _onehot(label: int, classes: int) -> np.ndarray:
    t = np.zeros(classes)
    t[label] = 1.0
    return t


def perturbed_target_gradient(
    model: LinearSoftmax,
    sample: tuple[np.ndarray, int],
    shift: np.ndarray | None,
    coordinates,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample gradient with a perturbation added on mapped parameter coordinates."""
    x, label = sample
    grad_w, grad_b = model.sample_gradient(np.asarray(x, float), int(label))
    if shift is None:
        return grad_w, grad_b
    flat = np.concatenate([grad_w.ravel(), grad_b])
    flat[list(coordinates)] += shift
    split = model.classes * model.features
    return flat[:split].reshape(model.classes, model.features), flat[split:]


def attack_under_noise(
    model: LinearSoftmax,
    sample: tuple[np.ndarray, int],
    gammas,
    cfg: AttackConfig,
    system: OrthonormalSystem,
    net: Network,
    decay: float = 1.0,
    precision: int = 6,
    key_bits: int = 32,
    seed: int = 0,
    agent: int = 0,
    coordinates=None,
) -> dict[float, AttackResult]:
    """Attack the same sample under protocol noise at each magnitude.

    For every gamma a fresh phase-one exchange produces the attacked
    agent's perturbation; its polynomial gradient (over the mapped
    coordinates, bias entries by default) shifts the gradient the
    attacker observes.  gamma 0 means the clean gradient.
    """
    if coordinates is None:
        start = model.classes * model.features
        coordinates = tuple(range(start, start + system.m))
    if len(coordinates) != system.m:
        raise ValueError("coordinate map disagrees with the basis variable count")
    params = np.concatenate([model.weights.ravel(), model.bias])
    keyring = generate_keyring(net.n, key_bits, seed=seed)
    x_true = np.asarray(sample[0], dtype=float)

    results: dict[float, AttackResult] = {}
    for index, gamma in enumerate(gammas):
        if gamma == 0.0:
            shift = None
        else:
            noise_cfg = NoiseConfig(gamma, decay, system.size, precision=precision)
            run_seed = int(
                np.random.SeedSequence([_SWEEP_STREAM_TAG, seed, index]).generate_state(1)[0]
            )
            coeffs = run_phase1(net, noise_cfg, keyring, seed=run_seed)
            poly = to_polynomial(coeffs.eta_bar[agent], system)
            shift = poly.gradient_at(params[list(coordinates)])
        grad_w, grad_b = perturbed_target_gradient(model, sample, shift, coordinates)
        results[float(gamma)] = run_attack(model, grad_w, grad_b, cfg, ground_truth=x_true)
    return results


def write_pgm(path, image: np.ndarray, side: int) -> None:
    """Save a flattened grayscale image as ASCII PGM, clipped to [0, 1]."""
    pixels = np.clip(np.asarray(image, float).reshape(side, side), 0.0, 1.0)
    levels = np.rint(pixels * 255).astype(int)
    rows = "\n".join(" ".join(str(v) for v in row) for row in levels)
    with open(path, "w") as handle:
        handle.write(f"P2\n{side} {side}\n255\n{rows}\n")
