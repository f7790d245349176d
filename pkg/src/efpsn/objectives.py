"""Local cost functions and their polynomial perturbations.

Two desk-scale families: quadratics with a closed-form minimizer and
multinomial logistic regression on synthetic Gaussian-mixture data.
A perturbed objective adds a polynomial in a subset of the coordinates
on top of a base objective; gradients stay analytic throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .polybasis import Polynomial


class Objective:
    """Callable cost with analytic gradient over a fixed parameter dimension."""

    dim: int
    n_samples: int | None = None

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_gradient(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        """Mini-batch gradient; full gradient for dataset-free objectives."""
        return self.gradient(x)


@dataclass(frozen=True)
class QuadraticObjective(Objective):
    """f(x) = x'Qx/2 + b'x with symmetric positive definite Q."""

    q: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if q.shape != (b.size, b.size):
            raise ValueError("Q and b shapes disagree")
        if not np.allclose(q, q.T, atol=1e-12):
            raise ValueError("Q must be symmetric")
        try:
            np.linalg.cholesky(q)
        except np.linalg.LinAlgError:
            raise ValueError("Q must be positive definite") from None
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.b.size

    def value(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.q @ x + self.b @ x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.q @ x + self.b

    def minimizer(self) -> np.ndarray:
        return np.linalg.solve(self.q, -self.b)


def quadratic_objective(q: np.ndarray, b: np.ndarray) -> QuadraticObjective:
    return QuadraticObjective(q, b)


@dataclass(frozen=True)
class LogisticObjective(Objective):
    """Mean softmax cross-entropy of a single linear layer.

    Parameters are the flattened weight matrix (classes x features)
    followed by the bias vector, so dim = classes * (features + 1).
    """

    features: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValueError("features must be (samples, dim) with one label per row")
        if y.min() < 0 or y.max() >= self.classes:
            raise ValueError("labels outside 0..classes-1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.classes * (self.n_features + 1)

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split a parameter vector into (weights, bias)."""
        split = self.classes * self.n_features
        return x[:split].reshape(self.classes, self.n_features), x[split:]

    def bias_coordinates(self) -> np.ndarray:
        """Indices of the bias entries inside the parameter vector."""
        start = self.classes * self.n_features
        return np.arange(start, start + self.classes)

    def _probabilities(self, x: np.ndarray, rows: np.ndarray) -> np.ndarray:
        w, b = self.unpack(x)
        logits = self.features[rows] @ w.T + b
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def value(self, x: np.ndarray) -> float:
        rows = np.arange(self.n_samples)
        p = self._probabilities(x, rows)
        return float(-np.mean(np.log(p[rows, self.labels[rows]] + 1e-300)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.batch_gradient(x, np.arange(self.n_samples))

    def batch_gradient(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        p = self._probabilities(x, indices)
        p[np.arange(indices.size), self.labels[indices]] -= 1.0
        grad_w = p.T @ self.features[indices] / indices.size
        grad_b = p.mean(axis=0)
        return np.concatenate([grad_w.ravel(), grad_b])

    def accuracy(self, x: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
        w, b = self.unpack(x)
        predicted = np.argmax(features @ w.T + b, axis=1)
        return float(np.mean(predicted == labels))


def logistic_objective(features, labels, classes: int) -> LogisticObjective:
    return LogisticObjective(np.asarray(features, float), np.asarray(labels, int), classes)


@dataclass(frozen=True)
class PerturbedObjective(Objective):
    """base + polynomial over a subset of coordinates; gradients compose."""

    base: Objective
    perturbation: Polynomial
    coordinates: tuple[int, ...]

    def __post_init__(self):
        coords = tuple(int(c) for c in self.coordinates)
        if len(set(coords)) != len(coords):
            raise ValueError("perturbed coordinates must be distinct")
        if any(c < 0 or c >= self.base.dim for c in coords):
            raise ValueError("perturbed coordinate outside the parameter vector")
        if self.perturbation.m != len(coords):
            raise ValueError("polynomial variable count disagrees with coordinate map")
        object.__setattr__(self, "coordinates", coords)

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def n_samples(self) -> int | None:
        return self.base.n_samples

    def value(self, x: np.ndarray) -> float:
        return self.base.value(x) + self.perturbation.eval(x[list(self.coordinates)])

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = self.base.gradient(x).copy()
        g[list(self.coordinates)] += self.perturbation.gradient_at(
            x[list(self.coordinates)]
        )
        return g

    def batch_gradient(self, x: np.ndarray, indices: np.ndarray) -> np.ndarray:
        g = self.base.batch_gradient(x, indices).copy()
        g[list(self.coordinates)] += self.perturbation.gradient_at(
            x[list(self.coordinates)]
        )
        return g


def perturb(
    objective: Objective, polynomial: Polynomial, coordinates=None
) -> PerturbedObjective:
    """Attach a perturbing polynomial; defaults to the first m coordinates."""
    if coordinates is None:
        coordinates = tuple(range(polynomial.m))
    return PerturbedObjective(objective, polynomial, tuple(coordinates))


def unperturbed(objective: Objective) -> Objective:
    return objective.base if isinstance(objective, PerturbedObjective) else objective


def synthetic_classification(
    n_samples: int,
    n_features: int,
    classes: int,
    seed: int,
    separation: float = 2.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-mixture classification set: one unit-covariance blob per class."""
    rng = np.random.default_rng([0xDA7A, seed])
    means = rng.normal(scale=separation, size=(classes, n_features))
    labels = np.arange(n_samples) % classes
    labels = rng.permutation(labels)
    features = means[labels] + rng.standard_normal((n_samples, n_features))
    return features, labels


def synthetic_images(
    n_samples: int, side: int, classes: int, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Class-dependent blob images in [0, 1], flattened to side*side features."""
    rng = np.random.default_rng([0x1A6E, seed])
    grid = np.stack(
        np.meshgrid(np.linspace(0, 1, side), np.linspace(0, 1, side), indexing="ij"),
        axis=-1,
    )
    centers = rng.random((classes, 2))
    labels = rng.permutation(np.arange(n_samples) % classes)
    images = np.empty((n_samples, side * side))
    for row, cls in enumerate(labels):
        dist_sq = ((grid - centers[cls]) ** 2).sum(axis=-1)
        img = np.exp(-dist_sq / 0.08) + 0.08 * rng.standard_normal((side, side))
        images[row] = np.clip(img, 0.0, 1.0).ravel()
    return images, labels


def export_dataset_csv(path, features: np.ndarray, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"f{j}" for j in range(features.shape[1])] + ["label"])
        for row, label in zip(features, labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
