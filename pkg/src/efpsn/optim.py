"""Decentralized (stochastic) gradient descent and its centralized reference.

One iteration is a barrier round: every agent averages its neighbors'
iterates through the doubly stochastic mixing matrix, then takes a local
gradient step on its own (possibly perturbed) objective.  Metrics are
always evaluated on the unperturbed objectives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network
from .objectives import Objective, unperturbed

DIVERGENCE_LIMIT = 1e12

_BATCH_STREAM_TAG = 0xBA7C


class DivergenceError(RuntimeError):
    """Iterates exceeded the divergence guard."""

    def __init__(self, step: int, state: "AgentState"):
        super().__init__(f"iterate norm exceeded {DIVERGENCE_LIMIT:.0e} at step {step}")
        self.step = step
        self.state = state


@dataclass(frozen=True)
class Schedule:
    """Step sizes: flat for hold_steps, then exponential decay to final_rate."""

    initial_rate: float
    final_rate: float
    hold_steps: int
    total_steps: int

    def __post_init__(self):
        if self.initial_rate <= 0 or self.final_rate <= 0:
            raise ValueError("rates must be positive")
        if not 0 <= self.hold_steps <= self.total_steps:
            raise ValueError("hold_steps must lie within total_steps")
        if self.hold_steps == self.total_steps and self.final_rate != self.initial_rate:
            raise ValueError("no decay window left to reach final_rate")

    def rate(self, step: int) -> float:
        if step <= self.hold_steps:
            return self.initial_rate
        frac = (step - self.hold_steps) / (self.total_steps - self.hold_steps)
        return self.initial_rate * (self.final_rate / self.initial_rate) ** frac


@dataclass(frozen=True)
class AgentState:
    """Stacked per-agent iterates (n, dim) at a given step."""

    step: int
    x: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.x.mean(axis=0)


class _BatchSampler:
    """Without-replacement mini-batches, reshuffled each epoch per agent."""

    def __init__(self, n_samples: int, batch_size: int, seed: int, agent: int):
        self.rng = np.random.default_rng([_BATCH_STREAM_TAG, seed, agent])
        self.n_samples = n_samples
        self.batch_size = batch_size
        self.queue = self.rng.permutation(n_samples)
        self.cursor = 0

    def next_batch(self) -> np.ndarray:
        if self.cursor + self.batch_size > self.n_samples:
            self.queue = self.rng.permutation(self.n_samples)
            self.cursor = 0
        batch = self.queue[self.cursor : self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return batch


def _guard(x: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_LIMIT:
        raise DivergenceError(step, AgentState(step, x.copy()))


def dsgd(
    net: Network,
    objectives: list[Objective],
    schedule: Schedule,
    batch_size: int | None = None,
    seed: int = 0,
    x0: np.ndarray | None = None,
    record_every: int | None = None,
) -> list[AgentState]:
    """Run decentralized (stochastic) gradient descent.

    Returns the recorded trajectory; the last entry is the final state.
    batch_size None or 0 means full gradients.  Deterministic given
    seed, with one independent sampling stream per agent.
    """
    if len(objectives) != net.n:
        raise ValueError(f"{len(objectives)} objectives for {net.n} agents")
    dim = objectives[0].dim
    if any(o.dim != dim for o in objectives):
        raise ValueError("objectives disagree on dimension")
    x = np.zeros((net.n, dim)) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (net.n, dim):
        raise ValueError(f"x0 must have shape ({net.n}, {dim})")

    samplers = []
    for i, obj in enumerate(objectives):
        if batch_size and obj.n_samples and batch_size < obj.n_samples:
            samplers.append(_BatchSampler(obj.n_samples, batch_size, seed, i))
        else:
            samplers.append(None)

    trajectory = [AgentState(0, x.copy())]
    w = net.weights
    for step in range(schedule.total_steps):
        alpha = schedule.rate(step)
        mixed = w @ x
        grads = np.empty_like(x)
        for i, obj in enumerate(objectives):
            if samplers[i] is None:
                grads[i] = obj.gradient(x[i])
            else:
                grads[i] = obj.batch_gradient(x[i], samplers[i].next_batch())
        x = mixed - alpha * grads
        _guard(x, step + 1)
        if record_every and (step + 1) % record_every == 0 and step + 1 != schedule.total_steps:
            trajectory.append(AgentState(step + 1, x.copy()))
    trajectory.append(AgentState(schedule.total_steps, x.copy()))
    return trajectory


def centralized_gd(
    objectives: list[Objective],
    schedule: Schedule,
    x0: np.ndarray | None = None,
) -> np.ndarray:
    """Full gradient descent on the unperturbed average objective."""
    bases = [unperturbed(o) for o in objectives]
    dim = bases[0].dim
    x = np.zeros(dim) if x0 is None else np.array(x0, dtype=float)
    for step in range(schedule.total_steps):
        grad = np.mean([o.gradient(x) for o in bases], axis=0)
        x = x - schedule.rate(step) * grad
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > DIVERGENCE_LIMIT:
            raise DivergenceError(step + 1, AgentState(step + 1, x[None, :].copy()))
    return x


def deviation(state: AgentState, x_star: np.ndarray) -> float:
    """Distance between the mean iterate and the reference optimum."""
    x_star = np.asarray(x_star, dtype=float)
    if state.mean.shape != x_star.shape:
        raise ValueError("dimension mismatch between state and reference")
    return float(np.linalg.norm(state.mean - x_star))


def avg_gradient_norm(state: AgentState, objectives: list[Objective]) -> float:
    """Squared norm of the mean unperturbed gradient at the agents' own iterates."""
    grads = [unperturbed(o).gradient(state.x[i]) for i, o in enumerate(objectives)]
    return float(np.linalg.norm(np.mean(grads, axis=0)) ** 2)
