"""Encrypted zero-sum noise exchange (protocol phase one).

Every ordered neighbor pair (i, j) carries an independent Gaussian
stream: agent i draws one share per coefficient index, quantizes it to
a base-10 fixed-point integer, and sends it encrypted under j's public
key.  Each agent then multiplies the ciphertexts it received and
decrypts a single sum per index, so its own perturbation coefficient is
(what it sent) minus (what it received).  Summed over all agents the
coefficients cancel: exactly in quantize_first mode, and up to one
flooring residual per directed edge in floor_residual mode.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

import numpy as np

from .network import Network
from .paillier import (
    Ciphertext,
    Keypair,
    SignedResidue,
    decrypt,
    encrypt,
    generate_keypair,
    homomorphic_add,
)

MODE_QUANTIZE_FIRST = "quantize_first"
MODE_FLOOR_RESIDUAL = "floor_residual"

# Stream domain separators; arbitrary constants with no meaning beyond
# keeping the keygen, pairwise, and baseline draws independent.
_PAIR_STREAM_TAG = 0x501A12
_BASELINE_STREAM_TAG = 0x0BA5E
_KEYRING_TAG = 0xC1E5


@dataclass(frozen=True)
class NoiseConfig:
    """Noise magnitudes and encoding parameters for one protocol run.

    Per-index variance is gamma / k^decay for k = 1..n_terms, matching
    the basis element order.  precision is the base-10 fixed-point
    order used for encryption.
    """

    gamma: float
    decay: float
    n_terms: int
    precision: int = 6
    mode: str = MODE_QUANTIZE_FIRST

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.precision < 1:
            raise ValueError("precision must be at least 1")
        if self.n_terms < 1:
            raise ValueError("need at least one coefficient index")
        if self.mode not in (MODE_QUANTIZE_FIRST, MODE_FLOOR_RESIDUAL):
            raise ValueError(f"unknown mode {self.mode!r}")

    def variance(self, k: int) -> float:
        """Variance of the k-th coefficient noise, k >= 1."""
        if k < 1:
            raise ValueError("coefficient indices start at 1")
        return self.gamma / k**self.decay

    def std_devs(self) -> np.ndarray:
        ks = np.arange(1, self.n_terms + 1, dtype=float)
        return np.sqrt(self.gamma / ks**self.decay)


@dataclass(frozen=True)
class PairShare:
    """Audit record for one ordered edge: raw draws, quantized ints, wire bytes."""

    noise: np.ndarray
    quantized: tuple[int, ...]
    ciphertexts: tuple[Ciphertext, ...]


@dataclass(frozen=True)
class PerturbationCoefficients:
    """Per-agent perturbation coefficient vectors produced by phase one."""

    mode: str
    precision: int
    eta_bar: np.ndarray  # (n, n_terms) floats
    scaled: tuple[tuple[int, ...], ...] | None = None  # exact 10^P ints, quantize_first
    shares: dict[tuple[int, int], PairShare] | None = field(default=None, repr=False)
    received_sums: tuple[tuple[int, ...], ...] | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.eta_bar.shape[0]

    @property
    def n_terms(self) -> int:
        return self.eta_bar.shape[1]

    def column_sums_scaled(self) -> list[int]:
        """Exact integer column sums; all zero in quantize_first mode."""
        if self.scaled is None:
            raise ValueError("exact integer ledger only exists in quantize_first mode")
        return [sum(row[k] for row in self.scaled) for k in range(self.n_terms)]


def generate_keyring(n: int, bit_length: int, seed: int) -> list[Keypair]:
    """One keypair per agent from independently derived seeds."""
    keyring = []
    for i in range(n):
        derived = np.random.SeedSequence([_KEYRING_TAG, seed, i]).generate_state(2)
        keyring.append(generate_keypair(bit_length, seed=int(derived[0])))
    return keyring


def _pair_stream(seed: int, sender: int, receiver: int) -> np.random.Generator:
    return np.random.default_rng([_PAIR_STREAM_TAG, seed, sender, receiver])


def _draw_randomizer(rng: np.random.Generator, modulus: int) -> int:
    while True:
        r = int(rng.integers(1, min(modulus, 2**63 - 1)))
        if math.gcd(r, modulus) == 1:
            return r


def run_phase1(
    net: Network,
    cfg: NoiseConfig,
    keyring: list[Keypair],
    seed: int,
    audit: bool = False,
) -> PerturbationCoefficients:
    """Execute the encrypted exchange and return every agent's coefficients.

    Deterministic given `seed` and independent of agent execution order;
    each ordered pair's draws come from a stream keyed on (seed, i, j).
    Raises OverflowError when a plaintext sum cannot fit below half the
    receiver's modulus (key too small for the configured noise).
    """
    n = net.n
    if len(keyring) != n:
        raise ValueError(f"keyring has {len(keyring)} keys for {n} agents")
    scale = 10**cfg.precision
    sigma = cfg.std_devs()
    neighbor = {i: net.neighbors(i) for i in range(n)}

    raw: dict[tuple[int, int], np.ndarray] = {}
    quantized: dict[tuple[int, int], list[int]] = {}
    mailbox: dict[tuple[int, int], list[Ciphertext]] = {}
    for i in range(n):
        for j in neighbor[i]:
            rng = _pair_stream(seed, i, j)
            eta = sigma * rng.standard_normal(cfg.n_terms)
            ints = [math.floor(v * scale) for v in eta]
            pk = keyring[j].public
            wire = [
                encrypt(
                    SignedResidue.from_signed(q, pk.f), pk, _draw_randomizer(rng, pk.f)
                )
                for q in ints
            ]
            raw[(i, j)] = eta
            quantized[(i, j)] = ints
            mailbox[(i, j)] = wire

    eta_bar = np.zeros((n, cfg.n_terms))
    scaled_rows: list[tuple[int, ...]] = []
    received_rows: list[tuple[int, ...]] = []
    for i in range(n):
        kp = keyring[i]
        received: list[int] = []
        for k in range(cfg.n_terms):
            # Simulator-side capacity check: the decrypted value is the sum
            # of the incoming quantized shares and must stay below f/2.
            incoming = sum(abs(quantized[(j, i)][k]) for j in neighbor[i])
            if 2 * incoming >= kp.f:
                raise OverflowError(
                    f"plaintext sum for agent {i}, index {k + 1} exceeds f/2; "
                    "increase the key size or lower precision/gamma"
                )
            combined = homomorphic_add(
                [mailbox[(j, i)][k] for j in neighbor[i]], kp.public
            )
            received.append(decrypt(combined, kp).to_signed())
        received_rows.append(tuple(received))
        if cfg.mode == MODE_QUANTIZE_FIRST:
            row = tuple(
                sum(quantized[(i, j)][k] for j in neighbor[i]) - received[k]
                for k in range(cfg.n_terms)
            )
            scaled_rows.append(row)
            eta_bar[i] = np.array([v / scale for v in row])
        else:
            sent_raw = np.sum([raw[(i, j)] for j in neighbor[i]], axis=0)
            eta_bar[i] = sent_raw - np.array(received) / scale

    shares = None
    if audit:
        shares = {
            pair: PairShare(
                noise=raw[pair],
                quantized=tuple(quantized[pair]),
                ciphertexts=tuple(mailbox[pair]),
            )
            for pair in raw
        }
    return PerturbationCoefficients(
        mode=cfg.mode,
        precision=cfg.precision,
        eta_bar=eta_bar,
        scaled=tuple(scaled_rows) if cfg.mode == MODE_QUANTIZE_FIRST else None,
        shares=shares,
        received_sums=tuple(received_rows),
    )


def nonzero_sum_baseline(n: int, cfg: NoiseConfig, seed: int) -> PerturbationCoefficients:
    """Independent per-agent draws with no exchange and no cancellation."""
    eta_bar = np.empty((n, cfg.n_terms))
    sigma = cfg.std_devs()
    for i in range(n):
        rng = np.random.default_rng([_BASELINE_STREAM_TAG, seed, i])
        eta_bar[i] = sigma * rng.standard_normal(cfg.n_terms)
    return PerturbationCoefficients(
        mode="independent", precision=cfg.precision, eta_bar=eta_bar
    )


def sample_share_sums(
    net: Network, cfg: NoiseConfig, trials: int, seed: int
) -> np.ndarray:
    """Unquantized coefficient vectors over many protocol draws.

    Returns an array of shape (trials, n_terms, n) whose trial 0 matches
    the raw shares a single run_phase1 call would draw for the same
    seed.  Used by the covariance and privacy verifiers, which need the
    pre-quantization Gaussian mechanism.
    """
    sums = np.zeros((trials, cfg.n_terms, net.n))
    sigma = cfg.std_devs()
    for i, j in sorted(net.edges):
        z_ij = _pair_stream(seed, i, j).standard_normal((trials, cfg.n_terms))
        z_ji = _pair_stream(seed, j, i).standard_normal((trials, cfg.n_terms))
        diff = sigma * (z_ij - z_ji)
        sums[:, :, i] += diff
        sums[:, :, j] -= diff
    return sums


def empirical_covariance(
    net: Network, cfg: NoiseConfig, trials: int, seed: int
) -> list[np.ndarray]:
    """Sample covariance of the unquantized coefficient vector, one matrix per index."""
    draws = sample_share_sums(net, cfg, trials, seed)
    return [np.cov(draws[:, k, :], rowvar=False, bias=True) for k in range(cfg.n_terms)]


def directed_edge_count(net: Network) -> int:
    return 2 * len(net.edges)


def transcript_json(result: PerturbationCoefficients) -> str:
    """Audit dump: per directed edge, the quantized plaintexts and wire values."""
    if result.shares is None:
        raise ValueError("run phase one with audit=True to retain the transcript")
    records = []
    for (i, j), share in sorted(result.shares.items()):
        for k, (q, c) in enumerate(zip(share.quantized, share.ciphertexts)):
            records.append(
                {
                    "sender": i,
                    "receiver": j,
                    "index": k + 1,
                    "quantized": str(q),
                    "ciphertext": c.to_decimal(),
                }
            )
    return json.dumps({"precision": result.precision, "messages": records})
