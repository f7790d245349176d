"""Experiment orchestration: configs, sweeps, and machine-readable reports.

Two end-to-end experiments share one config schema: an accuracy sweep
(key generation, encrypted noise exchange, perturbation, decentralized
optimization, metrics against a centralized reference, for the
zero-sum protocol, the independent-noise baseline, and the noise-free
run) and a privacy sweep (gradient-inversion attacks plus closed-form
privacy budgets per noise magnitude).  Every random draw derives from
the config seed, and reports are byte-reproducible.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import network as netmod
from .accounting import DPParams, budget, sensitivity_bound, tail_for_delta
from .attack import AttackConfig, attack_under_noise, random_model, write_pgm
from .network import Network
from .noise import (
    NoiseConfig,
    PerturbationCoefficients,
    generate_keyring,
    nonzero_sum_baseline,
    run_phase1,
)
from .objectives import (
    Objective,
    logistic_objective,
    perturb,
    quadratic_objective,
    synthetic_classification,
    synthetic_images,
    unperturbed,
)
from .optim import (
    AgentState,
    DivergenceError,
    Schedule,
    avg_gradient_norm,
    centralized_gd,
    deviation,
    dsgd,
)
from .polybasis import generate_system, parse_monomial_list, to_polynomial

SCHEMA_VERSION = 1

ALG_PROTOCOL = "efpsn"
ALG_BASELINE = "nonzerosum"
ALG_NOISEFREE = "noisefree"

# Seed-derivation domains.
_OPT_STREAM = 1
_NOISE_STREAM = 2
_KEY_STREAM = 3
_DATA_STREAM = 4
_ATTACK_STREAM = 5


class ConfigError(ValueError):
    """Invalid or unreadable experiment configuration."""


@dataclass(frozen=True)
class ObjectiveConfig:
    family: str
    dim: int
    classes: int = 3
    samples_per_agent: int = 40
    holdout: int = 100
    dataset_seed: int = 0
    separation: float = 2.0

    def __post_init__(self):
        if self.family not in ("quadratic", "logistic"):
            raise ConfigError(f"unknown objective family {self.family!r}")
        if self.dim < 1:
            raise ConfigError("objective dimension must be positive")
        if self.family == "logistic" and (self.classes < 2 or self.samples_per_agent < 1):
            raise ConfigError("logistic tasks need >= 2 classes and >= 1 sample per agent")


@dataclass(frozen=True)
class NoiseSweep:
    gammas: tuple[float, ...]
    n_terms: int
    decay: float = 1.0
    precision: int = 6
    mode: str = "quantize_first"
    key_bits: int = 32

    def __post_init__(self):
        if not self.gammas:
            raise ConfigError("gamma sweep must be non-empty")
        if any(g < 0 for g in self.gammas):
            raise ConfigError("gamma values must be nonnegative")
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))

    def config_for(self, gamma: float) -> NoiseConfig:
        return NoiseConfig(gamma, self.decay, self.n_terms, self.precision, self.mode)


@dataclass(frozen=True)
class BasisConfig:
    max_degree: int
    m: int
    size: int
    seed: int = 0
    monomials: str | None = None
    coordinates: str = "first"

    def __post_init__(self):
        if self.coordinates not in ("first", "bias"):
            raise ConfigError("coordinates preset must be 'first' or 'bias'")

    def build(self):
        fixed = None
        if self.monomials is not None:
            fixed = parse_monomial_list(self.monomials, self.m)
        return generate_system(self.max_degree, self.m, self.size, self.seed, fixed)


@dataclass(frozen=True)
class DPConfig:
    q: float
    tail: float | None = None
    delta: float | None = None
    f_diff: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.tail is None) == (self.delta is None):
            raise ConfigError("give exactly one of tail or delta")
        if self.f_diff is not None:
            object.__setattr__(self, "f_diff", tuple(float(v) for v in self.f_diff))

    def tail_value(self) -> float:
        return self.tail if self.tail is not None else tail_for_delta(self.delta)


@dataclass(frozen=True)
class AttackSweep:
    gammas: tuple[float, ...] = (1e1, 1e2, 1e3, 1e4)
    step_size: float = 0.1
    iterations: int = 300
    n_seeds: int = 20
    side: int = 8
    classes: int = 10
    snapshot_every: int | None = None
    export_pgm: bool = False

    def __post_init__(self):
        if not self.gammas:
            raise ConfigError("attack gamma sweep must be non-empty")
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    graph: dict
    objective: ObjectiveConfig
    noise: NoiseSweep
    basis: BasisConfig
    schedule: Schedule
    batch_size: int = 0
    metrics_every: int = 100
    dp: DPConfig | None = None
    attack: AttackSweep | None = None

    def __post_init__(self):
        if self.basis.size != self.noise.n_terms:
            raise ConfigError(
                "the basis size must equal the number of perturbed coefficients"
            )
        if self.batch_size < 0:
            raise ConfigError("batch_size must be >= 0 (0 means full batch)")

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "graph": dict(self.graph),
            "objective": asdict(self.objective),
            "noise": asdict(self.noise),
            "basis": asdict(self.basis),
            "schedule": asdict(self.schedule),
            "batch_size": self.batch_size,
            "metrics_every": self.metrics_every,
        }
        out["noise"]["gammas"] = list(self.noise.gammas)
        if self.dp is not None:
            out["dp"] = asdict(self.dp)
            if self.dp.f_diff is not None:
                out["dp"]["f_diff"] = list(self.dp.f_diff)
        if self.attack is not None:
            out["attack"] = asdict(self.attack)
            out["attack"]["gammas"] = list(self.attack.gammas)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            data = dict(raw)
            data.pop("schema_version", None)
            return cls(
                seed=int(data["seed"]),
                graph=dict(data["graph"]),
                objective=ObjectiveConfig(**data["objective"]),
                noise=NoiseSweep(**_tupled(data["noise"], "gammas")),
                basis=BasisConfig(**data["basis"]),
                schedule=Schedule(**data["schedule"]),
                batch_size=int(data.get("batch_size", 0)),
                metrics_every=int(data.get("metrics_every", 100)),
                dp=DPConfig(**_tupled(data["dp"], "f_diff")) if "dp" in data else None,
                attack=AttackSweep(**_tupled(data["attack"], "gammas"))
                if "attack" in data
                else None,
            )
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc


def _tupled(section: dict, key: str) -> dict:
    section = dict(section)
    if section.get(key) is not None:
        section[key] = tuple(section[key])
    return section


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".toml":
        try:
            import tomllib  # py311+
        except ImportError:
            import tomli as tomllib
        raw = tomllib.loads(text)
    elif path.suffix == ".json":
        raw = json.loads(text)
    else:
        raise ConfigError(f"unsupported config format {path.suffix!r} (use .toml or .json)")
    return ExperimentConfig.from_dict(raw)


def derived_seed(base: int, *path: int) -> int:
    """Stable 63-bit seed derived from the config seed and a tag path."""
    return int(np.random.SeedSequence([base, *path]).generate_state(1)[0] >> 1)


def gamma_key(gamma: float) -> int:
    """Bit pattern of gamma as an integer, so per-gamma seeds do not
    depend on the sweep a gamma value happens to appear in."""
    return int(np.float64(gamma).view(np.uint64))


@dataclass
class RunReport:
    """Long-format metric rows plus a JSON-able summary."""

    rows: list[tuple] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add(self, run_id: str, algorithm: str, gamma: float, step: int, metric: str, value):
        self.rows.append((run_id, algorithm, gamma, step, metric, float(value)))

    def to_csv_text(self) -> str:
        lines = ["run_id,algorithm,gamma,step,metric,value"]
        for run_id, algorithm, gamma, step, metric, value in self.rows:
            lines.append(f"{run_id},{algorithm},{gamma!r},{step},{metric},{value!r}")
        return "\n".join(lines) + "\n"

    def values(self, algorithm: str, metric: str, gamma: float | None = None) -> list[float]:
        out = []
        for _, alg, g, _, met, value in self.rows:
            if alg == algorithm and met == metric and (gamma is None or g == gamma):
                out.append(value)
        return out

    def write(self, out_dir) -> dict[str, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "results.csv"
        csv_path.write_text(self.to_csv_text())
        summary_path = out_dir / "summary.json"
        summary_path.write_text(json.dumps(self.summary, indent=2, sort_keys=True) + "\n")
        return {"results": csv_path, "summary": summary_path}


def build_objectives(cfg: ExperimentConfig, n: int):
    """Per-agent objectives, the reference optimum, and the holdout split."""
    oc = cfg.objective
    if oc.family == "quadratic":
        rng = np.random.default_rng([_DATA_STREAM, oc.dataset_seed])
        a = rng.standard_normal((oc.dim, oc.dim))
        q = a @ a.T / (2 * oc.dim) + np.eye(oc.dim)
        objectives = [quadratic_objective(q, rng.standard_normal(oc.dim)) for _ in range(n)]
        q_sum = np.sum([o.q for o in objectives], axis=0)
        b_sum = np.sum([o.b for o in objectives], axis=0)
        x_star = np.linalg.solve(q_sum, -b_sum)
        return objectives, x_star, None
    total = n * oc.samples_per_agent + oc.holdout
    features, labels = synthetic_classification(
        total, oc.dim, oc.classes, oc.dataset_seed, oc.separation
    )
    objectives = []
    for i in range(n):
        lo = i * oc.samples_per_agent
        hi = lo + oc.samples_per_agent
        objectives.append(logistic_objective(features[lo:hi], labels[lo:hi], oc.classes))
    holdout = (features[n * oc.samples_per_agent :], labels[n * oc.samples_per_agent :])
    x_star = centralized_gd(objectives, cfg.schedule)
    return objectives, x_star, holdout


def perturbation_coordinates(cfg: ExperimentConfig, objectives) -> tuple[int, ...]:
    if cfg.basis.coordinates == "bias":
        if cfg.objective.family != "logistic":
            raise ConfigError("the bias coordinate preset needs a logistic objective")
        bias = objectives[0].bias_coordinates()
        if cfg.basis.m > bias.size:
            raise ConfigError("more perturbed variables than bias entries")
        return tuple(int(c) for c in bias[: cfg.basis.m])
    if cfg.basis.m > objectives[0].dim:
        raise ConfigError("more perturbed variables than parameters")
    return tuple(range(cfg.basis.m))


def _noise_seed(cfg: ExperimentConfig, algorithm: str, gamma: float) -> int:
    return derived_seed(
        cfg.seed, _NOISE_STREAM, 0 if algorithm == ALG_PROTOCOL else 1, gamma_key(gamma)
    )


def _coefficients_for(
    algorithm: str,
    gamma: float,
    cfg: ExperimentConfig,
    net: Network,
    keyring,
) -> PerturbationCoefficients | None:
    if algorithm == ALG_NOISEFREE or gamma == 0.0:
        return None
    noise_cfg = cfg.noise.config_for(gamma)
    seed = _noise_seed(cfg, algorithm, gamma)
    if algorithm == ALG_PROTOCOL:
        return run_phase1(net, noise_cfg, keyring, seed)
    return nonzero_sum_baseline(net.n, noise_cfg, seed)


def _run_one(
    cfg: ExperimentConfig,
    net: Network,
    objectives: list[Objective],
    coeffs: PerturbationCoefficients | None,
    system,
    coords,
):
    if coeffs is None:
        hats = list(objectives)
    else:
        hats = [
            perturb(obj, to_polynomial(coeffs.eta_bar[i], system), coords)
            for i, obj in enumerate(objectives)
        ]
    opt_seed = derived_seed(cfg.seed, _OPT_STREAM)
    try:
        trajectory = dsgd(
            net,
            hats,
            cfg.schedule,
            batch_size=cfg.batch_size or None,
            seed=opt_seed,
            record_every=cfg.metrics_every,
        )
        return trajectory, False
    except DivergenceError as exc:
        return [exc.state], True


def _emit_trajectory(
    report: RunReport,
    run_id: str,
    algorithm: str,
    gamma: float,
    trajectory: list[AgentState],
    objectives,
    x_star,
    holdout,
    diverged: bool,
):
    for state in trajectory:
        report.add(run_id, algorithm, gamma, state.step, "deviation", deviation(state, x_star))
        report.add(
            run_id,
            algorithm,
            gamma,
            state.step,
            "avg_grad_sq_norm",
            avg_gradient_norm(state, objectives),
        )
        for i, obj in enumerate(objectives):
            report.add(
                run_id,
                algorithm,
                gamma,
                state.step,
                f"loss_agent_{i}",
                unperturbed(obj).value(state.x[i]),
            )
    final = trajectory[-1]
    report.add(run_id, algorithm, gamma, final.step, "final_deviation", deviation(final, x_star))
    report.add(run_id, algorithm, gamma, final.step, "diverged", 1.0 if diverged else 0.0)
    if holdout is not None:
        acc = objectives[0].accuracy(final.mean, holdout[0], holdout[1])
        report.add(run_id, algorithm, gamma, final.step, "accuracy", acc)


def run_accuracy_experiment(cfg: ExperimentConfig) -> RunReport:
    """Full sweep over noise magnitudes and algorithms; see module docstring."""
    started = time.perf_counter()
    report = RunReport()
    try:
        net = netmod.from_spec(cfg.graph)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad graph spec: {exc}") from exc
    objectives, x_star, holdout = build_objectives(cfg, net.n)
    system = cfg.basis.build()
    coords = perturbation_coordinates(cfg, objectives)
    key_seed = derived_seed(cfg.seed, _KEY_STREAM)
    keyring = generate_keyring(net.n, cfg.noise.key_bits, key_seed)

    noisefree_traj, noisefree_div = _run_one(cfg, net, objectives, None, system, coords)
    for gamma in cfg.noise.gammas:
        _emit_trajectory(
            report,
            f"{ALG_NOISEFREE}-g{gamma:g}",
            ALG_NOISEFREE,
            gamma,
            noisefree_traj,
            objectives,
            x_star,
            holdout,
            noisefree_div,
        )
    for algorithm in (ALG_PROTOCOL, ALG_BASELINE):
        for gamma in cfg.noise.gammas:
            coeffs = _coefficients_for(algorithm, gamma, cfg, net, keyring)
            trajectory, diverged = _run_one(cfg, net, objectives, coeffs, system, coords)
            _emit_trajectory(
                report,
                f"{algorithm}-g{gamma:g}",
                algorithm,
                gamma,
                trajectory,
                objectives,
                x_star,
                holdout,
                diverged,
            )

    report.summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": "accuracy",
        "config": cfg.to_dict(),
        "x_star": [float(v) for v in x_star],
        "seeds": {
            "optimizer": derived_seed(cfg.seed, _OPT_STREAM),
            "keys": key_seed,
            "noise": {
                f"{alg}-g{g:g}": _noise_seed(cfg, alg, g)
                for alg in (ALG_PROTOCOL, ALG_BASELINE)
                for g in cfg.noise.gammas
            },
        },
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    return report


def run_privacy_experiment(cfg: ExperimentConfig, out_dir=None) -> RunReport:
    """Attack sweep plus per-gamma privacy budgets.

    The attacked model and sample are synthetic images through a single
    linear softmax layer; the basis must use the bias preset dimensions
    (m <= classes).  Budgets use the dp section; gamma 0 rows carry no
    budget (the accountant needs positive noise).
    """
    if cfg.attack is None:
        raise ConfigError("config has no attack section")
    started = time.perf_counter()
    ac = cfg.attack
    report = RunReport()
    net = netmod.from_spec(cfg.graph)
    system = cfg.basis.build()
    if cfg.basis.coordinates == "bias" and cfg.basis.m > ac.classes:
        raise ConfigError("basis variables exceed the attacked model's bias entries")
    model_seed = derived_seed(cfg.seed, _ATTACK_STREAM, 0)
    model = random_model(ac.side * ac.side, ac.classes, model_seed)
    images, labels = synthetic_images(4, ac.side, ac.classes, cfg.seed)
    sample = (images[0], int(labels[0]))

    budgets = {}
    if cfg.dp is not None:
        f_diff = np.zeros(cfg.noise.n_terms)
        if cfg.dp.f_diff is None:
            f_diff[0] = 1.0
        else:
            if len(cfg.dp.f_diff) != cfg.noise.n_terms:
                raise ConfigError("f_diff length must match the coefficient count")
            f_diff = np.asarray(cfg.dp.f_diff)
        for gamma in ac.gammas:
            if gamma == 0.0:
                continue
            params = DPParams(cfg.dp.q, cfg.noise.decay, gamma, cfg.dp.tail_value())
            b = budget(
                sensitivity_bound(f_diff, params),
                params.tail,
                net.algebraic_connectivity,
                net.laplacian_spectral_radius,
            )
            budgets[gamma] = b
            run_id = f"budget-g{gamma:g}"
            report.add(run_id, ALG_PROTOCOL, gamma, 0, "epsilon", b.epsilon)
            report.add(run_id, ALG_PROTOCOL, gamma, 0, "delta", b.delta)
            report.add(run_id, ALG_PROTOCOL, gamma, 0, "sensitivity", b.sensitivity)

    attack_cfg = AttackConfig(
        step_size=ac.step_size,
        iterations=ac.iterations,
        seed=derived_seed(cfg.seed, _ATTACK_STREAM, 1),
        snapshot_every=ac.snapshot_every,
    )
    # "first" perturbs leading weight entries (corrupting the input-bearing
    # gradient rows); "bias" perturbs the output biases.
    coords = tuple(range(cfg.basis.m)) if cfg.basis.coordinates == "first" else None
    detail_lines = ["gamma,seed,iteration,matching_loss,mse"]
    for rep in range(ac.n_seeds):
        sweep_seed = derived_seed(cfg.seed, _ATTACK_STREAM, 2, rep)
        results = attack_under_noise(
            model,
            sample,
            ac.gammas,
            attack_cfg,
            system,
            net,
            decay=cfg.noise.decay,
            precision=cfg.noise.precision,
            key_bits=cfg.noise.key_bits,
            seed=sweep_seed,
            coordinates=coords,
        )
        for gamma, res in results.items():
            run_id = f"attack-g{gamma:g}-s{rep}"
            report.add(run_id, ALG_PROTOCOL, gamma, ac.iterations, "attack_mse", res.mse)
            report.add(
                run_id, ALG_PROTOCOL, gamma, ac.iterations, "diverged", 1.0 if res.diverged else 0.0
            )
            for it, loss in enumerate(res.losses):
                detail_lines.append(f"{gamma!r},{rep},{it + 1},{loss!r},{res.mse!r}")
            if out_dir is not None and ac.export_pgm and rep == 0:
                for it, snap in res.snapshots:
                    write_pgm(
                        Path(out_dir) / f"recon-g{gamma:g}-i{it}.pgm", snap, ac.side
                    )
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "attacks.csv").write_text("\n".join(detail_lines) + "\n")
        if cfg.attack.export_pgm:
            write_pgm(Path(out_dir) / "ground-truth.pgm", sample[0], ac.side)

    report.summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": "privacy",
        "config": cfg.to_dict(),
        "sample_label": sample[1],
        "budgets": {
            f"{g:g}": {"epsilon": b.epsilon, "delta": b.delta, "sensitivity": b.sensitivity}
            for g, b in budgets.items()
        },
        "seeds": {
            "model": model_seed,
            "attack": attack_cfg.seed,
            "sweeps": [derived_seed(cfg.seed, _ATTACK_STREAM, 2, r) for r in range(ac.n_seeds)],
        },
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    return report


def example_accuracy_config(**overrides) -> ExperimentConfig:
    """Desk-scale logistic default: 5 agents, ring plus chord, under a minute."""
    base = dict(
        seed=20240901,
        graph={"kind": "ring_chord", "n": 5},
        objective=ObjectiveConfig(family="logistic", dim=20, classes=3, samples_per_agent=40),
        noise=NoiseSweep(gammas=(1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3, 1e4), n_terms=10),
        basis=BasisConfig(max_degree=1, m=10, size=10, seed=5),
        schedule=Schedule(0.2, 1e-4, hold_steps=400, total_steps=2000),
        batch_size=0,
        metrics_every=200,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def example_privacy_config(**overrides) -> ExperimentConfig:
    base = dict(
        seed=20240902,
        graph={"kind": "ring_chord", "n": 5},
        objective=ObjectiveConfig(family="logistic", dim=20, classes=3),
        noise=NoiseSweep(gammas=(1e1, 1e2, 1e3, 1e4), n_terms=10),
        basis=BasisConfig(max_degree=1, m=10, size=10, seed=5),
        schedule=Schedule(0.2, 1e-4, hold_steps=400, total_steps=2000),
        dp=DPConfig(q=2.0, tail=2.0),
        attack=AttackSweep(gammas=(0.0, 1e1, 1e2, 1e3, 1e4), n_seeds=20),
    )
    base.update(overrides)
    return ExperimentConfig(**base)
