"""Experiment protocols: adiabatic-invariant scans and surrogate evaluations.

The adiabatic scan iterates one random symplectic gyroceptron at several
values of ``epsilon`` and records how far ``mu = J0 o psi^-1`` wanders, both
as a full drift series and as the first iteration ``N(eps)`` at which the
deviation exceeds ``rho`` times the worst deviation seen during a burn-in of
``K(eps) = floor(10 + eps^(-1/4))`` iterations.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fastpath
from .benchmark_systems import (
    ChargedParticleSystem,
    CoupledOscillatorSystem,
    averaged_hamiltonian,
    slow_manifold_reference,
    trajectory,
)
from .circle_actions import CircleAction
from .errors import ConfigurationError, ContractError, RolloutError
from .gyroceptron import SymplecticGyroceptron

# Burn-in deviations at or below this multiple of machine epsilon (times |mu0|)
# count as exact conservation.
DEGENERATE_ULPS = 64


@dataclass
class DriftSeries:
    values: np.ndarray
    truncated: bool = False

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def drift_series(g: SymplecticGyroceptron, z0, iterations: int, engine: str = "numba") -> DriftSeries:
    """``mu(z_k) - mu(z_0)`` along the orbit of ``z0`` for ``k = 0..iterations``.

    A blow-up ends the series early with ``truncated`` set.
    """
    if iterations < 1:
        raise ContractError("iterations must be >= 1")
    z0 = np.asarray(z0, dtype=float)
    if engine == "numba":
        values, truncated = fastpath.drift_series(g, z0, iterations)
        return DriftSeries(values, truncated)
    if engine != "numpy":
        raise ConfigurationError(f"unknown engine {engine!r}")
    try:
        traj = g.rollout(z0, iterations)
        truncated = False
    except RolloutError as exc:
        traj, truncated = exc.trajectory, True
    with np.errstate(over="ignore", invalid="ignore"):
        mu = g.adiabatic_invariant(traj)
        return DriftSeries(mu - mu[0], truncated)


def burn_in_length(epsilon: float) -> int:
    """``K(eps) = floor(10 + eps^(-1/4))``."""
    if epsilon <= 0:
        raise ContractError("burn-in length needs epsilon > 0")
    return math.floor(10 + epsilon**-0.25)


@dataclass
class ThresholdResult:
    """Outcome of the ``N(eps)`` search.

    ``n`` is ``None`` when the threshold was not crossed within the cap
    (``exceeded``); ``degenerate`` marks a burn-in with no measurable
    deviation, where the threshold is meaningless; ``blew_up`` marks an orbit
    that became non-finite before crossing.
    """

    epsilon: float
    n: int | None
    burn_in: int
    burn_in_max: float
    exceeded: bool = False
    degenerate: bool = False
    blew_up: bool = False

    @property
    def sort_key(self) -> float:
        return math.inf if self.n is None else float(self.n)


def n_epsilon(g: SymplecticGyroceptron, z0, rho: float = 1.1, max_iterations: int = 2_000_000) -> ThresholdResult:
    """Smallest ``N > K(eps)`` with ``|mu_N - mu_0| > rho * max_{k <= K} |mu_k - mu_0|``."""
    if not rho > 1:
        raise ContractError("rho must exceed 1")
    eps = g.epsilon
    if eps == 0:
        return ThresholdResult(0.0, None, 0, 0.0, exceeded=True, degenerate=True)
    K = burn_in_length(eps)
    if max_iterations < K:
        raise ContractError(f"max_iterations must be at least K(eps) = {K}")
    z0 = np.asarray(z0, dtype=float)
    mu0 = float(g.adiabatic_invariant(z0))
    floor = DEGENERATE_ULPS * np.finfo(float).eps * max(1.0, abs(mu0))
    n, worst = fastpath.threshold_search(g, z0, K, rho, max_iterations, floor)
    if n == -2:
        return ThresholdResult(eps, None, K, worst, exceeded=True, degenerate=True)
    if n == -1:
        return ThresholdResult(eps, None, K, worst, exceeded=True)
    if n == -3:
        return ThresholdResult(eps, None, K, worst, blew_up=True)
    return ThresholdResult(eps, int(n), K, worst)


@dataclass
class AdiabaticScanConfig:
    epsilons: list[float] = field(default_factory=lambda: [10.0**-k for k in range(1, 9)])
    iterations: int = 10_000
    rho: float = 1.1
    max_iterations: int = 2_000_000
    # N(eps) is only searched for these; None means all of ``epsilons``.
    threshold_epsilons: list[float] | None = None
    model_seed: int = 0
    dim: int = 2
    psi_layers: int = 3
    psi_hidden: int = 8
    iota_layers: int = 3
    iota_hidden: int = 8
    theta: float | None = None
    z0: list[float] | None = None

    def __post_init__(self):
        eps = list(self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            raise ConfigurationError("epsilons must be positive")
        if eps != sorted(eps, reverse=True):
            raise ConfigurationError("epsilons must be sorted in descending order")
        if self.iterations < 1 or self.max_iterations < 1:
            raise ConfigurationError("iteration counts must be positive")
        if not self.rho > 1:
            raise ConfigurationError("rho must exceed 1")
        if self.dim < 2 or self.dim % 2:
            raise ConfigurationError("dim must be even and >= 2")

    def build_model(self) -> SymplecticGyroceptron:
        """Random gyroceptron rotating the first pair; ``theta`` drawn in ``[0, 2 pi)`` unless given."""
        rng = np.random.default_rng(self.model_seed)
        theta = rng.uniform(0, 2 * np.pi) if self.theta is None else self.theta
        action = CircleAction.single(self.dim, 0, theta)
        return SymplecticGyroceptron.random(
            action, self.epsilons[0], rng, self.psi_layers, self.psi_hidden, self.iota_layers, self.iota_hidden
        )

    def initial_state(self) -> np.ndarray:
        return np.full(self.dim, 0.5) if self.z0 is None else np.asarray(self.z0, dtype=float)


@dataclass
class ScanResult:
    config: AdiabaticScanConfig
    drifts: dict[float, DriftSeries]
    thresholds: list[ThresholdResult]
    timings: dict[str, float]

    def summary_rows(self) -> list[dict]:
        by_eps = {t.epsilon: t for t in self.thresholds}
        rows = []
        for eps, series in self.drifts.items():
            t = by_eps.get(eps)
            rows.append(
                {
                    "epsilon": eps,
                    "N": None if t is None or t.n is None else t.n,
                    "exceeded_flag": None if t is None else int(t.exceeded),
                    "max_drift": series.max_drift,
                }
            )
        return rows

    def to_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "rows": self.summary_rows(),
            "thresholds": [asdict(t) for t in self.thresholds],
            "timings": self.timings,
        }


def adiabatic_scan(config: AdiabaticScanConfig, engine: str = "numba") -> ScanResult:
    base = config.build_model()
    z0 = config.initial_state()
    drifts = {}
    thresholds = []
    timings = {}
    wanted = config.epsilons if config.threshold_epsilons is None else config.threshold_epsilons
    for eps in config.epsilons:
        g = base.with_epsilon(eps)
        t0 = time.perf_counter()
        drifts[eps] = drift_series(g, z0, config.iterations, engine=engine)
        t1 = time.perf_counter()
        timings[f"drift_{eps:g}"] = t1 - t0
        if eps in wanted:
            thresholds.append(n_epsilon(g, z0, config.rho, config.max_iterations))
            timings[f"threshold_{eps:g}"] = time.perf_counter() - t1
    return ScanResult(config, drifts, thresholds, timings)


def count_inversions(values, tolerance: float = 0.1, increasing: bool = False) -> tuple[int, int]:
    """Steps against the expected direction: (all of them, those larger than ``tolerance``).

    For a non-increasing sequence an increase from ``a`` to ``b`` is large when
    ``b > (1 + tolerance) a``; for a non-decreasing one a drop is large when
    ``b < (1 - tolerance) a``. Infinite entries compare as usual.
    """
    values = list(values)
    pairs = list(zip(values, values[1:]))
    if increasing:
        bad = [(a, b) for a, b in pairs if b < a]
        big = [(a, b) for a, b in bad if b < (1 - tolerance) * a]
    else:
        bad = [(a, b) for a, b in pairs if b > a]
        big = [(a, b) for a, b in bad if b > (1 + tolerance) * a]
    return len(bad), len(big)


def is_monotone_with_allowance(values, tolerance: float = 0.1, increasing: bool = False) -> bool:
    """Monotone except for at most one step the wrong way of at most ``tolerance`` (relative)."""
    bad, big = count_inversions(values, tolerance, increasing)
    return bad <= 1 and big == 0


# -- surrogate evaluations ---------------------------------------------------------


def oscillator_initial_conditions(q1: float = 1.0, p1: float = 0.0, count: int = 7, spread: float = 1.2) -> np.ndarray:
    """Initial states sharing ``(q1, p1)`` with ``q2`` spread over ``[-spread, spread]`` and ``p2 = 0``."""
    q2 = np.linspace(-spread, spread, count)
    return np.stack([np.full(count, q1), q2, np.full(count, p1), np.zeros(count)], axis=1)


def averaged_hamiltonian_along(traj: np.ndarray) -> np.ndarray:
    """``H_bar`` at each state of an oscillator trajectory ``(..., 4)``."""
    return averaged_hamiltonian(traj[..., 1], traj[..., 3], np.hypot(traj[..., 0], traj[..., 2]))


@dataclass
class LevelSetComparison:
    predicted_variation: np.ndarray
    reference_variation: np.ndarray
    ratio: np.ndarray
    max_state_error: float
    surrogate_seconds: float
    reference_seconds: float


def compare_level_sets(
    g: SymplecticGyroceptron,
    system: CoupledOscillatorSystem,
    z0: np.ndarray,
    flow_time: float,
    steps: int,
    substeps: int | None = None,
) -> LevelSetComparison:
    """Peak-to-peak variation of ``H_bar`` along surrogate and RK4 trajectories from each ``z0`` row."""
    t0 = time.perf_counter()
    pred = g.rollout(z0, steps)
    t1 = time.perf_counter()
    ref = trajectory(system, z0, flow_time, steps, substeps)
    t2 = time.perf_counter()
    vp = np.ptp(averaged_hamiltonian_along(pred), axis=0)
    vr = np.ptp(averaged_hamiltonian_along(ref), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = vp / vr
    return LevelSetComparison(vp, vr, ratio, float(np.max(np.abs(pred - ref))), t1 - t0, t2 - t1)


@dataclass
class SlowManifoldCheck:
    q_error: np.ndarray  # max |q_pred - (q0 + eps p0 t)| per initial condition
    mu_learnt_band: np.ndarray  # peak-to-peak of J0 o psi^-1 per off-manifold rollout
    mu0_band: np.ndarray  # peak-to-peak of the closed-form mu0 along the same rollout
    band_ratio: np.ndarray


def slow_manifold_check(
    g: SymplecticGyroceptron,
    system: ChargedParticleSystem,
    on_manifold: list[tuple[float, float]],
    off_manifold: np.ndarray,
    flow_time: float,
    steps: int,
) -> SlowManifoldCheck:
    """Surrogate tracking of the slow drift ``q0 + eps p0 t`` and band widths of the two invariants."""
    z_on = np.stack([system.slow_manifold_point(q, p) for q, p in on_manifold])
    traj = g.rollout(z_on, steps)
    t = flow_time * np.arange(steps + 1)
    q_err = []
    for i, (q0, p0) in enumerate(on_manifold):
        q_ref, _ = slow_manifold_reference(q0, p0, system.epsilon, t)
        q_err.append(np.max(np.abs(traj[:, i, 0] - q_ref)))
    off = g.rollout(np.asarray(off_manifold, dtype=float), steps)
    learnt = g.adiabatic_invariant(off.reshape(-1, off.shape[-1])).reshape(off.shape[:-1])
    closed = system.mu0(off)
    lb = np.ptp(learnt, axis=0)
    cb = np.ptp(closed, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = lb / cb
    return SlowManifoldCheck(np.array(q_err), lb, cb, ratio)
