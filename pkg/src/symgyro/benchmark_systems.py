"""Ground-truth nearly-periodic Hamiltonian systems and their RK4 flow maps.

Two systems are provided, both packed as ``(x, y)`` halves:

* :class:`CoupledOscillatorSystem` on ``(q1, q2, p1, p2)``: a fast unit
  oscillator nonlinearly coupled to a slow one through
  ``U = q1 q2 sin(2 q1 + 2 q2)``.
* :class:`ChargedParticleSystem` on ``(q, Q_1..Q_K, p, P_1..P_K)``: a particle
  ``(q, p)`` driving ``K`` field modes with frequencies ``k``.

Vector fields and Hamiltonians are written out by hand; tests pin them to
finite differences of the Hamiltonian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np

from .circle_actions import CircleAction
from .errors import ConfigurationError, ContractError, IntegrationError

DEFAULT_STEP = 1e-3


# -- coupled oscillators ---------------------------------------------------------


@dataclass(frozen=True)
class CoupledOscillatorSystem:
    epsilon: float
    name = "oscillators"
    dim = 4

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be non-negative")

    def circle_action(self, theta: float = 0.0) -> CircleAction:
        """The ``epsilon = 0`` rotation: the fast pair ``(q1, p1)`` at unit frequency."""
        return CircleAction(4, ((0, 1),), theta)

    def default_box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.full(4, -1.5), np.full(4, 1.5)

    @staticmethod
    def coupling(q1, q2):
        return q1 * q2 * np.sin(2 * q1 + 2 * q2)

    @staticmethod
    def coupling_gradient(q1, q2):
        s = 2 * q1 + 2 * q2
        sin_s, cos_s = np.sin(s), np.cos(s)
        common = 2 * q1 * q2 * cos_s
        return q2 * sin_s + common, q1 * sin_s + common

    def hamiltonian(self, z):
        q1, q2, p1, p2 = np.moveaxis(np.asarray(z, dtype=float), -1, 0)
        eps = self.epsilon
        return 0.5 * (q1**2 + p1**2) + 0.5 * eps * (q2**2 + p2**2) + eps * self.coupling(q1, q2)

    def vector_field(self, z) -> np.ndarray:
        z = _check_dim(z, 4)
        q1, q2, p1, p2 = np.moveaxis(z, -1, 0)
        eps = self.epsilon
        u1, u2 = self.coupling_gradient(q1, q2)
        return np.stack([p1, eps * p2, -q1 - eps * u1, -eps * q2 - eps * u2], axis=-1)

    def to_dict(self) -> dict:
        return {"name": self.name, "epsilon": self.epsilon}


def averaged_hamiltonian(q2, p2, qp1_radius):
    """Averaged slow Hamiltonian ``1/2 (q2^2 + p2^2) + q2 cos(2 q2) r J1(2 r)``.

    ``r = sqrt(q1^2 + p1^2)`` is the fast oscillator's amplitude. Broadcasts.
    """
    r = np.asarray(qp1_radius, dtype=float)
    if np.any(r < 0):
        raise ContractError("radius must be non-negative")
    q2 = np.asarray(q2, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    return 0.5 * (q2**2 + p2**2) + q2 * np.cos(2 * q2) * r * bessel_j1(2 * r)


def bessel_j1(x, nodes: int | None = None):
    """``J1(x) = 1/(2 pi) int_0^{2 pi} cos(t - x sin t) dt`` by the periodic trapezoid rule.

    The integrand is entire and periodic, so the rule converges geometrically
    once ``nodes`` exceeds ``|x|`` by a margin; the default picks
    ``64 + 2 ceil(max |x|)`` nodes.
    """
    x = np.asarray(x, dtype=float)
    if nodes is None:
        nodes = 64 + 2 * int(np.ceil(np.max(np.abs(x)) if x.size else 0.0))
    t = 2 * np.pi * np.arange(nodes) / nodes
    return np.mean(np.cos(t - x[..., None] * np.sin(t)), axis=-1)


# -- charged particle ----------------------------------------------------------------


@dataclass(frozen=True)
class FieldPotential:
    """A single-variable field potential ``V_k`` with its derivative."""

    name: str
    value: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    derivative: Callable[[np.ndarray], np.ndarray] = field(repr=False)


FIELD_POTENTIALS = {
    "half_sin2": FieldPotential("half_sin2", lambda Q: 0.5 * np.sin(2 * Q), lambda Q: np.cos(2 * Q)),
    "half_gauss5": FieldPotential(
        "half_gauss5", lambda Q: 0.5 * np.exp(-5 * Q**2), lambda Q: -5 * Q * np.exp(-5 * Q**2)
    ),
    "zero": FieldPotential("zero", lambda Q: np.zeros_like(Q), lambda Q: np.zeros_like(Q)),
}


@dataclass(frozen=True)
class ChargedParticleSystem:
    epsilon: float
    potentials: tuple[str, ...] = ("half_sin2", "half_gauss5")
    name = "charged_particle"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError("epsilon must be non-negative")
        if len(self.potentials) < 1:
            raise ConfigurationError("need at least one field mode")
        unknown = [p for p in self.potentials if p not in FIELD_POTENTIALS]
        if unknown:
            raise ConfigurationError(f"unknown field potentials {unknown}; known: {sorted(FIELD_POTENTIALS)}")
        object.__setattr__(self, "potentials", tuple(self.potentials))

    @property
    def K(self) -> int:
        return len(self.potentials)

    @property
    def dim(self) -> int:
        return 2 + 2 * self.K

    def circle_action(self, theta: float = 0.0) -> CircleAction:
        """Mode ``k`` (pair ``(Q_k, Pi_k)``) rotated at frequency ``k``; ``(q, p)`` fixed."""
        return CircleAction(self.dim, tuple((k, k) for k in range(1, self.K + 1)), theta)

    def default_box(self) -> tuple[np.ndarray, np.ndarray]:
        K = self.K
        lo = np.concatenate([[-np.pi], -np.ones(K), [-1.0], -np.ones(K)])
        return lo, -lo

    def _unpack(self, z):
        z = _check_dim(z, self.dim)
        K = self.K
        return z, z[..., 0], z[..., 1 : 1 + K], z[..., 1 + K], z[..., 2 + K :]

    def _field(self, Q):
        V = np.stack([FIELD_POTENTIALS[p].value(Q[..., i]) for i, p in enumerate(self.potentials)], axis=-1)
        dV = np.stack(
            [FIELD_POTENTIALS[p].derivative(Q[..., i]) for i, p in enumerate(self.potentials)], axis=-1
        )
        return V, dV

    def hamiltonian(self, z):
        _, q, Q, p, P = self._unpack(z)
        k = np.arange(1, self.K + 1)
        V, _ = self._field(Q)
        w = p - np.sum(np.sin(k * q[..., None]) * Q, axis=-1)
        return 0.5 * self.epsilon * w**2 + 0.5 * np.sum(k * ((P - V) ** 2 + Q**2), axis=-1)

    def vector_field(self, z) -> np.ndarray:
        z, q, Q, p, P = self._unpack(z)
        eps = self.epsilon
        k = np.arange(1, self.K + 1)
        kq = k * q[..., None]
        V, dV = self._field(Q)
        w = p - np.sum(np.sin(kq) * Q, axis=-1)
        Pi = P - V
        q_dot = eps * w
        p_dot = eps * w * np.sum(k * np.cos(kq) * Q, axis=-1)
        Q_dot = k * Pi
        P_dot = -k * Q + k * Pi * dV + eps * w[..., None] * np.sin(kq)
        return np.concatenate([q_dot[..., None], Q_dot, p_dot[..., None], P_dot], axis=-1)

    def lambda0_inverse(self, z) -> np.ndarray:
        """``P_k -> Pi_k = P_k - V_k(Q_k)``."""
        z, _, Q, _, P = self._unpack(z)
        V, _ = self._field(Q)
        out = z.copy()
        out[..., 2 + self.K :] = P - V
        return out

    def lambda0(self, z) -> np.ndarray:
        """``Pi_k -> P_k = Pi_k + V_k(Q_k)``."""
        z, _, Q, _, Pi = self._unpack(z)
        V, _ = self._field(Q)
        out = z.copy()
        out[..., 2 + self.K :] = Pi + V
        return out

    def mu0(self, z):
        """Leading-order adiabatic invariant ``1/2 sum_k k ((P_k - V_k)^2 + Q_k^2)``."""
        _, _, Q, _, P = self._unpack(z)
        V, _ = self._field(Q)
        k = np.arange(1, self.K + 1)
        return 0.5 * np.sum(k * ((P - V) ** 2 + Q**2), axis=-1)

    def slow_manifold_point(self, q0: float, p0: float) -> np.ndarray:
        """The state with ``(q, p) = (q0, p0)``, ``Q = 0`` and ``P_k = V_k(0)``."""
        V, _ = self._field(np.zeros(self.K))
        return np.concatenate([[q0], np.zeros(self.K), [p0], V])

    def to_dict(self) -> dict:
        return {"name": self.name, "epsilon": self.epsilon, "potentials": list(self.potentials)}


def lambda0(system: ChargedParticleSystem, z) -> np.ndarray:
    return system.lambda0(z)


def lambda0_inverse(system: ChargedParticleSystem, z) -> np.ndarray:
    return system.lambda0_inverse(z)


def mu0(system: ChargedParticleSystem, z):
    return system.mu0(z)


def slow_manifold_reference(q0, p0, epsilon: float, t):
    """Leading-order drift on the slow manifold: ``q(t) = q0 + eps p0 t``, ``p(t) = p0``."""
    t = np.asarray(t, dtype=float)
    return q0 + epsilon * p0 * t, p0 + 0.0 * t


System = Union[CoupledOscillatorSystem, ChargedParticleSystem]


def make_system(name: str, epsilon: float, **kwargs) -> System:
    if name == CoupledOscillatorSystem.name:
        return CoupledOscillatorSystem(epsilon)
    if name == ChargedParticleSystem.name:
        return ChargedParticleSystem(epsilon, **kwargs)
    raise ConfigurationError(f"unknown system {name!r}")


def system_from_dict(d: dict) -> System:
    """Inverse of ``to_dict`` on either system."""
    extra = {k: v for k, v in d.items() if k not in ("name", "epsilon")}
    if "potentials" in extra:
        extra["potentials"] = tuple(extra["potentials"])
    return make_system(d["name"], d["epsilon"], **extra)


# -- integration ------------------------------------------------------------------


def _check_dim(z, dim: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1:] != (dim,):
        raise ContractError(f"expected states of dimension {dim}, got shape {z.shape}")
    return z


def hamiltonian(system: System, z):
    return system.hamiltonian(z)


def vector_field(system: System, z) -> np.ndarray:
    return system.vector_field(z)


def rk4_step(system: System, z, h: float) -> np.ndarray:
    """One classical Runge-Kutta step; ``z`` may be a batch."""
    if not h > 0:
        raise ContractError("step size must be positive")
    f = system.vector_field
    k1 = f(z)
    k2 = f(z + 0.5 * h * k1)
    k3 = f(z + 0.5 * h * k2)
    k4 = f(z + h * k3)
    return z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def default_substeps(T: float, step: float = DEFAULT_STEP) -> int:
    return max(1, int(round(T / step)))


def integrate(system: System, z0, T: float, substeps: int | None = None) -> np.ndarray:
    """Flow ``z0`` for time ``T`` with ``substeps`` equal RK4 steps.

    Raises:
        IntegrationError: if the state becomes non-finite.
    """
    z = _check_dim(z0, system.dim).copy()
    if T == 0:
        return z
    if substeps is None:
        substeps = default_substeps(T)
    if substeps < 1:
        raise ContractError("substeps must be >= 1")
    h = T / substeps
    for i in range(substeps):
        z = rk4_step(system, z, h)
    if not np.all(np.isfinite(z)):
        raise IntegrationError("non-finite state", where=f"t={T}")
    return z


def trajectory(system: System, z0, dt: float, steps: int, substeps: int | None = None) -> np.ndarray:
    """States at times ``0, dt, ..., steps * dt``; shape ``(steps + 1,) + z0.shape``."""
    z = _check_dim(z0, system.dim)
    out = np.empty((steps + 1,) + z.shape)
    out[0] = z
    for i in range(steps):
        z = integrate(system, z, dt, substeps)
        out[i + 1] = z
    return out


def energy_drift(system: System, traj) -> float:
    """``max_k |H(z_k) - H(z_0)|`` along a trajectory (first axis is time)."""
    H = system.hamiltonian(np.asarray(traj, dtype=float))
    return float(np.max(np.abs(H - H[0])))


# -- datasets ---------------------------------------------------------------------


@dataclass(eq=False)
class FlowDataset:
    system: dict
    flow_time: float
    inputs: np.ndarray
    targets: np.ndarray
    metadata: dict

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def save(self, csv_path) -> None:
        """CSV ``in_0.., out_0..`` (17 significant digits) plus a ``.json`` sidecar."""
        csv_path = Path(csv_path)
        d = self.dim
        header = ",".join([f"in_{i}" for i in range(d)] + [f"out_{i}" for i in range(d)])
        tmp = csv_path.with_suffix(".tmp")
        np.savetxt(tmp, np.hstack([self.inputs, self.targets]), delimiter=",", header=header, comments="", fmt="%.17g")
        tmp.replace(csv_path)
        meta = {"system": self.system, "flow_time": self.flow_time, "count": len(self), **self.metadata}
        csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, csv_path) -> FlowDataset:
        csv_path = Path(csv_path)
        data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        d = data.shape[1] // 2
        system = meta.pop("system")
        flow_time = meta.pop("flow_time")
        meta.pop("count", None)
        return cls(system, flow_time, data[:, :d], data[:, d:], meta)


def generate_dataset(
    system: System,
    T: float,
    count: int,
    box: tuple | None = None,
    substeps: int | None = None,
    seed: int = 0,
    max_resample_rounds: int = 100,
) -> FlowDataset:
    """Sample ``count`` states uniformly in ``box`` and push each through the time-``T`` flow.

    Samples whose integration blows up are redrawn; the number of redraws is
    recorded in the metadata as ``failures``.
    """
    if count < 1:
        raise ContractError("count must be >= 1")
    lo, hi = system.default_box() if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
    if lo.shape != (system.dim,) or hi.shape != (system.dim,) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ContractError("box bounds must be finite vectors of the system dimension")
    if substeps is None:
        substeps = default_substeps(T)
    rng = np.random.default_rng(seed)
    inputs = rng.uniform(lo, hi, size=(count, system.dim))
    failures = 0
    todo = np.arange(count)
    targets = np.empty_like(inputs)
    for _ in range(max_resample_rounds):
        with np.errstate(all="ignore"):
            out = inputs[todo] if T == 0 else _integrate_unchecked(system, inputs[todo], T, substeps)
        ok = np.all(np.isfinite(out), axis=1)
        targets[todo[ok]] = out[ok]
        todo = todo[~ok]
        if todo.size == 0:
            break
        failures += todo.size
        inputs[todo] = rng.uniform(lo, hi, size=(todo.size, system.dim))
    else:
        raise IntegrationError(f"{todo.size} samples still failing after resampling")
    metadata = {
        "rk4_substeps": substeps,
        "rk4_step": T / substeps if T else 0.0,
        "box_low": lo.tolist(),
        "box_high": hi.tolist(),
        "seed": seed,
        "failures": failures,
    }
    return FlowDataset(system.to_dict(), T, inputs, targets, metadata)


def _integrate_unchecked(system: System, z, T: float, substeps: int) -> np.ndarray:
    h = T / substeps
    for _ in range(substeps):
        z = rk4_step(system, z, h)
    return z
