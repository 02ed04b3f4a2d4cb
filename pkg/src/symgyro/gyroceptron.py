"""Symplectic gyroceptrons ``P_eps = I_eps o psi o Phi_theta o psi^-1``.

``psi`` is a HénonNet, ``I_eps`` a near-identity HénonNet and ``Phi_theta`` a
rotation circle action. Every factor is symplectic and explicitly invertible,
so the composite is too, whatever the weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .circle_actions import CircleAction
from .errors import ConfigurationError, ContractError, RolloutError
from .symplectic_maps import HenonNet, NearIdentityHenonNet

CHECKPOINT_VERSION = 1


@dataclass(frozen=True, eq=False)
class SymplecticGyroceptron:
    psi: HenonNet
    iota: NearIdentityHenonNet
    action: CircleAction
    epsilon: float = 0.0

    def __post_init__(self):
        n = self.action.n
        for name, net in (("psi", self.psi), ("iota", self.iota)):
            if net.n is not None and net.n != n:
                raise ConfigurationError(
                    f"{name} acts on dimension {2 * net.n}, circle action on {self.action.dim}"
                )
        if not self.epsilon >= 0:
            raise ConfigurationError(f"epsilon must be non-negative, got {self.epsilon}")
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @classmethod
    def random(
        cls,
        action: CircleAction,
        epsilon: float,
        rng: np.random.Generator,
        psi_layers: int = 3,
        psi_hidden: int = 8,
        iota_layers: int = 3,
        iota_hidden: int = 8,
    ) -> SymplecticGyroceptron:
        n = action.n
        psi = HenonNet.random(n, psi_layers, psi_hidden, rng)
        iota = NearIdentityHenonNet.random(n, iota_layers, iota_hidden, rng)
        return cls(psi, iota, action, epsilon)

    @property
    def dim(self) -> int:
        return self.action.dim

    @property
    def theta(self) -> float:
        return self.action.theta

    @property
    def num_parameters(self) -> int:
        return self.psi.num_parameters + self.iota.num_parameters + 1

    def with_epsilon(self, epsilon: float) -> SymplecticGyroceptron:
        return replace(self, epsilon=epsilon)

    def _check(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim or z.ndim > 2:
            raise ContractError(f"expected states of dimension {self.dim}, got shape {z.shape}")
        return z

    def conjugated_rotation(self, z) -> np.ndarray:
        """``psi o Phi_theta o psi^-1``, the ``epsilon = 0`` limit of :meth:`forward`."""
        z = self._check(z)
        return self.psi.forward(self.action.apply(self.psi.inverse(z)))

    def forward(self, z) -> np.ndarray:
        return self.iota.forward(self.conjugated_rotation(z), self.epsilon)

    __call__ = forward

    def inverse(self, z) -> np.ndarray:
        z = self._check(z)
        w = self.psi.inverse(self.iota.inverse(z, self.epsilon))
        return self.psi.forward(self.action.apply_inverse(w))

    def adiabatic_invariant(self, z):
        """``mu = J0 o psi^-1``."""
        return self.action.invariant(self.psi.inverse(self._check(z)))

    def rollout(self, z0, steps: int) -> np.ndarray:
        """Iterate :meth:`forward`; returns an array of ``steps + 1`` states.

        ``z0`` may be one state or a batch, giving ``(steps + 1, 2n)`` or
        ``(steps + 1, B, 2n)``.

        Raises:
            RolloutError: on the first non-finite state, carrying the finite prefix.
        """
        if steps < 0:
            raise ContractError("steps must be non-negative")
        z = self._check(z0)
        traj = np.empty((steps + 1,) + z.shape)
        traj[0] = z
        for k in range(1, steps + 1):
            z = self.forward(z)
            if not np.all(np.isfinite(z)):
                raise RolloutError(k, traj[:k].copy())
            traj[k] = z
        return traj

    # -- checkpoints -------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "dim": self.dim,
            "epsilon": self.epsilon,
            "theta_action": self.action.to_dict(),
            "psi": self.psi.to_dict(),
            "iota": self.iota.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SymplecticGyroceptron:
        if d.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {d.get('version')!r}")
        g = cls(
            HenonNet.from_dict(d["psi"]),
            NearIdentityHenonNet.from_dict(d["iota"]),
            CircleAction.from_dict(d["theta_action"]),
            d["epsilon"],
        )
        if g.dim != d["dim"]:
            raise ConfigurationError(f"checkpoint dim {d['dim']} disagrees with its circle action")
        return g

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> SymplecticGyroceptron:
        return cls.from_dict(json.loads(Path(path).read_text()))


def forward(g: SymplecticGyroceptron, z) -> np.ndarray:
    return g.forward(z)


def inverse(g: SymplecticGyroceptron, z) -> np.ndarray:
    return g.inverse(z)


def adiabatic_invariant(g: SymplecticGyroceptron, z):
    return g.adiabatic_invariant(z)


def rollout(g: SymplecticGyroceptron, z0, steps: int) -> np.ndarray:
    return g.rollout(z0, steps)
