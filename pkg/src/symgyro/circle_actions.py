"""Rotation circle actions on selected ``(x_j, y_j)`` coordinate pairs.

A mode ``(j, k)`` turns the pair ``(x_j, y_j)`` clockwise at integer rate
``k``::

    x_j -> cos(k theta) x_j + sin(k theta) y_j
    y_j -> -sin(k theta) x_j + cos(k theta) y_j

Pairs without a mode are left fixed. The conserved functional of the action
is ``J0 = 1/2 sum_k k (x_j^2 + y_j^2)`` over the rotated pairs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, ContractError


@dataclass(frozen=True)
class CircleAction:
    dim: int
    modes: tuple[tuple[int, int], ...]  # (pair index, frequency)
    theta: float = 0.0

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise ConfigurationError(f"phase-space dimension must be even and >= 2, got {self.dim}")
        modes = tuple((int(j), int(k)) for j, k in self.modes)
        n = self.dim // 2
        seen = set()
        for j, k in modes:
            if not 0 <= j < n:
                raise ConfigurationError(f"pair index {j} out of range for n={n}")
            if k <= 0:
                raise ConfigurationError(f"frequency must be a positive integer, got {k}")
            if j in seen:
                raise ConfigurationError(f"pair {j} listed twice")
            seen.add(j)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "theta", float(self.theta))

    @classmethod
    def single(cls, dim: int = 2, pair: int = 0, theta: float = 0.0) -> CircleAction:
        """One pair rotated at unit frequency."""
        return cls(dim, ((pair, 1),), theta)

    @property
    def n(self) -> int:
        return self.dim // 2

    @property
    def pairs(self) -> np.ndarray:
        return np.array([j for j, _ in self.modes], dtype=int)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([k for _, k in self.modes], dtype=float)

    def with_theta(self, theta: float) -> CircleAction:
        return replace(self, theta=theta)

    def _split(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim or z.ndim > 2:
            raise ContractError(f"expected states of dimension {self.dim}, got shape {z.shape}")
        n = self.n
        idx = self.pairs
        return z, z[..., idx], z[..., n + idx]

    def _rotate(self, z, theta: float) -> np.ndarray:
        z, x, y = self._split(z)
        angle = self.frequencies * theta
        c, s = np.cos(angle), np.sin(angle)
        out = z.copy()
        out[..., self.pairs] = c * x + s * y
        out[..., self.n + self.pairs] = -s * x + c * y
        return out

    def apply(self, z) -> np.ndarray:
        return self._rotate(z, self.theta)

    __call__ = apply

    def apply_inverse(self, z) -> np.ndarray:
        return self._rotate(z, -self.theta)

    def theta_derivative(self, z) -> np.ndarray:
        """``d apply(z) / d theta``; zero on the fixed pairs."""
        z, x, y = self._split(z)
        k = self.frequencies
        c, s = np.cos(k * self.theta), np.sin(k * self.theta)
        out = np.zeros_like(z)
        out[..., self.pairs] = k * (-s * x + c * y)
        out[..., self.n + self.pairs] = k * (-c * x - s * y)
        return out

    def invariant(self, z) -> float | np.ndarray:
        _, x, y = self._split(z)
        return 0.5 * np.sum(self.frequencies * (x * x + y * y), axis=-1)

    def vjp(self, z_in: np.ndarray, g: np.ndarray, inverse: bool = False):
        """Pull a cotangent ``g`` back through ``apply`` (or ``apply_inverse``) at ``z_in``.

        Returns ``(g_z, g_theta)`` where ``g_theta`` is summed over the batch.
        """
        theta = -self.theta if inverse else self.theta
        k = self.frequencies
        c, s = np.cos(k * theta), np.sin(k * theta)
        _, x, y = self._split(z_in)
        gX, gY = g[..., self.pairs], g[..., self.n + self.pairs]
        g_z = g.copy()
        g_z[..., self.pairs] = c * gX - s * gY
        g_z[..., self.n + self.pairs] = s * gX + c * gY
        g_theta = float(np.sum(k * (gX * (-s * x + c * y) + gY * (-c * x - s * y))))
        return g_z, (-g_theta if inverse else g_theta)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "modes": [{"pair": j, "freq": k} for j, k in self.modes],
            "theta": self.theta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> CircleAction:
        return cls(d["dim"], tuple((m["pair"], m["freq"]) for m in d["modes"]), d["theta"])


def apply(action: CircleAction, z) -> np.ndarray:
    return action.apply(z)


def apply_inverse(action: CircleAction, z) -> np.ndarray:
    return action.apply_inverse(z)


def theta_derivative(action: CircleAction, z) -> np.ndarray:
    return action.theta_derivative(z)


def invariant(action: CircleAction, z):
    return action.invariant(z)
