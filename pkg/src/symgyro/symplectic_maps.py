"""Hénon-like maps, Hénon layers and HénonNets.

A phase-space state is packed as ``(x_1..x_n, y_1..y_n)``; every map here
accepts either a single state of shape ``(2n,)`` or a batch ``(B, 2n)`` and
returns the same shape.

The elementary map is ``H(x, y) = (y + eta, -x + eps * grad V(y))``; a layer
is its fourth iterate, and a net is a composition of layers. With ``eps = 1``
these are the ordinary maps, with ``eps`` free they are the near-identity
variants (``eps = 0`` gives the identity, since ``H[0, eta]^4 = Id``).

Besides evaluation this module holds the layer-local reverse-mode rules
(``*_vjp``) that the training code chains together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ContractError, NumericalError
from .potential_net import PotentialNet

PhaseMap = Callable[[np.ndarray], np.ndarray]

ITERATES = 4


class LayerGrad(NamedTuple):
    hidden_weights: np.ndarray
    hidden_bias: np.ndarray
    output_weights: np.ndarray
    shift: np.ndarray

    def __add__(self, other):  # type: ignore[override]
        return LayerGrad(*(a + b for a, b in zip(self, other)))

    def scaled(self, k: float) -> LayerGrad:
        return LayerGrad(*(k * a for a in self))


@dataclass(frozen=True, eq=False)
class HenonLayer:
    potential: PotentialNet
    shift: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.shift, dtype=float).reshape(-1)
        if eta.shape != (self.potential.input_dim,):
            raise ContractError(
                f"shift has length {eta.size}, potential expects {self.potential.input_dim}"
            )
        object.__setattr__(self, "shift", eta)

    @property
    def n(self) -> int:
        return self.potential.input_dim

    @property
    def num_parameters(self) -> int:
        return self.potential.num_parameters + self.n

    @classmethod
    def random(cls, n: int, hidden_dim: int, rng: np.random.Generator) -> HenonLayer:
        pot = PotentialNet.random(n, hidden_dim, rng)
        a = 1.0 / np.sqrt(n)
        return cls(pot, rng.uniform(-a, a, size=n))

    def parameter_arrays(self) -> list[np.ndarray]:
        p = self.potential
        return [p.hidden_weights, p.hidden_bias, p.output_weights, self.shift]

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> HenonLayer:
        W, b, c, eta = arrays
        return cls(PotentialNet(W, b, c), eta)

    def to_dict(self) -> dict:
        return {"potential": self.potential.to_dict(), "shift": self.shift.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> HenonLayer:
        return cls(PotentialNet.from_dict(d["potential"]), d["shift"])


def _as_batch(z, n: int) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    zb = z[None, :] if single else z
    if zb.ndim != 2 or zb.shape[1] != 2 * n:
        raise ContractError(f"expected states of dimension {2 * n}, got shape {z.shape}")
    return zb, single


def _out(zb: np.ndarray, single: bool) -> np.ndarray:
    return zb[0] if single else zb


# -- elementary maps -----------------------------------------------------------


def henon_step(layer: HenonLayer, z, epsilon: float = 1.0) -> np.ndarray:
    """``(x, y) -> (y + eta, -x + epsilon * grad V(y))``."""
    n = layer.n
    zb, single = _as_batch(z, n)
    x, y = zb[:, :n], zb[:, n:]
    out = np.concatenate([y + layer.shift, -x + epsilon * layer.potential.gradient(y)], axis=1)
    return _out(out, single)


def henon_inverse(layer: HenonLayer, z, epsilon: float = 1.0) -> np.ndarray:
    """``(x, y) -> (epsilon * grad V(x - eta) - y, x - eta)``, the exact inverse of :func:`henon_step`."""
    n = layer.n
    zb, single = _as_batch(z, n)
    u = zb[:, :n] - layer.shift
    out = np.concatenate([epsilon * layer.potential.gradient(u) - zb[:, n:], u], axis=1)
    return _out(out, single)


def _layer_apply(layer: HenonLayer, z, epsilon: float, inverse: bool) -> np.ndarray:
    n = layer.n
    zb, single = _as_batch(z, n)
    if epsilon == 0:
        # H_0^4 = Id; skipping the shifts avoids their rounding.
        return _out(zb.copy(), single)
    x, y = zb[:, :n], zb[:, n:]
    pot, eta = layer.potential, layer.shift
    for _ in range(ITERATES):
        if inverse:
            u = x - eta
            x, y = epsilon * pot.gradient_from_activations(pot.activations(u)) - y, u
        else:
            x, y = y + eta, -x + epsilon * pot.gradient_from_activations(pot.activations(y))
    return _out(np.concatenate([x, y], axis=1), single)


def layer_forward(layer: HenonLayer, z) -> np.ndarray:
    """Hénon layer ``H[V, eta]^4``."""
    return _layer_apply(layer, z, 1.0, inverse=False)


def layer_forward_near_identity(layer: HenonLayer, epsilon: float, z) -> np.ndarray:
    """Near-identity Hénon layer ``H_eps[V, eta]^4``; the identity at ``epsilon = 0``."""
    return _layer_apply(layer, z, epsilon, inverse=False)


def layer_inverse(layer: HenonLayer, z, epsilon: float = 1.0) -> np.ndarray:
    return _layer_apply(layer, z, epsilon, inverse=True)


# -- networks ------------------------------------------------------------------


def _check_layers(layers: Sequence[HenonLayer]) -> tuple[HenonLayer, ...]:
    layers = tuple(layers)
    dims = {layer.n for layer in layers}
    if len(dims) > 1:
        raise ContractError(f"layers disagree on dimension: {sorted(dims)}")
    return layers


@dataclass(frozen=True, eq=False)
class HenonNet:
    """Composition of Hénon layers, applied first to last."""

    layers: tuple[HenonLayer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", _check_layers(self.layers))

    @property
    def n(self) -> int | None:
        return self.layers[0].n if self.layers else None

    @property
    def num_parameters(self) -> int:
        return sum(layer.num_parameters for layer in self.layers)

    @classmethod
    def random(
        cls, n: int, num_layers: int, hidden_dim: int, rng: np.random.Generator
    ) -> HenonNet:
        return cls(tuple(HenonLayer.random(n, hidden_dim, rng) for _ in range(num_layers)))

    def forward(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        for layer in self.layers:
            z = _layer_apply(layer, z, 1.0, inverse=False)
        return z

    __call__ = forward

    def inverse(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        for layer in reversed(self.layers):
            z = _layer_apply(layer, z, 1.0, inverse=True)
        return z

    def to_dict(self) -> dict:
        return {"layers": [layer.to_dict() for layer in self.layers]}

    @classmethod
    def from_dict(cls, d: dict):
        return cls(tuple(HenonLayer.from_dict(x) for x in d["layers"]))


@dataclass(frozen=True, eq=False)
class NearIdentityHenonNet:
    """Composition of near-identity Hénon layers sharing one ``epsilon``.

    ``epsilon`` is an evaluation-time argument rather than a stored field; the
    gyroceptron owns it.
    """

    layers: tuple[HenonLayer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", _check_layers(self.layers))

    n = HenonNet.n
    num_parameters = HenonNet.num_parameters
    to_dict = HenonNet.to_dict

    @classmethod
    def random(
        cls, n: int, num_layers: int, hidden_dim: int, rng: np.random.Generator
    ) -> NearIdentityHenonNet:
        return cls(HenonNet.random(n, num_layers, hidden_dim, rng).layers)

    @classmethod
    def from_dict(cls, d: dict) -> NearIdentityHenonNet:
        return cls(HenonNet.from_dict(d).layers)

    def forward(self, z, epsilon: float) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        for layer in self.layers:
            z = _layer_apply(layer, z, epsilon, inverse=False)
        return z

    __call__ = forward

    def inverse(self, z, epsilon: float) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        for layer in reversed(self.layers):
            z = _layer_apply(layer, z, epsilon, inverse=True)
        return z


def net_forward(net: HenonNet, z) -> np.ndarray:
    return net.forward(z)


def net_inverse(net: HenonNet, z) -> np.ndarray:
    return net.inverse(z)


# -- reverse-mode rules ----------------------------------------------------------
#
# Caches hold, per elementary step, the argument fed to grad V and its tanh
# activations. Cotangents are (gx, gy) pairs of shape (B, n).


def layer_forward_cached(layer: HenonLayer, x, y, epsilon: float, inverse: bool):
    pot, eta = layer.potential, layer.shift
    cache = []
    for _ in range(ITERATES):
        if inverse:
            u = x - eta
            t = pot.activations(u)
            x, y = epsilon * pot.gradient_from_activations(t) - y, u
            cache.append((u, t))
        else:
            t = pot.activations(y)
            cache.append((y, t))
            x, y = y + eta, -x + epsilon * pot.gradient_from_activations(t)
    return x, y, cache


def layer_vjp(layer: HenonLayer, cache, gx, gy, epsilon: float, inverse: bool):
    """Pull ``(gx, gy)`` back through one (inverse) layer.

    Returns the input cotangents and the layer's :class:`LayerGrad`.
    """
    pot = layer.potential
    n, h = layer.n, pot.hidden_dim
    gW = np.zeros((h, n))
    gb = np.zeros(h)
    gc = np.zeros(h)
    geta = np.zeros(n)
    for arg, t in reversed(cache):
        if inverse:
            # X = eps*gradV(u) - y, Y = u, u = x - eta
            g_u, dW, db, dc = pot.gradient_vjp(arg, t, epsilon * gx)
            g_u = g_u + gy
            gx, gy = g_u, -gx
            geta -= g_u.sum(axis=0)
        else:
            # X = y + eta, Y = -x + eps*gradV(y)
            g_y, dW, db, dc = pot.gradient_vjp(arg, t, epsilon * gy)
            geta += gx.sum(axis=0)
            gx, gy = -gy, gx + g_y
        gW += dW
        gb += db
        gc += dc
    return gx, gy, LayerGrad(gW, gb, gc, geta)


def net_forward_cached(layers: Sequence[HenonLayer], z: np.ndarray, epsilon: float, inverse: bool):
    """Run a stack of layers (reversed and inverted if ``inverse``) keeping caches.

    Raises:
        NumericalError: naming the first layer whose output is non-finite.
    """
    n = z.shape[1] // 2
    x, y = z[:, :n], z[:, n:]
    caches = []
    order = range(len(layers) - 1, -1, -1) if inverse else range(len(layers))
    for i in order:
        x, y, cache = layer_forward_cached(layers[i], x, y, epsilon, inverse)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NumericalError("non-finite activation", where=f"layer {i}{' (inverse)' if inverse else ''}")
        caches.append((i, cache))
    return np.concatenate([x, y], axis=1), caches


def net_vjp(layers: Sequence[HenonLayer], caches, g: np.ndarray, epsilon: float, inverse: bool):
    """Backward pass matching :func:`net_forward_cached`; returns ``(g_input, {layer_index: LayerGrad})``."""
    n = g.shape[1] // 2
    gx, gy = g[:, :n], g[:, n:]
    grads = {}
    for i, cache in reversed(caches):
        gx, gy, lg = layer_vjp(layers[i], cache, gx, gy, epsilon, inverse)
        grads[i] = lg
    return np.concatenate([gx, gy], axis=1), grads


# -- symplecticity checks ----------------------------------------------------------


def canonical_form(n: int) -> np.ndarray:
    """``Omega = [[0, I], [-I, 0]]`` for the ``(x, y)`` packing."""
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, eye], [-eye, zero]])


def jacobian_fd(fn: PhaseMap, z, step: float = 1e-5, batched: bool = True) -> np.ndarray:
    """Central-difference Jacobian of ``fn`` at the single state ``z``.

    With ``batched`` the ``2 * dim`` perturbed states go through ``fn`` as one
    ``(2 * dim, dim)`` batch; otherwise ``fn`` is called once per state.
    """
    if not step > 0:
        raise ContractError("step must be positive")
    z = np.asarray(z, dtype=float)
    d = z.size
    pert = step * np.eye(d)
    points = np.concatenate([z + pert, z - pert], axis=0)
    if batched:
        out = np.asarray(fn(points), dtype=float)
    else:
        out = np.stack([np.asarray(fn(p), dtype=float) for p in points])
    if not np.all(np.isfinite(out)):
        raise NumericalError("map returned non-finite values during differencing")
    return (out[:d] - out[d:]).T / (2.0 * step)


def symplectic_defect(fn: PhaseMap, z, step: float = 1e-5, batched: bool = True) -> float:
    """``max |J^T Omega J - Omega|`` with ``J`` the finite-difference Jacobian."""
    J = jacobian_fd(fn, z, step, batched)
    omega = canonical_form(J.shape[0] // 2)
    return float(np.max(np.abs(J.T @ omega @ J - omega)))
