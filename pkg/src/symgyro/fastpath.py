"""Compiled single-trajectory iteration of a gyroceptron, for long adiabatic scans.

The numpy implementation pays Python overhead on every elementary Hénon step,
which dominates when one orbit is iterated millions of times. These kernels
repeat the same arithmetic on packed parameter arrays under numba. They agree
with :meth:`SymplecticGyroceptron.forward` to rounding, not bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .gyroceptron import SymplecticGyroceptron
from .symplectic_maps import HenonLayer


@dataclass(frozen=True, eq=False)
class PackedNet:
    W: np.ndarray  # (L, h, n)
    b: np.ndarray  # (L, h)
    c: np.ndarray  # (L, h)
    eta: np.ndarray  # (L, n)

    @classmethod
    def pack(cls, layers: tuple[HenonLayer, ...], n: int) -> PackedNet:
        if not layers:
            return cls(np.zeros((0, 1, n)), np.zeros((0, 1)), np.zeros((0, 1)), np.zeros((0, n)))
        hs = {layer.potential.hidden_dim for layer in layers}
        h = max(hs)
        L = len(layers)
        W = np.zeros((L, h, n))
        b = np.zeros((L, h))
        c = np.zeros((L, h))
        eta = np.zeros((L, n))
        # Narrower layers are zero-padded: a neuron with zero output weight contributes nothing.
        for i, layer in enumerate(layers):
            p = layer.potential
            W[i, : p.hidden_dim] = p.hidden_weights
            b[i, : p.hidden_dim] = p.hidden_bias
            c[i, : p.hidden_dim] = p.output_weights
            eta[i] = layer.shift
        return cls(W, b, c, eta)


@dataclass(frozen=True, eq=False)
class PackedGyroceptron:
    psi: PackedNet
    iota: PackedNet
    pairs: np.ndarray
    freqs: np.ndarray
    theta: float
    epsilon: float
    n: int

    @classmethod
    def pack(cls, g: SymplecticGyroceptron) -> PackedGyroceptron:
        n = g.action.n
        return cls(
            PackedNet.pack(g.psi.layers, n),
            PackedNet.pack(g.iota.layers, n),
            g.action.pairs.astype(np.int64),
            g.action.frequencies.astype(np.float64),
            g.theta,
            g.epsilon,
            n,
        )

    def args(self):
        p, i = self.psi, self.iota
        return (p.W, p.b, p.c, p.eta, i.W, i.b, i.c, i.eta, self.pairs, self.freqs, self.theta, self.epsilon)


@numba.njit(cache=True)
def _grad_v(W, b, c, y, out):
    h, n = W.shape
    for k in range(n):
        out[k] = 0.0
    for j in range(h):
        a = b[j]
        for k in range(n):
            a += W[j, k] * y[k]
        t = np.tanh(a)
        s = c[j] * (1.0 - t * t)
        for k in range(n):
            out[k] += s * W[j, k]


@numba.njit(cache=True)
def _net_forward(W, b, c, eta, eps, x, y, tmp):
    if eps == 0.0:
        return
    n = x.shape[0]
    for layer in range(W.shape[0]):
        for _ in range(4):
            _grad_v(W[layer], b[layer], c[layer], y, tmp)
            for k in range(n):
                xn = y[k] + eta[layer, k]
                y[k] = -x[k] + eps * tmp[k]
                x[k] = xn


@numba.njit(cache=True)
def _net_inverse(W, b, c, eta, eps, x, y, tmp, u):
    if eps == 0.0:
        return
    n = x.shape[0]
    for layer in range(W.shape[0] - 1, -1, -1):
        for _ in range(4):
            for k in range(n):
                u[k] = x[k] - eta[layer, k]
            _grad_v(W[layer], b[layer], c[layer], u, tmp)
            for k in range(n):
                x[k] = eps * tmp[k] - y[k]
                y[k] = u[k]


@numba.njit(cache=True)
def _invariant(pairs, freqs, x, y):
    mu = 0.0
    for m in range(pairs.shape[0]):
        j = pairs[m]
        mu += freqs[m] * (x[j] * x[j] + y[j] * y[j])
    return 0.5 * mu


@numba.njit(cache=True)
def _advance(pW, pb, pc, peta, iW, ib, ic, ieta, pairs, freqs, theta, eps, x, y, tmp, u):
    """One gyroceptron step in place; returns ``mu`` of the state before the step."""
    _net_inverse(pW, pb, pc, peta, 1.0, x, y, tmp, u)
    mu = _invariant(pairs, freqs, x, y)
    for m in range(pairs.shape[0]):
        j = pairs[m]
        ang = freqs[m] * theta
        cs, sn = np.cos(ang), np.sin(ang)
        xj, yj = x[j], y[j]
        x[j] = cs * xj + sn * yj
        y[j] = -sn * xj + cs * yj
    _net_forward(pW, pb, pc, peta, 1.0, x, y, tmp)
    _net_forward(iW, ib, ic, ieta, eps, x, y, tmp)
    return mu


@numba.njit(cache=True)
def _drift_kernel(pW, pb, pc, peta, iW, ib, ic, ieta, pairs, freqs, theta, eps, z0, iterations, out):
    n = z0.shape[0] // 2
    x = z0[:n].copy()
    y = z0[n:].copy()
    tmp = np.empty(n)
    u = np.empty(n)
    mu0 = 0.0
    for k in range(iterations + 1):
        mu = _advance(pW, pb, pc, peta, iW, ib, ic, ieta, pairs, freqs, theta, eps, x, y, tmp, u)
        if not np.isfinite(mu):
            return k
        if k == 0:
            mu0 = mu
        out[k] = mu - mu0
    return iterations + 1


@numba.njit(cache=True)
def _threshold_kernel(pW, pb, pc, peta, iW, ib, ic, ieta, pairs, freqs, theta, eps, z0, burn_in, rho, max_iterations, floor):
    """Returns ``(N, burn-in max)``; ``N = -1`` if not found, ``-2`` degenerate, ``-3`` blow-up."""
    n = z0.shape[0] // 2
    x = z0[:n].copy()
    y = z0[n:].copy()
    tmp = np.empty(n)
    u = np.empty(n)
    mu0 = 0.0
    worst = 0.0
    for k in range(max_iterations + 1):
        mu = _advance(pW, pb, pc, peta, iW, ib, ic, ieta, pairs, freqs, theta, eps, x, y, tmp, u)
        if not np.isfinite(mu):
            return -3, worst
        if k == 0:
            mu0 = mu
        d = abs(mu - mu0)
        if k <= burn_in:
            if d > worst:
                worst = d
            if k == burn_in and worst <= floor:
                return -2, worst
        elif d > rho * worst:
            return k, worst
    return -1, worst


def drift_series(g: SymplecticGyroceptron, z0, iterations: int) -> tuple[np.ndarray, bool]:
    """``mu(z_k) - mu(z_0)`` for ``k = 0..iterations``; second item flags truncation."""
    packed = PackedGyroceptron.pack(g)
    out = np.empty(iterations + 1)
    done = _drift_kernel(*packed.args(), np.asarray(z0, dtype=float), iterations, out)
    return out[:done], done < iterations + 1


def threshold_search(g: SymplecticGyroceptron, z0, burn_in: int, rho: float, max_iterations: int, floor: float):
    packed = PackedGyroceptron.pack(g)
    return _threshold_kernel(*packed.args(), np.asarray(z0, dtype=float), burn_in, rho, max_iterations, floor)
