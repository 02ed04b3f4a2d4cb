"""Scalar single-hidden-layer potentials ``V(y) = c . tanh(W y + b)``.

Hénon maps only ever consume ``grad V``; training additionally needs the
derivatives of ``grad V`` itself, so both are provided in closed form.
All batched helpers take ``y`` with shape ``(batch, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True, eq=False)
class PotentialNet:
    """Potential network ``V: R^n -> R`` with ``h`` tanh neurons and no output bias."""

    hidden_weights: np.ndarray  # (h, n)
    hidden_bias: np.ndarray  # (h,)
    output_weights: np.ndarray  # (h,)

    def __post_init__(self):
        W = np.asarray(self.hidden_weights, dtype=float)
        b = np.asarray(self.hidden_bias, dtype=float).reshape(-1)
        c = np.asarray(self.output_weights, dtype=float).reshape(-1)
        if W.ndim != 2 or W.shape[0] == 0 or W.shape[1] == 0:
            raise ContractError(f"hidden_weights must be a non-empty matrix, got shape {W.shape}")
        if b.shape != (W.shape[0],) or c.shape != (W.shape[0],):
            raise ContractError(
                f"bias/output sizes {b.shape}/{c.shape} do not match hidden_dim {W.shape[0]}"
            )
        object.__setattr__(self, "hidden_weights", W)
        object.__setattr__(self, "hidden_bias", b)
        object.__setattr__(self, "output_weights", c)

    @property
    def input_dim(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def num_parameters(self) -> int:
        h, n = self.hidden_weights.shape
        return h * n + 2 * h

    @classmethod
    def random(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> PotentialNet:
        """Uniform init: hidden part in ``±1/sqrt(n)``, output weights in ``±1/sqrt(h)``."""
        if input_dim < 1 or hidden_dim < 1:
            raise ContractError("input_dim and hidden_dim must be positive")
        a = 1.0 / np.sqrt(input_dim)
        W = rng.uniform(-a, a, size=(hidden_dim, input_dim))
        b = rng.uniform(-a, a, size=hidden_dim)
        c_scale = 1.0 / np.sqrt(hidden_dim)
        c = rng.uniform(-c_scale, c_scale, size=hidden_dim)
        return cls(W, b, c)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int = 1) -> PotentialNet:
        """The trivial potential ``V = 0``."""
        return cls(
            np.zeros((hidden_dim, input_dim)), np.zeros(hidden_dim), np.zeros(hidden_dim)
        )

    # -- single-point API ---------------------------------------------------

    def _check(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[-1:] != (self.input_dim,) or y.ndim > 2:
            raise ContractError(f"expected input of length {self.input_dim}, got shape {y.shape}")
        return y

    def evaluate(self, y) -> float | np.ndarray:
        """``V(y)``; a float for a single point, an array for a batch."""
        y = self._check(y)
        return np.tanh(y @ self.hidden_weights.T + self.hidden_bias) @ self.output_weights

    def gradient(self, y) -> np.ndarray:
        """Exact ``grad V(y) = W^T (tanh'(W y + b) * c)``."""
        y = self._check(y)
        t = np.tanh(y @ self.hidden_weights.T + self.hidden_bias)
        return self.gradient_from_activations(t)

    def gradient_jacobians(self, y) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Hessian of ``V`` and Jacobians of ``grad V`` w.r.t. each parameter block.

        Returns:
            ``(hessian, blocks)`` where ``hessian`` is ``(n, n)`` and ``blocks``
            maps ``"hidden_weights"`` to an ``(n, h, n)`` array
            (``d grad_k / d W_jl`` at ``[k, j, l]``), and ``"hidden_bias"`` /
            ``"output_weights"`` to ``(n, h)`` arrays.
        """
        y = self._check(y)
        if y.ndim != 1:
            raise ContractError("gradient_jacobians takes a single point")
        W, c = self.hidden_weights, self.output_weights
        t = np.tanh(W @ y + self.hidden_bias)
        s = 1.0 - t * t
        s2 = -2.0 * t * s  # tanh''
        hessian = W.T @ ((c * s2)[:, None] * W)
        d_c = W.T * s  # [k, j] = W_jk s_j
        d_b = W.T * (c * s2)
        n = self.input_dim
        d_W = np.einsum("kl,j->kjl", np.eye(n), c * s) + np.einsum(
            "jk,j,l->kjl", W, c * s2, y
        )
        return hessian, {"hidden_weights": d_W, "hidden_bias": d_b, "output_weights": d_c}

    # -- batched internals used by the Hénon maps ---------------------------

    def activations(self, y: np.ndarray) -> np.ndarray:
        return np.tanh(y @ self.hidden_weights.T + self.hidden_bias)

    def gradient_from_activations(self, t: np.ndarray) -> np.ndarray:
        return ((1.0 - t * t) * self.output_weights) @ self.hidden_weights

    def gradient_vjp(self, y: np.ndarray, t: np.ndarray, g: np.ndarray):
        """Pull a cotangent ``g`` on ``grad V(y)`` back to ``y`` and the parameters.

        ``t`` are the cached activations for ``y``. Returns
        ``(g_y, g_hidden_weights, g_hidden_bias, g_output_weights)`` with the
        parameter blocks summed over the batch.
        """
        W, c = self.hidden_weights, self.output_weights
        s = 1.0 - t * t
        u = g @ W.T
        ucs = u * c * (-2.0 * t * s)
        g_y = ucs @ W
        g_W = (s * c).T @ g + ucs.T @ y
        return g_y, g_W, ucs.sum(axis=0), (u * s).sum(axis=0)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "hidden_weights": self.hidden_weights.tolist(),
            "hidden_bias": self.hidden_bias.tolist(),
            "output_weights": self.output_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> PotentialNet:
        net = cls(
            np.asarray(d["hidden_weights"], dtype=float).reshape(d["hidden_dim"], d["input_dim"]),
            d["hidden_bias"],
            d["output_weights"],
        )
        return net
