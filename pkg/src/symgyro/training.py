"""MSE training of gyroceptrons (and plain HénonNet baselines) on flow-map updates.

Gradients are exact: the layer-local reverse-mode rules from
:mod:`symgyro.symplectic_maps` and :mod:`symgyro.circle_actions` are chained
over the fixed composition ``I_eps o psi o Phi_theta o psi^-1``. The ``psi``
weights collect contributions from both the forward and the inverse factor.

Parameters are exchanged with the optimizer as one flat vector, ordered
layer by layer (``hidden_weights`` row-major, ``hidden_bias``,
``output_weights``, ``shift``), ``psi`` layers first, then ``iota`` layers,
then ``theta``.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .errors import ContractError, DivergenceError, NumericalError
from .gyroceptron import SymplecticGyroceptron
from .symplectic_maps import (
    HenonLayer,
    HenonNet,
    LayerGrad,
    NearIdentityHenonNet,
    net_forward_cached,
    net_vjp,
)

log = logging.getLogger(__name__)

Model = Union[SymplecticGyroceptron, HenonNet]


class UpdatePair(NamedTuple):
    input: np.ndarray
    target: np.ndarray


def stack_pairs(pairs: Sequence[UpdatePair]) -> tuple[np.ndarray, np.ndarray]:
    if len(pairs) == 0:
        raise ContractError("empty batch")
    return np.stack([p.input for p in pairs]), np.stack([p.target for p in pairs])


@dataclass
class ParameterGradient:
    """Gradient blocks laid out like the model's parameters.

    For a plain HénonNet model the layers go in ``psi``, ``iota`` is empty and
    ``theta`` is ``None``.
    """

    psi: list[LayerGrad]
    iota: list[LayerGrad] = field(default_factory=list)
    theta: float | None = None

    def vector(self) -> np.ndarray:
        parts = [a.ravel() for lg in (*self.psi, *self.iota) for a in lg]
        if self.theta is not None:
            parts.append(np.array([self.theta]))
        return np.concatenate(parts) if parts else np.zeros(0)


# -- flat parameter vectors ----------------------------------------------------------


def _layers_vector(layers: Sequence[HenonLayer]) -> list[np.ndarray]:
    return [a.ravel() for layer in layers for a in layer.parameter_arrays()]


def parameter_vector(model: Model) -> np.ndarray:
    if isinstance(model, SymplecticGyroceptron):
        parts = _layers_vector(model.psi.layers) + _layers_vector(model.iota.layers)
        parts.append(np.array([model.theta]))
    else:
        parts = _layers_vector(model.layers)
    return np.concatenate(parts) if parts else np.zeros(0)


def _rebuild_layers(layers: Sequence[HenonLayer], vec: np.ndarray, pos: int):
    out = []
    for layer in layers:
        arrays = []
        for a in layer.parameter_arrays():
            arrays.append(vec[pos : pos + a.size].reshape(a.shape).copy())
            pos += a.size
        out.append(HenonLayer.from_arrays(arrays))
    return tuple(out), pos


def with_parameter_vector(model: Model, vec) -> Model:
    """A copy of ``model`` carrying the parameters in ``vec``."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (model.num_parameters,):
        raise ContractError(f"expected {model.num_parameters} parameters, got {vec.shape}")
    if isinstance(model, SymplecticGyroceptron):
        psi, pos = _rebuild_layers(model.psi.layers, vec, 0)
        iota, pos = _rebuild_layers(model.iota.layers, vec, pos)
        return SymplecticGyroceptron(
            HenonNet(psi), NearIdentityHenonNet(iota), model.action.with_theta(float(vec[pos])), model.epsilon
        )
    layers, _ = _rebuild_layers(model.layers, vec, 0)
    return HenonNet(layers)


# -- loss and gradient -------------------------------------------------------------


def _check_batch(model: Model, inputs, targets):
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ContractError("batch must be a non-empty (B, 2n) array")
    if targets.shape != inputs.shape:
        raise ContractError(f"target shape {targets.shape} != input shape {inputs.shape}")
    dim = model.dim if isinstance(model, SymplecticGyroceptron) else inputs.shape[1]
    if inputs.shape[1] != dim:
        raise ContractError(f"model acts on dimension {dim}, batch has {inputs.shape[1]}")
    return inputs, targets


def predict(model: Model, inputs) -> np.ndarray:
    return model.forward(inputs)


def mse_loss(model: Model, inputs, targets) -> float:
    """Mean over batch and coordinates of the squared one-step prediction error."""
    inputs, targets = _check_batch(model, inputs, targets)
    r = model.forward(inputs) - targets
    return float(np.mean(r * r))


def loss_gradient(model: Model, inputs, targets) -> tuple[float, ParameterGradient]:
    """MSE loss and its exact gradient with respect to every trainable parameter.

    Raises:
        NumericalError: if any intermediate state is non-finite; ``where`` names the layer.
    """
    inputs, targets = _check_batch(model, inputs, targets)
    if isinstance(model, HenonNet):
        out, caches = net_forward_cached(model.layers, inputs, 1.0, inverse=False)
        r = out - targets
        _, grads = net_vjp(model.layers, caches, (2.0 / r.size) * r, 1.0, inverse=False)
        return float(np.mean(r * r)), ParameterGradient([grads[i] for i in range(len(model.layers))])

    psi, iota, action, eps = model.psi.layers, model.iota.layers, model.action, model.epsilon
    a, c_inv = net_forward_cached(psi, inputs, 1.0, inverse=True)
    rotated = action.apply(a)
    s, c_psi = net_forward_cached(psi, rotated, 1.0, inverse=False)
    out, c_iota = net_forward_cached(iota, s, eps, inverse=False)
    r = out - targets
    loss = float(np.mean(r * r))

    g = (2.0 / r.size) * r
    g, g_iota = net_vjp(iota, c_iota, g, eps, inverse=False)
    g, g_psi_fwd = net_vjp(psi, c_psi, g, 1.0, inverse=False)
    g, g_theta = action.vjp(a, g)
    _, g_psi_inv = net_vjp(psi, c_inv, g, 1.0, inverse=True)
    grad = ParameterGradient(
        [g_psi_fwd[i] + g_psi_inv[i] for i in range(len(psi))],
        [g_iota[i] for i in range(len(iota))],
        g_theta,
    )
    if not np.all(np.isfinite(grad.vector())):
        raise NumericalError("non-finite gradient")
    return loss, grad


# -- optimisation ------------------------------------------------------------------


class Adam:
    """Adaptive moment estimation on a flat parameter vector."""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 200
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # Learning rate decays geometrically to this value at the last epoch; None keeps it constant.
    final_learning_rate: float | None = None
    seed: int = 0
    validation_fraction: float = 0.1
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    log_every: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or (self.final_learning_rate is not None and self.final_learning_rate < 0):
            raise ContractError("learning rates must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ContractError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.validation_fraction < 1:
            raise ContractError("validation_fraction must lie in [0, 1)")

    def lr_at(self, epoch: int) -> float:
        if self.final_learning_rate is None or self.epochs <= 1:
            return self.learning_rate
        if self.learning_rate == 0:
            return 0.0
        frac = epoch / (self.epochs - 1)
        return self.learning_rate * (self.final_learning_rate / self.learning_rate) ** frac


@dataclass
class TrainReport:
    epochs: list[int]
    train_loss: list[float]
    val_loss: list[float]
    final_theta: float | None
    wall_seconds: float
    model: Model = field(repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        del d["model"]
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def split_dataset(n: int, validation_fraction: float, rng: np.random.Generator):
    """Shuffle ``range(n)`` and hold out the last ``validation_fraction`` as validation."""
    perm = rng.permutation(n)
    n_val = int(round(validation_fraction * n))
    return perm[: n - n_val], perm[n - n_val :]


def _theta(model: Model) -> float | None:
    return model.theta if isinstance(model, SymplecticGyroceptron) else None


def _save_checkpoint(model: Model, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(model.to_dict()))
    tmp.replace(path)


def train(
    model: Model,
    inputs,
    targets,
    config: TrainConfig,
    callback: Callable[[int, float, float], None] | None = None,
) -> TrainReport:
    """Minibatch Adam on the MSE loss.

    The data are shuffled once with ``config.seed`` and split into
    train/validation; every epoch reshuffles the training part. Reported
    losses are full-set MSEs evaluated after each epoch. Identical seeds give
    bit-identical histories.

    Raises:
        DivergenceError: if a loss turns non-finite; carries the last finite model.
    """
    inputs, targets = _check_batch(model, inputs, targets)
    if inputs.shape[0] < config.batch_size:
        raise ContractError(f"dataset of {inputs.shape[0]} pairs is smaller than batch_size {config.batch_size}")
    rng = np.random.default_rng(config.seed)
    tr, va = split_dataset(inputs.shape[0], config.validation_fraction, rng)
    x_tr, y_tr = inputs[tr], targets[tr]
    x_va, y_va = inputs[va], targets[va]

    params = parameter_vector(model)
    opt = Adam(params.size, config.beta1, config.beta2, config.adam_eps)
    report = TrainReport([], [], [], _theta(model), 0.0, model)
    start = time.perf_counter()
    ckpt_dir = Path(config.checkpoint_dir) if config.checkpoint_dir else None

    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(len(tr))
        last_good = model
        try:
            for i in range(0, len(order) - config.batch_size + 1, config.batch_size):
                idx = order[i : i + config.batch_size]
                loss, grad = loss_gradient(model, x_tr[idx], y_tr[idx])
                if not np.isfinite(loss):
                    raise NumericalError("non-finite loss")
                last_good = model
                params = opt.step(params, grad.vector(), lr)
                model = with_parameter_vector(model, params)
            train_loss = mse_loss(model, x_tr, y_tr)
            val_loss = mse_loss(model, x_va, y_va) if len(va) else float("nan")
            if not np.isfinite(train_loss):
                raise NumericalError("non-finite loss")
        except (NumericalError, FloatingPointError) as exc:
            report.wall_seconds = time.perf_counter() - start
            report.model = last_good
            if ckpt_dir is not None:
                _save_checkpoint(last_good, ckpt_dir / "last_finite.json")
            raise DivergenceError(epoch, last_good, report) from exc

        report.epochs.append(epoch)
        report.train_loss.append(train_loss)
        report.val_loss.append(val_loss)
        report.final_theta = _theta(model)
        report.model = model
        if callback is not None:
            callback(epoch, train_loss, val_loss)
        if config.log_every and epoch % config.log_every == 0:
            log.info("epoch %d  train %.3e  val %.3e  lr %.2e", epoch, train_loss, val_loss, lr)
        if ckpt_dir is not None and config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            _save_checkpoint(model, ckpt_dir / f"checkpoint_{epoch + 1:06d}.json")

    report.wall_seconds = time.perf_counter() - start
    return report
