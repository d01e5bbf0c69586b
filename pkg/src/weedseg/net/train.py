"""Minibatch SGD training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InvariantError, NonFiniteLossError, ShapeMismatchError
from ..imgcore import LabelMask
from . import model
from .model import NetworkConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    max_iterations: int = 40_000
    batch_size: int = 6
    weight_decay: float = 0.005
    momentum: float = 0.0
    record_every: int = 10

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvariantError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InvariantError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_iterations < 0 or self.record_every < 1:
            raise InvariantError("max_iterations must be >= 0 and record_every >= 1")

    def to_json(self) -> dict:
        return dict(self.__dict__)


def is_bias(name: str) -> bool:
    return name.endswith(".b")


def sgd_step(params: dict, grads: dict, cfg: TrainConfig, velocity: dict | None = None) -> dict:
    """One SGD update, in place; returns ``params``.

    Without momentum: ``p -= lr * (g + wd * p)``.  With momentum ``mu``:
    ``v = mu * v + (g + wd * p)``, ``p -= lr * v``.  Biases get no decay.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        step = g if (is_bias(name) or cfg.weight_decay == 0) else g + cfg.weight_decay * p
        if cfg.momentum:
            if velocity is None:
                raise InvariantError("momentum requires a velocity buffer")
            v = velocity.get(name)
            v = step.copy() if v is None else cfg.momentum * v + step
            velocity[name] = v
            step = v
        p -= (cfg.learning_rate * step).astype(p.dtype, copy=False)
    return params


def class_accuracy(pred: np.ndarray, target: np.ndarray, num_classes: int) -> float:
    """Mean per-class recall over the classes present in ``target``."""
    accs = []
    for c in range(num_classes):
        sel = target == c
        if sel.any():
            accs.append(float((pred[sel] == c).mean()))
    return float(np.mean(accs)) if accs else 0.0


@dataclass
class TrainResult:
    params: dict
    net_cfg: NetworkConfig
    train_cfg: TrainConfig
    iterations: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)
    class_accuracy_history: list = field(default_factory=list)

    def history_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "loss": self.loss_history,
            "class_accuracy": self.class_accuracy_history,
        }


def _batches(n: int, batch: int, rng: np.random.Generator):
    """Endless stream of index batches, reshuffled at every epoch boundary."""
    pending = np.empty(0, dtype=np.intp)
    while True:
        while len(pending) < batch:
            pending = np.concatenate([pending, rng.permutation(n)])
        yield pending[:batch]
        pending = pending[batch:]


def train(
    dataset: Sequence[tuple[np.ndarray, LabelMask]],
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
    rng_seed: int = 0,
    normalize_inputs: bool = True,
    params: dict | None = None,
) -> TrainResult:
    """Train on ``(input (C, H, W), mask)`` pairs.

    Fully deterministic for a given seed: parameter init uses
    ``net_cfg.seed``, batch order uses ``rng_seed``.
    """
    if not dataset:
        raise InvariantError("training dataset is empty")
    xs = []
    ys = []
    for i, (x, m) in enumerate(dataset):
        x = np.asarray(x)
        if x.ndim != 3 or x.shape[1:] != m.shape:
            raise ShapeMismatchError(f"sample {i}: input {x.shape} does not match mask {m.shape}")
        xs.append(x)
        ys.append(m.labels)
    if len({x.shape for x in xs}) != 1:
        raise ShapeMismatchError("all training inputs must share one shape")
    if normalize_inputs and net_cfg.input_mean is None:
        net_cfg = model.with_input_stats(net_cfg, xs)
    X = np.stack(xs).astype(np.float32)
    Y = np.stack(ys).astype(np.intp)
    model.check_input(X[:1], net_cfg)
    if params is None:
        params = model.init_params(net_cfg)
    velocity = {} if train_cfg.momentum else None
    rng = np.random.default_rng(rng_seed)
    result = TrainResult(params, net_cfg, train_cfg)
    batches = _batches(len(X), train_cfg.batch_size, rng)
    for it in range(1, train_cfg.max_iterations + 1):
        idx = next(batches)
        loss, grads, probs = model.loss_and_grads(params, X[idx], Y[idx], net_cfg)
        if not np.isfinite(loss):
            raise NonFiniteLossError(f"loss became {loss} at iteration {it}")
        sgd_step(params, grads, train_cfg, velocity)
        if it % train_cfg.record_every == 0 or it == train_cfg.max_iterations:
            acc = class_accuracy(np.argmax(probs, axis=1), Y[idx], net_cfg.num_classes)
            result.iterations.append(it)
            result.loss_history.append(float(loss))
            result.class_accuracy_history.append(acc)
            log.debug("iter %d loss %.5f class-acc %.4f", it, loss, acc)
    return result
