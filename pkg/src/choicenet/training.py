"""Empirical risk minimisation by constant-rate mini-batch SGD, and evaluation."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .core.rng import RngStream
from .core.tape import Tape
from .data import ChoiceDataset, Standardizer
from .models import ArchSpec, ChoiceModel, UtilityOutput, build_model
from .models import serialize


class TrainingDivergence(RuntimeError):
    def __init__(self, iteration: int, value: float):
        super().__init__(f"non-finite objective ({value}) at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class HyperConfig:
    arch: ArchSpec
    l1: float = 0.0
    l2: float = 0.0
    dropout: float = 0.0
    batch_norm: bool = False
    learning_rate: float = 0.01
    num_iterations: int = 1000
    batch_size: int = 100
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if isinstance(self.arch, dict):
            object.__setattr__(self, "arch", ArchSpec.from_dict(self.arch))
        for name in ("l1", "l2", "learning_rate"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.num_iterations < 1:
            raise ValueError("num_iterations must be >= 1")
        if self.batch_size < 1 or (self.batch_norm and self.batch_size < 2):
            raise ValueError("batch_size must be >= 1 (>= 2 with batch norm)")

    @property
    def family(self) -> str:
        return self.arch.family

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HyperConfig":
        return cls(**d)

    def with_seed(self, seed: int) -> "HyperConfig":
        return replace(self, seed=int(seed))


@dataclass
class TrainingHistory:
    iteration: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    penalty: list = field(default_factory=list)
    val_accuracy: list = field(default_factory=list)

    def record(self, it, loss, pen, acc):
        if self.iteration and it <= self.iteration[-1]:
            raise ValueError("history iterations must increase")
        self.iteration.append(int(it))
        self.train_loss.append(float(loss))
        self.penalty.append(float(pen))
        self.val_accuracy.append(float(acc))

    def rows(self):
        return zip(self.iteration, self.train_loss, self.penalty, self.val_accuracy)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "train_loss", "penalty", "val_accuracy"])
            for it, loss, pen, acc in self.rows():
                w.writerow([it, repr(loss), repr(pen), repr(acc)])

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalReport:
    accuracy: float
    cross_entropy: float
    confusion: np.ndarray  # rows: chosen, columns: predicted
    n: int

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "cross_entropy": self.cross_entropy,
                "confusion": self.confusion.tolist(), "n": self.n}


@dataclass
class TrainedModel:
    """A fitted model together with the input scaling it was trained under."""

    model: ChoiceModel
    standardizer: Standardizer | None
    config: HyperConfig
    history: TrainingHistory = field(default_factory=TrainingHistory)
    meta: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.model.family

    def _inputs(self, x, z):
        if self.standardizer is not None:
            x = self.standardizer.transform_x(x)
            z = self.standardizer.transform_z(z)
        return x, z

    def predict_arrays(self, x, z) -> UtilityOutput:
        """Utilities/probabilities for raw-unit attribute arrays."""
        x, z = self._inputs(tuple(np.asarray(a, dtype=float) for a in x), np.asarray(z, dtype=float))
        return self.model.predict(x, z)

    def log_probs_arrays(self, x, z) -> np.ndarray:
        x, z = self._inputs(tuple(np.asarray(a, dtype=float) for a in x), np.asarray(z, dtype=float))
        return self.model.log_probabilities(x, z)

    def predict(self, ds: ChoiceDataset) -> UtilityOutput:
        return self.predict_arrays(ds.x, ds.z)

    def save(self, path):
        serialize.dump(path, {
            "model": serialize.model_payload(self.model),
            "standardizer": None if self.standardizer is None else self.standardizer.to_dict(),
            "config": self.config.to_dict(),
            "meta": self.meta,
        })

    @classmethod
    def load(cls, path) -> "TrainedModel":
        d = serialize.load(path)
        st = None if d["standardizer"] is None else Standardizer.from_dict(d["standardizer"])
        return cls(serialize.model_from_payload(d["model"]), st,
                   HyperConfig.from_dict(d["config"]), meta=d.get("meta", {}))


def penalty_value(weights, l1: float, l2: float) -> float:
    total = 0.0
    for w in weights:
        total += l1 * float(np.abs(w).sum()) + l2 * float(np.square(w).sum())
    return total


def erm_objective(model: ChoiceModel, batch: ChoiceDataset, l1: float, l2: float) -> float:
    """Mean cross-entropy over ``batch`` plus l1*|W|_1 + l2*|W|_2^2 (weights only).

    ``batch`` is taken in the model's own input units; the forward pass runs in
    eval mode.
    """
    if batch.n == 0:
        raise ValueError("empty batch")
    logp = model.log_probabilities(batch.x, batch.z)
    chosen = logp[np.arange(batch.n), batch.y]
    ce = float(-np.mean(np.maximum(chosen, np.log(1e-15))))
    return ce + penalty_value(model.weight_matrices(), l1, l2)


def _log_every(T: int) -> int:
    return max(1, T // 10)


def train(family: str, dataset_train: ChoiceDataset, dataset_val: ChoiceDataset | None,
          cfg: HyperConfig) -> TrainedModel:
    """Fit ``cfg.arch`` by ``cfg.num_iterations`` SGD steps; returns the final iterate.

    Each step draws ``cfg.batch_size`` rows uniformly with replacement.  All
    randomness (initialisation, batches, dropout masks) derives from
    ``cfg.seed``.  Raises :class:`TrainingDivergence` on a non-finite objective.
    """
    if family != cfg.family:
        raise ValueError(f"family {family!r} does not match config arch {cfg.family!r}")
    if dataset_train.n == 0:
        raise ValueError("empty training set")
    root = RngStream(cfg.seed)
    st = Standardizer.fit(dataset_train) if cfg.standardize else None
    tr = st.transform(dataset_train) if st else dataset_train
    va = None
    if dataset_val is not None and dataset_val.n:
        va = st.transform(dataset_val) if st else dataset_val
    model = build_model(cfg.arch, tr.x_dims, tr.d_z, batch_norm=cfg.batch_norm, dropout=cfg.dropout)
    model.initialize(root.child("init").generator())
    batches = root.child("batches").generator()
    masks = root.child("dropout").generator()
    history = TrainingHistory()
    every = _log_every(cfg.num_iterations)
    lr, l1, l2 = cfg.learning_rate, cfg.l1, cfg.l2
    penalised = l1 > 0 or l2 > 0
    N = tr.n
    # overflow on the way to a non-finite objective is reported as TrainingDivergence
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, cfg.num_iterations + 1):
            idx = batches.integers(0, N, cfg.batch_size)
            tape = Tape()
            leaves = model.leaves(tape)
            out = model.forward(tape, leaves, [xk[idx] for xk in tr.x], tr.z[idx], "train", masks)
            obj = tape.nll(out.logp, tr.y[idx])
            if penalised:
                obj = tape.add(obj, tape.penalty([leaves[n] for n in model.weight_names], l1, l2))
            value = float(obj.value)
            if not math.isfinite(value):
                raise TrainingDivergence(it, value)
            tape.backward(obj)
            for name, leaf in leaves.items():
                if leaf.grad is not None:
                    model.params[name] = model.params[name] - lr * leaf.grad
            for name, (mean, var) in out.bn_batch_stats.items():
                model.state[name + ".mean"] = 0.9 * model.state[name + ".mean"] + 0.1 * mean
                model.state[name + ".var"] = 0.9 * model.state[name + ".var"] + 0.1 * var
            if it % every == 0 or it == cfg.num_iterations:
                _log(history, it, model, tr, va, l1, l2)
    return TrainedModel(model, st, cfg, history)


def _log(history, it, model, tr, va, l1, l2):
    logp = model.log_probabilities(tr.x, tr.z)
    loss = float(-np.mean(np.maximum(logp[np.arange(tr.n), tr.y], np.log(1e-15))))
    pen = penalty_value(model.weight_matrices(), l1, l2)
    if not (math.isfinite(loss) and math.isfinite(pen)):
        raise TrainingDivergence(it, loss + pen)
    acc = float("nan")
    if va is not None:
        acc = float(np.mean(np.argmax(model.log_probabilities(va.x, va.z), axis=1) == va.y))
    history.record(it, loss, pen, acc)


def evaluate(model: TrainedModel, dataset: ChoiceDataset) -> EvalReport:
    """Eval-mode accuracy (argmax, ties to the lowest index), mean CE and confusion counts."""
    if dataset.n == 0:
        raise ValueError("cannot evaluate on an empty split")
    logp = model.log_probs_arrays(dataset.x, dataset.z)
    pred = np.argmax(logp, axis=1)
    chosen = logp[np.arange(dataset.n), dataset.y]
    conf = np.zeros((dataset.k, dataset.k), dtype=int)
    np.add.at(conf, (dataset.y, pred), 1)
    return EvalReport(
        accuracy=float(np.mean(pred == dataset.y)),
        cross_entropy=float(-np.mean(np.maximum(chosen, np.log(1e-15)))),
        confusion=conf,
        n=dataset.n,
    )
