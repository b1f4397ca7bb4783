"""Shared machinery for the four choice-model families."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core.functional import dropout_mask, he_init
from ..core.tape import Node, Tape
from .arch import ArchSpec, param_breakdown


@dataclass
class UtilityOutput:
    V: np.ndarray
    P: np.ndarray


@dataclass
class Forward:
    """Tape nodes produced by one forward pass."""

    V: Node
    logp: Node
    bn_batch_stats: dict = field(default_factory=dict)


class _Ctx:
    __slots__ = ("tape", "leaves", "mode", "gen", "model", "bn_stats")

    def __init__(self, tape, leaves, mode, gen, model):
        self.tape = tape
        self.leaves = leaves
        self.mode = mode
        self.gen = gen
        self.model = model
        self.bn_stats = {}


class ChoiceModel:
    """Structure, parameters and batch-norm running statistics of one model.

    ``params`` maps names to float arrays; ``state`` holds running means and
    variances keyed by layer name.  Subclasses implement ``_init`` (parameter
    shapes) and ``_utilities`` (the graph up to the K utilities).
    """

    family = ""
    softmax_head = True

    def __init__(self, arch: ArchSpec, x_dims, d_z: int, batch_norm: bool = False,
                 dropout: float = 0.0):
        if arch.family != self.family:
            raise ValueError(f"{type(self).__name__} cannot use a {arch.family!r} spec")
        self.arch = arch
        self.x_dims = tuple(int(d) for d in x_dims)
        self.K = len(self.x_dims)
        if self.K < 2:
            raise ValueError("a choice model needs at least two alternatives")
        self.d_z = int(d_z)
        self.batch_norm = bool(batch_norm)
        if not 0.0 <= dropout < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {dropout}")
        self.dropout = float(dropout)
        arch.validate_nests(self.K)
        self.params: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}
        self.weight_names: list[str] = []

    # -- construction ----------------------------------------------------
    def initialize(self, rng) -> "ChoiceModel":
        self.params, self.state, self.weight_names = {}, {}, []
        self._init(rng)
        return self

    def _weight(self, name, rows, cols, rng, stacked=None):
        if stacked is None:
            w = he_init(rows, cols, rng) if rng is not None else np.zeros((rows, cols))
        else:
            w = (np.stack([he_init(rows, cols, rng) for _ in range(stacked)])
                 if rng is not None else np.zeros((stacked, rows, cols)))
        self.params[name] = w
        self.weight_names.append(name)

    def _bias(self, name, shape):
        self.params[name] = np.zeros(shape)

    def _bn(self, name, shape):
        if self.batch_norm:
            self.params[name + ".bn_gamma"] = np.ones(shape)
            self.params[name + ".bn_beta"] = np.zeros(shape)
            self.state[name + ".mean"] = np.zeros(shape)
            self.state[name + ".var"] = np.ones(shape)

    def num_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def breakdown(self) -> dict:
        return param_breakdown(self.arch, (self.x_dims, self.d_z), self.K, self.batch_norm)

    # -- graph helpers -----------------------------------------------------
    def _norm_act(self, ctx: _Ctx, h: Node, name: str) -> Node:
        """[batch norm] -> ReLU -> [dropout] applied to an affine output."""
        t = ctx.tape
        if self.batch_norm:
            g = ctx.leaves[name + ".bn_gamma"]
            b = ctx.leaves[name + ".bn_beta"]
            if ctx.mode == "train":
                h = t.batch_norm(h, g, b)
                ctx.bn_stats[name] = h.aux[:2]
            else:
                h = t.frozen_norm(h, g, b, self.state[name + ".mean"], self.state[name + ".var"])
        h = t.relu(h)
        if ctx.mode == "train" and self.dropout > 0.0:
            h = t.mul(h, t.const(dropout_mask(h.shape, self.dropout, ctx.gen)))
        return h

    def _utilities(self, ctx: _Ctx, x, z) -> Node:
        raise NotImplementedError

    def _log_probs(self, ctx: _Ctx, V: Node) -> Node:
        return ctx.tape.log_softmax(V)

    # -- public ------------------------------------------------------------
    def check_inputs(self, x, z):
        if len(x) != self.K:
            raise ValueError(f"expected {self.K} attribute blocks, got {len(x)}")
        n = None
        for k, xk in enumerate(x):
            if xk.ndim != 2 or xk.shape[1] != self.x_dims[k]:
                raise ValueError(f"alternative {k}: expected (N, {self.x_dims[k]}) attributes, got {xk.shape}")
            n = xk.shape[0] if n is None else n
            if xk.shape[0] != n:
                raise ValueError("attribute blocks disagree on N")
        if z is None:
            z = np.zeros((n, 0))
        if z.ndim != 2 or z.shape != (n, self.d_z):
            raise ValueError(f"expected ({n}, {self.d_z}) individual attributes, got {z.shape}")
        return z

    def forward(self, tape: Tape, leaves: dict, x, z, mode: str = "eval", gen=None) -> Forward:
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        z = self.check_inputs(x, z)
        if mode == "train" and self.batch_norm and x[0].shape[0] < 2:
            raise ValueError("train-mode batch norm needs a batch of at least 2")
        ctx = _Ctx(tape, leaves, mode, gen, self)
        V = self._utilities(ctx, x, z)
        return Forward(V, self._log_probs(ctx, V), ctx.bn_stats)

    def leaves(self, tape: Tape, requires_grad: bool = True) -> dict:
        return {k: tape.leaf(v, requires_grad=requires_grad, name=k) for k, v in self.params.items()}

    def predict(self, x, z=None, mode: str = "eval", gen=None) -> UtilityOutput:
        """Utilities and probabilities for a batch (no gradients)."""
        tape = Tape()
        out = self.forward(tape, self.leaves(tape, requires_grad=False), x, z, mode, gen)
        return UtilityOutput(out.V.value.copy(), np.exp(out.logp.value))

    def log_probabilities(self, x, z=None) -> np.ndarray:
        tape = Tape()
        return self.forward(tape, self.leaves(tape, requires_grad=False), x, z).logp.value.copy()

    def weight_matrices(self) -> list[np.ndarray]:
        return [self.params[n] for n in self.weight_names]

    def copy(self) -> "ChoiceModel":
        other = type(self).__new__(type(self))
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.state = {k: v.copy() for k, v in self.state.items()}
        other.weight_names = list(self.weight_names)
        return other
