"""Central finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tape import Node, Tape

# Coordinates whose gradients are both below this scale are compared absolutely;
# FD round-off on an O(1) loss is ~1e-11 at step 1e-5.
REL_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=REL_FLOOR):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


@dataclass
class GradCheckResult:
    max_rel_error: float
    n_checked: int
    n_kinks: int
    errors: dict = field(default_factory=dict)

    def passed(self, tol=1e-4) -> bool:
        return self.max_rel_error < tol


def _relu_pattern(tape: Tape):
    return [n.parents[0].value > 0 for n in tape.nodes if n.op == "relu"]


def _same_pattern(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def check_gradients(tape: Tape, loss: Node, leaves: dict[str, Node], eps: float = 1e-5) -> GradCheckResult:
    """Compare reverse-mode gradients of ``loss`` with central differences.

    Every coordinate of every leaf is perturbed by +/-eps and the tape replayed.
    A coordinate whose perturbation flips a ReLU's active set sits on a kink where
    the derivative is undefined; it is counted in ``n_kinks`` and not compared.
    """
    grads = tape.backward(loss)
    base = _relu_pattern(tape)
    worst = 0.0
    checked = kinks = 0
    errors = {}
    for name, leaf in leaves.items():
        analytic = grads.get(leaf)
        if analytic is None:
            analytic = np.zeros(leaf.shape)
        analytic = np.broadcast_to(analytic, leaf.shape)
        numeric = np.zeros(leaf.shape)
        skip = np.zeros(leaf.shape, dtype=bool)
        flat = leaf.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            tape.replay()
            up = float(loss.value)
            up_pat = _relu_pattern(tape)
            flat[i] = orig - eps
            tape.replay()
            down = float(loss.value)
            down_pat = _relu_pattern(tape)
            flat[i] = orig
            numeric.flat[i] = (up - down) / (2 * eps)
            if not (_same_pattern(base, up_pat) and _same_pattern(base, down_pat)):
                skip.flat[i] = True
        tape.replay()
        err = relative_error(analytic, numeric)
        err[skip] = 0.0
        errors[name] = err
        kinks += int(skip.sum())
        checked += int((~skip).sum())
        if err.size:
            worst = max(worst, float(err.max()))
    return GradCheckResult(worst, checked, kinks, errors)
