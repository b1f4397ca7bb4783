"""Fully connected (F-DNN) and alternative-specific-utility (ASU-DNN) networks.

Hidden layers are affine -> [batch norm] -> ReLU -> [dropout]; the utility head
is affine only and feeds a softmax.
"""
from __future__ import annotations

import numpy as np

from .base import ChoiceModel, UtilityOutput


class FDNN(ChoiceModel):
    """Every utility sees every input: V = W_out^T Phi(z, x_1, ..., x_K) + b."""

    family = "fdnn"

    def _init(self, rng):
        d_in = self.d_z + sum(self.x_dims)
        n = self.arch.width
        for layer in range(1, self.arch.depth + 1):
            self._weight(f"h{layer}.W", d_in if layer == 1 else n, n, rng)
            self._bias(f"h{layer}.b", (1, n))
            self._bn(f"h{layer}", (1, n))
        self._weight("out.W", n, self.K, rng)
        self._bias("out.b", (1, self.K))

    def _utilities(self, ctx, x, z):
        t, lv = ctx.tape, ctx.leaves
        blocks = ([z] if self.d_z else []) + list(x)
        h = t.const(np.concatenate(blocks, axis=1))
        for layer in range(1, self.arch.depth + 1):
            h = t.add(t.matmul(h, lv[f"h{layer}.W"]), lv[f"h{layer}.b"])
            h = self._norm_act(ctx, h, f"h{layer}")
        return t.add(t.matmul(h, lv["out.W"]), lv["out.b"])


class ASUDNN(ChoiceModel):
    """One subnetwork per alternative; alternative k's utility sees only (x_k, z).

    The individual attributes pass through a single shared stack of
    ``pre_depth`` layers whose output is joined to every alternative's own
    ``pre_depth``-layer stack.  Subnetwork weights are not shared across
    alternatives; layers after the first are held as stacked (K, in, out)
    arrays so that all K subnetworks advance in one batched matmul.
    """

    family = "asudnn"

    def _init(self, rng):
        a, K = self.arch, self.K
        M1, M2, n1, n2 = a.pre_depth, a.post_depth, a.pre_width, a.post_width
        if M1 > 0:
            for k, d in enumerate(self.x_dims):
                self._weight(f"x1.W{k}", d, n1, rng)
            self._bias("x1.b", (K, 1, n1))
            self._bn("x1", (K, 1, n1))
            for layer in range(2, M1 + 1):
                self._weight(f"x{layer}.W", n1, n1, rng, stacked=K)
                self._bias(f"x{layer}.b", (K, 1, n1))
                self._bn(f"x{layer}", (K, 1, n1))
            if self.d_z:
                for layer in range(1, M1 + 1):
                    self._weight(f"z{layer}.W", self.d_z if layer == 1 else n1, n1, rng)
                    self._bias(f"z{layer}.b", (1, n1))
                    self._bn(f"z{layer}", (1, n1))
            joined = n1 * (2 if self.d_z else 1)
        else:
            joined = None
        for layer in range(1, M2 + 1):
            if layer == 1 and joined is None:
                for k, d in enumerate(self.x_dims):
                    self._weight(f"u1.W{k}", d + self.d_z, n2, rng)
            else:
                self._weight(f"u{layer}.W", joined if layer == 1 else n2, n2, rng, stacked=K)
            self._bias(f"u{layer}.b", (K, 1, n2))
            self._bn(f"u{layer}", (K, 1, n2))
        if M2 > 0:
            self._weight("out.W", n2, 1, rng, stacked=K)
        elif joined is not None:
            self._weight("out.W", joined, 1, rng, stacked=K)
        else:
            for k, d in enumerate(self.x_dims):
                self._weight(f"out.W{k}", d + self.d_z, 1, rng)
        self._bias("out.b", (K, 1, 1))

    def _ragged(self, ctx, inputs, name):
        """Per-alternative affine maps of differently sized inputs, stacked to (K, B, n)."""
        t, lv = ctx.tape, ctx.leaves
        h = t.stack([t.matmul(inp, lv[f"{name}.W{k}"]) for k, inp in enumerate(inputs)])
        return t.add(h, lv[f"{name}.b"])

    def _stacked(self, ctx, h, name):
        t, lv = ctx.tape, ctx.leaves
        return t.add(t.matmul(h, lv[f"{name}.W"]), lv[f"{name}.b"])

    def _utilities(self, ctx, x, z):
        t = ctx.tape
        a, K = self.arch, self.K
        B = x[0].shape[0]
        if a.pre_depth > 0:
            h = self._norm_act(ctx, self._ragged(ctx, [t.const(xk) for xk in x], "x1"), "x1")
            for layer in range(2, a.pre_depth + 1):
                h = self._norm_act(ctx, self._stacked(ctx, h, f"x{layer}"), f"x{layer}")
            if self.d_z:
                hz = t.const(z)
                for layer in range(1, a.pre_depth + 1):
                    hz = t.add(t.matmul(hz, ctx.leaves[f"z{layer}.W"]), ctx.leaves[f"z{layer}.b"])
                    hz = self._norm_act(ctx, hz, f"z{layer}")
                hz = t.broadcast_to(hz, (K, B, a.pre_width))
                h = t.concat([h, hz], axis=-1)
            ragged = None
        else:
            h = None
            ragged = [t.const(np.concatenate([xk, z], axis=1) if self.d_z else xk) for xk in x]
        for layer in range(1, a.post_depth + 1):
            if h is None:
                pre = self._ragged(ctx, ragged, f"u{layer}")
            else:
                pre = self._stacked(ctx, h, f"u{layer}")
            h = self._norm_act(ctx, pre, f"u{layer}")
        if h is None:
            out = self._ragged(ctx, ragged, "out")
        else:
            out = self._stacked(ctx, h, "out")
        # (K, B, 1) -> (B, K)
        return t.transpose(t.reshape(out, (K, B)), (1, 0))


def fdnn_forward(model: FDNN, z, x, mode: str = "eval", gen=None) -> UtilityOutput:
    return model.predict(x, z, mode, gen)


def asudnn_forward(model: ASUDNN, z, x, mode: str = "eval", gen=None) -> UtilityOutput:
    return model.predict(x, z, mode, gen)
