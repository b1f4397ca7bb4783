"""Multinomial and two-level nested logit with linear-in-parameters utilities."""
from __future__ import annotations

import numpy as np

from ..core.tape import Node, Tape
from .arch import ArchSpec
from .base import ChoiceModel, UtilityOutput


class MNL(ChoiceModel):
    """V_k = beta_k . x_k + gamma_k . z + c_k, last alternative's gamma and c pinned to 0.

    Parameters start at zero (the log-likelihood is concave, so the starting
    point does not matter beyond speed).
    """

    family = "mnl"

    def _init(self, rng):
        for k, d in enumerate(self.x_dims):
            self.params[f"beta{k}"] = np.zeros((d, 1))
            self.weight_names.append(f"beta{k}")
        self.params["gamma"] = np.zeros((self.d_z, self.K - 1))
        self.weight_names.append("gamma")
        self.params["asc"] = np.zeros((1, self.K - 1))

    def _utilities(self, ctx, x, z):
        t, lv = ctx.tape, ctx.leaves
        n = x[0].shape[0]
        cols = [t.matmul(t.const(xk), lv[f"beta{k}"]) for k, xk in enumerate(x)]
        V = t.concat(cols, axis=1)
        pinned = t.const(np.zeros((1, 1)))
        free = t.concat([lv["asc"], pinned], axis=1)
        if self.d_z:
            zg = t.matmul(t.const(z), lv["gamma"])
            V = t.add(V, t.concat([zg, t.const(np.zeros((n, 1)))], axis=1))
        return t.add(V, free)

    def coefficients(self) -> dict:
        return {
            "beta": [self.params[f"beta{k}"][:, 0].copy() for k in range(self.K)],
            "gamma": np.hstack([self.params["gamma"], np.zeros((self.d_z, 1))]),
            "asc": np.append(self.params["asc"][0], 0.0),
        }


def nested_log_probs(t: Tape, V: Node, mu: Node, nests) -> Node:
    """Log choice probabilities of a two-level nested logit.

    With nest scales mu_m (top level scale 1) and inclusive values
    I_m = log sum_{j in m} exp(mu_m V_j):

        log P_k = mu_m V_k - I_m + I_m / mu_m - log sum_l exp(I_l / mu_l)
    """
    pieces, order, scaled = [], [], []
    for m, members in enumerate(nests):
        mu_m = t.take(mu, [m], axis=-1)
        muV = t.mul(t.take(V, list(members), axis=-1), mu_m)
        inc = t.logsumexp(muV)
        scaled.append(t.div(inc, mu_m))
        pieces.append((muV, inc))
        order.extend(members)
    top = t.logsumexp(t.concat(scaled, axis=-1))
    parts = [t.add(t.sub(muV, inc), t.sub(s, top)) for (muV, inc), s in zip(pieces, scaled)]
    logp = t.concat(parts, axis=-1)
    inverse = np.argsort(order)
    return t.take(logp, inverse, axis=-1)


def nest_scales(theta: np.ndarray) -> np.ndarray:
    """mu = (1, 1 + softplus(theta_2), ...); the first nest's scale is fixed."""
    return np.concatenate([[1.0], 1.0 + np.logaddexp(0.0, np.ravel(theta))])


class NL(MNL):
    """Nested logit: MNL utilities with nest scales mu_m = 1 + softplus(theta_m), mu_1 = 1."""

    family = "nl"
    softmax_head = False

    def _init(self, rng):
        super()._init(rng)
        # softplus(-3) ~ 0.049: start close to the MNL special case
        self.params["theta"] = np.full((1, len(self.arch.nests) - 1), -3.0)

    def _log_probs(self, ctx, V):
        t = ctx.tape
        one = t.const(np.ones((1, 1)))
        mu_rest = t.add(t.softplus(ctx.leaves["theta"]), one)
        mu = t.concat([one, mu_rest], axis=-1)
        return nested_log_probs(t, V, mu, self.arch.nests)

    @property
    def mu(self) -> np.ndarray:
        return nest_scales(self.params["theta"])

    def set_mu(self, mu):
        """Set nest scales directly (mu_1 must be 1, others >= 1)."""
        mu = np.asarray(mu, dtype=float)
        if mu[0] != 1.0 or np.any(mu < 1.0):
            raise ValueError("nest scales must satisfy mu_1 = 1 and mu_m >= 1")
        excess = mu[1:] - 1.0
        with np.errstate(divide="ignore"):
            # inverse softplus; excess 0 maps to -inf, i.e. mu exactly 1
            theta = np.where(excess > 30, excess, np.log(np.expm1(excess)))
        self.params["theta"] = theta.reshape(1, -1)


def mnl_forward(model: MNL, z, x) -> UtilityOutput:
    return model.predict(x, z)


def nl_forward(model: NL, z, x) -> UtilityOutput:
    return model.predict(x, z)
