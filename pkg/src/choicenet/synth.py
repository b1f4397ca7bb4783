"""Synthetic choice data from a known random-utility process.

Utilities are built on centred, scaled attributes u = (x - mean) / sd; the
recorded choice is argmax(V / noise_scale + Gumbel).  The generator is the
ground truth against which fitted models are judged: oracle probabilities
are softmax(V / noise_scale) and the Bayes rule predicts argmax V.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core.functional import softmax
from .core.rng import as_generator
from .data import ChoiceDataset

FORMS = ("linear", "nonlinear-asu", "nonlinear-full")


@dataclass(frozen=True)
class AttributeDist:
    name: str
    kind: str = "lognormal"  # lognormal | normal | uniform | bernoulli
    mean: float = 1.0
    sd: float = 1.0

    def sample(self, gen, n):
        if self.kind == "lognormal":
            s2 = np.log1p((self.sd / self.mean) ** 2)
            return gen.lognormal(np.log(self.mean) - s2 / 2, np.sqrt(s2), n)
        if self.kind == "normal":
            return gen.normal(self.mean, self.sd, n)
        if self.kind == "uniform":
            half = self.sd * np.sqrt(3.0)
            return gen.uniform(self.mean - half, self.mean + half, n)
        if self.kind == "bernoulli":
            return (gen.random(n) < self.mean).astype(float)
        raise ValueError(f"unknown distribution {self.kind!r}")

    def centre(self, x):
        if self.kind == "bernoulli":
            return x
        return (x - self.mean) / self.sd


@dataclass(frozen=True)
class DgpSpec:
    alternatives: tuple
    x_attrs: tuple  # per alternative: tuple of AttributeDist
    z_attrs: tuple = ()
    form: str = "linear"
    coefficients: dict | None = None
    coef_seed: int = 0
    noise_scale: float = 1.0
    nests: tuple | None = None
    nest_error_sd: float = 0.0

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown utility form {self.form!r}")
        if len(self.x_attrs) != len(self.alternatives):
            raise ValueError("one attribute list per alternative is required")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be >= 0")

    @property
    def K(self) -> int:
        return len(self.alternatives)

    @property
    def x_dims(self) -> tuple:
        return tuple(len(a) for a in self.x_attrs)

    @property
    def d_z(self) -> int:
        return len(self.z_attrs)

    def resolve(self) -> "DgpSpec":
        """Fill in coefficients drawn from ``coef_seed`` when none are given."""
        if self.coefficients is not None:
            return self
        return replace(self, coefficients=_draw_coefficients(self))

    # -- serialisation ---------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_attrs"] = [[asdict(a) for a in attrs] for attrs in self.x_attrs]
        d["z_attrs"] = [asdict(a) for a in self.z_attrs]
        if self.coefficients is not None:
            d["coefficients"] = {k: _tolist(v) for k, v in self.coefficients.items()}
        if self.nests is not None:
            d["nests"] = [list(m) for m in self.nests]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        d = dict(d)
        d["alternatives"] = tuple(d["alternatives"])
        d["x_attrs"] = tuple(tuple(AttributeDist(**a) for a in attrs) for attrs in d["x_attrs"])
        d["z_attrs"] = tuple(AttributeDist(**a) for a in d.get("z_attrs", ()))
        if d.get("coefficients") is not None:
            d["coefficients"] = _coef_arrays(d["coefficients"])
        if d.get("nests") is not None:
            d["nests"] = tuple(tuple(m) for m in d["nests"])
        return cls(**d)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DgpSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _tolist(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (list, tuple)):
        return [_tolist(a) for a in v]
    return v


def _coef_arrays(c: dict) -> dict:
    out = {}
    for k, v in c.items():
        if k in ("beta", "quad", "inter"):
            out[k] = [np.asarray(a, dtype=float) for a in v]
        else:
            out[k] = np.asarray(v, dtype=float)
    return out


def _draw_coefficients(spec: DgpSpec) -> dict:
    gen = np.random.default_rng(spec.coef_seed)
    K, d_z = spec.K, spec.d_z
    asc = np.append(gen.normal(0, 0.5, K - 1), 0.0)
    coefs = {
        "asc": asc,
        # attributes are costs and times: planted negative marginal utilities
        "beta": [-gen.uniform(0.5, 1.5, d) for d in spec.x_dims],
        "gamma": np.vstack([gen.normal(0, 0.5, (K - 1, d_z)), np.zeros((1, d_z))]),
    }
    if spec.form in ("nonlinear-asu", "nonlinear-full"):
        coefs["quad"] = [gen.uniform(-1.0, 1.0, d) for d in spec.x_dims]
        coefs["inter"] = [gen.normal(0, 0.7, (d, d_z)) for d in spec.x_dims]
    if spec.form == "nonlinear-full":
        coefs["cross"] = gen.choice([-1.0, 1.0], K) * gen.uniform(0.5, 1.0, K)
    return coefs


def sample_attributes(spec: DgpSpec, n: int, gen):
    x = tuple(np.column_stack([a.sample(gen, n) for a in attrs]) if attrs else np.zeros((n, 0))
              for attrs in spec.x_attrs)
    z = np.column_stack([a.sample(gen, n) for a in spec.z_attrs]) if spec.z_attrs else np.zeros((n, 0))
    return x, z


def raw_utilities(spec: DgpSpec, x, z) -> np.ndarray:
    """Deterministic utilities before division by the noise scale, shape (N, K)."""
    spec = spec.resolve()
    c = spec.coefficients
    n = len(z) if len(x) == 0 else x[0].shape[0]
    if len(x) != spec.K or any(xk.shape[1] != d for xk, d in zip(x, spec.x_dims)):
        raise ValueError("attribute blocks do not match the DGP spec")
    if z.shape != (n, spec.d_z):
        raise ValueError("individual attributes do not match the DGP spec")
    u = [np.column_stack([a.centre(xk[:, j]) for j, a in enumerate(attrs)]) if attrs else np.zeros((n, 0))
         for xk, attrs in zip(x, spec.x_attrs)]
    zc = np.column_stack([a.centre(z[:, j]) for j, a in enumerate(spec.z_attrs)]) if spec.d_z else z
    V = np.tile(c["asc"], (n, 1)).astype(float)
    for k in range(spec.K):
        V[:, k] += u[k] @ c["beta"][k]
        if spec.d_z:
            V[:, k] += zc @ c["gamma"][k]
        if "quad" in c:
            V[:, k] += (u[k] ** 2) @ c["quad"][k]
            if spec.d_z:
                V[:, k] += np.einsum("na,ad,nd->n", u[k], c["inter"][k], zc)
    if "cross" in c:
        for k in range(spec.K):
            nxt = (k + 1) % spec.K
            if u[k].shape[1] and u[nxt].shape[1]:
                V[:, k] += c["cross"][k] * u[k][:, 0] * u[nxt][:, 0]
    return V


def true_utilities(spec: DgpSpec, x, z) -> np.ndarray:
    V = raw_utilities(spec, x, z)
    if spec.noise_scale == 0:
        return V
    return V / spec.noise_scale


def gumbel(gen, shape) -> np.ndarray:
    """Standard Gumbel draws by inverse CDF: -log(-log(u))."""
    u = gen.random(shape)
    while np.any(u == 0.0):
        u = np.where(u == 0.0, gen.random(shape), u)
    return -np.log(-np.log(u))


def generate(spec: DgpSpec, n: int, rng) -> ChoiceDataset:
    spec = spec.resolve()
    gen = as_generator(rng)
    x, z = sample_attributes(spec, n, gen)
    U = true_utilities(spec, x, z)
    if spec.noise_scale > 0:
        U = U + gumbel(gen, U.shape)
    if spec.nest_error_sd > 0:
        if spec.nests is None:
            raise ValueError("nest_error_sd needs a nest partition")
        eta = gen.normal(0.0, spec.nest_error_sd, (n, len(spec.nests)))
        for m, members in enumerate(spec.nests):
            U[:, list(members)] += eta[:, [m]]
    return ChoiceDataset(
        x=x, z=z, y=np.argmax(U, axis=1),
        alternatives=tuple(spec.alternatives),
        x_names=tuple(tuple(a.name for a in attrs) for attrs in spec.x_attrs),
        z_names=tuple(a.name for a in spec.z_attrs),
    )


def oracle_probabilities(spec: DgpSpec, x, z) -> np.ndarray:
    """Exact choice probabilities softmax(V / noise_scale) for i.i.d. Gumbel noise."""
    if spec.nest_error_sd > 0:
        raise ValueError("closed-form oracle probabilities need nest_error_sd == 0")
    V = true_utilities(spec, x, z)
    if spec.noise_scale == 0:
        P = np.zeros_like(V)
        P[np.arange(len(V)), np.argmax(V, axis=1)] = 1.0
        return P
    return softmax(V)


def _check_match(spec: DgpSpec, dataset: ChoiceDataset):
    if dataset.k != spec.K or dataset.x_dims != spec.x_dims or dataset.d_z != spec.d_z:
        raise ValueError("dataset does not match the DGP spec")


def bayes_accuracy(spec: DgpSpec, dataset: ChoiceDataset) -> float:
    """Accuracy of predicting argmax of the true utilities on ``dataset``."""
    _check_match(spec, dataset)
    V = true_utilities(spec, dataset.x, dataset.z)
    return float(np.mean(np.argmax(V, axis=1) == dataset.y))


def expected_bayes_accuracy(spec: DgpSpec, x, z) -> float:
    """E[P(argmax V)] over the given attribute draws (no choice sampling needed)."""
    P = oracle_probabilities(spec, x, z)
    V = true_utilities(spec, x, z)
    return float(np.mean(P[np.arange(len(P)), np.argmax(V, axis=1)]))


def calibrate_noise(spec: DgpSpec, target: float, n: int = 20000, seed: int = 0,
                    tol: float = 1e-4) -> DgpSpec:
    """Set ``noise_scale`` so the expected Bayes accuracy equals ``target``."""
    spec = spec.resolve()
    if not 1.0 / spec.K < target < 1.0:
        raise ValueError(f"target must lie in (1/K, 1), got {target}")
    x, z = sample_attributes(spec, n, np.random.default_rng(seed))
    lo, hi = -8.0, 8.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        acc = expected_bayes_accuracy(replace(spec, noise_scale=float(np.exp(mid))), x, z)
        if acc > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return replace(spec, noise_scale=float(np.exp(0.5 * (lo + hi))))


# ---------------------------------------------------------------- default specs

_SGP_ALTS = ("walk", "bus", "ridesharing", "drive", "av")
_SGP_X = (
    (AttributeDist("walk_time", "lognormal", 60.50, 54.88),),
    (AttributeDist("cost", "lognormal", 2.070, 1.266),
     AttributeDist("walk_time", "lognormal", 11.96, 10.78),
     AttributeDist("wait_time", "lognormal", 7.732, 5.033),
     AttributeDist("ivt", "lognormal", 25.06, 18.91)),
    (AttributeDist("cost", "lognormal", 14.48, 11.64),
     AttributeDist("wait_time", "lognormal", 7.108, 4.803),
     AttributeDist("ivt", "lognormal", 18.28, 13.39)),
    (AttributeDist("cost", "lognormal", 10.49, 10.57),
     AttributeDist("walk_time", "lognormal", 3.968, 4.176),
     AttributeDist("ivt", "lognormal", 17.43, 14.10)),
    (AttributeDist("cost", "lognormal", 16.08, 14.60),
     AttributeDist("wait_time", "lognormal", 7.249, 5.674),
     AttributeDist("ivt", "lognormal", 20.11, 16.99)),
)
_SGP_Z = (
    AttributeDist("male", "bernoulli", 0.383),
    AttributeDist("young", "bernoulli", 0.329),
    AttributeDist("old", "bernoulli", 0.075),
    AttributeDist("low_edu", "bernoulli", 0.331),
    AttributeDist("high_edu", "bernoulli", 0.480),
    AttributeDist("low_inc", "bernoulli", 0.035),
    AttributeDist("high_inc", "bernoulli", 0.606),
    AttributeDist("full_job", "bernoulli", 0.602),
)


def sgp_like_spec(form: str = "nonlinear-asu", coef_seed: int = 0, noise_scale: float = 1.0,
                  **kw) -> DgpSpec:
    """Five travel modes: lognormal costs and times, binary demographics."""
    return DgpSpec(_SGP_ALTS, _SGP_X, _SGP_Z, form=form, coef_seed=coef_seed,
                   noise_scale=noise_scale, **kw)
