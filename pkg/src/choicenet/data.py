"""Choice datasets: wide-format CSV ingestion, 4:1:1 splitting and standardisation."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core.rng import RngStream


class DataError(ValueError):
    """Malformed input data or schema."""


@dataclass(frozen=True, eq=False)
class ChoiceDataset:
    """N observations of K alternatives.

    ``x[k]`` is an (N, d_k) array of alternative k's attributes, ``z`` an (N, d_z)
    array of individual attributes (d_z may be 0) and ``y`` the chosen index.
    """

    x: tuple
    z: np.ndarray
    y: np.ndarray
    alternatives: tuple
    x_names: tuple
    z_names: tuple = ()

    def __post_init__(self):
        n = len(self.y)
        if len(self.x) != len(self.alternatives) or len(self.x_names) != len(self.alternatives):
            raise DataError("one attribute block and name list per alternative is required")
        for k, xk in enumerate(self.x):
            if xk.ndim != 2 or xk.shape[0] != n or xk.shape[1] != len(self.x_names[k]):
                raise DataError(f"attribute block {k} has shape {xk.shape}, expected ({n}, {len(self.x_names[k])})")
        if self.z.ndim != 2 or self.z.shape != (n, len(self.z_names)):
            raise DataError(f"individual block has shape {self.z.shape}, expected ({n}, {len(self.z_names)})")
        if n and (self.y.min() < 0 or self.y.max() >= len(self.alternatives)):
            raise DataError("choices out of range")

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def k(self) -> int:
        return len(self.alternatives)

    @property
    def x_dims(self) -> tuple:
        return tuple(len(names) for names in self.x_names)

    @property
    def d_z(self) -> int:
        return len(self.z_names)

    def subset(self, idx) -> "ChoiceDataset":
        idx = np.asarray(idx, dtype=int)
        return replace(self, x=tuple(xk[idx] for xk in self.x), z=self.z[idx], y=self.y[idx])

    def with_arrays(self, x=None, z=None, y=None) -> "ChoiceDataset":
        return replace(
            self,
            x=self.x if x is None else tuple(np.asarray(a, dtype=float) for a in x),
            z=self.z if z is None else np.asarray(z, dtype=float),
            y=self.y if y is None else np.asarray(y, dtype=int),
        )

    def onehot(self) -> np.ndarray:
        out = np.zeros((self.n, self.k))
        out[np.arange(self.n), self.y] = 1.0
        return out

    def alt_index(self, alternative) -> int:
        if isinstance(alternative, (int, np.integer)):
            if not 0 <= alternative < self.k:
                raise KeyError(f"alternative index {alternative} out of range")
            return int(alternative)
        try:
            return self.alternatives.index(alternative)
        except ValueError:
            raise KeyError(f"unknown alternative {alternative!r}") from None

    def attr_index(self, alternative, attribute) -> tuple[int, int]:
        k = self.alt_index(alternative)
        if isinstance(attribute, (int, np.integer)):
            return k, int(attribute)
        try:
            return k, self.x_names[k].index(attribute)
        except ValueError:
            raise KeyError(f"alternative {self.alternatives[k]!r} has no attribute {attribute!r}") from None

    def shares(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.k) / max(self.n, 1)

    def means(self):
        """Column means: (list of per-alternative mean vectors, z mean vector)."""
        return [xk.mean(axis=0) for xk in self.x], self.z.mean(axis=0)


# ---------------------------------------------------------------- schema / CSV

@dataclass(frozen=True)
class Schema:
    """Maps wide CSV columns to (alternative, attribute) pairs."""

    alternatives: tuple
    attributes: tuple  # per alternative: tuple of (attribute name, column)
    individual: tuple = ()  # tuple of (name, column)
    choice: str = "choice"
    choice_labels: dict | None = None
    nests: tuple | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        try:
            alts = d["alternatives"]
            names = tuple(a["name"] for a in alts)
            attrs = tuple(tuple((k, v) for k, v in a["attributes"].items()) for a in alts)
        except (KeyError, TypeError, AttributeError) as exc:
            raise DataError(f"schema is missing alternatives/attributes: {exc}") from None
        individual = tuple((k, v) for k, v in d.get("individual", {}).items())
        nests = d.get("nests")
        if nests is not None:
            nests = tuple(tuple(m) for m in nests)
        return cls(names, attrs, individual, d.get("choice", "choice"), d.get("choice_labels"), nests)

    @classmethod
    def load(cls, path) -> "Schema":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"schema file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise DataError(f"schema file {path} is not valid JSON: {exc}") from None

    def to_dict(self) -> dict:
        d = {
            "alternatives": [
                {"name": name, "attributes": dict(attrs)}
                for name, attrs in zip(self.alternatives, self.attributes)
            ],
            "individual": dict(self.individual),
            "choice": self.choice,
        }
        if self.choice_labels is not None:
            d["choice_labels"] = dict(self.choice_labels)
        if self.nests is not None:
            d["nests"] = [list(m) for m in self.nests]
        return d

    def columns(self) -> list[str]:
        cols = [c for attrs in self.attributes for _, c in attrs]
        cols += [c for _, c in self.individual]
        return cols + [self.choice]

    def nest_indices(self) -> tuple | None:
        if self.nests is None:
            return None
        return tuple(tuple(self.alternatives.index(a) if isinstance(a, str) else int(a) for a in m)
                     for m in self.nests)


def load_csv(path, schema: Schema) -> ChoiceDataset:
    """Parse a wide-format CSV (one row per observation) under ``schema``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    K = len(schema.alternatives)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        pos = {name: i for i, name in enumerate(header)}
        for col in schema.columns():
            if col not in pos:
                raise DataError(f"{path}: missing column {col!r}")
        x_cols = [[pos[c] for _, c in attrs] for attrs in schema.attributes]
        z_cols = [pos[c] for _, c in schema.individual]
        y_col = pos[schema.choice]
        xs = [[] for _ in range(K)]
        zs, ys = [], []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue

            def num(i):
                try:
                    v = float(row[i])
                except (ValueError, IndexError):
                    raise DataError(f"{path}: line {line}, column {header[i]!r}: "
                                    f"cannot parse {row[i] if i < len(row) else ''!r}") from None
                if not np.isfinite(v):
                    raise DataError(f"{path}: line {line}, column {header[i]!r}: non-finite value")
                return v

            for k in range(K):
                xs[k].append([num(i) for i in x_cols[k]])
            zs.append([num(i) for i in z_cols])
            raw = row[y_col].strip() if y_col < len(row) else ""
            if schema.choice_labels is not None:
                if raw not in schema.choice_labels:
                    raise DataError(f"{path}: line {line}, column {schema.choice!r}: unknown choice {raw!r}")
                y = int(schema.choice_labels[raw])
            else:
                try:
                    yf = float(raw)
                except ValueError:
                    raise DataError(f"{path}: line {line}, column {schema.choice!r}: cannot parse {raw!r}") from None
                y = int(yf)
                if y != yf:
                    raise DataError(f"{path}: line {line}, column {schema.choice!r}: non-integer choice {raw!r}")
            if not 0 <= y < K:
                raise DataError(f"{path}: line {line}, column {schema.choice!r}: choice {y} out of range 0..{K - 1}")
            ys.append(y)
    n = len(ys)
    x = tuple(np.asarray(xs[k], dtype=float).reshape(n, len(x_cols[k])) for k in range(K))
    z = np.asarray(zs, dtype=float).reshape(n, len(z_cols))
    return ChoiceDataset(
        x=x, z=z, y=np.asarray(ys, dtype=int),
        alternatives=tuple(schema.alternatives),
        x_names=tuple(tuple(a for a, _ in attrs) for attrs in schema.attributes),
        z_names=tuple(a for a, _ in schema.individual),
    )


def default_schema(dataset: ChoiceDataset, nests=None) -> Schema:
    """Schema with columns named ``<alternative>_<attribute>``."""
    attrs = tuple(tuple((a, f"{alt}_{a}") for a in names)
                  for alt, names in zip(dataset.alternatives, dataset.x_names))
    nests = None if nests is None else tuple(tuple(dataset.alternatives[i] for i in m) for m in nests)
    return Schema(tuple(dataset.alternatives), attrs, tuple((a, a) for a in dataset.z_names),
                  "choice", None, nests)


def write_csv(dataset: ChoiceDataset, path, schema: Schema | None = None) -> Schema:
    schema = schema or default_schema(dataset)
    blocks = [xk for xk in dataset.x] + [dataset.z]
    values = np.concatenate(blocks, axis=1) if blocks else np.zeros((dataset.n, 0))
    labels = None
    if schema.choice_labels is not None:
        labels = {v: k for k, v in schema.choice_labels.items()}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema.columns())
        for row, y in zip(values, dataset.y):
            w.writerow([repr(float(v)) for v in row] + [labels[int(y)] if labels else int(y)])
    return schema


# ---------------------------------------------------------------- splitting

def split_indices(n: int, seed: int, ratios=(4, 1, 1)) -> list[np.ndarray]:
    total = sum(ratios)
    if n < total:
        raise DataError(f"need at least {total} observations to split {ratios}, got {n}")
    perm = RngStream(seed).child("split").generator().permutation(n)
    cuts = [n * c // total for c in np.cumsum(ratios)[:-1]]
    return np.split(perm, cuts)


def split(dataset: ChoiceDataset, seed: int, ratios=(4, 1, 1)):
    """Seeded shuffle, then contiguous cuts at floor(N*4/6) and floor(N*5/6)."""
    return tuple(dataset.subset(idx) for idx in split_indices(dataset.n, seed, ratios))


# ---------------------------------------------------------------- standardisation

def _is_binary(col: np.ndarray) -> bool:
    return bool(np.all((col == 0.0) | (col == 1.0)))


def _column_stats(a: np.ndarray, names, label):
    mean = a.mean(axis=0) if len(a) else np.zeros(a.shape[1])
    std = a.std(axis=0) if len(a) else np.ones(a.shape[1])
    binary = np.array([_is_binary(a[:, j]) for j in range(a.shape[1])], dtype=bool)
    for j, name in enumerate(names):
        if not binary[j] and not (std[j] > 0 and np.ptp(a[:, j]) > 0):
            raise DataError(f"constant column {label}{name!r} cannot be standardised")
    mean = np.where(binary, 0.0, mean)
    std = np.where(binary, 1.0, std)
    return mean, std


@dataclass
class Standardizer:
    """Per-column affine map fitted on a training split; binary columns pass through."""

    x_mean: list
    x_std: list
    z_mean: np.ndarray
    z_std: np.ndarray
    raw_means: dict = field(default_factory=dict)

    @classmethod
    def fit(cls, train: ChoiceDataset) -> "Standardizer":
        if train.n == 0:
            raise DataError("cannot fit a standardizer on an empty split")
        xm, xs = [], []
        for alt, names, xk in zip(train.alternatives, train.x_names, train.x):
            m, s = _column_stats(xk, names, f"{alt}:")
            xm.append(m)
            xs.append(s)
        zm, zs = _column_stats(train.z, train.z_names, "")
        x_raw, z_raw = train.means()
        return cls(xm, xs, zm, zs, {"x": x_raw, "z": z_raw})

    def transform_x(self, x):
        return tuple((xk - m) / s for xk, m, s in zip(x, self.x_mean, self.x_std))

    def transform_z(self, z):
        return (z - self.z_mean) / self.z_std

    def transform(self, ds: ChoiceDataset) -> ChoiceDataset:
        return ds.with_arrays(x=self.transform_x(ds.x), z=self.transform_z(ds.z))

    def inverse(self, ds: ChoiceDataset) -> ChoiceDataset:
        x = tuple(xk * s + m for xk, m, s in zip(ds.x, self.x_mean, self.x_std))
        return ds.with_arrays(x=x, z=ds.z * self.z_std + self.z_mean)

    def to_dict(self) -> dict:
        return {
            "x_mean": [np.asarray(a) for a in self.x_mean],
            "x_std": [np.asarray(a) for a in self.x_std],
            "z_mean": np.asarray(self.z_mean),
            "z_std": np.asarray(self.z_std),
            "raw_x_mean": [np.asarray(a) for a in self.raw_means.get("x", [])],
            "raw_z_mean": np.asarray(self.raw_means.get("z", np.zeros(0))),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(list(d["x_mean"]), list(d["x_std"]), d["z_mean"], d["z_std"],
                   {"x": list(d["raw_x_mean"]), "z": d["raw_z_mean"]})


def standardize(train: ChoiceDataset, *others: ChoiceDataset):
    """Fit on ``train`` and apply to every split; returns (datasets, standardizer)."""
    st = Standardizer.fit(train)
    return [st.transform(d) for d in (train, *others)], st


def destandardize(ds: ChoiceDataset, st: Standardizer) -> ChoiceDataset:
    return st.inverse(ds)
