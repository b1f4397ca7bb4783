"""Probability sweeps, arc elasticities and IIA probes for fitted models."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .core.rng import as_generator
from .data import ChoiceDataset, DataError
from .training import TrainedModel

IIA_THRESHOLD = 1e-9
CROSS_TOL = 1e-10


def _mean_probe(dataset: ChoiceDataset):
    xm, zm = dataset.means()
    return [m[None, :].copy() for m in xm], zm[None, :].copy()


def _probs(model: TrainedModel, x, z) -> np.ndarray:
    return np.exp(model.log_probs_arrays(x, z))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- sweeps

@dataclass
class SweepResult:
    alternative: str
    attribute: str
    grid: np.ndarray          # raw units
    probabilities: np.ndarray  # (len(grid), K)
    alternatives: tuple
    model_id: str = ""

    def series(self) -> dict:
        return {"model": self.model_id, "x_label": f"{self.alternative}:{self.attribute}",
                "x": self.grid.tolist(),
                "series": {a: self.probabilities[:, k].tolist() for k, a in enumerate(self.alternatives)}}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.series(), fh, indent=1)
            fh.write("\n")

    def to_csv(self, path):
        rows = [[repr(float(g))] + [repr(float(p)) for p in row]
                for g, row in zip(self.grid, self.probabilities)]
        _write_csv(path, [f"{self.alternative}:{self.attribute}", *self.alternatives], rows)


def probability_sweep(model: TrainedModel, dataset: ChoiceDataset, alternative, attribute,
                      grid, model_id: str = "") -> SweepResult:
    """Choice probabilities as one attribute moves over ``grid`` (raw units).

    All other inputs sit at their means over ``dataset`` (pass the training
    split).
    """
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("sweep grid is empty")
    k, a = dataset.attr_index(alternative, attribute)
    xm, zm = _mean_probe(dataset)
    x = [np.repeat(m, grid.size, axis=0) for m in xm]
    x[k][:, a] = grid
    P = _probs(model, x, np.repeat(zm, grid.size, axis=0))
    return SweepResult(dataset.alternatives[k], dataset.x_names[k][a], grid, P,
                       tuple(dataset.alternatives), model_id or model.family)


# ---------------------------------------------------------------- elasticities

@dataclass
class ElasticityMatrix:
    """Rows are (alternative, attribute) pairs, columns the alternatives."""

    rows: list
    alternatives: tuple
    values: np.ndarray
    perturbation: float

    @property
    def owner(self) -> np.ndarray:
        return np.array([self.alternatives.index(alt) for alt, _ in self.rows])

    def own(self) -> np.ndarray:
        return self.values[np.arange(len(self.rows)), self.owner]

    def cross_mask(self) -> np.ndarray:
        mask = np.ones(self.values.shape, dtype=bool)
        mask[np.arange(len(self.rows)), self.owner] = False
        return mask

    def sign_summary(self) -> dict:
        own = self.own()
        cross = self.values[self.cross_mask()]
        return {"own_negative": int(np.sum(own < 0)), "own_total": int(own.size),
                "cross_negative": int(np.sum(cross < 0)), "cross_total": int(cross.size)}

    def cross_spread(self) -> np.ndarray:
        """max - min of each row's cross-elasticities (0 with a single cross term)."""
        out = np.zeros(len(self.rows))
        mask = self.cross_mask()
        for i in range(len(self.rows)):
            c = self.values[i, mask[i]]
            out[i] = c.max() - c.min() if c.size else 0.0
        return out

    def cross_equal(self, tol: float = CROSS_TOL) -> np.ndarray:
        return self.cross_spread() <= tol

    def table(self) -> list:
        eq = self.cross_equal()
        return [[alt, attr, *(repr(float(v)) for v in self.values[i]), int(eq[i])]
                for i, (alt, attr) in enumerate(self.rows)]

    def to_csv(self, path):
        _write_csv(path, ["alternative", "attribute", *self.alternatives, "cross_equal"], self.table())

    def to_dict(self) -> dict:
        return {"perturbation": self.perturbation, "alternatives": list(self.alternatives),
                "rows": [list(r) for r in self.rows], "values": self.values.tolist(),
                "cross_equal": self.cross_equal().tolist(), "signs": self.sign_summary()}

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def elasticity_matrix(model: TrainedModel, dataset: ChoiceDataset,
                      perturbation: float = 0.01) -> ElasticityMatrix:
    """Arc elasticities at the sample mean of ``dataset`` (pass the training split).

    Entry (j:a, i) is the relative change of P_i when only attribute a of
    alternative j is raised by ``perturbation`` (relative, raw units), divided
    by ``perturbation``.
    """
    if perturbation == 0:
        raise ValueError("perturbation must be nonzero")
    xm, zm = _mean_probe(dataset)
    rows, probes = [], []
    for k, names in enumerate(dataset.x_names):
        for a, name in enumerate(names):
            if xm[k][0, a] == 0:
                raise DataError(f"attribute {dataset.alternatives[k]}:{name} has zero mean; "
                                "a relative perturbation is undefined")
            rows.append((dataset.alternatives[k], name))
            probes.append((k, a))
    n = len(probes)
    x = [np.repeat(m, n + 1, axis=0) for m in xm]
    for r, (k, a) in enumerate(probes, 1):
        x[k][r, a] = xm[k][0, a] * (1.0 + perturbation)
    P = _probs(model, x, np.repeat(zm, n + 1, axis=0))
    E = (P[1:] - P[0]) / P[0] / perturbation
    return ElasticityMatrix(rows, tuple(dataset.alternatives), E, perturbation)


def average_elasticity(models, dataset: ChoiceDataset, perturbation: float = 0.01) -> ElasticityMatrix:
    """Elementwise mean of the elasticity matrices of several models."""
    mats = [elasticity_matrix(m, dataset, perturbation) for m in models]
    if not mats:
        raise ValueError("no models to average")
    return ElasticityMatrix(mats[0].rows, mats[0].alternatives,
                            np.mean([m.values for m in mats], axis=0), perturbation)


# ---------------------------------------------------------------- IIA

@dataclass
class IIAReport:
    max_deviation: float
    probes: int
    threshold: float

    @property
    def consistent(self) -> bool:
        return self.max_deviation < self.threshold

    def to_dict(self) -> dict:
        return {"max_abs_delta_log_ratio": self.max_deviation, "probes": self.probes,
                "threshold": self.threshold, "iia_consistent": self.consistent}


def iia_report(model: TrainedModel, dataset: ChoiceDataset, probes: int = 1000, rng=0,
               threshold: float = IIA_THRESHOLD) -> IIAReport:
    """Largest change of log(P_k/P_j) when a third alternative's attributes move.

    Each probe takes a random observation, picks a random alternative l and
    shifts all of l's attributes by Gaussian noise scaled to the column spread.
    """
    if dataset.k < 3:
        raise ValueError(f"IIA probing needs at least 3 alternatives, got {dataset.k}")
    if probes < 1:
        raise ValueError("need at least one probe")
    gen = as_generator(rng)
    rows = gen.integers(0, dataset.n, probes)
    third = gen.integers(0, dataset.k, probes)
    x0 = [xk[rows] for xk in dataset.x]
    z0 = dataset.z[rows]
    x1 = [xk.copy() for xk in x0]
    for k in range(dataset.k):
        sel = third == k
        if not sel.any():
            continue
        scale = dataset.x[k].std(axis=0) + 1.0
        x1[k][sel] += gen.standard_normal((int(sel.sum()), dataset.x_dims[k])) * scale
    L0 = model.log_probs_arrays(x0, z0)
    L1 = model.log_probs_arrays(x1, z0)
    D = L1 - L0
    worst = 0.0
    for k in range(dataset.k):
        for j in range(k + 1, dataset.k):
            keep = (third != k) & (third != j)
            if keep.any():
                worst = max(worst, float(np.max(np.abs(D[keep, k] - D[keep, j]))))
    return IIAReport(worst, probes, threshold)
