"""Random hyperparameter search with k-fold cross-validation."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from importlib import resources

import numpy as np
from threadpoolctl import threadpool_limits

from .core.rng import RngStream, as_generator
from .data import ChoiceDataset, split
from .models import ArchSpec
from .training import HyperConfig, TrainingDivergence, evaluate, train

ARCH_FIELDS = {
    "fdnn": ("depth", "width"),
    "asudnn": ("pre_depth", "post_depth", "pre_width", "post_width"),
    "mnl": (),
    "nl": (),
}
SHARED_FIELDS = ("l1", "l2", "dropout", "batch_norm", "learning_rate", "num_iterations", "batch_size")
GEOMETRIC = ("l1", "l2", "dropout", "learning_rate")


@dataclass(frozen=True)
class HyperSpace:
    """Candidate lists, one per searchable hyperparameter.

    The defaults are the full grid; :meth:`desk` is a reduced grid
    sized for a single CPU.
    """

    depth: tuple = tuple(range(1, 13))
    width: tuple = (60, 120, 240, 360, 480, 600)
    pre_depth: tuple = tuple(range(0, 7))
    post_depth: tuple = tuple(range(0, 7))
    pre_width: tuple = (10, 20, 40, 60, 80)
    post_width: tuple = (10, 20, 40, 60, 80, 100)
    l1: tuple = (1.0, 0.5, 0.1, 0.01, 1e-3, 1e-5, 1e-10, 1e-20)
    l2: tuple = (1.0, 0.5, 0.1, 0.01, 1e-3, 1e-5, 1e-10, 1e-20)
    dropout: tuple = (0.5, 0.1, 0.01, 1e-3, 1e-5)
    batch_norm: tuple = (True, False)
    learning_rate: tuple = (0.5, 0.1, 0.01, 1e-3, 1e-5)
    num_iterations: tuple = (500, 1000, 5000, 10000, 20000)
    batch_size: tuple = (50, 100, 200, 500, 1000)

    def __post_init__(self):
        for f in fields(self):
            values = tuple(getattr(self, f.name))
            if not values:
                raise ValueError(f"candidate list for {f.name!r} is empty")
            object.__setattr__(self, f.name, values)

    def to_dict(self) -> dict:
        return {f.name: list(getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "HyperSpace":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters in space: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in d.items()})

    @classmethod
    def load(cls, path) -> "HyperSpace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def preset(cls, name: str) -> "HyperSpace":
        text = resources.files("choicenet.presets").joinpath(f"{name}_space.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    @classmethod
    def table1(cls) -> "HyperSpace":
        return cls.preset("table1")

    @classmethod
    def desk(cls) -> "HyperSpace":
        return cls.preset("desk")


def sample_config(space: HyperSpace, family: str, rng, nests=None, seed: int = 0) -> HyperConfig:
    """Draw every hyperparameter independently and uniformly from its list."""
    gen = as_generator(rng)
    if family not in ARCH_FIELDS:
        raise ValueError(f"unknown family {family!r}")

    def pick(name):
        values = getattr(space, name)
        return values[int(gen.integers(len(values)))]

    arch = ArchSpec(family, nests=nests, **{n: int(pick(n)) for n in ARCH_FIELDS[family]})
    shared = {n: pick(n) for n in SHARED_FIELDS}
    return HyperConfig(
        arch,
        l1=float(shared["l1"]),
        l2=float(shared["l2"]),
        dropout=float(shared["dropout"]),
        batch_norm=bool(shared["batch_norm"]),
        learning_rate=float(shared["learning_rate"]),
        num_iterations=int(shared["num_iterations"]),
        batch_size=int(shared["batch_size"]),
        seed=seed,
    )


# ---------------------------------------------------------------- cross-validation

def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Contiguous folds of a seeded permutation of ``range(n)``."""
    if k < 2:
        raise ValueError(f"k-fold cross-validation needs k >= 2, got {k}")
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} folds")
    perm = RngStream(seed).child("cv").generator().permutation(n)
    bounds = [(i * n) // k for i in range(k + 1)]
    return [perm[bounds[i]:bounds[i + 1]] for i in range(k)]


def fold_seed(seed: int, fold: int) -> int:
    return int(RngStream(seed).child("fold", fold).generator().integers(2**63))


@dataclass
class CVResult:
    fold_accuracies: list
    models: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))


def cross_validate(cfg: HyperConfig, dataset_trainval: ChoiceDataset, k: int = 5,
                   split_seed: int | None = None) -> CVResult:
    """Train ``k`` models, each validated on its held-out fold.

    The partition is seeded by ``split_seed`` (default ``cfg.seed``) so that
    every trial of a search can share the same folds.
    """
    folds = kfold_indices(dataset_trainval.n, k, cfg.seed if split_seed is None else split_seed)
    accs, models = [], []
    for f, held in enumerate(folds):
        rest = np.concatenate([folds[j] for j in range(k) if j != f])
        tr, va = dataset_trainval.subset(rest), dataset_trainval.subset(held)
        m = train(cfg.family, tr, va, cfg.with_seed(fold_seed(cfg.seed, f)))
        accs.append(evaluate(m, va).accuracy)
        models.append(m)
    return CVResult(accs, models)


# ---------------------------------------------------------------- search

@dataclass
class TrialRecord:
    trial: int
    config: HyperConfig
    fold_val: list
    fold_test: list
    diverged: bool = False
    message: str = ""
    models: list = field(default_factory=list, repr=False)

    @property
    def cv_accuracy(self) -> float:
        return float(np.mean(self.fold_val))

    @property
    def test_accuracy(self) -> float:
        return float(np.mean(self.fold_test))

    def value(self, name: str):
        if name in SHARED_FIELDS:
            return getattr(self.config, name)
        if name in ARCH_FIELDS.get(self.config.family, ()):
            return getattr(self.config.arch, name)
        raise KeyError(name)


@dataclass
class Leaderboard:
    """Trials sorted by mean CV accuracy (descending), ties by trial index."""

    records: list

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: (-r.cv_accuracy, r.trial))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def best(self) -> TrialRecord:
        return self.records[0]

    def top(self, n: int) -> list:
        return self.records[:n]

    def top_mean(self, n: int, metric: str = "test") -> float:
        recs = self.top(n)
        vals = [r.test_accuracy if metric == "test" else r.cv_accuracy for r in recs]
        return float(np.mean(vals))

    def fold_rows(self):
        for rank, r in enumerate(self.records, 1):
            for f, (va, te) in enumerate(zip(r.fold_val, r.fold_test)):
                yield {"rank": rank, "trial": r.trial, "family": r.config.family, "fold": f,
                       "val_accuracy": repr(float(va)), "test_accuracy": repr(float(te)),
                       "diverged": int(r.diverged)}

    def summary_rows(self):
        for rank, r in enumerate(self.records, 1):
            row = {"rank": rank, "trial": r.trial, "family": r.config.family,
                   "cv_accuracy": repr(r.cv_accuracy), "test_accuracy": repr(r.test_accuracy),
                   "diverged": int(r.diverged)}
            for name in ARCH_FIELDS[r.config.family] + SHARED_FIELDS:
                row[name] = r.value(name)
            row["seed"] = r.config.seed
            yield row

    def to_csv(self, folds_path, summary_path):
        _write_rows(folds_path, list(self.fold_rows()))
        _write_rows(summary_path, list(self.summary_rows()))


def _write_rows(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


_WORKER: dict = {}


def _init_worker(trainval, test, k, split_seed, keep_models):
    _WORKER.update(trainval=trainval, test=test, k=k, split_seed=split_seed, keep_models=keep_models)


def _run_trial(trial: int, cfg: HyperConfig) -> TrialRecord:
    w = _WORKER
    # one BLAS thread so results do not depend on the pool layout
    with threadpool_limits(1):
        try:
            cv = cross_validate(cfg, w["trainval"], w["k"], split_seed=w["split_seed"])
        except TrainingDivergence as exc:
            zeros = [0.0] * w["k"]
            return TrialRecord(trial, cfg, zeros, list(zeros), diverged=True, message=str(exc))
        test = [evaluate(m, w["test"]).accuracy for m in cv.models]
    return TrialRecord(trial, cfg, cv.fold_accuracies, test,
                       models=cv.models if w["keep_models"] else [])


def trial_configs(space: HyperSpace, family: str, n_trials: int, seed: int, nests=None) -> list:
    root = RngStream(seed).child("search", family)
    out = []
    for t in range(n_trials):
        s = root.child("trial", t)
        cfg_seed = int(s.child("seed").generator().integers(2**63))
        out.append(sample_config(space, family, s.child("config"), nests=nests, seed=cfg_seed))
    return out


def random_search(space: HyperSpace, family: str, dataset: ChoiceDataset, n_trials: int,
                  parallelism: int = 1, seed: int = 0, k: int = 5, nests=None,
                  keep_top: int = 10, splits=None) -> Leaderboard:
    """Cross-validate ``n_trials`` sampled configs; score each on the test split.

    ``dataset`` is split 4:1:1 by ``seed`` (train and validation parts pooled
    for cross-validation) unless ``splits=(trainval, test)`` is given.  Test
    accuracy is the mean over the k fold models.  Fitted models are retained
    for the ``keep_top`` best trials.
    """
    if n_trials < 1:
        raise ValueError("need at least one trial")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if splits is None:
        tr, va, te = split(dataset, seed)
        trainval = ChoiceDataset(tuple(np.concatenate([a, b]) for a, b in zip(tr.x, va.x)),
                                 np.concatenate([tr.z, va.z]), np.concatenate([tr.y, va.y]),
                                 tr.alternatives, tr.x_names, tr.z_names)
    else:
        trainval, te = splits
    configs = trial_configs(space, family, n_trials, seed, nests=nests)
    init = (trainval, te, k, seed, keep_top > 0)
    if parallelism == 1:
        _init_worker(*init)
        try:
            records = [_run_trial(t, c) for t, c in enumerate(configs)]
        finally:
            _WORKER.clear()
    else:
        with ProcessPoolExecutor(parallelism, initializer=_init_worker, initargs=init) as pool:
            records = list(pool.map(_run_trial, range(n_trials), configs))
    board = Leaderboard(records)
    for r in board.records[keep_top:]:
        r.models = []
    return board


def merge(*boards: Leaderboard) -> Leaderboard:
    """Combine leaderboards of different families (trial ids stay per family)."""
    return Leaderboard([r for b in boards for r in b.records])


def sorted_curves(boards: dict) -> list[dict]:
    """Per-family accuracies sorted descending: one row per (family, rank).

    Rows carry the fold-mean and per-fold test accuracies, i.e. the dark and
    light curves of a sorted-accuracy plot.
    """
    rows = []
    for family, board in boards.items():
        recs = sorted(board.records, key=lambda r: (-r.test_accuracy, r.trial))
        for rank, r in enumerate(recs, 1):
            row = {"family": family, "rank": rank, "trial": r.trial,
                   "mean_test_accuracy": repr(r.test_accuracy)}
            for f, a in enumerate(r.fold_test):
                row[f"fold{f}_test_accuracy"] = repr(float(a))
            rows.append(row)
    return rows


# ---------------------------------------------------------------- reports

@dataclass
class HyperparameterReport:
    name: str
    values: list
    max_accuracy: list
    mean_accuracy: list
    counts: list
    scale: str
    coefficients: tuple | None  # (a, b, c) of a*u^2 + b*u + c, u the (scaled) value
    insufficient_support: bool

    @property
    def vertex(self) -> float | None:
        """Location of the fitted extremum in original units."""
        if self.coefficients is None:
            return None
        a, b, _ = self.coefficients
        if a == 0:
            return None
        u = -b / (2 * a)
        return float(10**u) if self.scale == "log" else float(u)

    def rows(self):
        for v, mx, mn, c in zip(self.values, self.max_accuracy, self.mean_accuracy, self.counts):
            yield {"value": v, "max_accuracy": repr(mx), "mean_accuracy": repr(mn), "count": c}

    def to_dict(self) -> dict:
        return {"name": self.name, "scale": self.scale,
                "values": self.values, "max_accuracy": self.max_accuracy,
                "mean_accuracy": self.mean_accuracy, "counts": self.counts,
                "coefficients": None if self.coefficients is None else list(self.coefficients),
                "vertex": self.vertex, "insufficient_support": self.insufficient_support}


def _looks_geometric(values) -> bool:
    v = np.asarray(sorted(values), dtype=float)
    if len(v) < 3 or v[0] <= 0:
        return len(v) == 2 and v[0] > 0 and v[1] / v[0] >= 10
    ratios, diffs = np.diff(np.log(v)), np.diff(v)
    cv = lambda a: float(np.std(a) / np.mean(a))  # noqa: E731
    return cv(ratios) < cv(diffs)


def hyperparameter_report(leaderboard: Leaderboard, name: str, metric: str = "test",
                          scale: str = "auto") -> HyperparameterReport:
    """Per-value max/mean accuracy and a least-squares quadratic in the value.

    ``scale="auto"`` fits against log10 of the value for geometric
    hyperparameters whose observed values are geometrically spaced, and against
    the raw value otherwise.
    """
    if len(leaderboard) == 0:
        raise ValueError("empty leaderboard")
    if scale not in ("auto", "log", "linear"):
        raise ValueError(f"unknown scale {scale!r}")
    xs, ys = [], []
    for r in leaderboard:
        try:
            xs.append(r.value(name))
        except KeyError:
            continue
        ys.append(r.test_accuracy if metric == "test" else r.cv_accuracy)
    if not xs:
        raise KeyError(f"hyperparameter {name!r} does not appear in any trial")
    distinct = sorted(set(xs))
    if scale == "auto":
        scale = "log" if name in GEOMETRIC and _looks_geometric(distinct) else "linear"
    ys = np.asarray(ys, dtype=float)
    xa = np.asarray(xs, dtype=float)
    mx, mn, cnt = [], [], []
    for v in distinct:
        sel = ys[xa == float(v)]
        mx.append(float(sel.max()))
        # rounding can push the mean of equal values one ulp past the max
        mn.append(float(np.clip(sel.mean(), sel.min(), sel.max())))
        cnt.append(int(sel.size))
    u = np.log10(xa) if scale == "log" else xa
    coef, insufficient = None, len(distinct) < 3
    if not insufficient:
        coef = tuple(float(c) for c in np.polyfit(u, ys, 2))
    return HyperparameterReport(name, [v.item() if hasattr(v, "item") else v for v in distinct],
                                mx, mn, cnt, scale, coef, insufficient)


def reportable(family: str) -> tuple:
    return ARCH_FIELDS[family] + SHARED_FIELDS

