"""End-to-end comparisons shared by the scripts and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ChoiceDataset, split
from .hpo import HyperSpace, Leaderboard, TrialRecord, cross_validate, random_search
from .models import ArchSpec
from .synth import DgpSpec, bayes_accuracy, calibrate_noise, generate, sgp_like_spec
from .training import HyperConfig, evaluate

# Logit baselines have no architecture to search; large batches and a long
# run put SGD within ~1e-4 nats of the likelihood optimum.
LOGIT_CONFIG = dict(learning_rate=0.1, num_iterations=5000, batch_size=1000)


def pooled(a: ChoiceDataset, b: ChoiceDataset) -> ChoiceDataset:
    return ChoiceDataset(tuple(np.concatenate([p, q]) for p, q in zip(a.x, b.x)),
                         np.concatenate([a.z, b.z]), np.concatenate([a.y, b.y]),
                         a.alternatives, a.x_names, a.z_names)


def logit_baseline(trainval: ChoiceDataset, test: ChoiceDataset, seed: int, k: int = 5,
                   family: str = "mnl", nests=None) -> TrialRecord:
    """Cross-validated logit fit on the same folds a search with ``seed`` uses."""
    cfg = HyperConfig(ArchSpec(family, nests=nests), seed=seed, **LOGIT_CONFIG)
    cv = cross_validate(cfg, trainval, k, split_seed=seed)
    test_acc = [evaluate(m, test).accuracy for m in cv.models]
    return TrialRecord(0, cfg, cv.fold_accuracies, test_acc, models=cv.models)


@dataclass
class Comparison:
    boards: dict          # family -> Leaderboard
    baseline: TrialRecord
    bayes_accuracy: float | None = None

    def top_mean(self, family: str, n: int = 10, metric: str = "test") -> float:
        return self.boards[family].top_mean(n, metric)


def compare_families(dataset: ChoiceDataset, space: HyperSpace, trials: int, seed: int,
                     families=("asudnn", "fdnn"), parallelism: int = 1, k: int = 5,
                     spec: DgpSpec | None = None) -> Comparison:
    """Random search per DNN family plus an MNL baseline, all on one split."""
    tr, va, te = split(dataset, seed)
    trainval = pooled(tr, va)
    boards: dict[str, Leaderboard] = {}
    for fam in families:
        boards[fam] = random_search(space, fam, dataset, trials, parallelism=parallelism,
                                    seed=seed, k=k, splits=(trainval, te))
    base = logit_baseline(trainval, te, seed, k)
    bayes = bayes_accuracy(spec, te) if spec is not None else None
    return Comparison(boards, base, bayes)


def synthetic_asu_dataset(n: int = 3000, seed: int = 0, target: float = 0.70,
                          coef_seed: int = 0) -> tuple[DgpSpec, ChoiceDataset]:
    """Nonlinear alternative-specific DGP calibrated to a Bayes accuracy target."""
    spec = calibrate_noise(sgp_like_spec("nonlinear-asu", coef_seed=coef_seed), target)
    return spec, generate(spec, n, seed)
