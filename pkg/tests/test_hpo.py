import csv
import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from choicenet.data import split
from choicenet.experiments import pooled
from choicenet.hpo import (ARCH_FIELDS, SHARED_FIELDS, HyperSpace, Leaderboard, TrialRecord,
                           cross_validate, hyperparameter_report, kfold_indices, merge, random_search,
                           sample_config, sorted_curves, trial_configs)
from choicenet.models import ArchSpec
from choicenet.synth import DgpSpec, generate, sgp_like_spec
from choicenet.training import HyperConfig, evaluate, train

from conftest import SCHEMAS, toy_dataset

TINY = HyperSpace(depth=(1,), width=(4,), pre_depth=(1,), post_depth=(1,), pre_width=(3,), post_width=(3,),
                  l1=(1e-5,), l2=(1e-5,), dropout=(0.01,), batch_norm=(False,), learning_rate=(0.1,),
                  num_iterations=(20,), batch_size=(16,))
SMALL = HyperSpace(depth=(1, 2), width=(4, 6), pre_depth=(0, 1), post_depth=(0, 1), pre_width=(3,),
                   post_width=(3, 4), l1=(1e-5, 1e-3), l2=(1e-5,), dropout=(0.01, 0.1),
                   batch_norm=(False, True), learning_rate=(0.1, 0.01), num_iterations=(15, 25),
                   batch_size=(8, 16))


# ---------------------------------------------------------------- space

def test_default_space_is_the_full_grid():
    t1 = HyperSpace.table1()
    assert t1 == HyperSpace()
    assert t1.depth == tuple(range(1, 13)) and t1.width == (60, 120, 240, 360, 480, 600)
    assert t1.pre_depth == t1.post_depth == tuple(range(7))
    assert t1.pre_width == (10, 20, 40, 60, 80) and t1.post_width == (10, 20, 40, 60, 80, 100)
    assert t1.l1 == t1.l2 == (1.0, 0.5, 0.1, 0.01, 1e-3, 1e-5, 1e-10, 1e-20)
    assert t1.dropout == (0.5, 0.1, 0.01, 1e-3, 1e-5)
    assert t1.learning_rate == (0.5, 0.1, 0.01, 1e-3, 1e-5)
    assert t1.num_iterations == (500, 1000, 5000, 10000, 20000)
    assert t1.batch_size == (50, 100, 200, 500, 1000)
    assert t1.batch_norm == (True, False)


def test_desk_space_is_a_subgrid():
    # iteration counts are cut to fit a CPU budget; every other shared value comes from the full grid
    desk, t1 = HyperSpace.desk(), HyperSpace.table1()
    for name in set(SHARED_FIELDS) - {"num_iterations"}:
        assert set(getattr(desk, name)) <= set(getattr(t1, name)), name


def test_space_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        HyperSpace(depth=())
    with pytest.raises(ValueError):
        HyperSpace.from_dict({"momentum": [0.9]})
    SMALL.save(tmp_path / "s.json")
    assert HyperSpace.load(tmp_path / "s.json") == SMALL


# ---------------------------------------------------------------- sampling

def test_singleton_space_gives_the_unique_config():
    for t in range(5):
        cfg = sample_config(TINY, "asudnn", t)
        assert cfg.arch == ArchSpec("asudnn", pre_depth=1, post_depth=1, pre_width=3, post_width=3)
        assert (cfg.l1, cfg.l2, cfg.dropout, cfg.batch_norm, cfg.learning_rate, cfg.num_iterations,
                cfg.batch_size) == (1e-5, 1e-5, 0.01, False, 0.1, 20, 16)


def test_depth_frequencies_are_uniform():
    gen = np.random.default_rng(0)
    draws = 10_000
    counts = Counter(sample_config(HyperSpace(), "fdnn", gen).arch.depth for _ in range(draws))
    p = 1 / 12
    sigma = np.sqrt(p * (1 - p) / draws)
    assert set(counts) == set(range(1, 13))
    assert all(abs(c / draws - p) <= 3 * sigma for c in counts.values())


def test_sampling_sequence_is_seeded():
    a = trial_configs(HyperSpace(), "asudnn", 20, seed=5)
    b = trial_configs(HyperSpace(), "asudnn", 20, seed=5)
    c = trial_configs(HyperSpace(), "asudnn", 20, seed=6)
    assert a == b and a != c
    assert len({cfg.seed for cfg in a}) == 20


def test_sample_config_rejects_unknown_family():
    with pytest.raises(ValueError):
        sample_config(TINY, "rbm", 0)


# ---------------------------------------------------------------- cross-validation

@given(st.integers(2, 12), st.integers(0, 300), st.integers(0, 2**32))
def test_folds_partition(k, extra, seed):
    n = k + extra
    folds = kfold_indices(n, k, seed)
    assert len(folds) == k
    assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))
    assert max(map(len, folds)) - min(map(len, folds)) <= 1


def test_fold_errors():
    with pytest.raises(ValueError):
        kfold_indices(10, 1, 0)
    with pytest.raises(ValueError):
        kfold_indices(3, 5, 0)


def test_constant_model_fold_accuracy_is_first_share(gen):
    ds = toy_dataset(gen, n=53)
    cfg = HyperConfig(ArchSpec("mnl"), learning_rate=0.0, num_iterations=1, batch_size=4, seed=2)
    cv = cross_validate(cfg, ds, k=5)
    for acc, held in zip(cv.fold_accuracies, kfold_indices(53, 5, 2)):
        assert acc == pytest.approx(np.mean(ds.y[held] == 0), abs=1e-15)
    assert cv.mean == pytest.approx(np.mean(cv.fold_accuracies))


def test_cv_agrees_with_holdout_for_mnl():
    spec = DgpSpec.load(SCHEMAS.parent / "dgp_linear.json")
    ds = generate(spec, 1000, 0)
    cfg = HyperConfig(ArchSpec("mnl"), learning_rate=0.1, num_iterations=2000, batch_size=200, seed=0)
    cv = cross_validate(cfg, ds, k=5)
    idx = np.random.default_rng(1).permutation(1000)
    hold = evaluate(train("mnl", ds.subset(idx[:800]), None, cfg), ds.subset(idx[800:])).accuracy
    assert abs(cv.mean - hold) <= 0.03


# ---------------------------------------------------------------- search

def _records_key(board):
    return [(r.trial, r.config, r.fold_val, r.fold_test, r.diverged) for r in board]


def test_single_trial_search(gen):
    board = random_search(TINY, "fdnn", toy_dataset(gen, n=60), 1, seed=1)
    assert len(board) == 1 and board.best.trial == 0
    assert len(board.best.fold_val) == 5 and len(board.best.models) == 5


def test_search_independent_of_parallelism(gen):
    ds = toy_dataset(gen, n=60)
    a = random_search(SMALL, "asudnn", ds, 6, parallelism=1, seed=3, k=3)
    b = random_search(SMALL, "asudnn", ds, 6, parallelism=8, seed=3, k=3)
    assert _records_key(a) == _records_key(b)


def test_leaderboard_is_a_sorted_permutation(gen):
    board = random_search(SMALL, "fdnn", toy_dataset(gen, n=60), 8, seed=4, k=3, keep_top=2)
    assert sorted(r.trial for r in board) == list(range(8))
    cv = [r.cv_accuracy for r in board]
    assert cv == sorted(cv, reverse=True)
    assert sum(1 for r in board if r.models) == 2
    for a, b in zip(board.records, board.records[1:]):
        if a.cv_accuracy == b.cv_accuracy:
            assert a.trial < b.trial


def test_diverged_trials_are_kept_and_flagged(gen):
    blowup = HyperSpace(depth=(1,), width=(4,), l1=(1.0,), l2=(1.0,), dropout=(0.01,), batch_norm=(False,),
                        learning_rate=(10.0,), num_iterations=(1000,), batch_size=(8,))
    board = random_search(blowup, "fdnn", toy_dataset(gen, n=60), 2, seed=0, k=2)
    assert len(board) == 2 and all(r.diverged for r in board)
    assert all(r.cv_accuracy == 0.0 and r.test_accuracy == 0.0 for r in board)
    assert "iteration" in board.best.message


def test_search_uses_given_splits(gen):
    ds = toy_dataset(gen, n=90)
    tr, va, te = split(ds, 7)
    a = random_search(TINY, "fdnn", ds, 2, seed=7, k=3)
    b = random_search(TINY, "fdnn", ds, 2, seed=7, k=3, splits=(pooled(tr, va), te))
    assert _records_key(a) == _records_key(b)
    with pytest.raises(ValueError):
        random_search(TINY, "fdnn", ds, 0)


def test_exports(gen, tmp_path):
    ds = toy_dataset(gen, n=60)
    boards = {f: random_search(SMALL, f, ds, 3, seed=2, k=3) for f in ("asudnn", "fdnn")}
    boards["asudnn"].to_csv(tmp_path / "folds.csv", tmp_path / "summary.csv")
    with open(tmp_path / "folds.csv") as fh:
        folds = list(csv.DictReader(fh))
    with open(tmp_path / "summary.csv") as fh:
        summary = list(csv.DictReader(fh))
    assert len(folds) == 9 and len(summary) == 3
    assert set(ARCH_FIELDS["asudnn"] + SHARED_FIELDS) <= set(summary[0])
    rows = sorted_curves(boards)
    assert [r["rank"] for r in rows] == [1, 2, 3, 1, 2, 3]
    for fam in boards:
        accs = [float(r["mean_test_accuracy"]) for r in rows if r["family"] == fam]
        assert accs == sorted(accs, reverse=True)
    assert len(merge(*boards.values())) == 6


# ---------------------------------------------------------------- reports

def _board(values, accuracy, name="learning_rate", family="fdnn"):
    recs = []
    for t, (v, acc) in enumerate(zip(values, accuracy)):
        kw = {"learning_rate": 0.01, "batch_size": 50}
        arch = ArchSpec(family, depth=2, width=4)
        if name in SHARED_FIELDS:
            kw[name] = v
        else:
            arch = ArchSpec(family, **{"depth": 2, "width": 4, name: v})
        recs.append(TrialRecord(t, HyperConfig(arch, **kw), [acc] * 5, [acc] * 5))
    return Leaderboard(recs)


def test_planted_quadratic_vertex():
    lr = np.repeat(np.linspace(0.002, 0.02, 10), 3)
    acc = -(lr - 0.01) ** 2 + 0.6
    rep = hyperparameter_report(_board(lr, acc), "learning_rate")
    assert rep.scale == "linear"
    assert rep.vertex == pytest.approx(0.01, rel=0.10)
    assert not rep.insufficient_support


def test_planted_quadratic_on_geometric_grid_uses_log_axis():
    lr = np.repeat([1e-5, 1e-3, 0.01, 0.1, 0.5], 2)
    acc = -(np.log10(lr) + 2) ** 2 + 0.6
    rep = hyperparameter_report(_board(lr, acc), "learning_rate")
    assert rep.scale == "log"
    assert rep.vertex == pytest.approx(0.01, rel=1e-6)


def test_single_value_is_flagged():
    rep = hyperparameter_report(_board([0.01] * 4, [0.5, 0.6, 0.55, 0.7]), "learning_rate")
    assert rep.insufficient_support and rep.coefficients is None and rep.vertex is None
    assert rep.values == [0.01] and rep.max_accuracy == [0.7] and rep.counts == [4]


@given(st.lists(st.tuples(st.sampled_from([1, 2, 3, 4]), st.floats(0, 1)), min_size=1, max_size=30))
def test_max_dominates_mean(pairs):
    values, accs = zip(*pairs)
    rep = hyperparameter_report(_board(values, accs, name="depth"), "depth")
    assert all(mx >= mn for mx, mn in zip(rep.max_accuracy, rep.mean_accuracy))
    assert sum(rep.counts) == len(pairs)
    json.dumps(rep.to_dict())


def test_absent_hyperparameter_raises():
    with pytest.raises(KeyError):
        hyperparameter_report(_board([1, 2], [0.5, 0.6], name="depth"), "pre_depth")
    with pytest.raises(ValueError):
        hyperparameter_report(Leaderboard([]), "depth")


def test_shipped_dgp_presets_load():
    for name in ("dgp_linear.json", "dgp_nonlinear_asu.json"):
        spec = DgpSpec.load(SCHEMAS.parent / name)
        assert spec.K == 5 and spec.noise_scale > 0
    assert DgpSpec.load(SCHEMAS.parent / "dgp_nonlinear_asu.json").form == sgp_like_spec().form
