import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from choicenet.core import RngStream, Tape, check_gradients
from choicenet.data import ChoiceDataset
from choicenet.models import build_model

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
SCHEMAS = ROOT / "src" / "choicenet" / "presets" / "schemas"


def train_csv_path():
    """User-supplied TRAIN data (not redistributed): env var or data/train.csv."""
    env = os.environ.get("CHOICENET_TRAIN_CSV")
    for p in (env, ROOT / "data" / "train.csv"):
        if p and Path(p).is_file():
            return Path(p)
    return None


def random_inputs(gen, x_dims, d_z, n):
    x = [gen.normal(size=(n, d)) for d in x_dims]
    z = gen.normal(size=(n, d_z))
    return x, z


def toy_dataset(gen, n=60, x_dims=(2, 3, 2), d_z=2) -> ChoiceDataset:
    x, z = random_inputs(gen, x_dims, d_z, n)
    K = len(x_dims)
    return ChoiceDataset(tuple(x), z, gen.integers(0, K, n),
                         tuple(f"alt{k}" for k in range(K)),
                         tuple(tuple(f"a{j}" for j in range(d)) for d in x_dims),
                         tuple(f"z{j}" for j in range(d_z)))


def gradcheck_model(arch, x_dims, d_z, seed, batch=6, batch_norm=False, l1=0.0, l2=0.0,
                    jitter=0.0):
    """Finite-difference check of a freshly initialised model's training loss."""
    gen = np.random.default_rng(seed)
    model = build_model(arch, x_dims, d_z, batch_norm=batch_norm).initialize(RngStream(seed).generator())
    for k in model.params:
        if jitter:
            model.params[k] = model.params[k] + jitter * gen.normal(size=model.params[k].shape)
    x, z = random_inputs(gen, x_dims, d_z, batch)
    y = gen.integers(0, len(x_dims), batch)
    tape = Tape()
    leaves = model.leaves(tape)
    out = model.forward(tape, leaves, x, z, mode="train")
    loss = tape.nll(out.logp, y)
    if l1 or l2:
        loss = tape.add(loss, tape.penalty([leaves[n] for n in model.weight_names], l1, l2))
    return check_gradients(tape, loss, leaves)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
