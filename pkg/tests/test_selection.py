import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import spearmanr

from mixdg.datadomains import DomainDataset, ShiftFamilySpec, generate_synthetic
from mixdg.mixgen import MixupConfig, gen_optd, gen_vald
from mixdg.objectives import ModelBundle
from mixdg.selection import (BestTracker, CheckpointRecord, ContractError, evaluate_accuracy, selection_study,
                             spearman, track_best)
from oracles import confusion_accuracy, first_argmax


class Constant:
    def __init__(self, k, C=4):
        self.k, self.C = k, C

    def predict(self, x):
        out = np.zeros((len(x), self.C))
        out[:, self.k] = 1.0
        return out


class Lookup:
    """Memorises a dataset exactly (predicts the stored label of each training row)."""

    def __init__(self, data):
        self.table = {tuple(r): y for r, y in zip(data.features, data.labels)}
        self.C = data.class_count

    def predict(self, x):
        return np.eye(self.C)[[self.table[tuple(r)] for r in x]]


def balanced(n=40, C=4, seed=0):
    rng = np.random.default_rng(seed)
    return DomainDataset(rng.normal(size=(n, 2)), np.arange(n) % C, np.zeros(n, int), C, 1)


def records(vals, targets=None):
    targets = vals if targets is None else targets
    return [CheckpointRecord(10 * (k + 1), k, v, v, t) for k, (v, t) in enumerate(zip(vals, targets))]


# --- evaluate_accuracy -------------------------------------------------------------

def test_constant_predictor_on_balanced_set():
    assert evaluate_accuracy(Constant(2), balanced()) == 0.25


def test_memorising_model_is_perfect():
    data = balanced()
    assert evaluate_accuracy(Lookup(data), data) == 1.0


@given(st.integers(0, 10_000))
def test_accuracy_matches_confusion_matrix(seed):
    data = generate_synthetic(ShiftFamilySpec(samples_per_domain=50, seed=seed))[1]
    model = ModelBundle.build(2, 4, 3, "erm", seed=seed)
    pred = np.argmax(model.predict(data.features), axis=1)
    assert evaluate_accuracy(model, data) == pytest.approx(confusion_accuracy(pred, data.labels, 4), abs=1e-15)


@given(st.integers(0, 10_000))
def test_accuracy_permutation_invariant(seed):
    data = generate_synthetic(ShiftFamilySpec(samples_per_domain=40, seed=seed))[1]
    model = ModelBundle.build(2, 4, 3, "erm", seed=seed)
    perm = np.random.default_rng(seed).permutation(len(data))
    assert evaluate_accuracy(model, data) == evaluate_accuracy(model, data.subset(perm))


def test_soft_labels_are_contract_error():
    src = generate_synthetic(ShiftFamilySpec(samples_per_domain=40))[0]
    optd = gen_optd(src, MixupConfig(count=20))
    model = ModelBundle.build(2, 4, 3, "erm", seed=0)
    with pytest.raises(ContractError):
        evaluate_accuracy(model, optd)
    vald = gen_vald(src, MixupConfig(count=20))
    assert 0.0 <= evaluate_accuracy(model, vald) <= 1.0


# --- track_best -----------------------------------------------------------------------

def test_increasing_picks_last():
    out = track_best(records([0.1, 0.2, 0.3, 0.4]), "trainsplit")
    assert out.chosen_iteration == 40


def test_tie_keeps_first():
    recs = [CheckpointRecord(10, 0, 0.8, 0.8, 0.5), CheckpointRecord(20, 1, 0.7, 0.7, 0.6),
            CheckpointRecord(40, 2, 0.8, 0.8, 0.9)]
    assert track_best(recs, "vald").chosen_iteration == 10


@given(st.lists(st.sampled_from([0.1, 0.2, 0.3, 0.5, 0.9]), min_size=1, max_size=40), st.integers(0, 10_000))
def test_matches_linear_scan(vals, seed):
    targets = np.random.default_rng(seed).uniform(size=len(vals))
    recs = records(vals, targets)
    out = track_best(recs, "trainsplit")
    k = first_argmax(vals)
    assert out.chosen_snapshot == k
    assert out.regret == max(targets) - targets[k]
    assert track_best(recs, "oracle").regret == 0.0


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.integers(1, 10))
def test_streaming_equals_batch(vals, chunk):
    recs = records(vals, vals[::-1])
    tracker = BestTracker("vald")
    for start in range(0, len(recs), chunk):
        for r in recs[start:start + chunk]:
            tracker.update(r)
    assert tracker.best.snapshot_id == track_best(recs, "vald").chosen_snapshot


def test_missing_signal_is_contract_error():
    with pytest.raises(ContractError):
        track_best([CheckpointRecord(1, 0, 0.5, 0.5, None)], "oracle")


# --- spearman / study --------------------------------------------------------------------

def test_spearman_against_scipy():
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, 5, size=30).astype(float), rng.normal(size=30)
    assert spearman(a, b) == pytest.approx(spearmanr(a, b).statistic, abs=1e-12)


def test_constant_sequence_is_undefined():
    assert spearman([1, 1, 1], [0.1, 0.2, 0.3]) is None


def test_self_signal_study():
    t = [0.2, 0.5, 0.4, 0.9, 0.7]
    rep = selection_study({0: records(t)}, ["trainsplit"])
    assert rep.rows[0].spearman == pytest.approx(1.0) and rep.rows[0].regret == 0.0


def test_reversed_signal_study():
    t = [0.1, 0.3, 0.5, 0.7]
    recs = [CheckpointRecord(k, k, v, v, tt) for k, (v, tt) in enumerate(zip(t[::-1], t))]
    rep = selection_study({0: recs}, ["vald"])
    assert rep.rows[0].spearman == pytest.approx(-1.0)


@given(st.dictionaries(st.integers(0, 20), st.lists(st.floats(0, 1), min_size=2, max_size=15), min_size=1,
                       max_size=4), st.integers(0, 1000))
def test_study_regret_nonnegative(traj, seed):
    rng = np.random.default_rng(seed)
    data = {s: [CheckpointRecord(k, k, v, float(rng.uniform()), float(rng.uniform())) for k, v in enumerate(vals)]
            for s, vals in traj.items()}
    rep = selection_study(data)
    assert all(r.regret >= 0 for r in rep.rows)
    assert all(r.regret == 0 for r in rep.rows if r.policy == "oracle")
    summary = rep.summary()
    assert set(summary) == {"trainsplit", "vald", "oracle"}


def test_study_csv(tmp_path):
    rep = selection_study({3: records([0.1, 0.4, 0.2], [0.3, 0.2, 0.5])})
    rep.write_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "seed,policy,chosen_iter,target_acc,regret,spearman"
    assert len(lines) == 4
