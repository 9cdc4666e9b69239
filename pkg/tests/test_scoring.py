import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridj.dataset import WorkerPrediction
from hybridj.errors import EmptyGroup, InvalidConfig, LengthMismatch, MissingScore, MixedConditions
from hybridj.metrics import confusion
from hybridj.scoring import (
    COMPAS, CUTOFFS, HNR, HWR, RiskScore, aggregate_human_score, all_scores, binarize, calibration_sweep,
    canonical_scorer, compas_scores, human_scores, score_array, worker_agreement_rate, write_calibration_csv,
)

from conftest import make_dataset


def _group(votes, cond="no_race", did=1):
    return [WorkerPrediction(w + 1, did, cond, v) for w, v in enumerate(votes)]


@pytest.mark.parametrize("votes,expected", [
    ([1] * 12 + [0] * 8, 6.0),
    ([0] * 20, 0.0),
    ([1] * 20, 10.0),
    ([1] * 5 + [0] * 5, 5.0),
    ([1, 0, 0], 10 / 3),
])
def test_aggregate_human_score(votes, expected):
    s = aggregate_human_score(_group(votes))
    assert s.value == pytest.approx(expected, abs=1e-12)
    assert s.scorer == HNR
    assert aggregate_human_score(_group(votes, "with_race")).scorer == HWR


def test_generalized_scaling_matches_twenty_worker_formula():
    # duplicating each of 10 votes gives a 20-worker panel scored by sum/2
    votes = [1, 1, 0, 1, 0, 0, 1, 0, 1, 0]
    assert aggregate_human_score(_group(votes)).value == aggregate_human_score(_group(votes * 2)).value


@given(st.integers(1, 40), st.data())
def test_aggregate_preserves_vote_order(n, data):
    k1 = data.draw(st.integers(0, n))
    k2 = data.draw(st.integers(0, n))
    s1 = aggregate_human_score(_group([1] * k1 + [0] * (n - k1))).value
    s2 = aggregate_human_score(_group([1] * k2 + [0] * (n - k2))).value
    assert (k1 < k2) == (s1 < s2)
    assert 0 <= s1 <= 10


def test_aggregate_errors():
    with pytest.raises(EmptyGroup):
        aggregate_human_score([])
    with pytest.raises(MixedConditions):
        aggregate_human_score(_group([1, 0]) + _group([1], "with_race"))
    with pytest.raises(MixedConditions):
        aggregate_human_score(_group([1, 0]) + _group([1], did=2))


def test_worker_agreement_rate():
    assert worker_agreement_rate([[1, 1, 1, 0]]) == 0.75
    assert worker_agreement_rate([[1, 1], [0, 0, 0]]) == 1.0
    assert worker_agreement_rate([[1] * 16 + [0] * 4, [1] * 16 + [0] * 4]) == pytest.approx(0.8)
    assert worker_agreement_rate([[1, 0]]) == 0.5
    with pytest.raises(EmptyGroup):
        worker_agreement_rate([])
    with pytest.raises(EmptyGroup):
        worker_agreement_rate([[]])


def test_worker_agreement_rate_on_dataset():
    ds = make_dataset([(3, 0), (8, 1)], votes=[4, 20], n_workers=20)
    # groups: 4/20 (0.8) and 20/20 (1.0), both conditions
    assert worker_agreement_rate(ds) == pytest.approx(0.9)


@pytest.mark.parametrize("value,cutoff,expected", [(5.0, 5, True), (4.999, 5, False), (0, 1, False), (10, 10, True)])
def test_binarize(value, cutoff, expected):
    s = binarize(RiskScore(1, HNR, value), cutoff)
    assert s.binarized is expected
    assert s.cutoff == cutoff
    assert binarize(s, cutoff) == s


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_binarize_monotone(a, b, c):
    lo, hi = sorted((a, b))
    assert binarize(RiskScore(1, HNR, lo), c).binarized <= binarize(RiskScore(1, HNR, hi), c).binarized


def test_scores_from_dataset():
    ds = make_dataset([(3, 0), (8, 1)], votes=[(4, 6), (12, 14)])
    assert {i: s.value for i, s in compas_scores(ds).items()} == {1: 3, 2: 8}
    assert {i: s.value for i, s in human_scores(ds, "no_race").items()} == {1: 2.0, 2: 6.0}
    assert {i: s.value for i, s in human_scores(ds, "with_race").items()} == {1: 3.0, 2: 7.0}
    scores = all_scores(ds)
    assert set(scores) == {COMPAS, HNR, HWR}
    assert score_array(scores[HWR], [2, 1]).tolist() == [7.0, 3.0]
    with pytest.raises(MissingScore):
        score_array(scores[HWR], [3])


def test_canonical_scorer():
    assert canonical_scorer("C") == COMPAS
    assert canonical_scorer("hnr") == HNR
    with pytest.raises(InvalidConfig):
        canonical_scorer("X")


def test_calibration_perfect_scorer():
    labels = [1, 0, 1, 0, 0]
    scores = [RiskScore(i, COMPAS, 10 if y else 1) for i, y in enumerate(labels)]
    curve = calibration_sweep(scores, labels)
    assert [p.cutoff for p in curve.points] == list(CUTOFFS)
    for p in curve.points[1:]:
        assert p.accuracy == 1.0


def test_calibration_constant_scorer():
    labels = [1, 0, 1, 0]
    curve = calibration_sweep([RiskScore(i, HNR, 5) for i in range(4)], labels)
    p5 = curve.points[4]
    assert (p5.cutoff, p5.fpr, p5.fnr) == (5, 1.0, 0.0)
    assert curve.points[5].fpr == 0.0 and curve.points[5].fnr == 1.0


def test_calibration_length_mismatch():
    with pytest.raises(LengthMismatch):
        calibration_sweep([RiskScore(1, HNR, 5)], [1, 0])


def test_calibration_matches_direct_counts(synth_small):
    # oracle: recount confusion entries at every cutoff by hand
    scores = all_scores(synth_small)
    ids = synth_small.ids
    y = synth_small.labels(ids)
    for s in (COMPAS, HNR, HWR):
        values = score_array(scores[s], ids)
        curve = calibration_sweep([scores[s][i] for i in ids], y, s)
        fprs, fnrs = [], []
        for p in curve.points:
            pred = values >= p.cutoff
            tp = int(np.sum(pred & (y == 1)))
            fp = int(np.sum(pred & (y == 0)))
            fn = int(np.sum(~pred & (y == 1)))
            tn = int(np.sum(~pred & (y == 0)))
            assert p.accuracy == pytest.approx((tp + tn) / len(y), abs=1e-12)
            assert p.fpr == pytest.approx(fp / (fp + tn), abs=1e-12)
            assert p.fnr == pytest.approx(fn / (fn + tp), abs=1e-12)
            fprs.append(p.fpr)
            fnrs.append(p.fnr)
        assert all(a >= b for a, b in zip(fprs, fprs[1:]))
        assert all(a <= b for a, b in zip(fnrs, fnrs[1:]))


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 20), st.booleans()), min_size=2, max_size=60))
def test_calibration_monotone_any_scores(pairs):
    labels = [int(y) for _, y in pairs]
    if len(set(labels)) < 2:
        return
    curve = calibration_sweep([RiskScore(i, HNR, v / 2) for i, (v, _) in enumerate(pairs)], labels)
    fpr = [p.fpr for p in curve.points]
    fnr = [p.fnr for p in curve.points]
    assert all(a >= b for a, b in zip(fpr, fpr[1:]))
    assert all(a <= b for a, b in zip(fnr, fnr[1:]))


def test_write_calibration_csv(tmp_path):
    curve = calibration_sweep([RiskScore(1, HNR, 5), RiskScore(2, HNR, 2)], [1, 0], HNR)
    path = tmp_path / "calibration.csv"
    write_calibration_csv(path, [curve])
    lines = path.read_text().splitlines()
    assert lines[0] == "scorer,cutoff,accuracy,fpr,fnr"
    assert len(lines) == 11
    assert lines[1].startswith("HNR,1,")


def test_confusion_agrees_with_binarization():
    s = [RiskScore(i, COMPAS, v) for i, v in enumerate([1, 5, 7, 4])]
    c = confusion([x.binarized for x in s], [0, 1, 0, 1])
    assert (c.tp, c.fp, c.tn, c.fn) == (1, 1, 1, 1)
