"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Corpora are seed-pinned. Lines are printed in the pytest terminal summary.
"""

import filecmp
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from oracles import brute_mode, finite_difference_check, naive_cnn_forward

from maneuverseg.annotate import event_frames, n_frames, to_frame_track
from maneuverseg.cli import main
from maneuverseg.metrics import (
    duration_score,
    evaluate,
    evaluate_segmentation,
    macro_f1,
    overall_accuracy,
    precision_recall_f1,
)
from maneuverseg.models import Cnn1dModel, classify_features, cnn_train, ensemble_vote, rf_train_pipeline
from maneuverseg.pipeline import label_trip, scored_predictions, segment_trip, training_set
from maneuverseg.synth import SynthConfig, generate_corpus, mirror_corpus
from maneuverseg.telemetry import EVENT_CLASSES, ManeuverLabel

L = ManeuverLabel
N_TRIPS = 100
SPLIT = 70


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
    assert ok, detail


def _truth_features(corpus):
    x, y = training_set(corpus)
    return x, [EVENT_CLASSES[i] for i in y]


def _end_to_end(corpus, models, fixed_window_s=None):
    rows = []
    for trip, truth in corpus:
        labeled = label_trip(trip, models, fixed_window_s=fixed_window_s)
        rows.append((trip.trip_id, list(truth.events), scored_predictions(labeled)))
    return evaluate(rows), rows


@pytest.fixture(scope="module")
def zero_corpus():
    return generate_corpus(SynthConfig(seed=7), N_TRIPS)


@pytest.fixture(scope="module")
def noisy_corpus():
    return generate_corpus(SynthConfig(seed=7, noise_sigma=0.05), N_TRIPS)


@pytest.fixture(scope="module")
def zero_models(zero_corpus):
    x, y = training_set(zero_corpus[:SPLIT])
    t0 = time.perf_counter()
    cnn, _ = cnn_train(x, y, seed=1)
    rf, _ = rf_train_pipeline(x, y, seed=1)
    cnn2, _ = cnn_train(x, y, seed=2)
    return {"cnn": cnn, "rf": rf, "cnn2": cnn2, "train_s": time.perf_counter() - t0}


@pytest.fixture(scope="module")
def noisy_cnn(noisy_corpus):
    x, y = training_set(noisy_corpus[:SPLIT])
    return cnn_train(x, y, seed=1)[0]


# ---------------------------------------------------------------- 1

PRF_FIXTURES = [
    ((8, 2, 2), (0.8, 0.8, 0.8)),
    ((5, 0, 0), (1.0, 1.0, 1.0)),
    ((0, 0, 0), (0.0, 0.0, 0.0)),
    ((0, 3, 4), (0.0, 0.0, 0.0)),
    ((3, 1, 0), (0.75, 1.0, 6 / 7)),
    ((1, 1, 1), (0.5, 0.5, 0.5)),
    ((9, 1, 3), (0.9, 0.75, 9 / 11)),
    ((2, 0, 6), (1.0, 0.25, 0.4)),
    ((10, 10, 0), (0.5, 1.0, 2 / 3)),
    ((7, 3, 1), (0.7, 0.875, 7 / 9)),
    ((4, 0, 4), (1.0, 0.5, 2 / 3)),
    ((0, 0, 5), (0.0, 0.0, 0.0)),
    ((50, 25, 25), (2 / 3, 2 / 3, 2 / 3)),
]
DS_FIXTURES = [
    ([(5.0, 5.0)], 1.0),
    ([(5.0, 5.5)], 0.5),
    ([(5.0, 7.0)], 0.0),
    ([(4.0, 4.25), (6.0, 6.0)], 0.875),
    ([(3.0, None)], 0.0),
    ([(3.0, 3.0), (3.0, None)], 0.5),
    ([(4.0, 5.0)], 0.0),
    ([(4.0, 4.1), (5.0, 5.2), (6.0, 6.3), (7.0, 9.0)], 0.6),
    ([(10.0, 9.5), (2.0, 2.5)], 0.5),
]
OA_FIXTURES = [((1.0, 1.0), 1.0), ((0.9, 0.8), 0.72), ((0.5, 0.0), 0.0), ((0.6, 0.5), 0.3), ((0.0, 1.0), 0.0)]


def test_criterion_1_metric_formulas():
    t0 = time.perf_counter()
    worst = 0.0
    for counts, expected in PRF_FIXTURES:
        worst = max(worst, *(abs(a - b) for a, b in zip(precision_recall_f1(*counts), expected)))
    for pairs, expected in DS_FIXTURES:
        worst = max(worst, abs(duration_score(pairs) - expected))
    for (f1, ds), expected in OA_FIXTURES:
        worst = max(worst, abs(overall_accuracy(f1, ds) - expected))
    elapsed = time.perf_counter() - t0
    n = len(PRF_FIXTURES) + len(DS_FIXTURES) + len(OA_FIXTURES)
    record(
        1,
        n >= 20 and worst <= 1e-12 and elapsed < 1.0,
        f"{n} fixtures, max error {worst:.1e} (<= 1e-12), {elapsed:.3f} s (< 1 s)",
    )


# ---------------------------------------------------------------- 2


def _segmentation_report(corpus):
    rows = []
    for trip, truth in corpus:
        rows.append((trip.trip_id, list(truth.events), segment_trip(trip).events))
    return evaluate_segmentation(rows, iou_min=0.5)


def test_criterion_2_boundary_recovery(zero_corpus, noisy_corpus):
    t0 = time.perf_counter()
    clean = _segmentation_report(zero_corpus)
    noisy = _segmentation_report(noisy_corpus)
    elapsed = time.perf_counter() - t0
    clean_ds = min(r["duration_score"] for r in clean["per_class"].values())
    clean_recall = min(r["recall"] for r in clean["per_class"].values())
    noisy_ds = min(r["duration_score"] for r in noisy["per_class"].values())
    ok = (
        len(clean["per_class"]) == 6
        and clean_ds >= 0.95
        and clean_recall >= 0.98
        and noisy_ds >= 0.75
        and elapsed < 60
    )
    record(
        2,
        ok,
        f"zero noise min DS {clean_ds:.4f} (>= 0.95), min recall {clean_recall:.4f} (>= 0.98); "
        f"noise 0.05 min DS {noisy_ds:.4f} (>= 0.75); {elapsed:.1f} s (< 60 s)",
    )


# ---------------------------------------------------------------- 3


def test_criterion_3_ema_beats_fixed_windows(noisy_corpus):
    t0 = time.perf_counter()
    train, test = noisy_corpus[:SPLIT], noisy_corpus[SPLIT:]
    scores = {}
    for window in (None, 5.0, 3.0):
        x, y = training_set(train, fixed_window_s=window)
        model, _ = cnn_train(x, y, seed=1)
        scores[window] = _end_to_end(test, [model], window)[0].macro_f1
    elapsed = time.perf_counter() - t0
    ema, w5, w3 = scores[None], scores[5.0], scores[3.0]
    record(
        3,
        ema > w5 and ema > w3 and w5 > w3 and elapsed < 300,
        f"macro-F1 EMA {ema:.4f} > 5 s {w5:.4f} > 3 s {w3:.4f}; {elapsed:.1f} s (< 300 s)",
    )


# ---------------------------------------------------------------- 4


def test_criterion_4_cnn_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    model = Cnn1dModel.init(rng, filters=8, kernel_size=3, pool_regions=4)
    model.conv_b[:] = rng.normal(0, 0.1, 8)
    model.dense_b[:] = rng.normal(0, 0.1, 6)
    x, y = rng.normal(size=(6, 50)), rng.integers(0, 6, 6)
    grad_ratio = finite_difference_check(model, x, y)
    probe = rng.normal(size=(5, 50))
    forward_err = max(
        float(np.max(np.abs(p - naive_cnn_forward(model, row))))
        for row, p in zip(probe, model.predict_proba(probe))
    )
    full = Cnn1dModel.init(rng, pool_regions=4)
    full.conv_b[:] = rng.normal(0, 0.1, 250)
    p = full.predict_proba(rng.normal(size=(10_000, 50)) * 3)
    sum_err = float(np.max(np.abs(p.sum(axis=1) - 1)))
    elapsed = time.perf_counter() - t0
    ok = grad_ratio <= 1.0 and forward_err <= 1e-10 and sum_err <= 1e-9 and elapsed < 30
    record(
        4,
        ok,
        f"gradient error {grad_ratio:.2e} of the 1e-4 rel / 1e-7 abs bound; forward vs naive "
        f"{forward_err:.1e} (<= 1e-10); softmax sum error {sum_err:.1e} (<= 1e-9); {elapsed:.1f} s (< 30 s)",
    )


# ---------------------------------------------------------------- 5 and 6


def test_criterion_5_classifier_separability(zero_corpus, zero_models):
    t0 = time.perf_counter()
    x, truth = _truth_features(zero_corpus[SPLIT:])
    f1 = {}
    for name in ("cnn", "rf"):
        pred = [lab for lab, _ in classify_features([zero_models[name]], x)]
        f1[name] = macro_f1(truth, pred)
    elapsed = time.perf_counter() - t0 + zero_models["train_s"]
    gap = abs(f1["cnn"] - f1["rf"])
    record(
        5,
        f1["cnn"] >= 0.95 and f1["rf"] >= 0.95 and gap < 0.05 and elapsed < 600,
        f"held-out macro-F1 CNN {f1['cnn']:.4f}, RF {f1['rf']:.4f} (>= 0.95), gap {gap:.4f} (< 0.05); "
        f"{elapsed:.1f} s (< 600 s)",
    )


def test_criterion_6_ensemble(zero_corpus, zero_models):
    x, truth = _truth_features(zero_corpus[SPLIT:])
    members = [zero_models[k] for k in ("cnn", "rf", "cnn2")]
    single = [macro_f1(truth, [lab for lab, _ in classify_features([m], x)]) for m in members]
    joint = macro_f1(truth, [lab for lab, _ in classify_features(members, x)])
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(10_000):
        triple = [EVENT_CLASSES[i] for i in rng.integers(0, 6, 3)]
        mismatches += ensemble_vote(triple)[0] is not brute_mode(triple)
    floor = min(single) - 0.01
    record(
        6,
        joint >= floor and mismatches == 0,
        f"ensemble macro-F1 {joint:.4f} >= min single {min(single):.4f} - 0.01; "
        f"vote vs brute-force mode: {mismatches} mismatches in 10^4 triples",
    )


# ---------------------------------------------------------------- 7


def test_criterion_7_heuristics(noisy_cnn):
    cfg = SynthConfig(seed=21, noise_sigma=0.05, stop_probability=0.5, anomalies_per_trip=3, trip_len_s=400)
    corpus = generate_corpus(cfg, 20)
    t0 = time.perf_counter()
    report, rows = _end_to_end(corpus, [noisy_cnn])
    elapsed = time.perf_counter() - t0
    n_stops = sum(len(t.of_class(L.STOP)) for _, t in corpus)
    n_anom = sum(len(t.of_class(L.ANOMALY)) for _, t in corpus)
    stop_recall = report.recall.get(L.STOP, 0.0)
    leaked = 0
    for trip_id, truth, preds in rows:
        for a in (e for e in truth if e.label is L.ANOMALY):
            leaked += any(
                p.label.is_event and p.start_idx < a.end_idx and a.start_idx < p.end_idx for p in preds
            )
    record(
        7,
        n_stops > 0 and n_anom > 0 and stop_recall == 1.0 and leaked == 0 and elapsed < 10,
        f"stop recall {stop_recall:.4f} over {n_stops} stops (== 1.0); "
        f"{leaked} of {n_anom} anomaly spikes labeled as a maneuver (== 0); {elapsed:.1f} s (< 10 s)",
    )


# ---------------------------------------------------------------- 8


def test_criterion_8_mirror_equivariance(noisy_corpus):
    x, y = training_set(noisy_corpus[:SPLIT], mirror=True)
    model, _ = cnn_train(x, y, seed=1)
    test = noisy_corpus[SPLIT:]
    plain = _end_to_end(test, [model])[0].macro_f1
    mirrored = _end_to_end(mirror_corpus(test), [model])[0].macro_f1
    diff = abs(plain - mirrored)
    record(8, diff < 0.02, f"macro-F1 {plain:.4f} vs mirrored {mirrored:.4f}, change {diff:.4f} (< 0.02)")


# ---------------------------------------------------------------- 9


def test_criterion_9_frame_partition(noisy_corpus, noisy_cnn):
    bad_cover = bad_count = n_events = 0
    for trip, _ in noisy_corpus[SPLIT:]:
        labeled = label_trip(trip, [noisy_cnn])
        for fps in (10.0, 25.0, 30.0, 60.0):
            track = to_frame_track(trip, labeled, fps)
            total = n_frames(len(trip), trip.sample_rate_hz, fps)
            hits = np.zeros(total, dtype=int)
            for ev in labeled:
                r = event_frames(ev.start_idx, ev.end_idx, trip.sample_rate_hz, fps)
                frames = [j for j in r if j < total]
                hits[frames] += 1
                n_events += 1
                expected = len(ev.segment) / trip.sample_rate_hz * fps
                same = sum(track.labels[j] is ev.label for j in frames)
                bad_count += abs(same - expected) > 1 or same != len(frames)
            bad_cover += len(track) != total or bool(np.any(hits > 1))
    record(
        9,
        bad_cover == 0 and bad_count == 0,
        f"{bad_cover} tracks with gaps or overlaps, {bad_count} of {n_events} events off by more than one frame",
    )


# ---------------------------------------------------------------- 10


def _cli_run(root):
    c = str(root / "corpus")
    steps = [
        ["synth", "--out", c, "--n-trips", "6", "--seed", "5", "--noise-sigma", "0.05"],
        ["segment", "--input", c, "--output", str(root / "segments.jsonl")],
        ["train", "--corpus", c, "--kind", "cnn", "--seed", "1", "--output", str(root / "cnn.mseg"),
         "--report", str(root / "cnn.json")],
        ["train", "--corpus", c, "--kind", "rf", "--seed", "1", "--output", str(root / "rf.mseg")],
        ["classify", "--input", c, "--model", str(root / "cnn.mseg"), "--model", str(root / "rf.mseg"),
         "--output", str(root / "events.jsonl")],
        ["evaluate", "--events", str(root / "events.jsonl"), "--truth", f"{c}/truth.jsonl",
         "--output", str(root / "report.json")],
        ["annotate", "--input", f"{c}/trip_0000.csv", "--events", str(root / "events.jsonl"),
         "--fps", "25", "--output", str(root / "frames.csv")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv


def test_criterion_10_determinism(tmp_path):
    _cli_run(tmp_path / "a")
    _cli_run(tmp_path / "b")
    names = ["segments.jsonl", "cnn.mseg", "rf.mseg", "cnn.json", "events.jsonl", "report.json", "frames.csv"]
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    record(
        10,
        not mismatch and not errors,
        f"{len(names) - len(mismatch) - len(errors)} of {len(names)} artifacts byte-identical"
        + (f"; differing: {mismatch + errors}" if mismatch or errors else ""),
    )
