import numpy as np

from maneuverseg.heuristics import HeuristicConfig
from maneuverseg.models import CnnConfig, cnn_train
from maneuverseg.pipeline import label_trip, segment_trip, training_set, window_examples
from maneuverseg.synth import SynthConfig, generate_corpus
from maneuverseg.telemetry import LabeledEvent, ManeuverLabel, Segment

L = ManeuverLabel


def test_label_trip_tiles_every_sample():
    corpus = generate_corpus(SynthConfig(seed=3, noise_sigma=0.05, stop_probability=0.5, anomalies_per_trip=2, trip_len_s=400), 4)
    x, y = training_set(corpus)
    model, _ = cnn_train(x, y, seed=0, cfg=CnnConfig(filters=16, epochs=5))
    for trip, _ in corpus:
        out = label_trip(trip, [model])
        assert out[0].start_idx == 0 and out[-1].end_idx == len(trip)
        for a, b in zip(out, out[1:]):
            assert a.end_idx == b.start_idx


def test_fixed_mode_segments_are_tiles():
    trip, _ = generate_corpus(SynthConfig(seed=1), 1)[0]
    seg = segment_trip(trip, fixed_window_s=5.0)
    assert seg.events and all(len(s) == 150 and s.start_idx % 150 == 0 for s in seg.events)


def test_window_examples_majority_rule():
    from maneuverseg.telemetry import TelemetryTrip

    trip = TelemetryTrip("w", 10.0, np.zeros(200), np.ones(200))
    truth = [LabeledEvent(Segment(40, 95), L.RIGHT_TURN)]
    got = window_examples(trip, truth, 3.0)
    # tiles [30,60) and [60,90) are at least half covered, [90,120) is not
    assert [(e.start_idx, e.end_idx) for e in got] == [(30, 60), (60, 90)]


def test_training_set_mirror_doubles():
    corpus = generate_corpus(SynthConfig(seed=2), 2)
    x, y = training_set(corpus)
    xm, ym = training_set(corpus, mirror=True)
    assert xm.shape[0] == 2 * x.shape[0]
    np.testing.assert_array_equal(xm[x.shape[0]:], -x)


def test_stopped_vehicle_spans_are_stops():
    corpus = generate_corpus(SynthConfig(seed=4, stop_probability=1.0, trip_len_s=400), 2)
    x, y = training_set(corpus)
    model, _ = cnn_train(x, y, seed=0, cfg=CnnConfig(filters=16, epochs=5))
    for trip, truth in corpus:
        out = label_trip(trip, [model], heur=HeuristicConfig())
        for stop in truth.of_class(L.STOP):
            hits = [e for e in out if e.label is L.STOP and e.segment.iou(stop.segment) > 0.9]
            assert hits
