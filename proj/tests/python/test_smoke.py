import json

import numpy as np
import pytest

import stepcount as sc

sc.set_log_level("error")


def test_square_wave_round_trip():
    steps = [(1.0, "left"), (1.5, "right"), (2.0, "left")]
    times = [0.1 * i for i in range(30)]
    wave = sc.build_square_wave(steps, times)
    assert len(wave) == 30
    recovered = sc.signal_to_steps(times, wave)
    assert recovered == pytest.approx([1.0, 1.5, 2.0])


def test_binarize_and_predicted_steps():
    assert sc.binarize([0.49, 0.51, 0.5]) == [0, 1, 0]
    times = [0.1 * i for i in range(15)]
    values = [0.9 if 5 <= i < 10 else 0.1 for i in range(15)]
    assert sc.predicted_steps(values, times) == pytest.approx([0.5, 1.0])
    assert sc.signal_accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75


def test_metrics():
    truth = [1, 2, 3, 4, 5, 6]
    pred = [1.1, 1.9, 3.1, 3.9, 5.1, 5.9]
    assert sc.metric1(truth, pred, 0, 6.5, mode="strict") == (2, 3)
    assert sc.metric1(truth, pred, 0, 6.5) == (3, 3)
    assert sc.metric2(truth, pred, 0, 6.5) == (0, 0)
    assert sc.metric3(truth, pred) == (0, 0)
    with pytest.raises(sc.StepcountError) as info:
        sc.metric1([], [1.0], 0, 2)
    assert info.value.code


def test_generate_and_parse():
    seq, walk = sc.generate_walk("sighted", duration=20.0, sample_rate=25.0, seed=3)
    assert seq.channels.shape == (len(seq), 6)
    parsed = sc.parse_ground_truth_xml(walk.to_xml())
    assert parsed == walk
    again = sc.parse_sensor_csv(seq.to_csv(), seq.participant_id, seq.path_id)
    assert np.array_equal(again.channels, seq.channels)
    slices = sc.extract_usable_spans(walk, seq)
    assert slices
    assert all(s.span_start <= t <= s.span_end for s in slices for t in s.step_times)


def test_model_training_and_checkpoint(tmp_path):
    rng = np.random.default_rng(0)
    model = sc.LstmModel.initialized(input=6, hidden1=8, hidden2=6, seed=2)
    windows = [rng.standard_normal((10, 6)) for _ in range(4)]
    targets = [list((rng.random(10) > 0.5).astype(float)) for _ in range(4)]
    trace = sc.train_windows(model, windows, targets, steps=50)
    assert len(trace) == 50
    assert trace[-1] < trace[0]
    out = model.forward(windows[0])
    assert out.shape == (10,)
    assert np.all((out > 0) & (out < 1))
    path = tmp_path / "m.ckpt"
    sc.save_checkpoint(model, path)
    loaded = sc.load_checkpoint(path)
    assert loaded.parameters == model.parameters
    probs = loaded.predict_slice(rng.standard_normal((25, 6)), timesteps=10)
    assert len(probs) == 25


def test_tiny_experiment(tmp_path):
    data = tmp_path / "data"
    cohort = {"group": "sighted", "count": 2, "paths": 2, "duration_s": 20, "seed": 5}
    assert len(sc.generate_cohort(json.dumps(cohort), data)) == 4
    config = {
        "protocol": "mixed",
        "group": "sighted",
        "dataset_root": str(data),
        "folds": 2,
        "chunk_seconds": 4,
        "train": {"timesteps": 10, "batch_size": 16, "hidden1": 8, "hidden2": 6, "training_steps": 5},
    }
    report = json.loads(sc.run_experiment(json.dumps(config)))
    assert report["protocol"] == "mixed"
    assert len(report["folds"]) == 2
    table = sc.render_report(json.dumps(report), "table")
    assert "report_table.txt" in table
