import json

import numpy as np
import pytest

from advrecon import pipeline, synth
from advrecon.config import PipelineConfig
from advrecon.detection import AnomalousSequence
from advrecon.errors import ConfigError, FormatError
from advrecon.signal_io import TimeSeries, WindowConfig

TINY = PipelineConfig(window_size=20, latent_dim=4, encoder_hidden=6, decoder_hidden=6, critic_filters=4,
                      batch_size=16, iterations=2, n_critic=1, half_window=3)


def test_synth_layout():
    ts, labels = synth.generate()
    assert ts.length == 2000
    assert len(labels) == 5
    kinds = [i.kind for i in synth.default_injections(2000)]
    assert kinds.count("spike") == 2 and len(kinds) - 2 == 3
    spikes = [l for l in labels if l[0] == l[1]]
    assert len(spikes) == 2


def test_synth_deterministic():
    a, la = synth.generate(seed=3)
    b, lb = synth.generate(seed=3)
    np.testing.assert_array_equal(a.values, b.values)
    assert la == lb
    assert not np.array_equal(a.values, synth.generate(seed=4)[0].values)


def test_synth_rejects_bad_layout():
    with pytest.raises(ConfigError):
        synth.generate(length=100, injections=[synth.Injection("spike", 100, 1, 1.0)])
    with pytest.raises(ConfigError):
        synth.generate(kind="triangle")


def test_prepare_scales_and_resamples():
    ts = TimeSeries(np.arange(50) * 2, np.sin(np.arange(50.0))[:, None])
    prepared, norm = pipeline.prepare(ts, TINY.updated(target_length=25))
    assert prepared.length == 25
    assert prepared.values.min() == -1 and prepared.values.max() == 1
    assert len(norm.minimum) == 1


def test_inference_windows_cover_tail():
    ts = TimeSeries(np.arange(23), np.zeros((23, 1)))
    ws = pipeline.inference_windows(ts, WindowConfig(10, 4))
    assert ws.start_indices.tolist() == [0, 4, 8, 12, 13]
    assert ws.windows.shape == (5, 10, 1)


def test_detection_with_saved_bundle_matches(tmp_path):
    ts, _ = synth.generate(length=500, seed=2)
    prepared, norm = pipeline.prepare(ts, TINY)
    bundle = pipeline.fit(prepared, norm, TINY)
    again = pipeline.prepare_with_bundle(ts, bundle, TINY)
    np.testing.assert_allclose(again.values, prepared.values, atol=1e-12)
    comp = pipeline.score_components(bundle, prepared, TINY)
    assert comp.x_hat.shape == prepared.values.shape
    assert np.isfinite(comp.critic_smoothed).all()
    bundle.save(tmp_path / "m")
    from advrecon.model import ModelBundle
    _, t1, s1 = pipeline.run_detection(bundle, ts, TINY)
    _, t2, s2 = pipeline.run_detection(ModelBundle.load(tmp_path / "m"), ts, TINY)
    np.testing.assert_array_equal(t1.fused, t2.fused)
    assert s1 == s2
    t1.write_csv(tmp_path / "scores.csv")
    header = (tmp_path / "scores.csv").read_text().splitlines()[0]
    assert header == ",".join(pipeline.SCORE_COLUMNS)


@pytest.mark.parametrize("name,error,mode", pipeline.VARIANTS)
def test_every_variant_scores(name, error, mode):
    rng = np.random.default_rng(0)
    x = np.sin(np.arange(200) / 5.0)[:, None]
    comp = pipeline.ScoreComponents(x, x + rng.normal(0, 0.05, x.shape), rng.normal(size=200), rng.normal(size=200))
    cfg = TINY.updated(fusion=mode, **({"error": error} if error else {}))
    table = pipeline.scores_for(comp, cfg)
    assert table.fused.shape == (200,)
    assert np.isfinite(table.fused).all()


def test_anomalies_json_round_trip(tmp_path):
    seqs = [AnomalousSequence(2, 4, 3.5), AnomalousSequence(9, 9, 7.25)]
    stamps = np.arange(10) * 10 + 1000
    path = tmp_path / "a.json"
    pipeline.write_anomalies(seqs, stamps, path)
    raw = json.loads(path.read_text())
    assert raw[0] == {"start": 2, "end": 4, "score": 3.5, "start_time": 1020, "end_time": 1040}
    assert pipeline.read_anomalies(path) == [(1020, 1040), (1090, 1090)]
    path.write_text('[{"start": 1, "end": 2}]')
    assert pipeline.read_anomalies(path) == [(1, 2)]
    path.write_text('[{"begin": 1}]')
    with pytest.raises(FormatError):
        pipeline.read_anomalies(path)
