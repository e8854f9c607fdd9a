"""Smoke tests for the python bindings against the C++ core."""

import math

import pytest

import obml


def test_normal_cdf_and_inverse():
    assert obml.std_normal_cdf(0.0) == pytest.approx(0.5, abs=1e-15)
    assert obml.std_normal_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-12)
    x = obml.std_normal_cdf_inv(0.3)
    assert obml.std_normal_cdf(x) == pytest.approx(0.3, abs=1e-12)
    with pytest.raises(Exception):
        obml.std_normal_cdf_inv(0.0)


def test_rng_streams_are_deterministic():
    a = obml.RngStream(5, 9)
    b = obml.RngStream(5, 9)
    assert [a.next_u64() for _ in range(8)] == [b.next_u64() for _ in range(8)]
    assert obml.sample_gaussian(2.0, 0.0, a) == 2.0


def test_signal_chain():
    rng = obml.RngStream(1, 0)
    ch = obml.gen_rayleigh_channel(2, 8, rng)
    h = obml.lift_channel(ch)
    t = obml.build_symbol_table(4, 2)
    assert t.count == 16
    params = obml.LinkParams.from_snr_db(10.0)
    r = obml.transmit(h, t.real_vector(3), params, rng)
    y = obml.one_bit_quantize(r)
    assert set(y) <= {-1, 1}
    assert len(y) == 16
    res = obml.ml_detect_csi(y, h, params, t)
    assert 0 <= res.k_star < 16


def test_learning_pipeline():
    rng = obml.RngStream(77, 0)
    ch = obml.gen_rayleigh_channel(2, 6, rng)
    h = obml.lift_channel(ch)
    t = obml.build_symbol_table(4, 2)
    params = obml.LinkParams.from_snr_db(8.0)
    cfg = obml.TrainConfig()
    cfg.n_tr = 12
    cfg.n_s = 3
    cfg.sigma2_init = 0.5
    cfg.delta = 1.0 / 3.0

    def source(k, sigma2):
        return obml.dithered_observation(h, t.real_vector(k), params, sigma2, rng)

    res = obml.adl_train(source, t.count, 12, cfg, params)
    assert res.table.finalized
    assert len(res.trace.undertrained_per_k) == t.count
    det = obml.ml_detect_learned([1] * 12, res.table)
    assert 0 <= det.k_star < t.count


def test_polar_roundtrip_and_llr():
    code = obml.polar_construct(32, 16, 0.0, 8)
    msg = [1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 1, 0, 1]
    cw = obml.polar_encode(msg, code)
    llrs = [(-8.0 if b else 8.0) for b in cw]
    assert list(obml.scl_decode(llrs, code)) == msg

    t = obml.build_symbol_table(4, 2)
    subsets = obml.build_bit_subsets(t)
    assert len(subsets.subset(0, 0, 0)) == t.count // 2


def test_sweep_determinism_and_csv(tmp_path):
    cfg = obml.SimConfig()
    cfg.nu = 2
    cfg.nr = 4
    cfg.snr_grid_db = [0.0]
    cfg.n_tr = 8
    cfg.detectors = ["ml_csi", "adl:2"]
    cfg.min_error_events = 20
    cfg.max_trials = 800
    cfg.data_per_block = 100
    cfg.seed = 12
    cfg.threads = 1
    a = obml.run_ser_sweep(cfg)
    b = obml.run_ser_sweep(cfg)
    rows_a = [(r.snr_db, r.detector, r.metric, r.num, r.den) for r in a.rows]
    rows_b = [(r.snr_db, r.detector, r.metric, r.num, r.den) for r in b.rows]
    assert rows_a == rows_b

    out = tmp_path / "sweep.csv"
    obml.emit_csv(a, str(out))
    parsed = obml.parse_csv(str(out))
    rows_c = [(r.snr_db, r.detector, r.metric, r.num, r.den) for r in parsed.rows]
    assert rows_c == rows_a
    header = out.read_text().splitlines()[0]
    assert header == "snr_db,detector,metric,value,num,den,seed"


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("nu = 2\nbogus = 1\n")
    with pytest.raises(Exception):
        obml.SimConfig.from_file(str(path))


def test_snr_estimator_roundtrip(tmp_path):
    cfg = obml.SimConfig()
    cfg.nu = 2
    cfg.nr = 4
    cfg.snr_grid_db = [0.0, 8.0, 16.0]
    cfg.n_tr = 8
    cfg.detectors = ["adl:2"]
    cfg.est_samples_per_snr = 60
    cfg.est_epochs = 10
    cfg.est_window = 8
    cfg.seed = 9
    model, report = obml.train_snr_model(cfg)
    assert report.validation_rmse < report.label_std
    path = tmp_path / "weights.txt"
    model.save(str(path))
    loaded = obml.MlpModel.load(str(path))
    window = [[1, -1, 1, 1, -1, 1, -1, -1]] * 8
    est = obml.estimate_snr(window, loaded)
    assert math.isfinite(est)
    assert est == obml.estimate_snr(window, model)
