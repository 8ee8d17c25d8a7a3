import numpy as np
import pytest

from lmlvamp.harness import (
    ALL_ESTIMATORS,
    ConfigError,
    ExperimentConfig,
    RESULTS_HEADER,
    dataset_filename,
    emit_results,
    load_config,
    load_dataset,
    model_filename,
    read_results,
    run_evaluate,
    run_plot,
    save_dataset,
    scenario_dataset,
    scenario_seed,
)


def row(estimator="ORACLE", snr=20.0, inr=30.0, t=1, quant=False, seed=7):
    return {
        "estimator": estimator,
        "snr_db": snr,
        "inr_db": inr,
        "t_iters": t,
        "quantized": quant,
        "rho_mean": 0.123456789123,
        "rate_bound_mean": 1.5,
        "nmse_db_mean": -12.5,
        "n_trials": 10,
        "seed": seed,
    }


def test_results_header_bytes(tmp_path):
    path = tmp_path / "results.csv"
    emit_results([row()], path)
    first = path.read_bytes().split(b"\n")[0]
    assert first == b"estimator,snr_db,inr_db,t_iters,quantized,rho_mean,rate_bound_mean,nmse_db_mean,n_trials,seed"
    assert ",".join(RESULTS_HEADER) == first.decode()


def test_results_round_trip_and_sorting(tmp_path):
    rows = [
        row("ORACLE", inr=40.0),
        row("LINEAR-U", inr=80.0),
        row("LINEAR-U", inr=30.0),
        row("LMLVAMP-K", t=3),
        row("LMLVAMP-K", t=1),
    ]
    path = tmp_path / "results.csv"
    emit_results(rows, path)
    back = read_results(path)
    keys = [(r["estimator"], r["snr_db"], r["inr_db"], r["t_iters"], r["quantized"]) for r in back]
    assert keys == sorted(keys)
    match = [r for r in back if r["estimator"] == "ORACLE"][0]
    assert match["rho_mean"] == pytest.approx(0.123456789, abs=1e-9)
    assert match["n_trials"] == 10
    assert match["quantized"] is False


def test_emit_results_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_results([], tmp_path / "results.csv")


def test_float_formatting_nine_significant_digits(tmp_path):
    path = tmp_path / "results.csv"
    emit_results([row()], path)
    line = path.read_text().splitlines()[1]
    assert ",0.123456789," in line


def test_default_config_matches_table():
    cfg = ExperimentConfig()
    assert cfg.n == 512
    assert cfg.b0 == (0, 100) and cfg.b1 == (300, 400)
    assert cfg.snr_db == (10.0, 20.0)
    assert cfg.inr_db == (30.0, 40.0, 50.0, 60.0, 70.0, 80.0)
    assert cfg.satnr_db == 40.0
    assert cfg.sigma_a2 == pytest.approx(1.0)
    assert cfg.sigma_b2 == pytest.approx(0.1)
    assert cfg.quantizer_bits == 10 and cfg.quantizer_backoff_db == 12.0
    assert cfg.t_iters == (1, 2, 3)
    assert cfg.train.n_samples == 1000
    assert cfg.train.n_epochs == 2000
    assert cfg.train.eta == 0.75
    assert cfg.frontend.p_sat == pytest.approx(1e4)


def test_load_config_overrides_and_unknown_keys(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        "snr_db = [20.0]\n"
        "n_trials = 50\n"
        "[layout]\nn = 128\nb0 = [0, 20]\nb1 = [60, 80]\n"
        "[quantizer]\nenabled = false\n"
        "[train]\nn_epochs = 5\n"
    )
    cfg = load_config(path)
    assert cfg.snr_db == (20.0,)
    assert cfg.n == 128 and cfg.b0 == (0, 20)
    assert not cfg.quantizer_enabled
    assert cfg.train.n_epochs == 5
    bad = tmp_path / "bad.toml"
    bad.write_text("nope = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad)
    bad2 = tmp_path / "bad2.toml"
    bad2.write_text("[train]\nlearning = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad2)


def test_scenario_seed_stable_and_distinct():
    a = scenario_seed(1, "train", 20.0, 70.0, 0, 1)
    assert a == scenario_seed(1, "train", 20.0, 70.0, 0, 1)
    assert a != scenario_seed(1, "eval", 20.0, 70.0, 0, 1)
    assert a != scenario_seed(2, "train", 20.0, 70.0, 0, 1)


def test_filenames():
    assert model_filename(20.0, 70.0, 2, False, True) == "model_snr20_inr70_T2_nq_k.bin"
    assert model_filename(10.0, 30.0, 1, True, False, True) == "model_snr10_inr30_T1_q_u_fb.bin"
    assert dataset_filename(20.0, 40.0, True, False) == "dataset_snr20_inr40_q_u.npz"


def small_config(tmp_path, **kw):
    defaults = dict(
        n=64,
        b0=(0, 12),
        b1=(32, 44),
        snr_db=(10.0,),
        inr_db=(30.0, 50.0),
        t_iters=(1,),
        quantizer_enabled=False,
        estimators=("LINEAR-K", "LINEAR-U", "ORACLE"),
        n_trials=25,
        output_dir=str(tmp_path),
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


def test_dataset_save_load_round_trip(tmp_path):
    cfg = small_config(tmp_path)
    ds = scenario_dataset(cfg, 10.0, 30.0, True, True, 5, "train")
    path = tmp_path / "ds.npz"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.layout == ds.layout
    assert back.fe == ds.fe
    for name in ("mu", "S", "y", "x0"):
        assert np.array_equal(getattr(back, name), getattr(ds, name))
    assert back.quantized and back.interferer_known


def test_run_evaluate_deterministic_bytes(tmp_path):
    cfg = small_config(tmp_path)
    run_evaluate(cfg, log=lambda *_: None)
    first = (tmp_path / "results.csv").read_bytes()
    run_evaluate(cfg, log=lambda *_: None)
    assert (tmp_path / "results.csv").read_bytes() == first
    rows = read_results(tmp_path / "results.csv")
    # every grid point once per estimator
    assert len(rows) == 2 * 3
    assert {r["estimator"] for r in rows} == {"LINEAR-K", "LINEAR-U", "ORACLE"}


def test_run_evaluate_parallel_matches_serial(tmp_path):
    cfg = small_config(tmp_path)
    run_evaluate(cfg, log=lambda *_: None)
    serial = (tmp_path / "results.csv").read_bytes()
    cfg2 = small_config(tmp_path, workers=4)
    run_evaluate(cfg2, log=lambda *_: None)
    assert (tmp_path / "results.csv").read_bytes() == serial


def test_run_evaluate_missing_model(tmp_path):
    cfg = small_config(tmp_path, estimators=("LMLVAMP-K",))
    with pytest.raises(FileNotFoundError):
        run_evaluate(cfg, log=lambda *_: None)


def test_run_plot_and_missing_estimator(tmp_path):
    cfg = small_config(tmp_path)
    run_evaluate(cfg, log=lambda *_: None)
    out = run_plot(cfg, log=lambda *_: None)
    assert out.exists() and out.stat().st_size > 0
    cfg_more = small_config(tmp_path, estimators=ALL_ESTIMATORS)
    with pytest.raises(ValueError, match="LMLVAMP"):
        run_plot(cfg_more, log=lambda *_: None)


def test_cli_selftest_passes(capsys):
    from lmlvamp.cli import main

    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
