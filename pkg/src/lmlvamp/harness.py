"""Experiment orchestration: scenario grids, training driver, Monte Carlo
evaluation, CSV emission, and rate-vs-INR plots."""

from __future__ import annotations

import csv
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import evaluate, linear_wiener, oracle_estimate
from .frontend import FrontEndParams
from .learned import Dataset, TrainConfig, infer, make_dataset, train
from .neural import load_model, save_model
from .spectrum import BandLayout

ALL_ESTIMATORS = ("LMLVAMP-K", "LMLVAMP-U", "LINEAR-K", "LINEAR-U", "ORACLE")

RESULTS_HEADER = [
    "estimator",
    "snr_db",
    "inr_db",
    "t_iters",
    "quantized",
    "rho_mean",
    "rate_bound_mean",
    "nmse_db_mean",
    "n_trials",
    "seed",
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    n: int = 512
    b0: tuple[int, int] = (0, 100)
    b1: tuple[int, int] = (300, 400)
    snr_db: tuple[float, ...] = (10.0, 20.0)
    inr_db: tuple[float, ...] = (30.0, 40.0, 50.0, 60.0, 70.0, 80.0)
    satnr_db: float = 40.0
    sigma_a2_db: float = 0.0
    sigma_b2_db: float = -10.0
    quantizer_enabled: bool = True
    quantizer_bits: int = 10
    quantizer_backoff_db: float = 12.0
    t_iters: tuple[int, ...] = (1, 2, 3)
    estimators: tuple[str, ...] = ALL_ESTIMATORS
    n_trials: int = 500
    workers: int = 1
    seed: int = 0
    output_dir: str = "out"
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def layout(self) -> BandLayout:
        return BandLayout(self.n, (tuple(self.b0), tuple(self.b1)))

    @property
    def sigma_a2(self) -> float:
        return 10.0 ** (self.sigma_a2_db / 10.0)

    @property
    def sigma_b2(self) -> float:
        return 10.0 ** (self.sigma_b2_db / 10.0)

    @property
    def frontend(self) -> FrontEndParams:
        return FrontEndParams(
            p_sat=10.0 ** (self.satnr_db / 10.0) * self.sigma_a2,
            sigma_a2=self.sigma_a2,
            sigma_b2=self.sigma_b2,
        )

    def quant_options(self) -> tuple[bool, ...]:
        return (False, True) if self.quantizer_enabled else (False,)

    def resolved_output_dir(self) -> Path:
        return Path(os.environ.get("LMLVAMP_OUTPUT_DIR", self.output_dir))


_CONFIG_KEYS = {
    "snr_db",
    "inr_db",
    "satnr_db",
    "sigma_a2_db",
    "sigma_b2_db",
    "t_iters",
    "estimators",
    "n_trials",
    "workers",
    "seed",
    "output_dir",
}
_LAYOUT_KEYS = {"n", "b0", "b1"}
_QUANT_KEYS = {"enabled", "bits", "backoff_db"}
_TRAIN_KEYS = {
    "t_max",
    "eta",
    "n_samples",
    "n_epochs",
    "batch_size",
    "lr0",
    "lr_decay",
    "fix_beta",
    "share_weights",
    "seed",
}


def load_config(path=None) -> ExperimentConfig:
    """Parse a TOML config; every omitted key keeps its standard default value."""
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib

    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    kwargs = {}
    for key, value in data.items():
        if key == "layout":
            _check_keys(value, _LAYOUT_KEYS, "layout")
            if "n" in value:
                kwargs["n"] = int(value["n"])
            if "b0" in value:
                kwargs["b0"] = tuple(value["b0"])
            if "b1" in value:
                kwargs["b1"] = tuple(value["b1"])
        elif key == "quantizer":
            _check_keys(value, _QUANT_KEYS, "quantizer")
            if "enabled" in value:
                kwargs["quantizer_enabled"] = bool(value["enabled"])
            if "bits" in value:
                kwargs["quantizer_bits"] = int(value["bits"])
            if "backoff_db" in value:
                kwargs["quantizer_backoff_db"] = float(value["backoff_db"])
        elif key == "train":
            _check_keys(value, _TRAIN_KEYS, "train")
            kwargs["train"] = TrainConfig(**value)
        elif key in _CONFIG_KEYS:
            if key in ("snr_db", "inr_db", "t_iters", "estimators"):
                kwargs[key] = tuple(value)
            else:
                kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key: {key!r}")
    cfg = ExperimentConfig(**kwargs)
    unknown = set(cfg.estimators) - set(ALL_ESTIMATORS)
    if unknown:
        raise ConfigError(f"unknown estimators: {sorted(unknown)}")
    return cfg


def _check_keys(table, allowed, section):
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"unknown config key in [{section}]: {sorted(extra)}")


def scenario_seed(seed: int, purpose: str, *parts) -> int:
    """Stable sub-seed for one (purpose, scenario) combination."""
    text = purpose + "|" + "|".join(f"{p:g}" if isinstance(p, float) else str(p) for p in parts)
    return (seed << 32) ^ zlib.crc32(text.encode())


def model_filename(snr_db, inr_db, t, quantized, known, fix_beta=False) -> str:
    tag = "q" if quantized else "nq"
    kind = "k" if known else "u"
    fb = "_fb" if fix_beta else ""
    return f"model_snr{snr_db:g}_inr{inr_db:g}_T{t}_{tag}_{kind}{fb}.bin"


def dataset_filename(snr_db, inr_db, quantized, known) -> str:
    tag = "q" if quantized else "nq"
    kind = "k" if known else "u"
    return f"dataset_snr{snr_db:g}_inr{inr_db:g}_{tag}_{kind}.npz"


def scenario_dataset(cfg: ExperimentConfig, snr_db, inr_db, quantized, known, n_samples, purpose) -> Dataset:
    return make_dataset(
        cfg.layout,
        cfg.frontend,
        snr_db,
        inr_db,
        interferer_known=known,
        n_samples=n_samples,
        seed=scenario_seed(cfg.seed, purpose, snr_db, inr_db, int(quantized), int(known)),
        quantizer_bits=cfg.quantizer_bits if quantized else None,
        quantizer_backoff_db=cfg.quantizer_backoff_db,
    )


def save_dataset(ds: Dataset, path):
    np.savez(
        path,
        n=ds.layout.n,
        bands=np.asarray(ds.layout.bands),
        p_sat=ds.fe.p_sat,
        sigma_a2=ds.fe.sigma_a2,
        sigma_b2=ds.fe.sigma_b2,
        quant_bits=ds.fe.quantizer.bits if ds.fe.quantizer else 0,
        quant_backoff_db=ds.fe.quantizer.backoff_db if ds.fe.quantizer else 0.0,
        quant_full_scale=ds.fe.quantizer.full_scale if ds.fe.quantizer else 0.0,
        mu=ds.mu,
        S=ds.S,
        y=ds.y,
        x0=ds.x0,
        meta=np.asarray([ds.snr_db, ds.inr_db, float(ds.quantized), float(ds.interferer_known)]),
    )


def load_dataset(path) -> Dataset:
    from .frontend import QuantizerParams

    with np.load(path) as data:
        layout = BandLayout(int(data["n"]), tuple(tuple(b) for b in data["bands"]))
        quant = None
        if int(data["quant_bits"]):
            quant = QuantizerParams(
                int(data["quant_bits"]), float(data["quant_backoff_db"]), float(data["quant_full_scale"])
            )
        fe = FrontEndParams(float(data["p_sat"]), float(data["sigma_a2"]), float(data["sigma_b2"]), quant)
        snr_db, inr_db, quantized, known = data["meta"]
        return Dataset(
            layout=layout,
            fe=fe,
            mu=data["mu"],
            S=data["S"],
            y=data["y"],
            x0=data["x0"],
            snr_db=float(snr_db),
            inr_db=float(inr_db),
            quantized=bool(quantized),
            interferer_known=bool(known),
        )


def needs_models(estimators) -> list[bool]:
    """Which of (known, unknown) learned variants the estimator list requires."""
    return ["LMLVAMP-K" in estimators, "LMLVAMP-U" in estimators]


def run_generate(cfg: ExperimentConfig, log=print):
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    want_k, want_u = needs_models(cfg.estimators)
    for snr in cfg.snr_db:
        for inr in cfg.inr_db:
            for quant in cfg.quant_options():
                for known, wanted in ((True, want_k), (False, want_u)):
                    if not wanted:
                        continue
                    path = out / dataset_filename(snr, inr, quant, known)
                    if path.exists():
                        continue
                    ds = scenario_dataset(cfg, snr, inr, quant, known, cfg.train.n_samples, "train")
                    save_dataset(ds, path)
                    log(f"wrote {path}")


def run_train(cfg: ExperimentConfig, log=print):
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    want_k, want_u = needs_models(cfg.estimators)
    for snr in cfg.snr_db:
        for inr in cfg.inr_db:
            for quant in cfg.quant_options():
                for known, wanted in ((True, want_k), (False, want_u)):
                    if not wanted:
                        continue
                    ds_path = out / dataset_filename(snr, inr, quant, known)
                    if ds_path.exists():
                        ds = load_dataset(ds_path)
                    else:
                        ds = scenario_dataset(cfg, snr, inr, quant, known, cfg.train.n_samples, "train")
                    for t in cfg.t_iters:
                        path = out / model_filename(snr, inr, t, quant, known, cfg.train.fix_beta)
                        if path.exists():
                            continue
                        tcfg = replace(cfg.train, t_max=t)
                        model, tlog = train(ds, tcfg)
                        save_model(model, path)
                        _write_train_log(path.with_suffix(".log.csv"), tlog)
                        log(f"trained {path} (final loss {tlog[-1]['mean_loss']:.6g})")


def _write_train_log(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "lr", "clamp_count"])
        for row in rows:
            writer.writerow([row["epoch"], f"{row['mean_loss']:.9g}", f"{row['lr']:.9g}", row["clamp_count"]])


def _eval_scenario(cfg: ExperimentConfig, snr, inr, t, quant, models, estimators):
    """Monte Carlo metrics for one grid point; returns aggregate rows."""
    layout = cfg.layout
    band = layout.band_indices(0)
    eval_seed = scenario_seed(cfg.seed, "eval", snr, inr, int(quant))
    ds_k = scenario_dataset(cfg, snr, inr, quant, True, cfg.n_trials, "eval")
    fe = ds_k.fe
    s_unknown = scenario_dataset(cfg, snr, inr, quant, False, 1, "eval").S[0]

    def one_trial(i):
        kprior, y, x0 = ds_k.entry(i)
        from .spectrum import PriorSpec

        uprior = PriorSpec(layout, np.zeros(layout.n, dtype=complex), s_unknown)
        metrics = {}
        for name in estimators:
            if name == "LMLVAMP-K":
                xhat, _ = infer(y, kprior, models["k"])
            elif name == "LMLVAMP-U":
                xhat, _ = infer(y, uprior, models["u"])
            elif name == "LINEAR-K":
                xhat = linear_wiener(y, kprior, fe)
            elif name == "LINEAR-U":
                xhat = linear_wiener(y, uprior, fe)
            elif name == "ORACLE":
                xhat = oracle_estimate(y, x0, band)
            else:
                raise ConfigError(f"unknown estimator {name!r}")
            metrics[name] = evaluate(xhat, x0, band)
        return metrics

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_trial = list(pool.map(one_trial, range(cfg.n_trials)))
    else:
        per_trial = [one_trial(i) for i in range(cfg.n_trials)]

    rows = []
    for name in estimators:
        rhos = np.array([m[name][0] for m in per_trial])
        rates = np.array([m[name][1] for m in per_trial])
        nmse_lin = np.array([10.0 ** (m[name][2] / 10.0) for m in per_trial])
        rows.append(
            {
                "estimator": name,
                "snr_db": float(snr),
                "inr_db": float(inr),
                "t_iters": int(t),
                "quantized": bool(quant),
                "rho_mean": float(rhos.mean()),
                "rate_bound_mean": float(rates.mean()),
                "nmse_db_mean": float(10.0 * np.log10(nmse_lin.mean())),
                "n_trials": int(cfg.n_trials),
                "seed": int(eval_seed & 0x7FFFFFFF),
            }
        )
    return rows


def run_evaluate(cfg: ExperimentConfig, log=print):
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for snr in cfg.snr_db:
        for inr in cfg.inr_db:
            for quant in cfg.quant_options():
                for t in cfg.t_iters:
                    models = {}
                    for key, known, wanted in (
                        ("k", True, "LMLVAMP-K" in cfg.estimators),
                        ("u", False, "LMLVAMP-U" in cfg.estimators),
                    ):
                        if not wanted:
                            continue
                        path = out / model_filename(snr, inr, t, quant, known, cfg.train.fix_beta)
                        if not path.exists():
                            raise FileNotFoundError(f"missing model file {path}; run `train` first")
                        models[key] = load_model(path)
                    rows.extend(_eval_scenario(cfg, snr, inr, t, quant, models, cfg.estimators))
                    log(f"evaluated snr={snr:g} inr={inr:g} T={t} quant={quant}")
    path = out / "results.csv"
    emit_results(rows, path)
    log(f"wrote {path}")
    return rows


def emit_results(rows, path):
    """Sorted CSV with the fixed header; floats at 9 significant digits."""
    if not rows:
        raise ValueError("no result rows to emit")
    rows = sorted(rows, key=lambda r: (r["estimator"], r["snr_db"], r["inr_db"], r["t_iters"], r["quantized"]))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(RESULTS_HEADER) + "\n")
        for r in rows:
            fh.write(
                ",".join(
                    [
                        r["estimator"],
                        f"{r['snr_db']:.9g}",
                        f"{r['inr_db']:.9g}",
                        str(int(r["t_iters"])),
                        "true" if r["quantized"] else "false",
                        f"{r['rho_mean']:.9g}",
                        f"{r['rate_bound_mean']:.9g}",
                        f"{r['nmse_db_mean']:.9g}",
                        str(int(r["n_trials"])),
                        str(int(r["seed"])),
                    ]
                )
                + "\n"
            )


def read_results(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            raise ValueError(f"unexpected results header in {path}")
        for rec in reader:
            rows.append(
                {
                    "estimator": rec["estimator"],
                    "snr_db": float(rec["snr_db"]),
                    "inr_db": float(rec["inr_db"]),
                    "t_iters": int(rec["t_iters"]),
                    "quantized": rec["quantized"] == "true",
                    "rho_mean": float(rec["rho_mean"]),
                    "rate_bound_mean": float(rec["rate_bound_mean"]),
                    "nmse_db_mean": float(rec["nmse_db_mean"]),
                    "n_trials": int(rec["n_trials"]),
                    "seed": int(rec["seed"]),
                }
            )
    return rows


def run_plot(cfg: ExperimentConfig, results_path=None, out_path=None, log=print):
    """Rate-vs-INR curves, one panel per (SNR, T, quantized) combination."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = cfg.resolved_output_dir()
    results_path = Path(results_path) if results_path else out / "results.csv"
    rows = read_results(results_path)
    present = {r["estimator"] for r in rows}
    missing = set(cfg.estimators) - present
    if missing:
        raise ValueError(f"results file {results_path} missing estimators: {sorted(missing)}")

    panels = [(snr, t, quant) for snr in cfg.snr_db for quant in cfg.quant_options() for t in cfg.t_iters]
    ncols = len(cfg.snr_db) * len(cfg.quant_options())
    nrows = len(cfg.t_iters)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.2 * nrows), squeeze=False, sharex=True)
    for idx, (snr, t, quant) in enumerate(panels):
        col, row = divmod(idx, nrows)
        ax = axes[row][col]
        for name in cfg.estimators:
            pts = sorted(
                (r["inr_db"], r["rate_bound_mean"])
                for r in rows
                if r["estimator"] == name and r["snr_db"] == snr and r["t_iters"] == t and r["quantized"] == quant
            )
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
        ax.set_title(f"SNR={snr:g} dB, T={t}, {'quantized' if quant else 'unquantized'}")
        ax.set_xlabel("INR (dB)")
        ax.set_ylabel("rate bound (bits)")
        ax.grid(True, alpha=0.3)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path) if out_path else out / "rate_vs_inr.png"
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    log(f"wrote {out_path}")
    return out_path


def run_sweep(cfg: ExperimentConfig, log=print):
    run_generate(cfg, log)
    run_train(cfg, log)
    run_evaluate(cfg, log)
    run_plot(cfg, log=log)
