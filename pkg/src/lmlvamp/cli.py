"""Command-line entry point: generate / train / evaluate / sweep / plot / selftest."""

from __future__ import annotations

import argparse
import sys

from .harness import ConfigError, load_config, run_evaluate, run_generate, run_plot, run_sweep, run_train


def _selftest() -> int:
    """Fast oracle/invariant checks; prints one line per check."""
    import numpy as np

    from .baselines import rate_bound_from_rho
    from .frontend import FrontEndParams, QuantizerParams, quantize, soft_gain
    from .spectrum import BandLayout, PriorSpec, dft, idft
    from .vamp import nonlinear_denoise_oracle, spectral_denoise, spectral_denoise_divergence_check

    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1

    rng = np.random.default_rng(0)
    x = rng.standard_normal(512) + 1j * rng.standard_normal(512)
    check("dft/idft round trip", np.max(np.abs(dft(idft(x)) - x)) < 1e-12)
    check("parseval", abs(np.linalg.norm(dft(x)) - np.linalg.norm(x)) < 1e-12 * np.linalg.norm(x))

    eps = 1e-5
    check("soft_gain series continuity", abs(soft_gain(eps) - 1.0) < eps**2 / 2)
    check("soft_gain(1) = tanh(1)", abs(soft_gain(1.0) - np.tanh(1.0)) < 1e-15)

    q = QuantizerParams(bits=6, backoff_db=12.0, full_scale=4.0)
    y = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    check("quantizer idempotence", np.array_equal(quantize(quantize(y, q), q), quantize(y, q)))

    layout = BandLayout(64, ((0, 16), (32, 48)))
    S = np.zeros(64)
    S[:16], S[32:48] = 2.0, 5.0
    prior = PriorSpec(layout, np.zeros(64, dtype=complex), S)
    z0 = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    _, alpha0 = spectral_denoise(z0, 1.3, prior)
    fd = spectral_denoise_divergence_check(z0, 1.3, prior)
    check("spectral divergence analytic vs finite difference", abs(fd - alpha0) < 1e-6 * abs(alpha0))

    fe = FrontEndParams(p_sat=1e9, sigma_a2=0.5, sigma_b2=0.5)
    z1, yv, g1 = 0.4 + 0.2j, 0.7 - 0.3j, 2.0
    rhat, pvar = nonlinear_denoise_oracle(z1, g1, yv, fe)
    s_eff = fe.sigma_a2 + fe.sigma_b2
    expect = (g1 * z1 + yv / s_eff) / (g1 + 1.0 / s_eff)
    check("quadrature oracle linear limit (mean)", abs(rhat - expect) < 1e-3 * abs(expect))
    check("quadrature oracle linear limit (var)", abs(pvar - 1.0 / (g1 + 1.0 / s_eff)) < 1e-3 / (g1 + 1.0 / s_eff))

    check("rate bound at rho=0.5", abs(rate_bound_from_rho(0.5) - 1.0) < 1e-12)

    from . import autograd as ag

    tape = ag.Tape()
    w = tape.watch(rng.standard_normal(5))
    loss = ag.sumabs2(ag.fft_u(ag.mul(w, np.ones(5, dtype=complex))))
    ag.backward(tape, loss)
    check("autodiff dft gradient (parseval)", np.allclose(w.grad, 2.0 * w.value, atol=1e-12))

    print(f"{'OK' if failures == 0 else 'FAILED'}: {failures} failing check(s)")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lmlvamp", description="Learned ML-VAMP experiment harness")
    parser.add_argument("-c", "--config", help="TOML config file (defaults reproduce the standard setup)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", help="write training datasets per scenario")
    sub.add_parser("train", help="train per-scenario models")
    sub.add_parser("evaluate", help="run all configured estimators, write results.csv")
    sub.add_parser("sweep", help="generate, train, evaluate, plot")
    p_plot = sub.add_parser("plot", help="render rate-vs-INR curves from results.csv")
    p_plot.add_argument("--results")
    p_plot.add_argument("--out")
    sub.add_parser("selftest", help="run the oracle/invariant checks")
    args = parser.parse_args(argv)

    if args.command == "selftest":
        return _selftest()
    try:
        cfg = load_config(args.config)
        if args.command == "generate":
            run_generate(cfg)
        elif args.command == "train":
            run_train(cfg)
        elif args.command == "evaluate":
            run_evaluate(cfg)
        elif args.command == "sweep":
            run_sweep(cfg)
        elif args.command == "plot":
            run_plot(cfg, results_path=args.results, out_path=args.out)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
