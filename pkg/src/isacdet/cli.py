"""Command-line front end.

Every artifact starts with a ``#`` header naming the tool version, the
configuration hash and the seed. Plot data is written as CSV plus a
gnuplot script; nothing is rendered.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from . import __version__
from .config import SystemConfig, load_config
from .detectors import data_only_statistic, decide, glrt_statistic, pilot_only_statistic
from .errors import ConfigError, ExperimentError, FormatError, IsacDetError
from .montecarlo.engine import derive_trial_stream, experiment_plan
from .montecarlo.experiments import ExperimentSpec, run
from .montecarlo.ledger import TrialLedger
from .scenario import draw_clutter, scenario_from_clutter
from .statistics import alpha_for_snr, build_null_model, data_only_model, pilot_only_model, \
    sufficient_stats
from .theory import threshold_for_fap
from .waveform import H0, H1, ReceivedFrame, synthesize_physical, synthesize_statistical

OUT_DIR_ENV = "ISACDET_OUT_DIR"
EXIT_CONFIG, EXIT_EXPERIMENT, EXIT_FORMAT = 2, 3, 4

SUBCOMMANDS = {
    "q-error": "q_error",
    "dist": None,
    "fap": "fap_curve",
    "roc": "roc",
    "drt": "drt_sweep",
    "validate": "validate_lemmas",
}


def _count(text: str) -> int:
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if v < 1 or v != int(v):
        raise argparse.ArgumentTypeError(f"trial count must be a positive integer, got {text!r}")
    return int(v)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isacdet", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"isacdet {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="defaults", help="config file or 'defaults'")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="config override, repeatable, applied last-wins")
    common.add_argument("--seed", type=int, default=None, help="master seed (default: config seed)")
    common.add_argument("--out-dir", default=None,
                        help=f"artifact directory (default: ${OUT_DIR_ENV} or ./isacdet-out)")

    exp = argparse.ArgumentParser(add_help=False, parents=[common])
    exp.add_argument("--trials", type=_count, default=None)
    exp.add_argument("--threads", type=int, default=1)
    exp.add_argument("--mode", choices=("statistical", "physical"), default="statistical")
    exp.add_argument("--sweep", type=_floats, default=None,
                     help="comma-separated sweep values (L, or data power for drt)")
    exp.add_argument("--p-fa", type=_floats, default=None, help="comma-separated FAP targets")

    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[exp])
        if name == "dist":
            sp.add_argument("--hypothesis", choices=(H0, H1), default=H0)
            sp.add_argument("--dump-raw", action="store_true")

    sy = sub.add_parser("synth", parents=[common], help="write one received frame to a file")
    sy.add_argument("--hypothesis", choices=(H0, H1), default=H0)
    sy.add_argument("--mode", choices=("statistical", "physical"), default="statistical")
    sy.add_argument("--index", type=int, default=0, help="frame counter within the seed")
    sy.add_argument("--output", required=True)

    d = sub.add_parser("detect-once", parents=[common], help="run all detectors on one frame")
    d.add_argument("--frame", required=True)
    d.add_argument("--p-fa", type=float, default=1e-3)
    return p


def resolve_config(args: argparse.Namespace) -> SystemConfig:
    cfg = load_config(args.config)
    if args.override:
        cfg = cfg.with_overrides(args.override)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    cfg.validate()
    return cfg


def _out_dir(args: argparse.Namespace) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "isacdet-out")


def _overrides_L(args: argparse.Namespace) -> bool:
    keys = {o.split("=", 1)[0].strip() for o in args.override}
    return bool(keys & {"L", "frame_length"})


# --------------------------------------------------------------------------
# plot data
# --------------------------------------------------------------------------

def _power_tag(v: float) -> str:
    return "off" if v == -math.inf else f"{v:g}"


def _stem(kind: str, cfg: SystemConfig, seed: int, L: int | str | None = None) -> str:
    """``<kind>_L<L>[_Pp<dBm>][_Pd<dBm>]_seed<S>``; a power appears only when it
    differs from the default configuration."""
    L = cfg.L if L is None else L
    base = SystemConfig()
    parts = [kind, f"L{L}"]
    if cfg.p_pilot_dbm != base.p_pilot_dbm:
        parts.append(f"Pp{_power_tag(cfg.p_pilot_dbm)}")
    if cfg.p_data_dbm != base.p_data_dbm:
        parts.append(f"Pd{_power_tag(cfg.p_data_dbm)}")
    parts.append(f"seed{seed}")
    return "_".join(parts)


_GNUPLOT = {
    "q_error": ("set logscale x 2; set xlabel 'L'; set ylabel 'relative error'",
                "'{f}' using 1:3:4 with yerrorbars title 'Delta_Q'"),
    "fap_curve": ("set logscale y; set xlabel 'eta'; set ylabel 'P_fa'",
                  "'{f}' using 3:6 with points title 'empirical', '{f}' using 3:9 with lines title "
                  "'closed form', '{f}' using 3:10 with lines dt 2 title 'lower bound', '{f}' using 3:13 "
                  "with points title 'pilot-only'"),
    "roc": ("set logscale x; set xlabel 'P_fa'; set ylabel 'P_d'",
            "'{f}' using 2:7 with points title 'empirical', '{f}' using 2:10 with lines title "
            "'closed form', '{f}' using 2:11 with lines dt 2 title 'upper bound', '{f}' using 2:14 "
            "with points title 'pilot-only'"),
    "drt_sweep": ("set xlabel 'sum rate [bit/s/Hz]'; set ylabel 'P_d'",
                  "'{f}' using 3:6 with linespoints title 'empirical', '{f}' using 3:9 with lines "
                  "title 'closed form'"),
    "dist_h0": ("set xlabel 'statistic'; set ylabel 'CDF'",
                "'{f}' using 2:5 with steps title 'tau', '{f}' using 2:6 with steps title 'tau tilde'"),
    "dist_h1": ("set xlabel 'statistic'; set ylabel 'CDF'",
                "'{f}' using 2:5 with steps title 'tau', '{f}' using 2:6 with steps title 'tau tilde'"),
}


def _split(ledger: TrialLedger, key: str) -> dict:
    groups: dict = {}
    for r in ledger.rows:
        groups.setdefault(r[key], []).append(r)
    return groups


def emit_plot_data(ledger: TrialLedger, out_dir: str | Path, cfg: SystemConfig, seed: int) -> list[Path]:
    """Per-figure CSV files plus a gnuplot script. Returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = ledger.kind
    written: list[Path] = []
    series: list[Path] = []
    if kind in ("fap_curve", "roc"):
        for L, rows in _split(ledger, "L").items():
            path = out / f"{_stem(kind if kind == 'roc' else 'fap', cfg, seed, L)}.csv"
            path.write_text(ledger.to_csv(rows=rows))
            series.append(path)
    elif kind == "drt_sweep":
        for pp, rows in _split(ledger, "p_pilot_dbm").items():
            path = out / f"{_stem('drt', cfg.replace(p_pilot_dbm=pp), seed)}.csv"
            path.write_text(ledger.to_csv(rows=rows))
            series.append(path)
    elif kind == "q_error":
        swept = "-".join(str(int(v)) for v in ledger.column("L"))
        path = out / f"{_stem(kind, cfg, seed, swept)}.csv"
        path.write_text(ledger.to_csv())
        series.append(path)
    else:
        path = out / f"{_stem(kind, cfg, seed)}.csv"
        path.write_text(ledger.to_csv())
        series.append(path)
    if kind.startswith("dist"):
        for name, h in sorted(ledger.histograms.items()):
            hp = out / f"{_stem(kind, cfg, seed)}.hist_{name}.csv"
            lines = [f"# {ledger.header_line()}", "edge_lo,edge_hi,count"]
            lines += [f"{h.edges[i]!r},{h.edges[i + 1]!r},{int(c)}" for i, c in enumerate(h.counts)]
            hp.write_text("\n".join(lines) + "\n")
            written.append(hp)
    written += series
    if kind in _GNUPLOT:
        setup, plot = _GNUPLOT[kind]
        script = [f"# {ledger.header_line()}", "set datafile separator ','", "set key autotitle columnhead",
                  "set terminal pngcairo size 800,600", setup]
        for s in series:
            script.append(f"set output '{s.stem}.png'")
            script.append("plot " + plot.format(f=s.name))
        gp = out / f"{kind}_seed{seed}.gp"
        gp.write_text("\n".join(script) + "\n")
        written.append(gp)
    return written


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def _spec(kind: str, cfg: SystemConfig, args: argparse.Namespace) -> ExperimentSpec:
    sweep = args.sweep
    if sweep is None and kind in ("q_error", "fap_curve", "roc") and _overrides_L(args):
        sweep = [cfg.L]
    if sweep is not None and kind in ("q_error", "fap_curve", "roc"):
        sweep = [int(v) for v in sweep]
    params = {}
    if args.p_fa is not None:
        if kind == "drt_sweep":
            params["p_fa"] = args.p_fa[0]
        else:
            params["p_fa_grid"] = args.p_fa
    if getattr(args, "dump_raw", False):
        params["dump_raw"] = True
    return ExperimentSpec(kind, cfg=cfg, trials=args.trials, sweep=sweep,
                          master_seed=cfg.seed, mode=args.mode, params=params)


def _run_experiment(kind: str, args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    spec = _spec(kind, cfg, args)
    ledger = run(spec, threads=args.threads)
    out = _out_dir(args)
    ledger.save(out, f"{ledger.kind}_seed{spec.master_seed}")
    files = emit_plot_data(ledger, out, cfg, spec.master_seed)
    print(ledger.header_line())
    for k, v in sorted(ledger.summary.items()):
        print(f"{k}: {v}")
    print(f"wrote {len(files) + 3 + len(ledger.raw)} files to {out}")
    return 0


# --------------------------------------------------------------------------
# single frames
# --------------------------------------------------------------------------

def receiver_scenario(cfg: SystemConfig):
    """Channel known to the receiver: a pure function of the configuration and its seed."""
    rng = derive_trial_stream(cfg.seed, "frame/scenario", 0)
    return scenario_from_clutter(cfg, draw_clutter(cfg, rng, 1))


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    scen = receiver_scenario(cfg)
    plan = experiment_plan(cfg, cfg.seed)
    model = build_null_model(scen, plan, cfg)
    alpha = 0j
    if args.hypothesis == H1:
        alpha = alpha_for_snr(model, cfg.target_snr_db, cfg.alpha_phase_deg) \
            if cfg.target_snr_db is not None else cfg.alpha
    rng = derive_trial_stream(cfg.seed, "frame/draw", args.index)
    if args.mode == "physical":
        frame = synthesize_physical(scen.with_alpha(alpha), plan, args.hypothesis, rng,
                                    sigma2=cfg.noise_power, seed=cfg.seed)
    else:
        frame = synthesize_statistical(model, scen, alpha, args.hypothesis, rng, seed=cfg.seed)
    frame.save(args.output)
    print(f"wrote {args.output} ({args.hypothesis}, {args.mode}, |alpha|={abs(alpha):.6g})")
    return 0


def pilot_only_threshold(p_fa: float, L: int, L_p: int) -> float:
    """Data-free exponential law of the pilot-only statistic: ``P(t0 > t) = exp(-t L^2 / L_p)``."""
    return -math.log(p_fa) * L_p / L**2


def data_only_threshold(p_fa: float, L: int) -> float:
    """Threshold on ``r - 1 - log r`` when ``2 L r`` is chi-square with ``2L`` degrees of freedom.

    Approximate: it ignores the pilot echo that the data-only receiver does
    not remove.
    """
    dist = stats.gamma(a=L, scale=1.0 / L)

    def fap(t: float) -> float:
        f = lambda r: r - 1.0 - math.log(r) - t
        lo = optimize.brentq(f, 1e-300, 1.0) if t > 0 else 1.0
        hi = optimize.brentq(f, 1.0, 1.0 + t + 10 * math.sqrt(t) + 10) if t > 0 else 1.0
        return dist.cdf(lo) + dist.sf(hi)

    return optimize.brentq(lambda t: fap(t) - p_fa, 0.0, 50.0, xtol=1e-14)


def detect_report(cfg: SystemConfig, frame: ReceivedFrame, p_fa: float) -> str:
    if frame.y.shape != (cfg.n_rx, cfg.L):
        raise FormatError(f"frame is {frame.y.shape}, config expects {(cfg.n_rx, cfg.L)}")
    scen = receiver_scenario(cfg)
    plan = experiment_plan(cfg, cfg.seed)
    model = build_null_model(scen, plan, cfg)
    st = sufficient_stats(frame, model, plan)
    out = glrt_statistic(st, model)
    rows = [
        ("glrt", out.statistic, threshold_for_fap(p_fa, cfg.L, model.power_ratio)),
        ("pilot_only", pilot_only_statistic(frame, pilot_only_model(scen, plan, cfg), plan),
         pilot_only_threshold(p_fa, cfg.L, cfg.L_p)),
        ("data_only", data_only_statistic(frame, data_only_model(scen, plan, cfg)),
         data_only_threshold(p_fa, cfg.L)),
    ]
    lines = [f"# isacdet {__version__} config={cfg.digest()} seed={cfg.seed} p_fa={p_fa!r}",
             f"alpha_hat = {out.alpha_hat.real!r}{out.alpha_hat.imag:+.17g}j",
             f"q_dagger = {out.q_dagger!r}",
             "detector,statistic,log_threshold,decision"]
    for name, stat, thr in rows:
        d = decide(stat, thr)
        lines.append(f"{name},{d.statistic!r},{d.log_threshold!r},"
                     f"{'detected' if d.detected else 'not detected'}")
    return "\n".join(lines) + "\n"


def _cmd_detect(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    path = Path(args.frame)
    if not path.is_file():
        raise FormatError(f"frame file not found: {path}")
    sys.stdout.write(detect_report(cfg, ReceivedFrame.load(path), args.p_fa))
    return 0


def parse_and_dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "detect-once":
            return _cmd_detect(args)
        kind = SUBCOMMANDS[args.command] or f"dist_{args.hypothesis.lower()}"
        return _run_experiment(kind, args)
    except ConfigError as exc:
        print(f"isacdet: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExperimentError as exc:
        print(f"isacdet: experiment error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except FormatError as exc:
        print(f"isacdet: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (IsacDetError, OSError) as exc:
        print(f"isacdet: {exc}", file=sys.stderr)
        return 1


def main() -> None:  # pragma: no cover
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":  # pragma: no cover
    main()
