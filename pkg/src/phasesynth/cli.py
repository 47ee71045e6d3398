"""Command-line interface: ``phasesynth {fx,predict,afc,batch,report}``.

Exit codes: 0 success, 1 run failure(s), 2 usage or configuration error.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import flms_predictor
from .batch import (
    CLUSTER_FIELDS,
    aggregate_rows,
    read_rows,
    run_batch,
    write_rows,
    write_trace,
)
from .config import load_config, load_ir, load_source
from .errors import ConfigurationError, NumericError
from .filterbank import FilterBankConfig
from .loop_sim import FeedbackPath, GainSchedule, LoopConfig, run_afc
from .metrics import prediction_gain
from .phase_synth import PhaseSynthesizer, config_from_mapping, parameter_set
from .signals import SAMPLE_RATE, load_wav, write_wav

log = logging.getLogger("phasesynth")

EXIT_OK, EXIT_RUN_FAILURE, EXIT_USAGE = 0, 1, 2


class _UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _set_id(text):
    v = int(text)
    if not 1 <= v <= 11:
        raise argparse.ArgumentTypeError("parameter set must be in 1..11")
    return v


def _phase_config(args):
    if args.config:
        import configparser

        cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        cp.read(args.config)
        if cp.has_section("phase_synth"):
            return config_from_mapping(dict(cp["phase_synth"]), FilterBankConfig())
        if args.set is None:
            raise _UsageError(f"{args.config} has no [phase_synth] section; pass --set")
    return parameter_set(args.set if args.set is not None else 1)


def _out_path(args, default_name):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / default_name


def _near_end(args, duration):
    if args.input:
        return load_wav(args.input).samples
    return load_source(f"gen:{args.generate}", duration, args.seed)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fx(args):
    cfg = _phase_config(args)
    audio = load_wav(args.input)
    y = PhaseSynthesizer(cfg).process(audio.samples)
    out = Path(args.output) if args.output else _out_path(args, Path(args.input).stem + f"_set{cfg.set_id or 'custom'}.wav")
    write_wav(out, y, audio.sample_rate, fmt=args.format)
    log.info("%s: %s -> %s", cfg.describe(), args.input, out)
    print(out)
    return EXIT_OK


def cmd_predict(args):
    s = _near_end(args, args.duration)
    out = Path(args.output) if args.output else _out_path(args, "prediction_gain.csv")
    failures = 0
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay", "length", "gain_db"])
        for n in args.lengths:
            for d in args.delays:
                try:
                    sol = flms_predictor(s, d, n, step_size=args.step_size)
                    rep = prediction_gain(s, sol.error, skip=min(args.skip, s.shape[0] - 1), delay=d, taps=n)
                    g = f"{rep.gain_db:.4f}"
                except (ValueError, NumericError) as exc:
                    log.error("D=%d N=%d: %s", d, n, exc)
                    failures += 1
                    g = ""
                w.writerow([d, n, g])
                log.info("D=%d N=%d g_p=%s dB", d, n, g)
    print(out)
    return EXIT_RUN_FAILURE if failures else EXIT_OK


def cmd_afc(args):
    s = _near_end(args, args.duration)
    h = load_ir(args.ir, args.highpass_hz, args.seed)
    schedule = GainSchedule.ramp(args.gain_db, args.ramp_s, args.start_below_db)
    cfg = LoopConfig(
        FeedbackPath(h, Path(args.ir).stem if not args.ir.startswith("gen:") else args.ir),
        coupling_db=args.coupling_db,
        phase_synth=_phase_config(args),
        schedule=schedule,
        duration=args.duration,
    )
    try:
        result = run_afc(cfg, s)
    except (ValueError, NumericError) as exc:
        log.error("run failed: %s", exc)
        return EXIT_RUN_FAILURE
    tag = f"set{cfg.phase_synth.set_id or 'custom'}_{args.gain_db:g}dB"
    out = Path(args.output) if args.output else _out_path(args, f"afc_{tag}_sd.csv")
    write_trace(out, result)
    early, late = result.early_late()
    fmt = lambda v: "n/a" if v is None else f"{20 * np.log10(v):.1f} dB"  # noqa: E731
    print(f"{out}: {result.verdict}, early sd {fmt(early)}, late sd {fmt(late)}")
    seg = result.converged_segment()
    if args.wav and result.stable and seg.size:
        write_wav(out.with_name(out.stem.replace("_sd", "") + "_converged.wav"), seg, SAMPLE_RATE, fmt="float32")
    elif args.wav:
        log.warning("no converged segment to export (run unstable or shorter than 20 s)")
    return EXIT_OK


def cmd_batch(args):
    cfg = load_config(args.config)
    specs = cfg.runs()
    out_dir = Path(args.out_dir if args.out_dir is not None else cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = args.workers or cfg.workers
    log.info("%s: %d runs, %d worker(s)", cfg.name, len(specs), workers)
    report = run_batch(specs, out_dir, workers)
    write_rows(out_dir / "runs.csv", report.rows)
    write_rows(out_dir / "clusters.csv", report.clusters, CLUSTER_FIELDS)
    for c in report.clusters:
        log.info("%s", c)
    print(out_dir / "runs.csv")
    if report.failures:
        log.error("%d of %d runs failed", report.failures, len(report.rows))
        return EXIT_RUN_FAILURE
    return EXIT_OK


def cmd_report(args):
    try:
        rows = read_rows(args.tables)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    clusters = aggregate_rows(rows)
    if args.output:
        write_rows(args.output, clusters, CLUSTER_FIELDS)
        print(args.output)
    else:
        w = csv.DictWriter(sys.stdout, fieldnames=CLUSTER_FIELDS)
        w.writeheader()
        for c in clusters:
            w.writerow({k: "" if c[k] is None else c[k] for k in CLUSTER_FIELDS})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="phasesynth", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_help="experiment/phase-synth config file"):
        sp.add_argument("--seed", type=int, default=0, help="seed for generated signals")
        sp.add_argument("--config", help=config_help)
        sp.add_argument("--out-dir", default=".", help="directory for outputs")

    def near_end(sp, duration):
        src = sp.add_mutually_exclusive_group()
        src.add_argument("--in", dest="input", help="16 kHz WAV input")
        src.add_argument("--generate", default="speech_like",
                         choices=["white_noise", "sine", "sweep", "vowel_sequence", "speech_like"],
                         help="synthetic input when --in is not given (default: speech_like)")
        sp.add_argument("--duration", type=float, default=duration, help="seconds (generated input / run length)")

    sp = sub.add_parser("fx", help="apply a phase-synthesizer program to a WAV file")
    common(sp, "file with a [phase_synth] section")
    sp.add_argument("--in", dest="input", required=True, help="16 kHz WAV input")
    sp.add_argument("--set", type=_set_id, help="parameter set 1..11 (default 1)")
    sp.add_argument("-o", "--output", help="output WAV (default: <out-dir>/<input>_set<k>.wav)")
    sp.add_argument("--format", choices=["pcm16", "float32"], default="pcm16")
    sp.set_defaults(func=cmd_fx)

    sp = sub.add_parser("predict", help="prediction-gain sweep over delays and predictor lengths")
    common(sp)
    near_end(sp, 5.0)
    sp.add_argument("--delays", type=_int_list, default=[0, 4, 16, 64, 256])
    sp.add_argument("--lengths", type=_int_list, default=[16, 128, 512])
    sp.add_argument("--step-size", type=float, default=0.4)
    sp.add_argument("--skip", type=int, default=SAMPLE_RATE, help="samples excluded from g_p (convergence)")
    sp.add_argument("-o", "--output", help="CSV path (default: <out-dir>/prediction_gain.csv)")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("afc", help="single closed-loop feedback-cancellation run")
    common(sp, "file with a [phase_synth] section")
    near_end(sp, 42.0)
    sp.add_argument("--ir", default="gen:room", help="impulse response file or gen:room[:seed]")
    sp.add_argument("--highpass-hz", type=float, help="optional first-order high-pass on the IR")
    sp.add_argument("--set", type=_set_id, help="parameter set 1..11 (default 1)")
    sp.add_argument("--gain-db", type=float, default=0.0, help="final loop gain")
    sp.add_argument("--coupling-db", type=float, default=-10.0)
    sp.add_argument("--ramp-s", type=float,
                    help=f"ramp duration (default: rise at {GainSchedule.DEFAULT_RATE_DB_S:g} dB/s)")
    sp.add_argument("--start-below-db", type=float, default=GainSchedule.DEFAULT_START_BELOW_DB,
                    help="ramp start below the final gain, capped at "
                         f"{GainSchedule.DEFAULT_START_CAP_DB:g} dB loop gain")
    sp.add_argument("--wav", action="store_true", help="also write the converged output (t >= 20 s)")
    sp.add_argument("-o", "--output", help="trace CSV path")
    sp.set_defaults(func=cmd_afc)

    sp = sub.add_parser("batch", help="run an experiment file (signals x IRs x gains x sets)")
    sp.add_argument("--config", required=True, help="experiment file")
    sp.add_argument("--out-dir", help="overrides [experiment] out_dir")
    sp.add_argument("--workers", type=int, help="parallel runs (overrides [experiment] workers)")
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("report", help="re-aggregate run tables into cluster means")
    sp.add_argument("tables", nargs="+", help="runs.csv files")
    sp.add_argument("-o", "--output", help="clusters CSV (default: stdout)")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (_UsageError, ConfigurationError, FileNotFoundError) as exc:
        print(f"phasesynth {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
