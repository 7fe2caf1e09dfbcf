"""Command-line interface.

Subcommands: simulate, convert, detect, correlate, fit, budget, pipeline and
rerun. Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 data
format error, 4 fit failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings

import numpy as np

from . import __version__
from .analysis import budget_for, fit_convolved_dip, fit_dip, format_budget_table, rate_budget
from .config import PipelineConfig, config_from_dict, config_to_dict, load_config
from .conversion import convert_stream, efficiency, gen_uspdc_stream, uspdc_rate
from .correlation import CorrelationConfig, correlate, normalize, read_histogram_csv, write_histogram_csv
from .detection import detect, hbt_split
from .errors import ConfigError, DegenerateDataError, FitError, FormatError, NormalizationError, UnsortedInputError
from .manifest import MANIFEST_NAME, RunManifest, now_iso, read_manifest, sha256_file, verify_manifest, write_manifest
from .pipeline import TAP_STAGES, run_pipeline, simulate
from .presets import PRESETS, get_preset
from .rng import SEED_MAX
from .tags import merge_streams, read_tags, write_tags

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_FIT = 4

GLOBAL_FLAGS = ("config", "preset", "scale", "seed", "out", "threads")


# ---- helpers ---------------------------------------------------------------

def _seed_arg(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v <= SEED_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _threads(args) -> int:
    n = args.threads or 0
    if n < 0:
        raise ConfigError("threads", "must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _load_config(args, required=True) -> PipelineConfig | None:
    snapshot = getattr(args, "config_snapshot", None)
    if snapshot is not None:
        return config_from_dict(snapshot)
    if args.config and args.preset:
        raise ConfigError("", "give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        if args.preset not in PRESETS:
            raise ConfigError("preset", f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        cfg = get_preset(args.preset)
    elif required:
        raise ConfigError("", "this command needs --config or --preset")
    else:
        return None
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.scale is not None:
        if not args.scale > 0:
            raise ConfigError("scale", "must be > 0")
        cfg = cfg.replace(duration=max(1, int(round(cfg.duration * args.scale))))
    return cfg


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    if os.path.exists(os.path.join(out, MANIFEST_NAME)):
        raise ConfigError("out", f"{out} already holds a run manifest; choose a fresh directory")
    return out


def _record_args(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "config_snapshot")}


def _finish(args, out, command, cfg, seed, inputs, outputs, started, t0):
    m = RunManifest(command=command, args=_record_args(args), config=None if cfg is None else config_to_dict(cfg),
                    seed=seed, started_at=started)
    m.add_inputs(inputs)
    m.add_outputs(outputs, base_dir=out)
    m.finished_at = now_iso()
    m.wall_seconds = round(time.time() - t0, 3)
    write_manifest(os.path.join(out, MANIFEST_NAME), m)


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _remove(paths):
    for p in paths:
        try:
            os.remove(p)
        except FileNotFoundError:
            pass


# ---- commands --------------------------------------------------------------

def cmd_simulate(args) -> int:
    t0, started = time.time(), now_iso()
    cfg = _load_config(args)
    stages = [s.strip() for s in args.stages.split(",") if s.strip()]
    for s in stages:
        if s not in TAP_STAGES:
            raise ConfigError("stages", f"unknown stage {s!r}; choose from {TAP_STAGES}")
    out = _out_dir(args)
    taps = {s: os.path.join(out, f"{s}.ttg") for s in stages}
    try:
        simulate(cfg, taps=taps, literal=True)
    except BaseException:
        _remove(taps.values())
        raise
    for s, p in taps.items():
        print(f"{s}: {p}")
    _finish(args, out, "simulate", cfg, cfg.seed, [], list(taps.values()), started, t0)
    return EXIT_OK


def cmd_convert(args) -> int:
    t0, started = time.time(), now_iso()
    cfg = _load_config(args)
    if cfg.conversion is None:
        raise ConfigError("conversion", "required for the convert command")
    stream = read_tags(args.input)
    eta = efficiency(cfg.conversion, cfg.pump_power, temp=cfg.crystal_temp)
    filt = cfg.filter.peak_transmission if cfg.filter is not None else 1.0
    keep = (1.0 - cfg.coupler_loss) * eta * cfg.optics_transmission * filt
    out_stream = convert_stream(stream, keep, cfg.seed)
    if args.with_background and cfg.uspdc is not None:
        bg_rate = cfg.optics_transmission * uspdc_rate(cfg.uspdc, cfg.pump_power, cfg.filter)
        bg = gen_uspdc_stream(bg_rate, stream.duration, cfg.seed)
        out_stream = merge_streams(out_stream, bg.replace(channel=np.zeros(len(bg), np.uint8)),
                                   origin_label="converted+USPDC")
    out = _out_dir(args)
    path = os.path.join(out, "converted.ttg")
    write_tags(path, out_stream)
    print(f"converted {len(stream)} -> {len(out_stream)} tags (keep {keep:.4g}): {path}")
    _finish(args, out, "convert", cfg, cfg.seed, [args.input], [path], started, t0)
    return EXIT_OK


def cmd_detect(args) -> int:
    t0, started = time.time(), now_iso()
    cfg = _load_config(args)
    stream = read_tags(args.input)
    arm1, arm2 = hbt_split(stream, cfg.hbt.split_ratio, cfg.seed)
    d1 = detect(arm1, cfg.hbt.det1, cfg.seed, channel=1)
    d2 = detect(arm2, cfg.hbt.det2, cfg.seed, channel=2)
    out = _out_dir(args)
    path = os.path.join(out, "detected.ttg")
    write_tags(path, merge_streams(d1, d2, origin_label="detected"))
    print(f"detected {len(d1)} (ch1) + {len(d2)} (ch2) tags: {path}")
    _finish(args, out, "detect", cfg, cfg.seed, [args.input], [path], started, t0)
    return EXIT_OK


def _correlation_config(args, cfg) -> CorrelationConfig:
    base = cfg.correlation if cfg is not None else CorrelationConfig()
    fields = {"bin_width": args.bin_width, "tau_min": args.tau_min, "tau_max": args.tau_max,
              "exclusion_halfwidth": args.exclusion}
    kw = {k: v for k, v in fields.items() if v is not None}
    try:
        return CorrelationConfig(**{**base.__dict__, **kw})
    except ConfigError as exc:
        raise exc.prefixed("correlation") from None


def cmd_correlate(args) -> int:
    t0, started = time.time(), now_iso()
    cfg = _load_config(args, required=False)
    ccfg = _correlation_config(args, cfg)
    if len(args.inputs) == 1:
        s = read_tags(args.inputs[0])
        a, b = args.channels
        s1, s2 = s.select(a), s.select(b)
    elif len(args.inputs) == 2:
        s1, s2 = read_tags(args.inputs[0]), read_tags(args.inputs[1])
    else:
        raise ConfigError("inputs", "give one file with two channels or two files")
    h = correlate(s1, s2, ccfg, threads=_threads(args))
    try:
        h = normalize(h, ccfg)
    except NormalizationError as exc:
        print(f"warning: histogram left unnormalized: {exc}", file=sys.stderr)
    out = _out_dir(args)
    path = os.path.join(out, "histogram.csv")
    digests = {os.path.basename(p): sha256_file(p) for p in args.inputs}
    side = write_histogram_csv(h, path, {"inputs_sha256": digests})
    print(f"{h.total} coincidences in {ccfg.nbins} bins, flat level {h.flat_level}: {path}")
    _finish(args, out, "correlate", cfg, None, args.inputs, [path, side], started, t0)
    return EXIT_OK


def cmd_fit(args) -> int:
    t0, started = time.time(), now_iso()
    cfg = _load_config(args, required=False)
    mode = args.mode or (cfg.analysis.model if cfg is not None else "eq1")
    sigma = args.sigma if args.sigma is not None else (cfg.analysis.sigma if cfg is not None else None)
    t0_fix = args.t0 if args.t0 is not None else (cfg.analysis.t0 if cfg is not None else None)
    h = read_histogram_csv(args.input)
    if h.normalized is None:
        try:
            h = normalize(h, CorrelationConfig(**h.meta["config"]) if "config" in h.meta else None)
        except (KeyError, TypeError, NormalizationError) as exc:
            raise DegenerateDataError(f"histogram is not normalized and cannot be: {exc}") from None
    if mode == "eq1":
        res = fit_dip(h)
    elif mode == "eq2":
        if sigma is None or t0_fix is None:
            raise ConfigError("fit", "mode eq2 needs --sigma and --t0")
        if not sigma > 0:
            raise ConfigError("sigma", "must be > 0")
        res = fit_convolved_dip(h, sigma, t0_fix)
    else:
        raise ConfigError("mode", f"must be eq1 or eq2, got {mode!r}")
    print(res.summary())
    out = _out_dir(args)
    path = os.path.join(out, "fit.json")
    _write_json(path, res.to_dict())
    _finish(args, out, "fit", cfg, None, [args.input], [path], started, t0)
    return EXIT_OK


def _parse_powers(text) -> np.ndarray:
    """Pump powers in mW: 'a,b,c' or 'start:stop:step' (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            vals = start + step * np.arange(max(n, 0))
        else:
            vals = np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise ConfigError("powers", f"cannot parse power sweep {text!r}") from None
    if vals.size == 0 or np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ConfigError("powers", "need at least one finite, non-negative power")
    return vals * 1e-3


def cmd_budget(args) -> int:
    t0, started = time.time(), now_iso()
    cfg = _load_config(args)
    if cfg.conversion is None:
        raise ConfigError("conversion", "the budget command needs a conversion stage")
    powers = _parse_powers(args.powers) if args.powers else np.unique(
        np.r_[np.arange(0.0, 0.1501, 0.01), cfg.pump_power])
    T = args.hours * 3600.0 if args.hours is not None else None
    if T is not None and not T > 0:
        raise ConfigError("hours", "must be > 0")
    rel = args.pump_rel_sigma if args.pump_rel_sigma is not None else cfg.analysis.pump_rel_sigma
    table = format_budget_table(rate_budget(cfg, powers, T, rel))
    sys.stdout.write(table)
    out = _out_dir(args)
    path = os.path.join(out, "budget.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(table)
    _finish(args, out, "budget", cfg, None, [], [path], started, t0)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    t0, started = time.time(), now_iso()
    cfg = _load_config(args)
    out = _out_dir(args)
    hist_path = os.path.join(out, "histogram.csv")
    fit_path = os.path.join(out, "fit.json")
    budget_path = os.path.join(out, "budget.json")
    report_path = os.path.join(out, "report.json")
    taps = {"detected": os.path.join(out, "detected.ttg")} if args.emit_tags else None
    ck = os.path.join(out, "checkpoint.pkl") if (args.checkpoint_every or args.resume) else None
    outputs = [hist_path, fit_path, budget_path, report_path] + (list(taps.values()) if taps else [])
    def progress(i, n):
        print(f"segment {i}/{n}", file=sys.stderr)
    try:
        res = run_pipeline(cfg, checkpoint_path=ck, checkpoint_every=args.checkpoint_every, resume=args.resume,
                           taps=taps, progress=progress if args.progress else None)
        side = write_histogram_csv(res.histogram, hist_path, {"integration_time_s": cfg.duration_s})
        outputs.append(side)
        _write_json(fit_path, res.fit.to_dict())
        budget = budget_for(cfg, pump_rel_sigma=cfg.analysis.pump_rel_sigma) if cfg.conversion is not None else None
        _write_json(budget_path, {"measured": res.budget.to_dict(),
                                  "expected": None if budget is None else budget.to_dict()})
        _write_json(report_path, res.report())
    except BaseException:
        _remove(p for p in outputs + [os.path.join(out, "histogram.meta.json")] if p != ck)
        raise
    print(res.fit.summary())
    b = res.budget
    print(f"flat={res.histogram.flat_level:.4g} ss={b.ss:.4g} sb={b.sb:.4g} bb={b.bb:.4g}"
          + ("" if res.corrected_g2 is None else f" g2_corrected={res.corrected_g2:.4f}"))
    _finish(args, out, "pipeline", cfg, cfg.seed, [], outputs, started, t0)
    return EXIT_OK


def cmd_rerun(args) -> int:
    m = read_manifest(args.manifest)
    if m.command not in COMMANDS or m.command == "rerun":
        raise ConfigError("command", f"manifest names unknown command {m.command!r}")
    for name, digest in m.inputs.items():
        if not os.path.exists(name) or sha256_file(name) != digest:
            raise FormatError(f"input {name} is missing or differs from the manifest")
    ns = argparse.Namespace(**m.args)
    ns.out = args.out
    ns.config_snapshot = m.config
    rc = COMMANDS[m.command](ns)
    if rc == EXIT_OK:
        new = os.path.join(args.out, MANIFEST_NAME)
        fresh = read_manifest(new).outputs
        diff = sorted(k for k in m.outputs if fresh.get(k) != m.outputs[k])
        if diff:
            print("outputs differ from the original run: " + ", ".join(diff), file=sys.stderr)
            return EXIT_IO
        print(f"reproduced {len(m.outputs)} output file(s) byte-identically")
    return rc


def cmd_verify(args) -> int:
    problems = verify_manifest(args.manifest)
    for p in problems:
        print(p)
    if not problems:
        print("all digests match")
    return EXIT_OK if not problems else EXIT_IO


COMMANDS = {
    "simulate": cmd_simulate,
    "convert": cmd_convert,
    "detect": cmd_detect,
    "correlate": cmd_correlate,
    "fit": cmd_fit,
    "budget": cmd_budget,
    "pipeline": cmd_pipeline,
    "rerun": cmd_rerun,
    "verify": cmd_verify,
}


# ---- parser ----------------------------------------------------------------

def _add_globals(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d, help="pipeline config (JSON)")
    p.add_argument("--preset", metavar="NAME", default=d, help=f"built-in config: {', '.join(PRESETS)}")
    p.add_argument("--scale", type=float, metavar="F", default=d, help="multiply the configured duration")
    p.add_argument("--seed", type=_seed_arg, metavar="U64", default=d, help="override the config seed")
    p.add_argument("--out", metavar="DIR", default=d, help="output directory (default: .)")
    p.add_argument("--threads", type=int, metavar="N", default=d, help="worker threads, 0 = auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdconvert", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate tag streams")
    p.add_argument("--stages", default="source", help=f"comma list of {','.join(TAP_STAGES)}")

    p = sub.add_parser("convert", parents=[common], help="apply frequency conversion to a tag file")
    p.add_argument("input")
    p.add_argument("--with-background", action="store_true", help="merge the pump-induced background")

    p = sub.add_parser("detect", parents=[common], help="split a tag file onto two detectors")
    p.add_argument("input")

    p = sub.add_parser("correlate", parents=[common], help="coincidence histogram of two channels")
    p.add_argument("inputs", nargs="+", metavar="FILE")
    p.add_argument("--channels", type=int, nargs=2, default=(1, 2), metavar=("A", "B"),
                   help="channels to correlate when a single file is given")
    p.add_argument("--bin-width", type=int)
    p.add_argument("--tau-min", type=int)
    p.add_argument("--tau-max", type=int)
    p.add_argument("--exclusion", type=int, help="half-width of the region left out of normalization")

    p = sub.add_parser("fit", parents=[common], help="fit a normalized histogram")
    p.add_argument("input")
    p.add_argument("--mode", choices=("eq1", "eq2"))
    p.add_argument("--sigma", type=float, help="fixed jitter (ps) for eq2")
    p.add_argument("--t0", type=float, help="fixed delay (ps) for eq2")

    p = sub.add_parser("budget", parents=[common], help="rate and coincidence budget over pump power")
    p.add_argument("--powers", help="pump powers in mW: 'a,b,c' or 'start:stop:step'")
    p.add_argument("--hours", type=float, help="integration time (default: configured duration)")
    p.add_argument("--pump-rel-sigma", type=float, help="relative pump-power fluctuation")

    p = sub.add_parser("pipeline", parents=[common], help="full simulation, correlation and fit")
    p.add_argument("--checkpoint-every", type=int, metavar="N", help="checkpoint every N segments")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint in --out")
    p.add_argument("--emit-tags", action="store_true", help="also write detected tags")
    p.add_argument("--progress", action="store_true")

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)

    p = sub.add_parser("verify", help="check manifest digests against files on disk")
    p.add_argument("manifest")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in GLOBAL_FLAGS:
        if not hasattr(args, name):
            setattr(args, name, None)
    func = COMMANDS[args.command]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, UnsortedInputError) as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
