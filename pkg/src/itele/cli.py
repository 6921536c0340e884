"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import ml, report, traffgen
from .broker import Machines, ProviderMap, load_provider_map
from .features import SUBPROFILE_WINDOWS
from .replay import Replay
from .trace import TraceFormatError, read_trace, read_truth, write_trace, write_truth

log = logging.getLogger("itele")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def read_config(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    cfg = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{lineno}: expected key=value")
            cfg[key.strip()] = _value(value.strip())
    return cfg


def parse_params(text: str | None) -> dict:
    if not text:
        return {}
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"bad parameter {item!r}; expected name=value")
        out[key.strip()] = _value(value.strip())
    return out


def parse_grid(text: str) -> dict:
    """``depth=1..12;attrs=1..6`` or ``leaf=1,2,4,8``."""
    grid = {}
    for item in text.split(";"):
        key, sep, spec = item.partition("=")
        if not sep:
            raise UsageError(f"bad grid axis {item!r}")
        spec = spec.strip()
        if ".." in spec:
            lo, hi = spec.split("..", 1)
            grid[key.strip()] = list(range(int(lo), int(hi) + 1))
        else:
            grid[key.strip()] = [_value(v) for v in spec.split(",")]
    if not grid:
        raise UsageError("empty grid")
    return grid


def _trainer(algorithm, seed, params):
    try:
        return ml.make_trainer(algorithm, seed, **params)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _dataset(path):
    try:
        return ml.read_dataset(path)
    except OSError as exc:
        raise DataError(str(exc)) from None
    except ml.DatasetFormatError as exc:
        raise DataError(str(exc)) from None


# commands

def cmd_generate(args) -> int:
    cfg = read_config(args.config)
    mode = cfg.pop("mode", "dataset")
    seed = args.seed
    if mode == "dataset":
        n_video = int(cfg.pop("n_video", cfg.pop("video", 0)))
        n_download = int(cfg.pop("n_download", cfg.pop("download", 0)))
        target = cfg.pop("target", "identifier")
        _reject_extra(cfg)
        if n_video + n_download < 1 or target not in ("identifier", "resolution"):
            raise UsageError("dataset config needs n_video/n_download and target identifier|resolution")
        ident, res = traffgen.generate_dataset(n_video, n_download, seed)
        data = ident if target == "identifier" else res
        if data is None:
            raise UsageError("resolution dataset needs n_video >= 1")
        ml.write_dataset(data, args.out)
        log.info("wrote %d instances to %s", len(data), args.out)
        return EXIT_OK
    if mode == "trace":
        trace = _mixed_trace(cfg, seed)
    elif mode == "stress":
        try:
            trace = traffgen.generate_stress(
                int(cfg.pop("n_pairs", 14)), int(cfg.pop("blocks_per_pair", 20)),
                int(cfg.pop("ports_per_block", 114)),
                (float(cfg.pop("rate_min", 0.8)), float(cfg.pop("rate_max", 1.2))),
                int(cfg.pop("duration", 300)), seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        _reject_extra(cfg)
    else:
        raise UsageError(f"unknown mode {mode!r}")
    n = write_trace(trace.packets, args.out)
    write_truth(trace.truth, truth_path(args.out))
    log.info("wrote %d records, %d flows to %s", n, len(trace.truth), args.out)
    return EXIT_OK


def truth_path(trace_path) -> str:
    return str(trace_path) + ".truth"


def _reject_extra(cfg):
    if cfg:
        raise UsageError(f"unknown config keys: {', '.join(sorted(cfg))}")


def _mixed_trace(cfg: dict, seed: int):
    duration = int(cfg.pop("duration", 128))
    spread = float(cfg.pop("start_spread", 0.0))
    providers = str(cfg.pop("providers", "Youtube")).split(",")
    kinds = []
    for res in traffgen.RESOLUTIONS:
        kinds += [("video", res)] * int(cfg.pop(f"video_{res}", 0))
    kinds += [("download", None)] * int(cfg.pop("download", 0))
    kinds += [("app_mice", None)] * int(cfg.pop("mice", 0))
    _reject_extra(cfg)
    if not kinds:
        raise UsageError("trace config requests no flows")
    for p in providers:
        if p not in traffgen.PROVIDER_SUFFIX:
            raise UsageError(f"unknown provider {p!r}")
    rng = np.random.default_rng(seed)
    specs = []
    for fid, (kind, res) in enumerate(kinds, start=1):
        provider = providers[(fid - 1) % len(providers)] if kind == "video" else "Unknown"
        start = 1.0 + float(rng.uniform(0.0, spread)) if spread else 1.0
        specs.append(traffgen.StreamSpec(kind, duration, round(start, 3), traffgen.derive_seed(seed, fid),
                                         provider, res, fid))
    return traffgen.generate_trace(specs)


def _machines(args) -> Machines:
    ident_path, res_path = args.identifier, args.resolution
    if args.models:
        ident_path = ident_path or os.path.join(args.models, "identifier.json")
        res_path = res_path or os.path.join(args.models, "resolution.json")
    try:
        ident = ml.load_model(ident_path) if ident_path else None
        res = ml.load_model(res_path) if res_path and os.path.exists(res_path) else None
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load models: {exc}") from None
    return Machines(ident, res)


def cmd_replay(args) -> int:
    providers = ProviderMap(dict(traffgen.DEFAULT_SUFFIXES))
    if args.providers:
        try:
            providers = load_provider_map(args.providers)
        except (OSError, ValueError) as exc:
            raise UsageError(str(exc)) from None
    machines = _machines(args)
    truth = None
    tpath = args.truth or truth_path(args.trace)
    if os.path.exists(tpath):
        try:
            truth = read_truth(tpath)
        except TraceFormatError as exc:
            raise DataError(str(exc)) from None
    replay = Replay(providers, machines, table_capacity=args.capacity, speed=args.speed)
    try:
        replay.run(read_trace(args.trace))
    except OSError as exc:
        raise DataError(str(exc)) from None
    except (TraceFormatError, ValueError) as exc:
        raise DataError(f"malformed trace: {exc}") from None
    summary = report.write_bundle(replay, args.out, truth)
    print(json.dumps({k: v for k, v in summary.items() if k != "final_verdicts"}, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    data = _dataset(args.dataset)
    trainer = _trainer(args.algorithm, args.seed, parse_params(args.params))
    try:
        model = trainer(data)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    ml.save_model(model, args.out)
    print(f"{args.algorithm} model written to {args.out} sha256={ml.model_hash(model)[:16]}")
    return EXIT_OK


def cmd_tune(args) -> int:
    data = _dataset(args.dataset)
    grid = parse_grid(args.grid)
    fixed = parse_params(args.params)
    _trainer(args.algorithm, args.seed, {**fixed, **{k: v[0] for k, v in grid.items()}})
    rows = ml.tune_grid(data, lambda **p: ml.make_trainer(args.algorithm, args.seed, **fixed, **p),
                        grid, args.folds, args.seed)
    text = ml.format_grid(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    data = _dataset(args.dataset)
    if args.model:
        try:
            model = ml.load_model(args.model)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load model: {exc}") from None
        cm = ml.ConfusionMatrix.empty(data.class_set)
        cm.add(data.y, model.predict(data.X))
    else:
        trainer = _trainer(args.algorithm, args.seed, parse_params(args.params))
        try:
            cm, _ = ml.cross_validate(data, trainer, args.folds, args.seed)
        except ml.TooFewInstances as exc:
            raise DataError(str(exc)) from None
    print(cm.format())
    return EXIT_OK


def cmd_merit(args) -> int:
    data = _dataset(args.dataset)
    print(ml.info_gain_merit(data, args.folds, args.seed).format())
    return EXIT_OK


def accuracy_curve(data, trainer, k=10, rng_seed=0) -> list:
    """Pooled cross-validated predictions broken down by sub-profile window."""
    if data.window is None:
        raise UsageError("dataset has no window annotations")
    _, _, pred = ml.cross_validate(data, trainer, k, rng_seed, return_predictions=True)
    rows = []
    for a, b in SUBPROFILE_WINDOWS:
        mask = data.window == f"{a}-{b}"
        if mask.any():
            rows.append((f"[{a},{b}]", float((pred[mask] == data.y[mask]).mean())))
    return rows


def cmd_accuracy_curve(args) -> int:
    data = _dataset(args.dataset)
    trainer = _trainer(args.algorithm, args.seed, parse_params(args.params))
    for window, acc in accuracy_curve(data, trainer, args.folds, args.seed):
        print(f"{window}\t{acc:.4f}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        log_records = report.read_verdict_log(args.log)
    except OSError as exc:
        raise DataError(str(exc)) from None
    except report.EmptyLog as exc:
        raise DataError(str(exc)) from None
    tables = report.analytics(log_records)
    if args.out:
        report.write_analytics(tables, args.out)
    print(f"streams\t{tables['n_streams']}\tvideo\t{tables['n_video_streams']}")
    for provider, share in tables["provider_share"]:
        print(f"share\t{provider}\t{share:.4f}")
    for hour, *vals in tables["resolution_per_hour"]:
        print("hour\t" + str(hour) + "\t" + "\t".join(f"{v:.4f}" for v in vals))
    for name in ("change_ccdf", "duration_ccdf", "rate_ccdf"):
        for x, p in tables[name]:
            print(f"{name}\t{x:.6g}\t{p:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="itele", description="Flow telemetry simulator and video flow classifier")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=True):
        if dataset:
            sp.add_argument("dataset")
        sp.add_argument("--seed", type=int, default=0)

    def algo(sp):
        sp.add_argument("--algorithm", choices=("tree", "forest", "mlp"), default="forest")
        sp.add_argument("--params", default="", help="name=value,... e.g. depth=9,attrs=1,trees=100")
        sp.add_argument("--folds", type=int, default=10)

    g = sub.add_parser("generate", help="generate a dataset or trace from a config file")
    g.add_argument("--config", required=True)
    g.add_argument("--out", required=True)
    common(g, dataset=False)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("replay", help="replay a trace through the full pipeline")
    r.add_argument("trace")
    r.add_argument("--out", required=True, help="report directory")
    r.add_argument("--models", help="directory holding identifier.json and resolution.json")
    r.add_argument("--identifier")
    r.add_argument("--resolution")
    r.add_argument("--providers", help="suffix<TAB>provider file")
    r.add_argument("--truth")
    r.add_argument("--capacity", type=int, default=100_000)
    r.add_argument("--speed", choices=("realtime", "max"), default="max")
    common(r, dataset=False)
    r.set_defaults(func=cmd_replay)

    t = sub.add_parser("train", help="train a model")
    common(t)
    algo(t)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    tu = sub.add_parser("tune", help="cross-validate a parameter grid")
    common(tu)
    algo(tu)
    tu.add_argument("--grid", required=True, help="e.g. 'depth=1..12;attrs=1..6'")
    tu.add_argument("--out")
    tu.set_defaults(func=cmd_tune)

    e = sub.add_parser("eval", help="confusion matrix by cross-validation or of a saved model")
    common(e)
    algo(e)
    e.add_argument("--model")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("merit", help="information-gain merit of each attribute")
    common(m)
    m.add_argument("--folds", type=int, default=10)
    m.set_defaults(func=cmd_merit)

    rep = sub.add_parser("report", help="analytics tables from a verdict log")
    rep.add_argument("log")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)

    ac = sub.add_parser("accuracy-curve", help="accuracy per sub-profile window")
    common(ac)
    algo(ac)
    ac.set_defaults(func=cmd_accuracy_curve)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ITELE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"itele: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"itele: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
