"""``liftpolicy`` command line: decompose, gen, train, eval, rollout, verify, ablate.

Exit codes: 0 success, 1 verification failure, 2 usage or config error,
3 I/O error (missing, unreadable or malformed input files).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import DimensionError, UsageError
from .data import generate_dataset, load_jsonl, save_jsonl
from .evaluation import ABLATION_VARIANTS, ModelPolicy, ablation_csv, ablation_suite, rollout, rollout_report
from .layers import ConfigError
from .lifting import decomposition_table, multilevel_decompose, multilevel_reconstruct
from .network import WaveletPolicyConfig, config_from_dict, parse_config_text
from .training import TrainConfig, TrainingDiverged, evaluate, heldout_metrics, load_state, log_to_csv, train, train_config_from_dict
from .verify import SUITES

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("liftpolicy")


class InputError(Exception):
    """Unreadable or malformed input file (exit code 3)."""


# helpers --------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read_csv_column(path: str, column: str = "0") -> np.ndarray:
    """One numeric column of a CSV file; a non-numeric first row is a header."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    rows = [(i, r) for i, r in enumerate(csv.reader(io.StringIO(text)), 1) if any(c.strip() for c in r)]
    if not rows:
        raise InputError(f"{path}: empty CSV")
    header = None
    try:
        [float(c) for c in rows[0][1]]
    except ValueError:
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
    if column.isdigit():
        idx = int(column)
    elif header is not None and column in header:
        idx = header.index(column)
    else:
        raise UsageError(f"no column {column!r} in {path}")
    values = []
    for lineno, row in rows:
        try:
            values.append(float(row[idx]))
        except (ValueError, IndexError):
            raise InputError(f"{path}:{lineno}: expected a number in column {column!r}, got {row!r}") from None
    if not values:
        raise InputError(f"{path}: no data rows")
    return np.asarray(values)


def demo_trajectory(n: int = 256, seed: int = 0) -> np.ndarray:
    """A joint-angle-like trace: a slow reach, a mid-frequency sway, fast jitter."""
    rng = np.random.default_rng(seed)
    t = np.arange(n) / n
    reach = 0.8 / (1.0 + np.exp(-12.0 * (t - 0.4)))
    sway = 0.15 * np.sin(2 * np.pi * 6 * t)
    jitter = 0.04 * np.sin(2 * np.pi * 40 * t + 1.0)
    return reach + sway + jitter + rng.normal(0.0, 0.01, n)


def _table_csv(header: List[str], table: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in table:
        w.writerow([str(int(row[0]))] + [_fmt(v) for v in row[1:]])
    return buf.getvalue()


def _read_config_file(path: Optional[str]) -> Dict[str, str]:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    raw = parse_config_text(text)
    known = {f.name for f in dataclasses.fields(WaveletPolicyConfig)} | {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}")
    return raw


def _parse_sets(pairs: Sequence[str]) -> Dict[str, str]:
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise UsageError(f"--set expects KEY=VALUE, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# flags that override config keys; dest name equals the config key
OVERRIDE_FLAGS = [
    ("--epochs", int), ("--batch-size", int), ("--lr", float), ("--seed", int),
    ("--alpha", float), ("--beta", float), ("--variant", str), ("--scales", int),
    ("--model-width", int), ("--head-kind", str), ("--bin-count", int),
]


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file (model and training keys)")
    for flag, typ in OVERRIDE_FLAGS:
        p.add_argument(flag, type=typ, default=None, help=f"override config key {flag[2:].replace('-', '_')}")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any other config key (repeatable)")


def resolve_configs(args) -> Tuple[WaveletPolicyConfig, TrainConfig, Dict[str, str]]:
    """Merge built-in defaults < config file < command-line flags.

    Returns both configs and the source of every key for the startup report.
    """
    file_raw = _read_config_file(args.config)
    flag_raw = {}
    for flag, _ in OVERRIDE_FLAGS:
        key = flag[2:].replace("-", "_")
        val = getattr(args, key, None)
        if val is not None:
            flag_raw[key] = str(val)
    flag_raw.update(_parse_sets(getattr(args, "set", [])))
    known = {f.name for f in dataclasses.fields(WaveletPolicyConfig)} | {f.name for f in dataclasses.fields(TrainConfig)}
    bad = sorted(set(flag_raw) - known)
    if bad:
        raise ConfigError(f"unknown config keys {', '.join(bad)}")
    merged = {**file_raw, **flag_raw}
    try:
        cfg = config_from_dict(merged)
        tcfg = train_config_from_dict(merged)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg.validate()
    tcfg.validate()
    sources = {k: "flag" if k in flag_raw else "file" if k in file_raw else "default" for k in known}
    return cfg, tcfg, sources


def report_config(cfg: WaveletPolicyConfig, tcfg: TrainConfig, sources: Dict[str, str]) -> None:
    lines = ["configuration (flag > file > default):"]
    for obj in (cfg, tcfg):
        for f in dataclasses.fields(obj):
            lines.append(f"  {f.name} = {getattr(obj, f.name)}  [{sources.get(f.name, 'default')}]")
    print("\n".join(lines), file=sys.stderr)


def _load_dataset(path: str):
    try:
        return load_jsonl(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _load_ckpt(path: str):
    try:
        return load_state(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: bad checkpoint ({exc})") from None


# subcommands ------------------------------------------------------------------------


def cmd_decompose(args) -> int:
    if args.demo == (args.input is not None):
        raise UsageError("give exactly one of --input or --demo")
    x = demo_trajectory(args.length, args.seed) if args.demo else read_csv_column(args.input, args.column)
    header, table = decomposition_table(x, args.levels, args.wavelet)
    _write_text(args.out, _table_csv(header, table))
    if args.verify:
        comp_err = float(np.max(np.abs(table[:, 2:].sum(axis=1) - x)))
        rec_err = float(np.max(np.abs(multilevel_reconstruct(multilevel_decompose(x, args.levels, args.wavelet)) - x)))
        err = max(comp_err, rec_err)
        ok = err < 1e-10
        print(f"[{'PASS' if ok else 'FAIL'}] max abs reconstruction error {err:.3e}", file=sys.stderr)
        return EXIT_OK if ok else EXIT_VERIFY
    return EXIT_OK


def cmd_gen(args) -> int:
    ds = generate_dataset(args.task, args.episodes, args.T, args.seed)
    save_jsonl(ds, args.out)
    print(f"wrote {len(ds)} {args.task} episodes (T={args.T}) to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg, tcfg, sources = resolve_configs(args)
    report_config(cfg, tcfg, sources)
    ds = _load_dataset(args.data)
    state = None
    if args.resume:
        state = _load_ckpt(args.resume)
        if dataclasses.asdict(state.config) != dataclasses.asdict(cfg):
            raise ConfigError("model config differs from the checkpoint being resumed")
        state.train_cfg = tcfg
    state, rows = train(ds, cfg, tcfg, state, args.max_steps)
    state.save(args.out)
    prior = []
    if args.resume and Path(args.log).exists():
        prior = Path(args.log).read_text().splitlines(keepends=True)[1:]
    text = log_to_csv(rows)
    head, body = text.split("\n", 1)
    Path(args.log).write_text(head + "\n" + "".join(prior) + body)
    last = rows[-1] if rows else None
    if last is not None:
        print(f"step {last['step']} total {last['total']:.6f}", file=sys.stderr)
    print(f"checkpoint {args.out}, log {args.log}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    state = _load_ckpt(args.ckpt)
    ds = _load_dataset(args.data)
    if ds.obs_dim != state.config.obs_dim or ds.act_dim != state.config.act_dim:
        raise ConfigError(f"dataset dims (obs {ds.obs_dim}, act {ds.act_dim}) do not match the checkpoint "
                          f"(obs {state.config.obs_dim}, act {state.config.act_dim})")
    obs, act = ds.arrays(False)
    terms = evaluate(state.model, state.obs_norm.normalize(obs), state.act_norm.normalize(act), state.train_cfg)
    metrics = heldout_metrics(state, ds)
    report = {**terms, "alpha": state.train_cfg.alpha, "beta": state.train_cfg.beta,
              "mse": metrics["mse"], "r2": metrics["r2"], "episodes": len(ds)}
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_rollout(args) -> int:
    state = _load_ckpt(args.ckpt)
    T = args.T or state.config.context_length
    policy = ModelPolicy.from_state(state, sample=not args.argmax)
    if args.env == "fork" and state.config.obs_dim != 4 or args.env == "tracking" and state.config.obs_dim != 2:
        raise ConfigError(f"checkpoint obs_dim {state.config.obs_dim} does not fit env {args.env}")
    report = rollout_report(rollout(policy, args.env, args.n, args.seed, T))
    Path(args.out).write_text(json.dumps(report, indent=1) + "\n")
    print(f"success rate {report['success_rate']:.3f} over {args.n} rollouts")
    if "mode_frequencies" in report:
        freqs = report["mode_frequencies"]
        print(f"left {freqs.get('left', 0.0):.3f}  right {freqs.get('right', 0.0):.3f}")
        print(f"entropy {report['entropy']:.4f} bits")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        kwargs = {"variant": args.variant} if name == "causality" else {}
        for check in SUITES[name](**kwargs):
            print(check.line())
            ok &= check.passed
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_ablate(args) -> int:
    cfg, tcfg, sources = resolve_configs(args)
    report_config(cfg, tcfg, sources)
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {args.seeds!r}") from None
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    unknown = [v for v in variants if v not in ABLATION_VARIANTS]
    if unknown or not seeds:
        raise UsageError(f"need seeds and variants from {', '.join(ABLATION_VARIANTS)}")
    ds = _load_dataset(args.data)
    rows = ablation_suite(ds, cfg, tcfg, seeds, variants, args.rollouts)
    _write_text(args.out, ablation_csv(rows))
    return EXIT_OK


# parser -------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liftpolicy", description=__doc__.split("\n")[0],
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    d = sub.add_parser("decompose", help="multi-level lifting decomposition of a 1-D signal", formatter_class=fmt)
    d.add_argument("--input", help="CSV file holding the signal")
    d.add_argument("--column", default="0", help="column index or header name")
    d.add_argument("--demo", action="store_true", help="use a synthetic joint trajectory")
    d.add_argument("--length", type=int, default=256, help="demo signal length")
    d.add_argument("--seed", type=int, default=0, help="demo noise seed")
    d.add_argument("--wavelet", choices=["haar", "db2"], default="haar", help="classical lifting wavelet")
    d.add_argument("--levels", type=int, default=4, help="number of detail levels")
    d.add_argument("--out", default=None, help="output CSV (stdout when omitted)")
    d.add_argument("--verify", action="store_true", help="print the max reconstruction error")
    d.set_defaults(func=cmd_decompose)

    g = sub.add_parser("gen", help="generate a synthetic demonstration dataset", formatter_class=fmt)
    g.add_argument("--task", choices=["tracking", "fork"], default="tracking", help="synthetic task")
    g.add_argument("--episodes", type=int, default=1000, help="number of episodes")
    g.add_argument("--seed", type=int, default=0, help="dataset seed")
    g.add_argument("--T", type=int, default=32, help="episode length")
    g.add_argument("--out", required=True, help="output JSONL path")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="behavior-clone a policy", formatter_class=fmt)
    _add_override_flags(t)
    t.add_argument("--data", required=True, help="JSONL dataset")
    t.add_argument("--out", default="model.ckpt.json", help="checkpoint path")
    t.add_argument("--log", default="train_log.csv", help="per-step loss log")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--max-steps", type=int, default=None, help="stop after this many steps")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="loss terms and point-prediction error on a dataset", formatter_class=fmt)
    e.add_argument("--ckpt", required=True, help="checkpoint to evaluate")
    e.add_argument("--data", required=True, help="JSONL dataset")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rollout", help="closed-loop rollouts of a trained policy", formatter_class=fmt)
    r.add_argument("--ckpt", required=True, help="trained checkpoint")
    r.add_argument("--env", choices=["fork", "tracking"], default="fork", help="environment")
    r.add_argument("--n", type=int, default=100, help="number of rollouts")
    r.add_argument("--seed", type=int, default=0, help="initial-condition and sampling seed")
    r.add_argument("--T", type=int, default=None, help="horizon (default: context length)")
    r.add_argument("--argmax", action="store_true", help="take the most likely bin instead of sampling")
    r.add_argument("--out", default="rollouts.json", help="per-rollout JSON report")
    r.set_defaults(func=cmd_rollout)

    v = sub.add_parser("verify", help="run a seeded property suite", formatter_class=fmt)
    v.add_argument("--suite", choices=sorted(SUITES) + ["all"], required=True, help="property suite to run")
    v.add_argument("--variant", choices=list(ABLATION_VARIANTS), default="learnable",
                   help="network variant for the causality suite")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("ablate", help="train every variant over several seeds", formatter_class=fmt)
    _add_override_flags(a)
    a.add_argument("--data", required=True, help="JSONL dataset")
    a.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    a.add_argument("--variants", default=",".join(ABLATION_VARIANTS), help="comma-separated variants")
    a.add_argument("--rollouts", type=int, default=20, help="rollouts per trained model (0 to skip)")
    a.add_argument("--out", default="ablation.csv", help="comparison CSV")
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
