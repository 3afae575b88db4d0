"""Command-line experiment runner.

``run`` trains one configuration and writes ``report.jsonl`` (one JSON
record per measurement) plus ``summary.txt``; ``compare`` diffs two
reports; ``synth`` writes a synthetic MovieLens-format ratings file.

Exit codes: 0 success, 2 configuration error, 3 verification failure,
4 protocol abort.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
from dataclasses import asdict, dataclass, fields
from importlib import metadata
from pathlib import Path

from . import __version__
from .data_io import DatasetConfig, EmptySelection, ParseError, default_ratings_path, load_ratings, split
from .errors import SumBoundViolation
from .fixedpoint import FixedParams
from .mf_core import HyperParams
from .protocol.adversary import parse_adversary
from .protocol.training import (
    TrainingConfig,
    compute_seconds,
    fit_fixed_params,
    max_participants,
    run_training,
    step_times,
)

SCHEMA = 1
EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_ABORT = 0, 2, 3, 4
MODES = ("parttext", "fulltext", "plaintext")


class ConfigError(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "parttext"
    data: str = ""
    users: int = 100
    items: int = 60
    test_fraction: float = 0.2
    dim: int = 16
    gamma: float = 0.001
    lam: float = 0.01
    mu: float = 0.01
    iterations: int = 50
    alpha: int = 10**7
    modulus: int = 2**34
    value_bound: float = 2.0
    window_bits: int = 11
    adversary: str = "honest"
    delivery: str = "fifo"
    seed: int = 0
    split_seed: int = 0
    out: str = "out"

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.delivery not in ("fifo", "shuffle"):
            raise ConfigError("delivery must be fifo or shuffle")
        try:
            HyperParams(self.dim, self.gamma, self.lam, self.mu, self.iterations)
            FixedParams(self.alpha, self.modulus)
            DatasetConfig(self.data or "-", self.users, self.items, test_fraction=self.test_fraction,
                          split_seed=self.split_seed)
            parse_adversary(self.adversary)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not 1 <= self.window_bits <= 16:
            raise ConfigError("window_bits must lie in [1, 16]")


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            v = value.strip()
            if "**" in v:
                base, exp = v.split("**")
                return int(base) ** int(exp)
            return int(float(v)) if "e" in v.lower() else int(v)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return value.strip()


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; dashes and underscores are interchangeable."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="verifiable-fedmf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="train one configuration and write a report")
    run.add_argument("--config", help="key = value file; flags override it")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        kw = {"dest": f.name, "default": None}
        if f.name == "mode":
            kw["choices"] = MODES
        run.add_argument(flag, type=str, **kw)
    run.add_argument("--quiet", action="store_true")

    cmp = sub.add_parser("compare", help="compare two reports")
    cmp.add_argument("a")
    cmp.add_argument("b")
    cmp.add_argument("--rmse-tol", type=float, default=None)
    cmp.add_argument("--time-ratio-min", type=float, default=None)

    syn = sub.add_parser("synth", help="write a synthetic MovieLens-format ratings file")
    syn.add_argument("path")
    syn.add_argument("--seed", type=int, default=0)
    syn.add_argument("--users", type=int, default=610)
    syn.add_argument("--items", type=int, default=9712)
    return p


def resolve_config(args) -> ExperimentConfig:
    values = read_config_file(args.config) if args.config else {}
    for name in _FIELD_TYPES:
        v = getattr(args, name)
        if v is not None:
            values[name] = _coerce(name, v)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def _versions() -> dict:
    out = {"python": platform.python_version(), "verifiable-fedmf": __version__}
    for pkg in ("numpy", "gmpy2", "cryptography"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return None
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def run_experiment(cfg: ExperimentConfig, log=print) -> tuple[int, Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    data_path = Path(cfg.data) if cfg.data else default_ratings_path()
    synthetic = not cfg.data and data_path.name.startswith("synthetic-")
    dcfg = DatasetConfig(data_path, cfg.users, cfg.items, test_fraction=cfg.test_fraction, split_seed=cfg.split_seed)
    try:
        R = load_ratings(dcfg)
    except (OSError, ParseError, EmptySelection, ValueError) as exc:
        raise ConfigError(f"cannot load ratings from {data_path}: {exc}") from None
    train, test = split(R, dcfg)
    hyper = HyperParams(cfg.dim, cfg.gamma, cfg.lam, cfg.mu, cfg.iterations)
    try:
        fixed, notes = fit_fixed_params(FixedParams(cfg.alpha, cfg.modulus), cfg.value_bound,
                                        max_participants(train, cfg.mode))
    except SumBoundViolation as exc:
        raise ConfigError(str(exc)) from None
    tcfg = TrainingConfig(cfg.mode, hyper, FixedParams(cfg.alpha, cfg.modulus), cfg.seed,
                          parse_adversary(cfg.adversary), cfg.delivery, cfg.window_bits, cfg.value_bound)

    def progress(t, model):
        if log:
            log(f"iteration {t}: rmse {model.rmse[-1]:.6f}  ({model.iteration_seconds[-1]:.2f} s)")

    model = run_training(train, test, tcfg, on_iteration=progress)
    records = [{
        "type": "meta",
        "schema": SCHEMA,
        "config": asdict(cfg),
        "effective": {"alpha": fixed.alpha, "modulus": fixed.modulus, "max_participants": fixed.max_participants},
        "dataset": {"path": str(data_path), "synthetic": synthetic, "n": R.n, "m": R.m, "M": R.M,
                    "density": R.density(), "train": train.M, "test": test.M},
        "versions": _versions(),
        "notes": notes,
    }]
    completed = model.iterations_completed
    if completed or model.failure:
        records.append({"type": "rmse", "iteration": 0, "rmse": model.rmse0})
    for t, value in enumerate(model.rmse, 1):
        records.append({"type": "rmse", "iteration": t, "rmse": value})
    for t in range(1, completed + 1):
        for (phase, step), v in step_times(model.timings, t).items():
            records.append({"type": "timing", "iteration": t, "phase": phase, "step": step,
                            "user_mean_s": v["user_mean"], "server_s": v["server"]})
        records.append({"type": "iteration", "iteration": t, "wall_s": model.iteration_seconds[t - 1],
                         "compute_s": compute_seconds(model.timings, t)})
    for (phase, step, direction), v in model.comm.items():
        records.append({"type": "comm", "phase": phase, "step": step, "direction": direction, **v})
    if model.failure:
        records.append({"type": "failure", **model.failure})
    report = out / "report.jsonl"
    with open(report, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, default=_json_default, allow_nan=False) + "\n")
    (out / "summary.txt").write_text(render_summary(records), encoding="utf-8")
    if model.failure:
        return (EXIT_VERIFY if model.failure["kind"] == "verification" else EXIT_ABORT), report
    return EXIT_OK, report


def load_report(path) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"{path}: not a report ({exc})") from None
    if not records or records[0].get("type") != "meta" or "schema" not in records[0]:
        raise SchemaMismatch(f"{path}: missing metadata record")
    return records


def render_summary(records: list[dict]) -> str:
    meta = records[0]
    cfg = meta["config"]
    lines = [
        f"mode {cfg['mode']}  users {meta['dataset']['n']}  items {meta['dataset']['m']}  d {cfg['dim']}"
        f"  iterations {cfg['iterations']}  adversary {cfg['adversary']}",
        f"ratings {meta['dataset']['M']} (density {meta['dataset']['density']:.3f}), "
        f"train {meta['dataset']['train']}, test {meta['dataset']['test']}"
        + ("  [synthetic data]" if meta["dataset"]["synthetic"] else ""),
    ]
    lines += [f"note: {n}" for n in meta["notes"]]
    timing = [r for r in records if r["type"] == "timing"]
    if timing:
        lines += ["", "time per iteration (ms, mean over iterations)", f"{'phase.step':<12}{'user mean':>12}{'server':>12}"]
        keys = sorted({(r["phase"], r["step"]) for r in timing})
        iters = len({r["iteration"] for r in timing})
        for key in keys:
            rows = [r for r in timing if (r["phase"], r["step"]) == key]
            u = sum(r["user_mean_s"] for r in rows) / iters * 1e3
            s = sum(r["server_s"] for r in rows) / iters * 1e3
            lines.append(f"{key[0]}.{key[1]:<10}{u:>12.3f}{s:>12.3f}")
    comm = [r for r in records if r["type"] == "comm"]
    if comm:
        lines += ["", "communication (bytes; per-user figures are per iteration)",
                  f"{'phase.step':<12}{'direction':<16}{'total':>12}{'user mean':>12}{'user max':>12}"]
        for r in comm:
            lines.append(f"{r['phase']}.{r['step']:<10}{r['direction']:<16}{r['total_bytes']:>12}"
                         f"{r['per_user_mean']:>12.1f}{r['per_user_max']:>12.1f}")
    rmse = [r for r in records if r["type"] == "rmse"]
    if rmse:
        lines += ["", "rmse by iteration"]
        lines += [f"{r['iteration']:>4}  {r['rmse']:.6f}" if r["rmse"] is not None else f"{r['iteration']:>4}  n/a"
                  for r in rmse]
    for r in records:
        if r["type"] == "failure":
            if r["kind"] == "verification":
                lines += ["", f"FAILURE: {r['check']} at iteration {r['iteration']}, item {r['item']}, "
                              f"users {r['users']}"]
            else:
                lines += ["", f"ABORT at iteration {r['iteration']}: {r['error']}: {r['reason']}"]
    return "\n".join(lines) + "\n"


def _record_shapes(records) -> dict[str, frozenset]:
    shapes = {}
    for r in records:
        shapes.setdefault(r["type"], frozenset(r))
    return shapes


def compare_reports(a: list[dict], b: list[dict]) -> dict:
    if a[0]["schema"] != b[0]["schema"]:
        raise SchemaMismatch(f"schema {a[0]['schema']} vs {b[0]['schema']}")
    sa, sb = _record_shapes(a), _record_shapes(b)
    for kind in set(sa) & set(sb):
        if sa[kind] != sb[kind]:
            raise SchemaMismatch(f"{kind} records have different fields")

    def series(records, kind, field):
        return {r["iteration"]: r[field] for r in records if r["type"] == kind}

    ra, rb = series(a, "rmse", "rmse"), series(b, "rmse", "rmse")
    shared = sorted(set(ra) & set(rb))
    deltas = {t: abs(ra[t] - rb[t]) for t in shared if ra[t] is not None and rb[t] is not None}

    def per_step(records):
        out = {}
        for r in records:
            if r["type"] == "timing":
                key = f"{r['phase']}.{r['step']}"
                out[key] = out.get(key, 0.0) + r["user_mean_s"] + r["server_s"]
        return out

    ta, tb = per_step(a), per_step(b)
    ratios = {k: (tb[k] / ta[k] if ta[k] > 0 else None) for k in sorted(set(ta) & set(tb))}
    ia, ib = series(a, "iteration", "compute_s"), series(b, "iteration", "compute_s")
    iter_ratio = None
    if ia and ib and sum(ia.values()) > 0:
        iter_ratio = (sum(ib.values()) / len(ib)) / (sum(ia.values()) / len(ia))
    return {
        "rmse_max_delta": max(deltas.values()) if deltas else 0.0,
        "rmse_deltas": deltas,
        "rmse_length": (len(ra), len(rb)),
        "step_time_ratios": ratios,
        "iteration_time_ratio": iter_ratio,
    }


def _cmd_compare(args) -> int:
    try:
        diff = compare_reports(load_report(args.a), load_report(args.b))
    except SchemaMismatch as exc:
        print(f"SchemaMismatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"rmse: max |delta| {diff['rmse_max_delta']:.3e} over {len(diff['rmse_deltas'])} shared iterations")
    if diff["iteration_time_ratio"] is not None:
        print(f"per-iteration time ratio (b/a): {diff['iteration_time_ratio']:.3f}")
    for k, r in diff["step_time_ratios"].items():
        print(f"  step {k}: " + ("n/a" if r is None else f"{r:.3f}"))
    ok = True
    if args.rmse_tol is not None and diff["rmse_max_delta"] > args.rmse_tol:
        ok = False
    if args.time_ratio_min is not None:
        r = diff["iteration_time_ratio"]
        if r is None or r < args.time_ratio_min:
            ok = False
    return EXIT_OK if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "compare":
        return _cmd_compare(args)
    if args.command == "synth":
        from .data_io import synthesize_movielens

        path = synthesize_movielens(args.path, n_users=args.users, n_items=args.items, seed=args.seed)
        print(path)
        return EXIT_OK
    try:
        cfg = resolve_config(args)
        code, report = run_experiment(cfg, log=None if args.quiet else print)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        print(f"report written to {report}")
    return code
