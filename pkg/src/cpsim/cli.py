"""Command line: ``cpsim run``, ``cpsim sweep``, ``cpsim dump-defaults``.

Exit codes: 0 ok, 1 runtime failure, 2 configuration/validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import ConfigError, ExperimentConfig, POLICIES, load_config
from .engine import run_experiment, write_frames_csv, write_summary_csv

log = logging.getLogger("cpsim")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


@dataclass
class SweepSpec:
    policies: list
    n_values: list
    seeds: list
    base_config: str | None = None

    def validate(self) -> "SweepSpec":
        for name in ("policies", "n_values", "seeds"):
            if not getattr(self, name):
                raise ConfigError(name, "must be a non-empty list")
        for p in self.policies:
            if p not in POLICIES:
                raise ConfigError("policies", f"unknown policy {p!r}")
        for n in self.n_values:
            if int(n) < 0:
                raise ConfigError("n_values", "must be >= 0")
        for s in self.seeds:
            if int(s) < 0:
                raise ConfigError("seeds", "must be >= 0")
        return self

    def runs(self):
        for p in self.policies:
            for n in self.n_values:
                for s in self.seeds:
                    yield p, int(n), int(s)


def _parse_sets(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _int_list(text: str) -> list:
    """``"1,2,5"`` or ``"1..10"`` (inclusive)."""
    out = []
    for part in (p for p in text.split(",") if p.strip()):
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _base_config(path, overrides: dict) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().with_overrides(overrides)
    if not Path(path).is_file():
        raise ConfigError("--config", f"no such file: {path}")
    return load_config(path, overrides)


def cmd_run(args) -> int:
    overrides = _parse_sets(args.set)
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = _base_config(args.config, overrides)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_experiment(cfg)
    write_frames_csv(result.logs, out / "frames.csv")
    write_summary_csv([result.summary_row()], out / "summary.csv", timing=args.timing)
    log.info("%s N=%d seed=%d: mean loss %.4f, mean recall %.4f (%.1fs)", cfg.policy.name,
             cfg.n_select, cfg.seed, result.mean_loss, result.mean_recall, result.wall_time_s)
    return EXIT_OK


def _sweep_job(job):
    cfg_dict, policy, n, seed = job
    cfg = ExperimentConfig.from_dict(cfg_dict).with_overrides(
        {"policy.name": policy, "n_select": n, "seed": seed})
    try:
        return run_experiment(cfg).summary_row()
    except Exception as exc:  # one bad row must not sink the sweep
        return {"policy": policy, "N": n, "seed": seed, "frames": 0, "mean_loss": "",
                "mean_recall": "", "wall_time_s": None, "status": f"error: {exc}"}


def load_sweep_spec(args) -> SweepSpec:
    data = {}
    if args.spec:
        if not Path(args.spec).is_file():
            raise ConfigError("--spec", f"no such file: {args.spec}")
        try:
            data = json.loads(Path(args.spec).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("--spec", f"invalid JSON: {exc}") from None
        unknown = set(data) - {"policies", "n_values", "seeds", "base_config"}
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown sweep key")
    spec = SweepSpec(
        policies=args.policies.split(",") if args.policies else data.get("policies", []),
        n_values=_int_list(args.n_values) if args.n_values is not None else data.get("n_values", []),
        seeds=_int_list(args.seeds) if args.seeds is not None else data.get("seeds", []),
        base_config=args.config or data.get("base_config"),
    )
    return spec.validate()


def run_sweep(spec: SweepSpec, base: ExperimentConfig, jobs: int = 1) -> list[dict]:
    work = [(base.to_dict(), p, n, s) for p, n, s in spec.runs()]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_job, work))
    return [_sweep_job(job) for job in work]


def cmd_sweep(args) -> int:
    spec = load_sweep_spec(args)
    base = _base_config(spec.base_config, _parse_sets(args.set))
    rows = run_sweep(spec, base, jobs=max(1, args.jobs))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(rows, out / "summary.csv", timing=args.timing)
    failed = [r for r in rows if r["status"] != "ok"]
    for r in failed:
        log.error("row policy=%s N=%s seed=%s failed: %s", r["policy"], r["N"], r["seed"], r["status"])
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_dump_defaults(args=None) -> int:
    sys.stdout.write(ExperimentConfig().to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpsim", description="Collaborative perception scheduling simulator")
    parser.add_argument("--dump-defaults", action="store_true", help="print the default config and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--timing", action="store_true", help="fill the wall_time_s column")

    run = sub.add_parser("run", help="run one experiment")
    common(run)
    run.add_argument("--seed", type=int)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="run a policy x N x seed grid")
    common(sweep)
    sweep.add_argument("--spec", help="JSON sweep spec with policies, n_values, seeds, base_config")
    sweep.add_argument("--policies", help="comma-separated policy names")
    sweep.add_argument("--n-values", help="e.g. 1..10 or 1,2,4")
    sweep.add_argument("--seeds", help="e.g. 0..4")
    sweep.add_argument("--jobs", type=int, default=1)
    sweep.set_defaults(func=cmd_sweep)

    dump = sub.add_parser("dump-defaults", help="print the default config as JSON")
    dump.set_defaults(func=cmd_dump_defaults)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.dump_defaults:
        return cmd_dump_defaults()
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:
        log.exception("run failed: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
