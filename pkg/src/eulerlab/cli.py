"""``lab`` command line: run a named experiment or regress against goldens.

Exit codes: 0 all rows pass, 1 some row fails (or regression drift),
2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, ValidationError

from .experiments import EXPERIMENTS, PARAMS, run_experiment
from .reports import regress

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("eulerlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: Literal["green-table", "linear-decay", "optimality", "nonlinear-decay",
                        "large-damping", "blowup", "parabolic"]
    params: dict = {}
    out: str = "lab-out"
    seed: int = 0


class ConfigError(Exception):
    pass


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc


def _describe(exc: ValidationError, prefix: str) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in (prefix, *err["loc"]) if x != "")
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def build_config(args) -> tuple[ExperimentConfig, BaseModel]:
    raw = load_config_file(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table/object at the top level")
    raw = dict(raw)
    if "experiment" in raw and raw["experiment"] != args.experiment:
        raise ConfigError(f"experiment: config names {raw['experiment']!r} but {args.experiment!r} was requested")
    raw["experiment"] = args.experiment
    if args.out is not None:
        raw["out"] = args.out
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        cfg = ExperimentConfig(**raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc, "")) from exc

    params = dict(cfg.params)
    model = PARAMS[cfg.experiment]
    fields = model.model_fields
    for flag, key in ((args.gamma, "gamma"), (args.grid, "n")):
        if flag is None:
            continue
        if key not in fields:
            raise ConfigError(f"--{'grid' if key == 'n' else key} does not apply to {cfg.experiment}")
        params[key] = flag
    if args.paper_example:
        if "paper_example" not in fields:
            raise ConfigError(f"--paper-example does not apply to {cfg.experiment}")
        params["paper_example"] = True
    try:
        p = model(**params)
    except ValidationError as exc:
        raise ConfigError(_describe(exc, "params")) from exc
    return cfg, p


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lab", description="Damped Euler numerical laboratory.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="JSON or TOML config file")
        sp.add_argument("--out", help="output directory (default lab-out)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--gamma", type=float)
        sp.add_argument("--grid", type=int, help="points per axis")
        sp.add_argument("--paper-example", action="store_true")
        sp.set_defaults(experiment=name)
    rg = sub.add_parser("regress", help="compare a report directory with golden reports")
    rg.add_argument("report_dir")
    rg.add_argument("golden_dir")
    return ap


def _run(args) -> int:
    try:
        cfg, params = build_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        res = run_experiment(cfg.experiment, params, cfg.seed)
        out = res.write(cfg.out)
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.exception("experiment failed")
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for row in res.rows:
        print(row.line())
    print(f"{cfg.experiment}: {'PASS' if res.passed else 'FAIL'} ({res.runtime:.1f} s) -> {out}")
    return EXIT_OK if res.passed else EXIT_FAIL


def _regress(args) -> int:
    try:
        rep = regress(args.report_dir, args.golden_dir)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in rep["failures"]:
        print(f"DRIFT {f['file']}:{f['quantity']} {f['reason']}"
              + (f" golden={f['golden']} measured={f['measured']}" if "golden" in f else ""))
    for u in rep["ungoldened"]:
        print(f"UNGOLDENED {u['file']}:{u['quantity']}")
    print(f"compared {rep['compared']} quantities, {len(rep['failures'])} failures")
    return EXIT_OK if rep["ok"] else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "regress":
        return _regress(args)
    return _run(args)


if __name__ == "__main__":
    sys.exit(main())
