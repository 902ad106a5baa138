"""Command-line interface: ``recallbias {estimate,bounds,sensitivity,simulate,balance}``.

Every option may also come from a ``--config`` file of ``key = value``
lines (keys are the long option names); flags given on the command line
win.  Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

import numpy as np

from .core import RecallBiasSpec
from .errors import ConfigError, RecallBiasError
from .estimators import ModelSpec
from .inference import bootstrap_ci, delta_sweep, eta_sweep, result_with_bootstrap, sensitivity_grid
from .io import dump_json, ingest_csv, read_config, write_text
from .methods import STRATIFIED, MethodConfig, estimate, merged_assignment, prepare
from .simulation import ESTIMATORS, SCENARIOS, ScenarioConfig, run_studies
from .stratification import balance_diagnostics, naive_stratified_asmd, raw_asmd

log = logging.getLogger("recallbias")

# option name -> (type, default); ``None`` defaults mean "not set"
COMMON = {
    "input": (str, None),
    "outcome": (str, "y"),
    "exposure": (str, "zstar"),
    "covariates": (str, None),
    "method": (str, None),
    "eta0": (float, None),
    "eta1": (float, None),
    "n_strata": (int, 10),
    "block_size": (int, 20),
    "strata_size": (int, None),
    "seed": (int, 0),
    "threads": (int, 1),
    "output": (str, None),
    "format": (str, None),
}
EXTRA = {
    "estimate": {"bootstrap": (int, 0), "level": (float, 0.95)},
    "bounds": {"deltas": (str, "0:0.5:0.05"), "assumption": (str, "box")},
    "sensitivity": {"eta0_grid": (str, "0:0.5:0.05"), "eta1_grid": (str, "0:0.5:0.05"),
                    "eta_grid": (str, None), "line": (bool, False), "bootstrap": (int, 0),
                    "level": (float, 0.95)},
    "simulate": {"scenario": (str, "cor_cor"), "n": (str, "2000"), "replications": (int, 100),
                 "estimators": (str, ",".join(ESTIMATORS)), "json_output": (str, None)},
    "balance": {},
}
DEFAULT_METHOD = {"estimate": "ml", "bounds": "prop", "sensitivity": "ml", "balance": "prop"}


def _parse_bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {v!r}")


def parse_grid(text: str, name: str = "grid") -> np.ndarray:
    """``"a,b,c"`` lists points; ``"start:stop:step"`` is an inclusive range."""
    text = str(text).strip()
    if not text:
        raise ConfigError(f"{name} is empty")
    try:
        if ":" in text:
            start, stop, step = (float(s) for s in text.split(":"))
            if step <= 0:
                raise ConfigError(f"{name} step must be positive")
            m = int(np.floor((stop - start) / step + 1e-9))
            return np.round(start + step * np.arange(m + 1), 12)
        return np.array([float(s) for s in text.split(",") if s.strip()])
    except ValueError as exc:
        raise ConfigError(f"cannot parse {name} {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recallbias",
                                description="Treatment effects under differential exposure under-reporting.")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "estimate": "point estimate, optionally with a bootstrap interval (JSON)",
        "bounds": "effect bounds as the rate cap delta grows (CSV)",
        "sensitivity": "estimates over an (eta0, eta1) lattice or the eta0 = eta1 line (CSV)",
        "simulate": "Monte Carlo study of bias and RMSE (CSV, optional JSON)",
        "balance": "covariate ASMD before and after recall-bias correction (CSV)",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, description=text)
        sp.add_argument("--config", help="key = value file; flags override it")
        for key, (typ, _) in {**COMMON, **EXTRA[name]}.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                sp.add_argument(flag, dest=key, action="store_const", const=True, default=None)
            else:
                sp.add_argument(flag, dest=key, default=None)
    return p


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags, converting types."""
    table = {**COMMON, **EXTRA[args.command]}
    values = {k: d for k, (_, d) in table.items()}
    origin = {}
    if args.config:
        for key, (raw, line) in read_config(args.config).items():
            if key not in table:
                raise ConfigError(f"{args.config}:{line}: unknown key {key!r} for {args.command}")
            values[key] = raw
            origin[key] = f"{args.config}:{line}"
    for key in table:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
            origin[key] = "--" + key.replace("_", "-")
    out = {}
    for key, (typ, default) in table.items():
        v = values[key]
        if v is None or not isinstance(v, str):
            out[key] = v
            continue
        try:
            out[key] = _parse_bool(v) if typ is bool else typ(v)
        except (TypeError, ValueError) as exc:
            where = origin.get(key, key)
            raise ConfigError(f"{where}: cannot read {key} = {v!r} as {typ.__name__}") from exc
    if out.get("method") is None and args.command in DEFAULT_METHOD:
        out["method"] = DEFAULT_METHOD[args.command]
    return out


def _spec(cfg: dict, required: bool = False) -> RecallBiasSpec:
    e0, e1 = cfg.get("eta0"), cfg.get("eta1")
    if e0 is None and e1 is None:
        if required:
            raise ConfigError("this command needs --eta0 and --eta1")
        return RecallBiasSpec(0.0, 0.0)
    if e0 is None or e1 is None:
        raise ConfigError("give both --eta0 and --eta1")
    return RecallBiasSpec(e0, e1)


def _method_config(cfg: dict) -> MethodConfig:
    for key in ("n_strata", "block_size", "strata_size"):
        if cfg.get(key) is not None and cfg[key] < 1:
            raise ConfigError(f"{key} must be positive")
    return MethodConfig(method=cfg["method"], n_strata=cfg["n_strata"], block_size=cfg["block_size"],
                        strata_size=cfg["strata_size"], seed=cfg["seed"], models=ModelSpec())


def _no_spec(cfg: dict, command: str) -> None:
    if cfg.get("eta0") is not None or cfg.get("eta1") is not None:
        raise ConfigError(f"{command} sweeps its own rate grid; drop --eta0/--eta1")


def _load(cfg: dict):
    if not cfg.get("input"):
        raise ConfigError("--input is required")
    cov = None
    if cfg.get("covariates"):
        cov = [c.strip() for c in cfg["covariates"].split(",") if c.strip()]
    return ingest_csv(cfg["input"], cfg["outcome"], cfg["exposure"], cov)


def cmd_estimate(cfg: dict, stdout=sys.stdout) -> int:
    data = _load(cfg)
    spec = _spec(cfg)
    mc = _method_config(cfg)
    res = estimate(data, spec, mc)
    if cfg["bootstrap"]:
        ci = bootstrap_ci(data, spec, mc, cfg["bootstrap"], cfg["level"], cfg["seed"], cfg["threads"],
                          point=res.tau_hat)
        res = result_with_bootstrap(res, ci)
    body = res.as_dict()
    body["n"] = data.n
    body["config"] = {k: mc.__dict__[k] for k in ("n_strata", "block_size", "strata_size", "seed")}
    write_text(dump_json(body), cfg["output"], stdout)
    return 0


def cmd_bounds(cfg: dict, stdout=sys.stdout) -> int:
    _no_spec(cfg, "bounds")
    data = _load(cfg)
    sweep = delta_sweep(data, _method_config(cfg), cfg["assumption"], parse_grid(cfg["deltas"], "deltas"))
    text = sweep.to_json() if cfg.get("format") == "json" else sweep.to_csv()
    write_text(text, cfg["output"], stdout)
    return 0


def cmd_sensitivity(cfg: dict, stdout=sys.stdout) -> int:
    _no_spec(cfg, "sensitivity")
    data = _load(cfg)
    mc = _method_config(cfg)
    if cfg["line"] or cfg.get("eta_grid"):
        grid = parse_grid(cfg.get("eta_grid") or "0:0.5:0.1", "eta_grid")
        sweep = eta_sweep(data, mc, grid, cfg["bootstrap"], cfg["level"], cfg["seed"], cfg["threads"])
    else:
        sweep = sensitivity_grid(data, mc, parse_grid(cfg["eta0_grid"], "eta0_grid"),
                                 parse_grid(cfg["eta1_grid"], "eta1_grid"), cfg["threads"])
    text = sweep.to_json() if cfg.get("format") == "json" else sweep.to_csv()
    write_text(text, cfg["output"], stdout)
    return 0


def cmd_simulate(cfg: dict, stdout=sys.stdout) -> int:
    spec = _spec(cfg)
    if cfg.get("eta0") is None:
        spec = RecallBiasSpec(0.1, 0.2)
    scenarios = [s.strip() for s in cfg["scenario"].split(",") if s.strip()]
    bad = [s for s in scenarios if s not in SCENARIOS]
    if bad:
        raise ConfigError(f"scenario: unknown {bad}; choose from {', '.join(SCENARIOS)}")
    try:
        sizes = [int(s) for s in str(cfg["n"]).split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"n: cannot parse {cfg['n']!r}") from exc
    estimators = tuple(s.strip() for s in cfg["estimators"].split(",") if s.strip())
    configs = [ScenarioConfig(scenario=s, n=n, spec=spec, replications=cfg["replications"],
                              seed=cfg["seed"], strata_size=cfg["strata_size"] or 50,
                              estimators=estimators)
               for s in scenarios for n in sizes]
    report = run_studies(configs, cfg["threads"])
    text = report.to_json() + "\n" if cfg.get("format") == "json" else report.to_csv()
    write_text(text, cfg["output"], stdout)
    if cfg.get("json_output"):
        write_text(report.to_json() + "\n", cfg["json_output"])
    return 0


def cmd_balance(cfg: dict, stdout=sys.stdout) -> int:
    spec = _spec(cfg, required=True)
    data = _load(cfg)
    mc = _method_config(cfg)
    if mc.method not in STRATIFIED:
        raise ConfigError(f"balance needs a stratified method ({', '.join(STRATIFIED)})")
    assignment = merged_assignment(prepare(data, mc), spec)
    before = raw_asmd(data)
    naive = naive_stratified_asmd(assignment, data)
    corrected = balance_diagnostics(assignment, data, spec)
    lines = ["covariate,raw,naive_stratified,corrected"]
    for j, name in enumerate(data.covariate_names):
        lines.append(",".join([name] + [repr(float(v[j])) for v in (before, naive, corrected)]))
    write_text("\n".join(lines) + "\n", cfg["output"], stdout)
    return 0


COMMANDS = {"estimate": cmd_estimate, "bounds": cmd_bounds, "sensitivity": cmd_sensitivity,
            "simulate": cmd_simulate, "balance": cmd_balance}


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=stderr)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg, stdout)
    except RecallBiasError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
