"""Config-driven batch tool.

Subcommands: expand (per-order diagram listings), evaluate (numeric series
CSVs), check (correspondence report), simulate (Monte Carlo CSVs), report
(joined summary).  The config is a flat INI file whose sections mirror the
run blocks; --set section.key=value overrides individual entries.  Every
artifact embeds the resolved config and tool version in comment headers so
reruns are reproducible.  Exit codes: 2 config error, 3 engine error,
4 check failure.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .correspondence import run_check
from .diagrams import DiagramError, sum_to_text
from .errors import ConfigError, EngineError
from .evaluate import NumericSeries, QuadConfig, evaluate_diagram
from .mc import MCConfig, exact_benchmark, simulate
from .model import (
    Constant,
    CutoffFunction,
    ModelError,
    ModelSpec,
    PolyT,
    Polynomial1D,
    Sinusoid,
    Tabulated,
)
from .msr import Monomial, msr_expectation
from .sde import sde_expectation

DEFAULTS = {
    "model": {"alpha": "0", "beta": "1", "sigma": "1.0", "x0": "1.0", "theta0": "0", "epsilon": "1.0"},
    "chi": {"kind": "plateau", "a": "-0.5", "a1": "0.0", "b1": "1.0", "b": "1.5", "sharpness": "1.0"},
    "observables": {"times": "0.6, 0.9", "monomials": "0"},
    "expansion": {"order": "2", "max_order": "8", "route": "direct", "mode": "auto"},
    "quadrature": {
        "grid_n": "24",
        "samples_log2": "17",
        "seed": "20240901",
        "tol_rel": "1e-6",
        "strict": "false",
    },
    "mc": {"scheme": "heun", "dt": "1e-3", "paths": "100000", "seed": "42", "antithetic": "false"},
    "output": {"directory": "out"},
}


# ---------------------------------------------------------------------------
# config parsing


def _split_top(text: str, sep: str = ","):
    """Split on sep at parenthesis depth zero."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if cur or parts:
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_coefficient(token: str):
    if "(" not in token:
        try:
            return Constant(float(Fraction(token)))
        except ValueError as exc:
            raise ConfigError(f"bad coefficient {token!r}") from exc
    name, _, rest = token.partition("(")
    args = _split_top(rest.rstrip(")"))
    name = name.strip()
    if name == "polyt":
        return PolyT(tuple(float(a) for a in args))
    if name == "sin":
        vals = [float(a) for a in args]
        while len(vals) < 4:
            vals.append(0.0)
        return Sinusoid(*vals[:4])
    if name == "tab":
        ts, vs = [], []
        for pair in args:
            t, _, v = pair.partition(":")
            ts.append(float(t))
            vs.append(float(v))
        return Tabulated(tuple(ts), tuple(vs))
    raise ConfigError(f"unknown coefficient function {name!r}")


def _parse_polynomial(text: str) -> Polynomial1D:
    return Polynomial1D(tuple(_parse_coefficient(tok) for tok in _split_top(text)))


def _parse_bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


@dataclass
class RunConfig:
    model: ModelSpec
    times: tuple[float, ...]
    monomials: tuple[tuple[int, ...], ...]
    order: int
    max_order: int
    route: str
    mode: str
    quad: QuadConfig
    mc_scheme: str
    mc_dt: float
    mc_paths: int
    mc_seed: int
    mc_antithetic: bool
    outdir: Path
    raw: dict

    def monomial(self, indices) -> Monomial:
        return Monomial.from_indices(indices)


def load_config(path: str | None, overrides=()) -> RunConfig:
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULTS)
    if path is not None:
        read = parser.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path!r}")
    for item in overrides:
        key, _, value = item.partition("=")
        section, _, option = key.partition(".")
        if not value or not option:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if not parser.has_section(section) and section not in parser.defaults():
            parser.add_section(section)
        parser.set(section.strip(), option.strip(), value.strip())
    try:
        m = parser["model"]
        chi_sec = parser["chi"]
        kind = chi_sec.get("kind")
        chi = CutoffFunction(
            kind,
            chi_sec.getfloat("a"),
            chi_sec.getfloat("b"),
            chi_sec.getfloat("a1", 0.0),
            chi_sec.getfloat("b1", 0.0),
            chi_sec.getfloat("sharpness", 1.0),
        )
        model = ModelSpec(
            alpha=_parse_polynomial(m.get("alpha")),
            beta=_parse_polynomial(m.get("beta")),
            sigma=m.getfloat("sigma"),
            x0=m.getfloat("x0"),
            theta0=Fraction(m.get("theta0")),
            chi=chi,
            epsilon=m.getfloat("epsilon"),
        )
        obs = parser["observables"]
        times = tuple(float(t) for t in _split_top(obs.get("times")))
        monomials = tuple(
            tuple(int(i) for i in grp.split()) for grp in obs.get("monomials").split(";") if grp.strip()
        )
        if len(set(times)) != len(times):
            raise ConfigError("observation times must be distinct")
        for mono in monomials:
            if any(i < 0 or i >= len(times) for i in mono):
                raise ConfigError(f"monomial {mono} references a missing time index")
        exp = parser["expansion"]
        quad_sec = parser["quadrature"]
        quad = QuadConfig(
            grid_n=quad_sec.getint("grid_n"),
            samples_log2=quad_sec.getint("samples_log2"),
            seed=quad_sec.getint("seed"),
            tol_rel=quad_sec.getfloat("tol_rel"),
            strict=_parse_bool(quad_sec.get("strict")),
        )
        mc_sec = parser["mc"]
        raw = {s: dict(parser[s]) for s in parser.sections()}
        return RunConfig(
            model=model,
            times=times,
            monomials=monomials,
            order=exp.getint("order"),
            max_order=exp.getint("max_order"),
            route=exp.get("route"),
            mode=exp.get("mode"),
            quad=quad,
            mc_scheme=mc_sec.get("scheme"),
            mc_dt=mc_sec.getfloat("dt"),
            mc_paths=mc_sec.getint("paths"),
            mc_seed=mc_sec.getint("seed"),
            mc_antithetic=_parse_bool(mc_sec.get("antithetic")),
            outdir=Path(parser["output"].get("directory")),
            raw=raw,
        )
    except (ValueError, KeyError, ModelError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# artifacts


def _header(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.raw, sort_keys=True, separators=(",", ":"))
    return f"# sdemsr {__version__}\n# config {blob}\n"


def _write(cfg: RunConfig, name: str, body: str) -> Path:
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    path = cfg.outdir / name
    path.write_text(_header(cfg) + body)
    return path


def _write_resolved(cfg: RunConfig) -> None:
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    parser = configparser.ConfigParser()
    parser.read_dict(cfg.raw)
    with open(cfg.outdir / "resolved_config.ini", "w") as fh:
        parser.write(fh)
    meta = {"version": __version__, "config": cfg.raw}
    (cfg.outdir / "run_metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def _mono_name(mono) -> str:
    return "m" + "_".join(str(i) for i in mono)


def _series_for(cfg: RunConfig, pipeline: str, mono) -> dict:
    f = cfg.monomial(mono)
    model1 = cfg.model.replace(epsilon=1.0)
    if pipeline == "msr":
        return msr_expectation(f, model1, cfg.order, max_order=cfg.max_order, times=cfg.times)
    return sde_expectation(f, model1, cfg.order, max_order=cfg.max_order, times=cfg.times, route=cfg.route)


# ---------------------------------------------------------------------------
# subcommands


def cmd_expand(cfg: RunConfig, args) -> int:
    pipelines = ["msr", "sde"] if args.pipeline == "both" else [args.pipeline]
    _write_resolved(cfg)
    for pipeline in pipelines:
        for mono in cfg.monomials:
            series = _series_for(cfg, pipeline, mono)
            blocks = []
            for m in range(cfg.order + 1):
                blocks.append(f"# order {m}\n{sum_to_text(series.entry(m))}")
            _write(cfg, f"expand_{pipeline}_{_mono_name(mono)}.txt", "\n".join(blocks))
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    pipelines = ["msr", "sde"] if args.pipeline == "both" else [args.pipeline]
    _write_resolved(cfg)
    model1 = cfg.model.replace(epsilon=1.0)
    pool = ThreadPoolExecutor(max_workers=args.jobs) if args.jobs > 1 else None
    try:
        for pipeline in pipelines:
            for mono in cfg.monomials:
                series = _series_for(cfg, pipeline, mono)
                rows = []
                for m in range(cfg.order + 1):
                    terms = series.entry(m).terms()
                    if pool is None:
                        parts = [evaluate_diagram(d, model1, cfg.times, cfg.quad) for d in terms]
                    else:
                        parts = list(
                            pool.map(lambda d: evaluate_diagram(d, model1, cfg.times, cfg.quad), terms)
                        )
                    value = sum(p[0] for p in parts)
                    err = sum(p[1] for p in parts)
                    rows.append((m, value, err))
                body = "order,value,error\n" + "\n".join(f"{m},{v!r},{e!r}" for m, v, e in rows) + "\n"
                _write(cfg, f"series_{pipeline}_{_mono_name(mono)}.csv", body)
    finally:
        if pool is not None:
            pool.shutdown()
    return 0


def cmd_check(cfg: RunConfig, args) -> int:
    _write_resolved(cfg)
    model1 = cfg.model.replace(epsilon=1.0)
    reports = {"_meta": {"version": __version__, "config": cfg.raw}}
    ok = True
    for mono in cfg.monomials:
        f = cfg.monomial(mono)
        report = run_check(f, model1, cfg.order, mode=args.mode or cfg.mode, times=cfg.times, quad=cfg.quad)
        reports[_mono_name(mono)] = report.to_dict()
        ok = ok and report.overall
        print(f"[{_mono_name(mono)}] {report.summary()}")
    cfg.outdir.mkdir(parents=True, exist_ok=True)
    (cfg.outdir / "check_report.json").write_text(json.dumps(reports, indent=2))
    return 0 if ok else 4


def cmd_simulate(cfg: RunConfig, args) -> int:
    _write_resolved(cfg)
    mc_cfg = MCConfig(
        scheme=cfg.mc_scheme,
        dt=cfg.mc_dt,
        paths=cfg.mc_paths,
        seed=cfg.mc_seed,
        times=cfg.times,
        monomials=cfg.monomials,
        antithetic=cfg.mc_antithetic,
    )
    result = simulate(cfg.model, mc_cfg)
    lines = ["monomial,scheme,estimate,stderr,paths"]
    for row in result.rows:
        lines.append(
            f"{'|'.join(str(i) for i in row.monomial)},{row.scheme},{row.estimate!r},{row.stderr!r},{row.paths}"
        )
    _write(cfg, "mc_result.csv", "\n".join(lines) + "\n")
    return 0


def _read_csv(path: Path):
    rows = []
    header = None
    for line in path.read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append(dict(zip(header, line.split(","))))
    return rows


def cmd_report(cfg: RunConfig, args) -> int:
    eps = cfg.model.epsilon
    lines = ["monomial,series_at_eps,series_err,mc_estimate,mc_stderr,abs_delta,tol_3sigma,verdict"]
    text = [f"coupling scale eps = {eps}"]
    mc_rows = {}
    mc_path = cfg.outdir / "mc_result.csv"
    if mc_path.exists():
        for row in _read_csv(mc_path):
            mono = tuple(int(i) for i in row["monomial"].split("|"))
            mc_rows[mono] = (float(row["estimate"]), float(row["stderr"]))
    overall = True
    for mono in cfg.monomials:
        path = cfg.outdir / f"series_msr_{_mono_name(mono)}.csv"
        if not path.exists():
            path = cfg.outdir / f"series_sde_{_mono_name(mono)}.csv"
        if not path.exists():
            text.append(f"{_mono_name(mono)}: no series artifact; run `evaluate` first")
            continue
        orders = {int(r["order"]): (float(r["value"]), float(r["error"])) for r in _read_csv(path)}
        series = NumericSeries(max(orders), orders)
        value, err = series.eval_at(eps)
        if mono in mc_rows:
            est, se = mc_rows[mono]
            delta = abs(value - est)
            tol = 3.0 * se + err
            verdict = "ok" if delta <= tol else "FAIL"
            overall = overall and delta <= tol
            lines.append(f"{'|'.join(map(str, mono))},{value!r},{err!r},{est!r},{se!r},{delta!r},{tol!r},{verdict}")
            text.append(
                f"{_mono_name(mono)}: series {value:.6g} +- {err:.2g}, mc {est:.6g} +- {se:.2g}, "
                f"|delta| {delta:.3g} vs 3-sigma {tol:.3g} -> {verdict}"
            )
        else:
            lines.append(f"{'|'.join(map(str, mono))},{value!r},{err!r},,,,,")
            text.append(f"{_mono_name(mono)}: series {value:.6g} +- {err:.2g} (no MC artifact)")
    _write(cfg, "summary.csv", "\n".join(lines) + "\n")
    summary = "\n".join(text)
    _write(cfg, "summary.txt", summary + "\n")
    print(summary)
    return 0 if overall else 4


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sdemsr", description=__doc__)
    parser.add_argument("--version", action="version", version=f"sdemsr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", nargs="?", default=None, help="INI config path")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
        p.add_argument("--out", default=None, help="override output directory")
        p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("expand", help="emit per-order diagram listings")
    common(p)
    p.add_argument("--pipeline", choices=["msr", "sde", "both"], default="both")
    p = sub.add_parser("evaluate", help="emit numeric series CSVs")
    common(p)
    p.add_argument("--pipeline", choices=["msr", "sde", "both"], default="msr")
    p = sub.add_parser("check", help="run the correspondence checks")
    common(p)
    p.add_argument("--mode", choices=["auto", "additive", "multiplicative", "general"], default=None)
    p = sub.add_parser("simulate", help="run the Monte Carlo oracle")
    common(p)
    p = sub.add_parser("report", help="join artifacts into a summary")
    common(p)

    args = parser.parse_args(argv)
    try:
        overrides = list(args.overrides)
        if args.out:
            overrides.append(f"output.directory={args.out}")
        cfg = load_config(args.config, overrides)
        start = time.perf_counter()
        rc = {
            "expand": cmd_expand,
            "evaluate": cmd_evaluate,
            "check": cmd_check,
            "simulate": cmd_simulate,
            "report": cmd_report,
        }[args.command](cfg, args)
        print(f"{args.command} finished in {time.perf_counter() - start:.2f} s -> {cfg.outdir}")
        return rc
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (EngineError, DiagramError, ModelError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
