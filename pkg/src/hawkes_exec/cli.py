"""Command-line entry point: ``hawkes-exec <subcommand> [flags]``.

Configuration precedence: command-line flags, then ``--config`` JSON, then
built-in defaults.  Exit codes: 0 success, 2 configuration error, 3 data
error, 4 numerical non-convergence (partial outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .backtest import run_comparison
from .calibrate import CalibrationError, FitConfig, FitResult, fit_mle
from .events_io import DataError, Side, build_volume_profile, load_quotes, load_snapshots, load_trades, write_trades
from .exec_engine import discretize_optimal
from .gof import diagnostics, qq_points, simulated_ks, time_change_residuals, DegenerateSeriesError
from .hawkes_core import HawkesSpec, constant_equivalent_sum, symmetric_reduction
from .impact import BookError, estimate_impact
from .pipeline import impact_params_for, market_spec, simulate_sessions, strategy_set
from .simulate import simulate_market

log = logging.getLogger("hawkes_exec")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NONCONV = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


class NonConvergence(RuntimeError):
    pass


COMMON = {"seed": 0, "threads": 1, "out": "out", "config": None}
WINDOW = {"window": None, "gate_closure": None, "window_hours": None}
DEFAULTS = {
    "calibrate": {
        "trades": None,
        "model": "uni",
        "baseline": "spline",
        "n_basis": 10,
        "n_pieces": 8,
        "restarts": 5,
        "max_iter": 500,
        "tol": 1e-5,
        "min_events": 10,
        **WINDOW,
    },
    "simulate": {
        "spec": None,
        "fits": None,
        "window_hours": 8.0,
        "origin": 0.0,
        "products": None,
        "n_products": 1,
        "max_events": None,
    },
    "gof": {"fits": None, "trades": None, "lags": 100, "sims_per_day": 1, "sim_match": "time", **WINDOW},
    "impact": {
        "snapshots": None,
        "quotes": None,
        "sizes": [10.0, 25.0, 50.0, 100.0],
        "gate_closure": None,
        "tick_size_eur": 1.0,
        "penalty_ticks": 2.0,
        "bin_hours": 1.0,
        "book_side": "B",
        "min_samples": 30,
    },
    "strategy": {
        "fit": None,
        "impact": None,
        "trades": None,
        "product": None,
        "x0": 250.0,
        "horizon": "8h",
        "scale": 1.0,
        "grid_step": 60.0,
        "mu": 0.5,
    },
    "backtest": {
        "fits": None,
        "impact": None,
        "strategies": "optimal,twap,vwap,ow",
        "x0": 250.0,
        "horizon": "8h",
        "seeds": 500,
        "scale": 1.0,
        "grid_step": 60.0,
        "mu": 0.5,
        "products": None,
        "n_boot": 10000,
    },
    "report": {"input": None},
}
REQUIRED = {
    "calibrate": ["trades"],
    "gof": ["fits", "trades"],
    "impact": ["snapshots"],
    "strategy": ["fit"],
    "backtest": ["fits"],
    "report": ["input"],
}
PATH_KEYS = {"trades", "spec", "fits", "fit", "snapshots", "quotes", "impact", "input"}


# --------------------------------------------------------------------------
# serialization


def fmt(x) -> str:
    """17-significant-digit float text; integers and strings unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else None
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    return o


def write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")


# settings that cannot change any output number
NON_SEMANTIC = ("out", "config", "threads")


def _file_digest(path: str) -> str:
    p = Path(path)
    if p.is_dir():
        h = hashlib.sha256()
        for f in sorted(p.iterdir()):
            if f.is_file() and f.name != "manifest.json":
                h.update(f.name.encode())
                h.update(f.read_bytes())
        return h.hexdigest()
    return hashlib.sha256(p.read_bytes()).hexdigest()


def config_hash(cfg: dict) -> str:
    """Hash of the semantic settings; input files enter by content, not by path."""
    core = {k: v for k, v in cfg.items() if k not in NON_SEMANTIC}
    for k in PATH_KEYS & set(core):
        if core[k] is not None:
            core[k] = _file_digest(core[k])
    return hashlib.sha256(json.dumps(_jsonable(core), sort_keys=True).encode()).hexdigest()[:16]


def manifest(cmd: str, cfg: dict) -> dict:
    return {"subcommand": cmd, "config_hash": config_hash(cfg), "seed": int(cfg["seed"]), "version": __version__}


def write_manifest(out: Path, cmd: str, cfg: dict, files: list[str]) -> None:
    m = manifest(cmd, cfg)
    m["config"] = {k: v for k, v in cfg.items() if k not in NON_SEMANTIC}
    # inputs are recorded by content so reruns from another directory match byte for byte
    for k in PATH_KEYS & set(m["config"]):
        if m["config"][k] is not None:
            m["config"][k] = "sha256:" + _file_digest(m["config"][k])
    m["outputs"] = {f: hashlib.sha256((out / f).read_bytes()).hexdigest() for f in sorted(files)}
    write_json(out / "manifest.json", m)


# --------------------------------------------------------------------------
# configuration


def parse_duration(v) -> float:
    """Seconds from ``'8h'``, ``'30m'``, ``'45s'`` or a plain number (seconds)."""
    if isinstance(v, (int, float)):
        return float(v)
    s = str(v).strip().lower()
    units = {"h": 3600.0, "m": 60.0, "s": 1.0}
    try:
        if s and s[-1] in units:
            return float(s[:-1]) * units[s[-1]]
        return float(s)
    except ValueError:
        raise ConfigError(f"bad duration {v!r}") from None


def resolve_config(cmd: str, flags: dict) -> dict:
    allowed = {**COMMON, **DEFAULTS[cmd]}
    cfg = dict(allowed)
    if flags.get("config"):
        try:
            file_cfg = json.loads(Path(flags["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for k, v in flags.items():
        if v is not None:
            cfg[k] = v
    for k in REQUIRED.get(cmd, []):
        if cfg.get(k) in (None, ""):
            raise ConfigError(f"missing required setting {k!r}")
    for k in PATH_KEYS & set(cfg):
        if cfg[k] is not None:
            p = Path(cfg[k]).resolve()
            if not p.exists():
                raise ConfigError(f"{k}: {p} does not exist")
            cfg[k] = str(p)
    try:
        cfg["seed"] = int(cfg["seed"])
        cfg["threads"] = int(cfg["threads"])
    except (TypeError, ValueError):
        raise ConfigError("seed and threads must be integers") from None
    if cfg["seed"] < 0 or cfg["seed"] >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    cfg["out"] = str(Path(cfg["out"]).resolve())
    if "sizes" in cfg and isinstance(cfg["sizes"], str):
        try:
            cfg["sizes"] = [float(s) for s in cfg["sizes"].split(",") if s.strip()]
        except ValueError:
            raise ConfigError("sizes must be comma-separated numbers") from None
    if cmd == "calibrate":
        try:
            FitConfig(model=cfg["model"], baseline=cfg["baseline"], n_basis=int(cfg["n_basis"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if "horizon" in cfg:
        cfg["horizon_s"] = parse_duration(cfg["horizon"])
    return cfg


def _window_arg(cfg: dict, streams_hint=None):
    """Window for load_trades: explicit, gate-closure based, or the data extent (None)."""
    if cfg.get("window") is not None:
        w = cfg["window"]
        if isinstance(w, dict):
            return {k: tuple(map(float, v)) for k, v in w.items()}
        return tuple(map(float, w))
    gate = cfg.get("gate_closure")
    hours = cfg.get("window_hours")
    if gate is not None and hours is not None:
        L = float(hours) * 3600.0
        if isinstance(gate, dict):
            return {k: (float(g) - L, float(g)) for k, g in gate.items()}
        return (float(gate) - L, float(gate))
    return None


# --------------------------------------------------------------------------
# subcommands


def _fit_task(args):
    streams, fcfg = args
    try:
        return fit_mle(streams, fcfg)
    except CalibrationError as exc:
        return exc


def _pmap(fn, tasks, threads: int):
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def cmd_calibrate(cfg: dict, out: Path) -> list[str]:
    coll = load_trades(cfg["trades"], _window_arg(cfg))
    fcfg = FitConfig(
        model=cfg["model"],
        baseline=cfg["baseline"],
        n_basis=int(cfg["n_basis"]),
        n_pieces=int(cfg["n_pieces"]),
        restarts=int(cfg["restarts"]),
        max_iter=int(cfg["max_iter"]),
        tol=float(cfg["tol"]),
        min_events=int(cfg["min_events"]),
    )
    tasks = []
    for prod in coll.products():
        b, s = coll.get((prod, Side.BUY)), coll.get((prod, Side.SELL))
        if fcfg.model == "bi":
            if b is None or s is None:
                raise DataError(f"{prod}: bivariate fit needs both sides")
            tasks.append(([b, s], fcfg))
        else:
            tasks.extend(([x], fcfg) for x in (b, s) if x is not None)
    results = _pmap(_fit_task, tasks, cfg["threads"])
    fits = [r for r in results if isinstance(r, FitResult)]
    errors = [r for r in results if not isinstance(r, FitResult)]
    for e in errors:
        log.error("fit failed: %s", e)
    write_json(out / "fits.json", [f.to_dict() for f in fits])
    files = ["fits.json"]
    write_manifest(out, "calibrate", cfg, files)
    if errors and not fits:
        raise DataError("; ".join(str(e) for e in errors))
    if any(not f.converged for f in fits) or errors:
        raise NonConvergence(f"{sum(not f.converged for f in fits)} fit(s) did not converge")
    return files


def load_fits(path) -> list[FitResult]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read fits: {exc}") from None
    if isinstance(raw, dict) and "fits" in raw:
        raw = raw["fits"]
    try:
        return [FitResult.from_dict(d) for d in raw]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed fits file: {exc}") from None


def _fits_by_product(fits):
    out = {}
    for f in fits:
        out.setdefault(f.product_id, []).append(f)
    return out


def cmd_simulate(cfg: dict, out: Path) -> list[str]:
    T = float(cfg["window_hours"]) * 3600.0
    if cfg.get("spec"):
        try:
            spec = HawkesSpec.from_json(Path(cfg["spec"]).read_text())
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad spec: {exc}") from None
        names = cfg["products"] or [f"SIM{i:02d}" for i in range(int(cfg["n_products"]))]
        specs = {n: spec for n in names}
    elif cfg.get("fits"):
        by = _fits_by_product(load_fits(cfg["fits"]))
        specs = {p: market_spec(f) for p, f in sorted(by.items())}
    else:
        raise ConfigError("simulate needs 'spec' or 'fits'")
    ss = np.random.SeedSequence(cfg["seed"])
    streams = []
    for (name, spec), child in zip(specs.items(), ss.spawn(len(specs))):
        if spec.P == 2:
            from .simulate import simulate_hawkes

            st = simulate_hawkes(spec, (0.0, T), child, max_events=cfg.get("max_events"), product_id=name)
        else:
            st = simulate_market(spec, (0.0, T), child, product_id=name)
        streams.extend(st)
    m1 = next(iter(specs.values())).m1
    write_trades(streams, out / "trades.csv", origin=float(cfg["origin"]), size=m1)
    files = ["trades.csv"]
    write_manifest(out, "simulate", cfg, files)
    return files


def cmd_gof(cfg: dict, out: Path) -> list[str]:
    fits = load_fits(cfg["fits"])
    coll = load_trades(cfg["trades"], _window_arg(cfg))
    rows, files = [], []
    ss = np.random.SeedSequence(cfg["seed"])
    children = ss.spawn(len(fits))
    header = ["day", "product", "side", "fit", "n", "mean", "ks_stat", "ks_p", "ad_stat", "lb_q", "lb_p", "lb_lags",
              "wasserstein", "aic", "sim_ks_p_mean"]
    for k, (f, child) in enumerate(zip(fits, children)):
        sides = [Side.BUY, Side.SELL] if f.spec.P == 2 else [Side(f.label.split("-")[-1])]
        streams = [coll.get((f.product_id, s)) for s in sides]
        if any(s is None for s in streams):
            raise DataError(f"{f.product_id}: trades missing for fitted sides")
        res = time_change_residuals(f.spec, streams)
        sim_p = simulated_ks(f.spec, streams, child, int(cfg["sims_per_day"]), cfg["sim_match"])
        for side, r, ps in zip(sides, res, sim_p):
            rid = f"{f.product_id}_{side.value}_{k}"
            try:
                d = diagnostics(r, int(cfg["lags"]), f.aic).as_row()
            except (ValueError, DegenerateSeriesError) as exc:
                log.warning("%s: %s", rid, exc)
                d = {key: float("nan") for key in header[4:]}
                d["n"] = len(r)
            rows.append([f.window[0], f.product_id, side.value, f.label] + [d[h] for h in header[4:-1]] + [float(np.nanmean(ps))])
            q_t, q_e = qq_points(r)
            name = f"qq_{rid}.csv"
            write_csv(out / name, ["theoretical_quantile", "empirical_quantile"], zip(q_t, q_e))
            files.append(name)
    write_csv(out / "gof.csv", header, rows)
    files.append("gof.csv")
    write_manifest(out, "gof", cfg, files)
    return files


def cmd_impact(cfg: dict, out: Path) -> list[str]:
    snaps = load_snapshots(cfg["snapshots"], 0.0)
    quotes = load_quotes(cfg["quotes"], 0.0) if cfg.get("quotes") else None
    if not snaps:
        raise DataError("no snapshots")
    gate = cfg.get("gate_closure")
    if gate is None:
        gate = {}
        for s in snaps:
            gate[s.product_id] = max(gate.get(s.product_id, -np.inf), s.time)
        if quotes:
            for p, q in quotes.items():
                gate[p] = max(gate.get(p, -np.inf), float(q.timestamps[-1]))
    elif not isinstance(gate, dict):
        gate = float(gate)
    table = estimate_impact(
        snaps,
        quotes,
        [float(x) for x in cfg["sizes"]],
        gate,
        Side.parse(cfg["book_side"]),
        float(cfg["tick_size_eur"]),
        float(cfg["penalty_ticks"]),
        float(cfg["bin_hours"]) * 3600.0,
        int(cfg["min_samples"]),
    )
    if not table:
        raise DataError("no (product, bin) with enough snapshots")
    body = {f"{p}|{b}": row for (p, b), row in table.items()}
    write_json(out / "impact.json", {"manifest": manifest("impact", cfg), "sizes": cfg["sizes"], "bins": body})
    files = ["impact.json"]
    write_manifest(out, "impact", cfg, files)
    return files


def _load_impact(path):
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read impact table: {exc}") from None
    return raw.get("bins", raw)


def cmd_strategy(cfg: dict, out: Path) -> list[str]:
    by = _fits_by_product(load_fits(cfg["fit"]))
    prod = cfg["product"] or sorted(by)[0]
    if prod not in by:
        raise DataError(f"no fit for product {prod!r}")
    spec = market_spec(by[prod])
    T = cfg["horizon_s"]
    params = impact_params_for(prod, _load_impact(cfg["impact"]), spec, T, float(cfg["mu"]))
    sset = strategy_set(spec, params, float(cfg["x0"]), T, float(cfg["scale"]), float(cfg["grid_step"]))
    if cfg.get("trades"):
        coll = load_trades(cfg["trades"])
        b, s = coll.get((prod, Side.BUY)), coll.get((prod, Side.SELL))
        buys = b.times if b is not None else np.empty(0)
        sells = s.times if s is not None else np.empty(0)
    else:
        buys, sells = (x.times for x in simulate_market(spec, (0.0, T), np.random.SeedSequence(cfg["seed"])))
    sched = sset.builders(["optimal"])["Optimal"]((buys, sells))
    rows = zip(sched.grid, sched.targets, sched.trades, sched.kappa, sched.D)
    write_csv(out / "schedule.csv", ["t", "X_t", "xi_t", "kappa_t", "D_t"], rows)
    files = ["schedule.csv"]
    write_manifest(out, "strategy", cfg, files)
    return files


def _backtest_product(args):
    prod, spec, params, cfg, seed = args
    T = cfg["horizon_s"]
    sset = strategy_set(spec, params, float(cfg["x0"]), T, float(cfg["scale"]), float(cfg["grid_step"]))
    names = [s.strip() for s in cfg["strategies"].split(",") if s.strip()]
    builders = sset.builders(names)
    markets = simulate_sessions(spec, T, int(cfg["seeds"]), seed)
    benches = [n for n in builders if n != "Optimal"]
    target = "Optimal" if "Optimal" in builders else benches[0]
    return run_comparison(builders, markets, params, target, [b for b in benches if b != target], prod)


def cmd_backtest(cfg: dict, out: Path) -> list[str]:
    by = _fits_by_product(load_fits(cfg["fits"]))
    prods = cfg["products"] or sorted(by)
    if isinstance(prods, str):
        prods = [p.strip() for p in prods.split(",")]
    impact = _load_impact(cfg["impact"])
    T = cfg["horizon_s"]
    ss = np.random.SeedSequence(cfg["seed"])
    tasks = []
    for prod, child in zip(prods, ss.spawn(len(prods))):
        if prod not in by:
            raise DataError(f"no fit for product {prod!r}")
        spec = market_spec(by[prod])
        tasks.append((prod, spec, impact_params_for(prod, impact, spec, T, float(cfg["mu"])), cfg, child))
    reports = _pmap(_backtest_product, tasks, cfg["threads"])
    summary, run_rows, table_rows, curve_rows = [], [], [], []
    for rep in reports:
        summary.append(rep.summary(int(cfg["n_boot"]), cfg["seed"]))
        table_rows.extend(rep.table())
        for r in rep.runs:
            for s in rep.strategies:
                c = rep.costs[(r, s)]
                run_rows.append([rep.product_id, r, s, c.propagator_cost, c.spread_cost, c.temporary_cost, c.flow_cost, c.total])
        grid = np.arange(1, int(round(T / float(cfg["grid_step"]))) + 1) * float(cfg["grid_step"])
        for b in rep.benchmarks:
            for t, v in zip(grid, rep.difference_curve(b, grid)):
                curve_rows.append([rep.product_id, b, t, v])
    write_json(out / "report.json", {"manifest": manifest("backtest", cfg), "products": summary, "table": table_rows})
    write_csv(out / "runs.csv", ["product", "run", "strategy", "propagator", "spread", "temporary", "flow", "total"], run_rows)
    write_csv(out / "curves.csv", ["product", "benchmark", "t", "rel_cum_cost_diff"], curve_rows)
    files = ["report.json", "runs.csv", "curves.csv"]
    write_manifest(out, "backtest", cfg, files)
    return files


def cmd_report(cfg: dict, out: Path) -> list[str]:
    src = Path(cfg["input"])
    rep = src / "report.json"
    if not rep.exists():
        raise DataError(f"{rep} not found")
    data = json.loads(rep.read_text())
    lines = ["# Backtest report", ""]
    lines.append(f"Runs per product: {', '.join(str(p['n_runs']) for p in data['products'])}")
    lines += ["", "## Relative cost improvement of the target strategy (%)", "", "| product | benchmark | mean | std | 95% CI |", "|---|---|---|---|---|"]
    rows = []
    for p in data["products"]:
        for b, r in sorted(p["relative"].items()):
            mean = r["mean"] if r["mean"] is not None else float("nan")
            std = r["std"] if r["std"] is not None else float("nan")
            lo = r["ci_low"] if r["ci_low"] is not None else float("nan")
            hi = r["ci_high"] if r["ci_high"] is not None else float("nan")
            lines.append(f"| {p['product_id']} | {b} | {100 * mean:.2f} | {100 * std:.2f} | [{100 * lo:.2f}, {100 * hi:.2f}] |")
            rows.append([p["product_id"], b, 100 * mean, 100 * std, 100 * lo, 100 * hi])
    lines += ["", "## Mean cost per strategy (EUR)", "", "| product | strategy | mean | std |", "|---|---|---|---|"]
    for p in data["products"]:
        for s, c in p["strategies"].items():
            lines.append(f"| {p['product_id']} | {s} | {c['mean_cost']:.2f} | {c['std_cost']:.2f} |")
    (out / "report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    write_csv(out / "report.csv", ["product", "benchmark", "mean_pct", "std_pct", "ci_low_pct", "ci_high_pct"], rows)
    files = ["report.md", "report.csv"]
    write_manifest(out, "report", cfg, files)
    return files


COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "gof": cmd_gof,
    "impact": cmd_impact,
    "strategy": cmd_strategy,
    "backtest": cmd_backtest,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="root seed (u64)")
    common.add_argument("--threads", type=int, help="worker processes")
    common.add_argument("--out", help="output directory")
    p = argparse.ArgumentParser(prog="hawkes-exec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("calibrate", parents=[common])
    c.add_argument("--trades")
    c.add_argument("--model", choices=["uni", "bi"])
    c.add_argument("--baseline", choices=["constant", "piecewise", "spline"])
    c.add_argument("--n-basis", dest="n_basis", type=int)
    c.add_argument("--restarts", type=int)
    c.add_argument("--gate-closure", dest="gate_closure", type=float)
    c.add_argument("--window-hours", dest="window_hours", type=float)

    s = sub.add_parser("simulate", parents=[common])
    s.add_argument("--spec")
    s.add_argument("--fits")
    s.add_argument("--window-hours", dest="window_hours", type=float)
    s.add_argument("--n-products", dest="n_products", type=int)
    s.add_argument("--origin", type=float)
    s.add_argument("--max-events", dest="max_events", type=int)

    g = sub.add_parser("gof", parents=[common])
    g.add_argument("--fits")
    g.add_argument("--trades")
    g.add_argument("--lags", type=int)
    g.add_argument("--sims-per-day", dest="sims_per_day", type=int)
    g.add_argument("--sim-match", dest="sim_match", choices=["time", "count"])
    g.add_argument("--gate-closure", dest="gate_closure", type=float)
    g.add_argument("--window-hours", dest="window_hours", type=float)

    i = sub.add_parser("impact", parents=[common])
    i.add_argument("--snapshots")
    i.add_argument("--quotes")
    i.add_argument("--sizes")
    i.add_argument("--gate-closure", dest="gate_closure", type=float)
    i.add_argument("--tick-size-eur", dest="tick_size_eur", type=float)

    st = sub.add_parser("strategy", parents=[common])
    st.add_argument("--fit")
    st.add_argument("--impact")
    st.add_argument("--trades")
    st.add_argument("--product")
    st.add_argument("--x0", type=float)
    st.add_argument("--horizon")
    st.add_argument("--scale", type=float)
    st.add_argument("--mu", type=float)

    b = sub.add_parser("backtest", parents=[common])
    b.add_argument("--fits")
    b.add_argument("--impact")
    b.add_argument("--strategies")
    b.add_argument("--x0", type=float)
    b.add_argument("--horizon")
    b.add_argument("--seeds", type=int)
    b.add_argument("--scale", type=float)
    b.add_argument("--mu", type=float)
    b.add_argument("--products")

    r = sub.add_parser("report", parents=[common])
    r.add_argument("--in", dest="input")
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    flags = {k: v for k, v in vars(ns).items() if k not in ("cmd", "verbose")}
    try:
        cfg = resolve_config(ns.cmd, flags)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[ns.cmd](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, BookError, CalibrationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NonConvergence as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
