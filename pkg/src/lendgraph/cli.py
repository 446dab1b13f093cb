"""``lendgraph`` command line: individual stages and the full pipeline."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import jsonschema
import numpy as np
import pandas as pd

from . import __version__
from .geo import build_spatial_index, load_vocabulary, location_features, read_pings, read_pois
from .graph import build_graph, metrics_table
from .ingest import (IngestError, SMS_SECONDS, ingest, load_rules,
                     parse_timestamp, read_edges, read_loans, write_edges)
from .scalefree import fit_power_law, node_degrees, perturb_exponent
from .stats import (cooks_distance, default_specs, fit_default_model, fit_tobit,
                    fit_zip_intercept_only, influence_by_predictor, join_observations, kfold_cv,
                    ladder_table, nested_fits, normal_loglik_i, ols_fit, poisson_loglik_i,
                    stepwise_aic, tobit_loglik_i, vuong_test, zip_loglik_i)
from .stats.rows import GRAPH_COLUMNS, LOAN_COLUMNS
from .synthgen import GenConfig, simulate, write_dataset

log = logging.getLogger("lendgraph")

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 1, 2
FLOAT_DIGITS = 10


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# JSON helpers

def _clean(obj):
    """JSON-ready copy with floats rounded to ``FLOAT_DIGITS`` significant digits.

    Rounding keeps outputs byte-stable when BLAS thread counts change the
    last bits of a floating-point reduction.
    """
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if not np.isfinite(x):
            return None
        return float(f"{x:.{FLOAT_DIGITS}g}")
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _frame_csv(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


# --------------------------------------------------------------------------
# stage helpers shared by subcommands and the pipeline

def rows_schema(columns) -> dict:
    props = {c: {"type": "string"} if c in ("borrower_id", "timestamp") else {"type": "number"}
             for c in columns}
    return {"$schema": "https://json-schema.org/draft/2020-12/schema", "title": "rows.csv",
            "type": "object", "properties": props, "required": list(columns)}


def read_rows(path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"rows file not found: {path}")
    return pd.read_csv(path, dtype={"borrower_id": str, "timestamp": str})


def rows_vocabulary(rows: pd.DataFrame) -> list[str]:
    fixed = {"borrower_id", "timestamp", "profit", "diff_day", *LOAN_COLUMNS, *GRAPH_COLUMNS}
    return [c for c in rows.columns if c not in fixed]


SPEC_CHOICES = ["naive", "graph", "location", "graph+location", "baseline", "all", "default"]


def fit_spec(rows: pd.DataFrame, spec: str):
    if spec == "default":
        return fit_default_model(rows)
    specs = default_specs(rows_vocabulary(rows))
    cols = specs[spec]
    X = rows[cols] if cols else np.empty((len(rows), 0))
    return ols_fit(X, rows["profit"].to_numpy(dtype=float))


def all_predictors(rows: pd.DataFrame) -> list[str]:
    return default_specs(rows_vocabulary(rows))["all"]


def select_features(rows: pd.DataFrame, direction: str = "backward"):
    return stepwise_aic(rows[all_predictors(rows)], rows["profit"].to_numpy(dtype=float),
                        direction=direction)


def cv_compare(rows: pd.DataFrame, k: int, seed: int, selected: list[str] | None = None) -> dict:
    y = rows["profit"].to_numpy(dtype=float)
    full = kfold_cv(rows[all_predictors(rows)], y, k=k, seed=seed)
    out = {"full": full.to_dict()}
    if selected is not None:
        sel = kfold_cv(rows[selected], y, k=k, seed=seed)
        out["selected"] = sel.to_dict()
        out["mse_ratio"] = sel.mean_mse / full.mean_mse
    return out


def zip_tobit_tests(rows: pd.DataFrame) -> dict:
    """Zero-inflation diagnostics on one profit value per borrower."""
    y = rows.groupby("borrower_id", sort=True)["profit"].first().to_numpy(dtype=float)
    counts = np.rint(y)
    zf = fit_zip_intercept_only(counts)
    v_zip = vuong_test(zip_loglik_i(counts, zf.count_coef, zf.zero_coef),
                       poisson_loglik_i(counts))
    tf = fit_tobit(y)
    v_tob = vuong_test(tobit_loglik_i(np.r_[tf.coef, tf.log_scale], y, np.ones((len(y), 1))),
                       normal_loglik_i(y))
    return {"n": len(y), "zip": zf.to_dict(), "zip_vs_poisson": v_zip.to_dict(),
            "tobit": tf.to_dict(), "tobit_vs_normal": v_tob.to_dict()}


def influence_table(rows: pd.DataFrame, top: int = 40, fit=None) -> pd.DataFrame:
    preds = all_predictors(rows)
    if fit is None:
        fit = ols_fit(rows[preds], rows["profit"].to_numpy(dtype=float))
    return influence_by_predictor(rows, cooks_distance(fit), preds, top=top)


def scalefree_summary(g, mode: str, perturb: float, trials: int, seed: int,
                      xmin: int | None = None) -> dict:
    deg = node_degrees(g, mode)
    fit = fit_power_law(deg[deg > 0], xmin=xmin)
    out = fit.to_dict()
    out["mode"] = mode
    out["perturbed_alphas"] = (perturb_exponent(g, perturb, trials, seed, mode=mode)
                               if trials > 0 and perturb > 0 else [])
    out["removal_fraction"] = perturb
    out["seed"] = seed
    return out


# --------------------------------------------------------------------------
# pipeline

@dataclass
class PipelineConfig:
    comms: str | None = None
    loans: str | None = None
    pings: str | None = None
    pois: str | None = None
    rules: str | None = None
    vocabulary: str | None = None
    radius_m: float = 50.0
    cell_size_m: float = 100.0
    weighted_eigen: bool = True
    per_borrower: bool = False
    sms_seconds: float = SMS_SECONDS
    window_start: str | None = None
    window_end: str | None = None
    seed: int = 0
    cv_k: int = 10
    perturb_fraction: float = 0.1
    perturb_trials: int = 100
    degree_mode: str = "total"
    influence_top: int = 40
    stepwise_direction: str = "backward"
    out_dir: str = "run"
    # generator settings used when no input files are given
    simulate: dict | None = field(default=None)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        data = json.loads(p.read_text())
        known = {f.name for f in fields(cls)}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown pipeline config keys: {sorted(bad)}")
        base = p.parent
        for key in ("comms", "loans", "pings", "pois", "rules", "vocabulary"):
            if data.get(key) is not None and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        return cls(**data)

    @property
    def inputs(self) -> dict[str, str | None]:
        return {"comms": self.comms, "loans": self.loans, "pings": self.pings, "pois": self.pois}

    def validate(self) -> None:
        given = {k: v for k, v in self.inputs.items() if v is not None}
        if given and len(given) != 4:
            missing = sorted(set(self.inputs) - set(given))
            raise ConfigError(f"input files missing from config: {missing}")
        for key in ("comms", "loans", "pings", "pois", "rules", "vocabulary"):
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{key} file not found: {path}")
        if self.radius_m <= 0 or self.cell_size_m < self.radius_m:
            raise ConfigError("need 0 < radius_m <= cell_size_m")
        if self.cv_k < 2:
            raise ConfigError("cv_k must be >= 2")
        if (self.window_start is None) != (self.window_end is None):
            raise ConfigError("window_start and window_end go together")
        out = Path(self.out_dir)
        if out.exists() and not out.is_dir():
            raise ConfigError(f"output path is not a directory: {out}")

    def to_dict(self) -> dict:
        return asdict(self)


class StageFailure(RuntimeError):
    def __init__(self, stage: str, error: BaseException):
        super().__init__(f"stage {stage!r} failed: {error}")
        self.stage = stage
        self.error = error


def _versions() -> dict:
    import scipy
    return {"lendgraph": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "pandas": pd.__version__}


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage in order; returns the manifest written to ``manifest.json``.

    Wall-clock timings go to ``timings.json`` so that the manifest itself is
    identical across reruns. A failing stage is recorded in the manifest and
    re-raised as :class:`StageFailure`.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"versions": _versions(), "config": cfg.to_dict(), "seeds": {"pipeline": cfg.seed},
                "stages": [], "row_counts": {}, "files": {}, "status": "running"}
    timings: dict[str, float] = {}
    state: dict = {}

    def record(name: str, fn):
        t0 = time.perf_counter()
        try:
            info = fn() or {}
        except Exception as exc:
            manifest["stages"].append({"stage": name, "status": "failed",
                                       "error": f"{type(exc).__name__}: {exc}"})
            manifest["status"] = "failed"
            manifest["failed_stage"] = name
            write_json(out / "manifest.json", manifest)
            write_json(out / "timings.json", timings)
            raise StageFailure(name, exc) from exc
        timings[name] = round(time.perf_counter() - t0, 3)
        manifest["stages"].append({"stage": name, "status": "ok", **info})
        log.info("stage %s done in %.2fs", name, timings[name])

    vocab = load_vocabulary(cfg.vocabulary)
    rules = load_rules(cfg.rules)
    paths = dict(cfg.inputs)

    def st_simulate():
        gen = GenConfig(**{**(cfg.simulate or {}), "seed": cfg.seed})
        data = simulate(gen)
        written = write_dataset(data, out / "input")
        paths.update({k: str(v) for k, v in written.items()})
        manifest["seeds"]["generator"] = gen.seed
        write_json(out / "input" / "gen.json", gen.to_dict())
        return {"generated": {k: len(getattr(data, a)) for k, a in
                              (("comms", "events"), ("loans", "loans"), ("pings", "pings"),
                               ("pois", "pois"))}}

    if paths["comms"] is None:
        record("simulate", st_simulate)

    def st_ingest():
        window = None
        if cfg.window_start is not None:
            window = (parse_timestamp(cfg.window_start), parse_timestamp(cfg.window_end))
        edges, loans, report = ingest(paths["comms"], paths["loans"], rules, window,
                                      cfg.sms_seconds)
        write_edges(out / "edges.csv", edges)
        write_json(out / "cleaning_report.json", report.to_dict())
        state.update(edges=edges, loans=loans)
        manifest["row_counts"].update(comms_raw=report.raw_count, comms_kept=report.kept_count,
                                      edges=len(edges), loans=len(loans))
        return {"rejected": report.rejected_count}

    def st_graph():
        g = build_graph(state["edges"], state["loans"])
        m = metrics_table(g, weighted_eigen=cfg.weighted_eigen)
        _frame_csv(m, out / "metrics.csv")
        state.update(graph=g, metrics=m)
        manifest["row_counts"].update(nodes=g.n_nodes, graph_edges=g.n_edges,
                                      metric_rows=len(m))
        if len(m) != len(state["loans"]):
            raise RuntimeError(f"{len(state['loans'])} loans in, {len(m)} metric rows out")
        return {"warnings": list(g.warnings)}

    def st_scalefree():
        res = scalefree_summary(state["graph"], cfg.degree_mode, cfg.perturb_fraction,
                                cfg.perturb_trials, cfg.seed)
        write_json(out / "scalefree.json", res)
        return {"alpha": res["alpha"]}

    def st_geo():
        pings = read_pings(paths["pings"])
        pois, rejected = read_pois(paths["pois"], vocab)
        index = build_spatial_index(pois, cfg.cell_size_m, vocab)
        lf, rep = location_features(pings, index, state["loans"], cfg.radius_m,
                                    per_borrower=cfg.per_borrower)
        _frame_csv(lf, out / "locfeat.csv")
        state["locfeat"] = lf
        manifest["row_counts"].update(pings=len(pings), pois=len(pois), locfeat_rows=len(lf))
        return {"poi_rejected": rejected, **rep}

    def st_join():
        rows = join_observations(state["loans"], state["metrics"], state["locfeat"],
                                 per_borrower=cfg.per_borrower)
        _frame_csv(rows, out / "rows.csv")
        write_json(out / "rows.schema.json", rows_schema(list(rows.columns)))
        state["rows"] = rows
        manifest["row_counts"]["rows"] = len(rows)
        return {}

    def st_fit():
        rows = state["rows"]
        specs = default_specs(vocab)
        fits = nested_fits({name: rows for name in specs}, specs)
        ladder = ladder_table(fits, specs)
        write_json(out / "ladder.json", {"ladder": ladder.to_dict(orient="records")})
        fits["default"] = fit_default_model(rows)
        state["full_fit"] = fits["all"]
        (out / "fits").mkdir(exist_ok=True)
        for name, fit in fits.items():
            write_json(out / "fits" / f"{name.replace('+', '_')}.json", fit.to_dict())
        return {}

    def st_select():
        sel = select_features(state["rows"], cfg.stepwise_direction)
        write_json(out / "selection.json", sel.to_dict())
        state["selected"] = sel.selected
        return {"n_selected": len(sel.selected)}

    def st_cv():
        res = cv_compare(state["rows"], cfg.cv_k, cfg.seed, state["selected"])
        write_json(out / "cv.json", res)
        return {"mse_ratio": res["mse_ratio"]}

    def st_ziptest():
        write_json(out / "ziptest.json", zip_tobit_tests(state["rows"]))
        return {}

    def st_influence():
        tab = influence_table(state["rows"], cfg.influence_top, state.get("full_fit"))
        write_json(out / "influence.json", {"top": cfg.influence_top,
                                            "table": tab.to_dict(orient="records")})
        return {}

    def st_report():
        summary = report_ladder(out)
        write_json(out / "report.json", summary)
        (out / "report.txt").write_text(render_report(summary))
        return {}

    for name, fn in (("ingest", st_ingest), ("graph", st_graph), ("scalefree", st_scalefree),
                     ("geo", st_geo), ("join", st_join), ("fit", st_fit),
                     ("select", st_select), ("cv", st_cv), ("ziptest", st_ziptest),
                     ("influence", st_influence), ("report", st_report)):
        record(name, fn)

    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name not in ("manifest.json", "timings.json"):
            manifest["files"][str(p.relative_to(out))] = sha256_file(p)
    manifest["status"] = "ok"
    write_json(out / "manifest.json", manifest)
    write_json(out / "timings.json", timings)
    return manifest


# --------------------------------------------------------------------------
# reporting

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["ladder", "cv", "influence"],
    "properties": {
        "ladder": {"type": "array", "items": {
            "type": "object", "required": ["spec", "adj_r2", "r2"],
            "properties": {"spec": {"type": "string"}, "adj_r2": {"type": "number"},
                           "r2": {"type": "number"}, "n_predictors": {"type": "integer"},
                           "n_kept": {"type": "integer"}}}},
        "cv": {"type": "object"},
        "influence": {"type": "array", "items": {
            "type": "object", "required": ["predictor", "estimate", "p"],
            "properties": {"predictor": {"type": "string"}, "estimate": {"type": "number"},
                           "p": {"type": "number"}, "n_rows": {"type": "integer"}}}},
    },
}


def report_ladder(run_dir) -> dict:
    """Ladder, CV and influence summary of a finished run directory."""
    run = Path(run_dir)
    try:
        ladder = json.loads((run / "ladder.json").read_text())["ladder"]
        cv = json.loads((run / "cv.json").read_text())
        infl = json.loads((run / "influence.json").read_text())["table"]
    except FileNotFoundError as exc:
        raise ConfigError(f"run directory incomplete: {exc.filename}") from None
    ladder = sorted(ladder, key=lambda r: (r["adj_r2"], r["spec"]))
    summary = {"ladder": ladder, "cv": cv, "influence": infl}
    jsonschema.validate(_clean(summary), REPORT_SCHEMA)
    return summary


def render_report(summary: dict) -> str:
    lines = ["Adjusted R^2 by predictor set", f"{'spec':<16}{'predictors':>11}{'adj R^2':>10}"]
    for r in summary["ladder"]:
        lines.append(f"{r['spec']:<16}{r['n_predictors']:>11d}{r['adj_r2']:>10.4f}")
    cv = summary["cv"]
    lines += ["", f"{cv['full']['k']}-fold CV mean squared error",
              f"  full model      {cv['full']['mean_mse']:.6g}"]
    if "selected" in cv:
        lines += [f"  selected model  {cv['selected']['mean_mse']:.6g}",
                  f"  ratio           {cv['mse_ratio']:.4f}"]
    lines += ["", "Predictors ranked by Cook's distance of the rows they touch",
              f"{'predictor':<28}{'estimate':>12}{'p':>10}"]
    for r in summary["influence"]:
        lines.append(f"{r['predictor']:<28}{r['estimate']:>12.4g}{r['p']:>10.3g}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# argument parsing

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _existing(text: str) -> str:
    if not Path(text).is_file():
        raise ConfigError(f"input file not found: {text}")
    return text


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--verbose", "-v", action="store_true", help="log progress")

    p = argparse.ArgumentParser(prog="lendgraph", parents=[common],
                                description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    s = add("ingest", "clean communications and aggregate caller-receiver dyads")
    s.add_argument("--comms", required=True)
    s.add_argument("--loans", required=True)
    s.add_argument("--rules")
    s.add_argument("--report", help="cleaning report JSON path")
    s.add_argument("--window-start")
    s.add_argument("--window-end")
    s.add_argument("--sms-seconds", type=float, default=SMS_SECONDS)

    s = add("graph", "per-borrower graph metrics")
    s.add_argument("--edges", required=True)
    s.add_argument("--loans", required=True)
    s.add_argument("--weighted-eigen", type=_bool, default=True)
    s.add_argument("--out", required=True)

    s = add("scalefree", "power-law fit of the degree distribution")
    s.add_argument("--edges", required=True)
    s.add_argument("--mode", choices=["total", "in", "out"], default="total")
    s.add_argument("--xmin", type=int)
    s.add_argument("--perturb", type=float, default=0.1)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--out", required=True)

    s = add("geo", "business-category counts around each ping")
    s.add_argument("--pings", required=True)
    s.add_argument("--pois", required=True)
    s.add_argument("--loans", required=True)
    s.add_argument("--vocabulary")
    s.add_argument("--radius", type=float, default=50.0)
    s.add_argument("--cell-size", type=float, default=100.0)
    s.add_argument("--per-borrower", action="store_true")
    s.add_argument("--out", required=True)

    s = add("join", "join loans, graph metrics and location features into rows")
    s.add_argument("--loans", required=True)
    s.add_argument("--metrics", required=True)
    s.add_argument("--locfeat", required=True)
    s.add_argument("--per-borrower", action="store_true")
    s.add_argument("--out", required=True)

    s = add("fit", "OLS fit of one predictor set")
    s.add_argument("--rows", required=True)
    s.add_argument("--spec", choices=SPEC_CHOICES, default="all")
    s.add_argument("--out", required=True)

    s = add("select", "stepwise AIC selection")
    s.add_argument("--rows", required=True)
    s.add_argument("--direction", choices=["backward", "forward"], default="backward")
    s.add_argument("--out", required=True)

    s = add("cv", "k-fold cross-validated MSE")
    s.add_argument("--rows", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--selection", help="selection JSON whose features are also scored")
    s.add_argument("--out")

    s = add("ziptest", "zero-inflated Poisson and Tobit fits with Vuong tests")
    s.add_argument("--rows", required=True)
    s.add_argument("--out")

    s = add("influence", "predictors ranked by Cook's distance")
    s.add_argument("--rows", required=True)
    s.add_argument("--top", type=int, default=40)
    s.add_argument("--out")

    s = add("simulate", "write a synthetic dataset")
    s.add_argument("--n-borrowers", type=int)

    add("run", "full pipeline")

    s = add("report", "render the summary of a finished run")
    s.add_argument("--run-dir", required=True)
    s.add_argument("--format", choices=["text", "json"], default="text")
    return p


def _emit(obj, out: str | None) -> None:
    if out:
        write_json(out, obj)
    else:
        sys.stdout.write(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _load_config(args) -> dict:
    path = getattr(args, "config", None)
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None


def _dispatch(args) -> int:
    cmd = args.command
    seed = getattr(args, "seed", None)
    out_dir = getattr(args, "out_dir", None)

    for attr in ("comms", "loans", "edges", "pings", "pois", "rules", "vocabulary", "rows",
                 "metrics", "locfeat", "selection"):
        val = getattr(args, attr, None)
        if val is not None:
            _existing(val)

    if cmd == "ingest":
        if out_dir is None:
            raise ConfigError("ingest needs --out-dir")
        window = None
        if (args.window_start is None) != (args.window_end is None):
            raise ConfigError("--window-start and --window-end go together")
        if args.window_start:
            window = (parse_timestamp(args.window_start), parse_timestamp(args.window_end))
        edges, loans, report = ingest(args.comms, args.loans, load_rules(args.rules), window,
                                      args.sms_seconds)
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_edges(Path(out_dir) / "edges.csv", edges)
        write_json(args.report or Path(out_dir) / "cleaning_report.json", report.to_dict())
        log.info("%d edges from %d kept events", len(edges), report.kept_count)
    elif cmd == "graph":
        g = build_graph(read_edges(args.edges), read_loans(args.loans))
        for w in g.warnings:
            log.warning(w)
        _frame_csv(metrics_table(g, weighted_eigen=args.weighted_eigen), args.out)
    elif cmd == "scalefree":
        g = build_graph(read_edges(args.edges))
        _emit(scalefree_summary(g, args.mode, args.perturb, args.trials,
                                0 if seed is None else seed, args.xmin), args.out)
    elif cmd == "geo":
        vocab = load_vocabulary(args.vocabulary)
        pois, rejected = read_pois(args.pois, vocab)
        for cat, n in sorted(rejected.items()):
            log.warning("rejected %d POIs with unknown category %r", n, cat)
        index = build_spatial_index(pois, args.cell_size, vocab)
        lf, rep = location_features(read_pings(args.pings), index, read_loans(args.loans),
                                    args.radius, per_borrower=args.per_borrower)
        log.info("location features: %s", rep)
        _frame_csv(lf, args.out)
    elif cmd == "join":
        metrics = pd.read_csv(args.metrics, dtype={"borrower_id": str})
        locfeat = pd.read_csv(args.locfeat, dtype={"borrower_id": str, "timestamp": str})
        rows = join_observations(read_loans(args.loans), metrics, locfeat,
                                 per_borrower=args.per_borrower)
        _frame_csv(rows, args.out)
        write_json(Path(args.out).with_suffix(".schema.json"), rows_schema(list(rows.columns)))
    elif cmd == "fit":
        _emit(fit_spec(read_rows(args.rows), args.spec).to_dict(), args.out)
    elif cmd == "select":
        _emit(select_features(read_rows(args.rows), args.direction).to_dict(), args.out)
    elif cmd == "cv":
        selected = None
        if args.selection:
            selected = json.loads(Path(args.selection).read_text())["selected"]
        _emit(cv_compare(read_rows(args.rows), args.k, 0 if seed is None else seed, selected),
              args.out)
    elif cmd == "ziptest":
        _emit(zip_tobit_tests(read_rows(args.rows)), args.out)
    elif cmd == "influence":
        tab = influence_table(read_rows(args.rows), args.top)
        _emit({"top": args.top, "table": tab.to_dict(orient="records")}, args.out)
    elif cmd == "simulate":
        if out_dir is None:
            raise ConfigError("simulate needs --out-dir")
        try:
            gen = GenConfig(**_load_config(args))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad generator config: {exc}") from None
        if seed is not None:
            gen.seed = seed
        if args.n_borrowers is not None:
            gen.n_borrowers = args.n_borrowers
        data = simulate(gen)
        paths = write_dataset(data, out_dir)
        write_json(Path(out_dir) / "gen.json", gen.to_dict())
        log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    elif cmd == "run":
        data = _load_config(args)
        known = {f.name for f in fields(PipelineConfig)}
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown pipeline config keys: {sorted(bad)}")
        if getattr(args, "config", None):
            cfg = PipelineConfig.from_json(args.config)
        else:
            cfg = PipelineConfig()
        if seed is not None:
            cfg.seed = seed
        if out_dir is not None:
            cfg.out_dir = out_dir
        try:
            run_pipeline(cfg)
        except StageFailure as exc:
            log.error("%s", exc)
            sys.stderr.write(f"lendgraph: {exc}\n")
            return EXIT_STAGE
    elif cmd == "report":
        summary = report_ladder(args.run_dir)
        if args.format == "json":
            sys.stdout.write(json.dumps(_clean(summary), indent=2, sort_keys=True) + "\n")
        else:
            sys.stdout.write(render_report(summary))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        sys.stderr.write(f"lendgraph: config error: {exc}\n")
        return EXIT_CONFIG
    except (IngestError, ValueError, KeyError) as exc:
        sys.stderr.write(f"lendgraph: error: {exc}\n")
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
