"""rho-sweeps against oracles, log-log slope fits and report files."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, eval_points, finite_or_none, is_mc, load_config, reference_of, run_config, validate
from .fields import ScalarField
from .semigroup import RunConfig, discretize_mean, generator_residual, lp_norm, simulate

RECORD_FIELDS = ["rho", "mesh", "cells", "steps", "delta", "sup_error", "lp_error", "point_error",
                 "generator_residual", "window_kill_mass", "mc_se", "runtime_ms"]


@dataclass
class SlopeFit:
    slope: Optional[float]
    intercept: Optional[float]
    r2: Optional[float]
    points: int
    status: str  # "ok" | "not-applicable"

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "points": self.points,
                "status": self.status}


def fit_slope(rho, err) -> SlopeFit:
    """Least-squares line through ``(log rho, log err)``; needs >= 3 positive errors."""
    rho = np.asarray(rho, dtype=float)
    err = np.asarray(err, dtype=float)
    ok = np.isfinite(err) & (err > 0)
    if ok.sum() < 3:
        return SlopeFit(None, None, None, int(ok.sum()), "not-applicable")
    x, y = np.log(rho[ok]), np.log(err[ok])
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - (slope * x + icpt)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(res**2) / ss if ss > 0 else 1.0
    return SlopeFit(float(slope), float(icpt), float(r2), int(ok.sum()), "ok")


def fit_through_origin(x, y):
    """``y ~ c x`` with the uncentred R^2 appropriate for a no-intercept model."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = float(x @ y / (x @ x))
    r2 = 1.0 - float(np.sum((y - c * x) ** 2) / np.sum(y * y)) if np.any(y) else 1.0
    return c, r2


@dataclass
class StudyReport:
    records: list  # dicts with RECORD_FIELDS, sorted by descending rho
    fit: SlopeFit
    config: dict
    seed: int
    version: str = __version__
    fields: dict = field(default_factory=dict)  # rho -> per-cell arrays
    timestamp: str = ""
    notes: list = field(default_factory=list)
    residual_fit: Optional[dict] = None

    def to_json(self) -> dict:
        recs = [{k: r[k] for k in RECORD_FIELDS if k != "runtime_ms"} for r in self.records]
        return {
            "artifact_version": self.version,
            "seed": self.seed,
            "config": self.config,
            "records": recs,
            "fit": self.fit.to_dict(),
            "residual_fit": self.residual_fit,
            "notes": self.notes,
            # wall-clock quantities; excluded from rerun determinism
            "timing": {"runtime_ms": [r["runtime_ms"] for r in self.records]},
            "timestamp": self.timestamp,
        }


def _error_mask(cfg: dict, rc: RunConfig, P, L) -> np.ndarray:
    mask = L.status == 0
    reg = cfg.get("error_region")
    if reg is not None:
        lo = np.array([a for a, _ in reg])
        hi = np.array([b for _, b in reg])
        mask &= np.all((P.ref >= lo) & (P.ref <= hi), axis=1)
    return mask


def run_one(cfg: dict, rc: RunConfig, rho: float, ref, residual: bool = True):
    """Simulate one ``rho`` and compare with the oracle; returns ``(record, per-cell fields)``."""
    r = simulate(rc, rho)
    P, L = r.partition, r.operator
    F = r.function.values
    rec = {"rho": float(rho), "mesh": P.mesh, "cells": len(P), "steps": r.steps, "delta": r.scale.delta,
           "sup_error": None, "lp_error": None, "point_error": None, "generator_residual": None,
           "window_kill_mass": r.window_kill_mass, "mc_se": None, "runtime_ms": round(r.runtime_ms, 3)}
    ref_vals = np.full(len(P), np.nan)
    if ref is not None and is_mc(ref):
        pts = eval_points(cfg, rc)
        if not pts:
            raise ConfigError("a Monte Carlo reference needs eval_points")
        ids = P.locate_many(pts)
        if np.any(ids < 0):
            raise ConfigError("eval_points outside the computational window")
        mean, se = ref(pts), ref.se(pts)
        rec["sup_error"] = rec["point_error"] = float(np.max(np.abs(F[ids] - mean)))
        rec["mc_se"] = float(np.max(se))
        ref_vals[ids] = mean
    elif ref is not None:
        mask = _error_mask(cfg, rc, P, L)
        if rc.track == "mean":
            ref_vals = discretize_mean(ScalarField(lambda X: ref(X[:, 0] if P.dim == 1 else X), P.dim), P).values
        else:
            pts = P.ref[mask]
            ref_vals[mask] = ref(pts[:, 0] if P.dim == 1 else pts)
        diff = np.where(mask, F - ref_vals, 0.0)
        rec["sup_error"] = float(np.max(np.abs(diff)))
        rec["lp_error"] = lp_norm(diff, P, rc.p)
        pts = eval_points(cfg, rc)
        if pts:
            ids = P.locate_many(pts)
            if np.any(ids < 0) or not np.all(mask[ids]):
                raise ConfigError("eval_points must lie in the error region")
            rec["point_error"] = float(np.max(np.abs(F[ids] - ref_vals[ids])))
    if residual:
        try:
            rec["generator_residual"] = generator_residual(rc, rho, prepared=(r.scale, P, r.graph, L)).sup
        except ValueError as e:
            rec["generator_residual"] = None
            rec["residual_note"] = str(e)
    fields = {"ref": P.ref, "value": F, "reference": ref_vals}
    return rec, fields


def run_study(config, seed: Optional[int] = None, threads: int = 1) -> StudyReport:
    """Run every configured ``rho`` (in parallel when ``threads > 1``) and fit the log-log slope."""
    cfg = load_config(config) if isinstance(config, (str, Path)) else validate(dict(config))
    seed = int(seed if seed is not None else cfg.get("seed", cfg.get("mc", {}).get("seed", 0)))
    rhos = sorted({float(r) for r in cfg["rho"]}, reverse=True)
    # threads go to the rho sweep when there is one, otherwise inside the single run
    inner = threads if len(rhos) == 1 else 1
    rc = run_config(cfg, threads=inner)
    ref = reference_of(cfg, rc, seed=seed, threads=threads)
    residual = bool(cfg.get("residual", True))
    if is_mc(ref):
        # one MC evaluation shared by every rho
        ref(eval_points(cfg, rc))
    work = lambda rho: run_one(cfg, rc, rho, ref, residual)
    if threads > 1 and len(rhos) > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(work, rhos))
    else:
        out = [work(r) for r in rhos]
    records = [o[0] for o in out]
    fields = {o[0]["rho"]: o[1] for o in out}
    errs = [r["sup_error"] if r["sup_error"] is not None else np.nan for r in records]
    fit = fit_slope(rhos, errs)
    notes = []
    if fit.status != "ok":
        notes.append("slope not applicable (fewer than 3 positive errors)")
    rfit = None
    res = [r["generator_residual"] for r in records]
    if len(res) >= 3 and all(v is not None for v in res):
        # at mesh ~ rho^3 the residual bound K1 mesh/rho^2 + K2 rho is linear in rho
        c, r2 = fit_through_origin(rhos, res)
        rfit = {"coef": c, "r2_uncentred": r2,
                "monotone": all(b < a for a, b in zip(res, res[1:]))}
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return StudyReport(records, fit, cfg, seed, fields=fields, timestamp=stamp, notes=notes,
                       residual_fit=rfit)


def check_report(report: StudyReport) -> list:
    """Failed threshold messages from the config's ``check`` block (empty when all pass)."""
    chk = report.config.get("check", {})
    fails = []
    errs = [r["sup_error"] for r in report.records]
    if "min_slope" in chk:
        if report.fit.slope is None or report.fit.slope < chk["min_slope"]:
            fails.append(f"slope {report.fit.slope} < {chk['min_slope']}")
    if "max_final_sup_error" in chk and errs:
        allow = chk["max_final_sup_error"]
        last = report.records[-1]
        if "mc_sigmas" in chk and last.get("mc_se") is not None:
            allow = chk["mc_sigmas"] * last["mc_se"] + chk.get("allowance", 0.0)
        if errs[-1] is None or errs[-1] > allow:
            fails.append(f"final sup error {errs[-1]} > {allow}")
    if "max_point_error" in chk:
        pe = report.records[-1].get("point_error")
        if pe is None or pe > chk["max_point_error"]:
            fails.append(f"final point error {pe} > {chk['max_point_error']}")
    if chk.get("monotone") and errs and not all(a is not None and b is not None and b < a
                                               for a, b in zip(errs, errs[1:])):
        fails.append(f"errors not monotonically decreasing: {errs}")
    return fails


# ---------------------------------------------------------------------------
# output files


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_report(report: StudyReport, out_dir) -> list:
    """Write ``study.json``, ``errors.csv``, ``fields.csv`` and ``plot.svg``; returns the paths."""
    if not report.records:
        raise ValueError("nothing to report: empty record list")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / n for n in ("study.json", "errors.csv", "fields.csv", "plot.svg")]
        paths[0].write_text(json.dumps(report.to_json(), indent=2, sort_keys=True, default=_json_default) + "\n")
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RECORD_FIELDS)
            for r in report.records:
                w.writerow([_fmt(r.get(k)) for k in RECORD_FIELDS])
        with open(paths[2], "w", newline="") as fh:
            w = csv.writer(fh)
            d = next(iter(report.fields.values()))["ref"].shape[1] if report.fields else 1
            w.writerow(["rho", "cell_id"] + [f"ref{i}" for i in range(d)] + ["value", "reference_value", "abs_error"])
            for rho in sorted(report.fields, reverse=True):
                fl = report.fields[rho]
                for i in range(len(fl["value"])):
                    v, rv = fl["value"][i], fl["reference"][i]
                    err = abs(v - rv) if np.isfinite(rv) else None
                    w.writerow([repr(rho), i, *map(repr, fl["ref"][i].tolist()), repr(float(v)),
                                repr(float(rv)) if np.isfinite(rv) else "", _fmt(err)])
        paths[3].write_text(render_svg(report))
    except OSError as e:
        raise OSError(f"writing report to {out}: {e}") from e
    return paths


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def render_svg(report: StudyReport, width: int = 480, height: int = 360) -> str:
    """Log-log error plot with the fitted line; plain SVG, no plotting library."""
    pts = [(r["rho"], r["sup_error"]) for r in report.records if r["sup_error"] and r["sup_error"] > 0]
    pad = 50
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
    body = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
            f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
            f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle" font-size="12">log10 rho</text>',
            f'<text x="14" y="{height / 2}" font-size="12" transform="rotate(-90 14 {height / 2})" '
            f'text-anchor="middle">log10 sup error</text>']
    if pts:
        lx = [math.log10(p[0]) for p in pts]
        ly = [math.log10(p[1]) for p in pts]
        x0, x1 = min(lx) - 0.1, max(lx) + 0.1
        y0, y1 = min(ly) - 0.3, max(ly) + 0.3
        X = lambda v: pad + (v - x0) / (x1 - x0) * (width - 2 * pad)
        Y = lambda v: height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)
        for a, b in zip(lx, ly):
            body.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="4" fill="steelblue"/>')
        for v in (x0, x1):
            body.append(f'<text x="{X(v):.2f}" y="{height - pad + 16}" font-size="10" text-anchor="middle">{v:.2f}</text>')
        for v in (y0, y1):
            body.append(f'<text x="{pad - 4}" y="{Y(v):.2f}" font-size="10" text-anchor="end">{v:.2f}</text>')
        fit = report.fit
        if fit.status == "ok":
            # fit lives in natural logs; convert to log10 coordinates
            f = lambda u: (fit.slope * u * math.log(10) + fit.intercept) / math.log(10)
            xa, xb = min(lx), max(lx)
            body.append(f'<line x1="{X(xa):.2f}" y1="{Y(f(xa)):.2f}" x2="{X(xb):.2f}" y2="{Y(f(xb)):.2f}" '
                        f'stroke="crimson" stroke-dasharray="4 3"/>')
            body.append(f'<text x="{width - pad}" y="{pad - 10}" font-size="12" text-anchor="end">'
                        f'slope {fit.slope:.3f} (R2 {fit.r2:.3f})</text>')
    return head + "\n".join(body) + "\n</svg>\n"
