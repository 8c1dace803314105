"""Parameter sweeps over constructions, bound ratios and regime regression.

A sweep directory holds one JSON file per finished grid point under
``points/`` (keyed by a hash of the point), so interrupted sweeps resume
where they stopped. ``report.json`` and ``results.csv`` are rebuilt from the
point files and contain no timing data; wall-clock times go to
``timings.json``.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .constructions import (RegimeWarning, embedded_configuration, slab_configuration,
                            small_cap_configuration, standard_configuration)
from .errors import PreconditionError, SchemaError, TubekitError
from .io import dump_json
from .measure import lower_bound, resolve_threads, union_volume
from .tubes import ASYMPTOTIC_DELTA_MAX

CSV_COLUMNS = ("key", "kind", "n", "delta", "N_target", "N", "volume", "volume_err95",
               "lower_bound", "ratio", "regime", "status", "error")
LARGE_KINDS = ("standard",)


@dataclass(frozen=True)
class SweepPoint:
    kind: str
    n: int
    delta: float
    N: int | None = None
    params: dict = field(default_factory=dict)

    def key(self, budget: int, seed: int) -> str:
        body = json.dumps({"kind": self.kind, "n": self.n, "delta": self.delta, "N": self.N,
                           "params": self.params, "budget": budget, "seed": seed}, sort_keys=True)
        return hashlib.sha256(body.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SweepConfig:
    points: tuple
    budget: int = 1 << 20
    seed: int = 0
    out: str | None = None
    allow_large_delta: bool = False

    def __post_init__(self):
        if not self.points:
            raise PreconditionError("sweep grid is empty")
        for i, p in enumerate(self.points):
            if not 0 < p.delta < 1:
                raise PreconditionError("delta must lie in (0, 1)", point=i)
            if p.delta >= ASYMPTOTIC_DELTA_MAX and not self.allow_large_delta:
                raise PreconditionError("delta >= 1/100 needs allow_large_delta", point=i, delta=p.delta)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        if not isinstance(d, dict) or "grid" not in d:
            raise SchemaError("sweep config needs a 'grid'", path="$.grid")
        pts = []
        for i, g in enumerate(d["grid"]):
            try:
                deltas = g["delta"] if isinstance(g["delta"], list) else [g["delta"]]
                Ns = g.get("N", [None])
                Ns = Ns if isinstance(Ns, list) else [Ns]
                for delta in deltas:
                    for N in Ns:
                        pts.append(SweepPoint(str(g["kind"]), int(g["n"]), float(delta),
                                              None if N is None else int(N), dict(g.get("params", {}))))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaError("bad grid entry", path=f"$.grid[{i}]", reason=str(exc)) from None
        return cls(tuple(pts), int(d.get("budget", 1 << 20)), int(d.get("seed", 0)), d.get("out"),
                   bool(d.get("allow_large_delta", False)))


@dataclass(frozen=True)
class SweepRecord:
    key: str
    kind: str
    n: int
    delta: float
    N_target: int | None
    N: int
    volume: float
    volume_err95: float
    lower_bound: float
    ratio: float
    regime: str
    status: str = "ok"
    error: str = ""
    runtime: float = 0.0

    def body(self) -> dict:
        d = asdict(self)
        d.pop("runtime")
        return d


@dataclass(frozen=True)
class ScalingReport:
    records: tuple

    def summary(self) -> dict:
        out = {}
        for reg in sorted({r.regime for r in self.records}):
            rs = [r.ratio for r in self.records if r.regime == reg and r.status == "ok"]
            if rs:
                out[reg] = {"min_ratio": min(rs), "max_ratio": max(rs), "points": len(rs)}
        return out

    def body(self) -> dict:
        return {"records": [r.body() for r in self.records], "summary": self.summary()}

    def to_csv(self) -> str:
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            b = r.body()
            w.writerow([("" if b[c] is None else b[c]) for c in CSV_COLUMNS])
        return buf.getvalue()


def point_seed(seed: int, key: str) -> int:
    ss = np.random.SeedSequence([seed, int(key, 16) & 0xFFFFFFFF])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _build(p: SweepPoint):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        if p.kind == "standard":
            return standard_configuration(p.n, p.delta)
        if p.kind == "small_cap":
            return small_cap_configuration(p.n, p.delta, int(p.N))
        if p.kind == "slab":
            return slab_configuration(p.n, int(p.params.get("d", 2)), p.delta, int(p.N))[0]
        if p.kind == "embedded":
            return embedded_configuration(p.n, int(p.params.get("d", 2)), p.delta, int(p.N))
    raise PreconditionError("unknown sweep kind", kind=p.kind)


def run_point(p: SweepPoint, budget: int, seed: int) -> SweepRecord:
    key = p.key(budget, seed)
    regime = "large" if p.kind in LARGE_KINDS else "small"
    t0 = time.perf_counter()
    try:
        f = _build(p)
        if len(f) == 0:
            raise PreconditionError("construction produced no tubes")
        v = union_volume(f, budget=budget, seed=point_seed(seed, key), threads=1)
        lb = lower_bound(len(f), p.delta, p.n)
        return SweepRecord(key, p.kind, p.n, p.delta, p.N, len(f), v.value, v.abs_error_95, lb,
                           v.value / lb, regime, runtime=time.perf_counter() - t0)
    except TubekitError as exc:
        return SweepRecord(key, p.kind, p.n, p.delta, p.N, 0, math.nan, math.nan, math.nan, math.nan,
                           regime, "error", exc.code, time.perf_counter() - t0)


def run_sweep(cfg: SweepConfig, out: str | Path | None = None, threads: int | None = None) -> ScalingReport:
    """Run every grid point (skipping ones already stored under ``out``)."""
    out = out or cfg.out
    pdir = Path(out) / "points" if out else None
    if pdir:
        pdir.mkdir(parents=True, exist_ok=True)

    def one(p: SweepPoint) -> SweepRecord:
        key = p.key(cfg.budget, cfg.seed)
        if pdir and (pdir / f"{key}.json").exists():
            d = json.loads((pdir / f"{key}.json").read_text())
            return SweepRecord(**d)
        rec = run_point(p, cfg.budget, cfg.seed)
        if pdir:
            dump_json(asdict(rec), pdir / f"{key}.json")
        return rec

    with ThreadPoolExecutor(max_workers=resolve_threads(threads)) as pool:
        records = tuple(pool.map(one, cfg.points))
    rep = ScalingReport(records)
    if out:
        dump_json(rep.body(), Path(out) / "report.json")
        (Path(out) / "results.csv").write_text(rep.to_csv())
        dump_json({r.key: r.runtime for r in records}, Path(out) / "timings.json")
    return rep


def regime_regression(r: ScalingReport | list, normalize: bool = True) -> list:
    """Least-squares slope of log volume against log delta per (kind, n).

    With ``normalize`` the volume is divided by ``N`` (large regime) or
    ``sqrt(N)`` (small regime) first, so the fitted slope is the exponent of
    delta: ``2n - 2`` and ``n - 1`` respectively.
    """
    recs = r.records if isinstance(r, ScalingReport) else tuple(r)
    groups: dict = {}
    for x in recs:
        if x.status == "ok":
            groups.setdefault((x.kind, x.n, x.regime), []).append(x)
    out = []
    for (kind, n, regime), xs in sorted(groups.items()):
        if len({x.delta for x in xs}) < 3:
            raise PreconditionError("regression needs at least 3 delta values", kind=kind, n=n)
        ld = np.log([x.delta for x in xs])
        vol = np.array([x.volume for x in xs])
        if normalize:
            N = np.array([x.N for x in xs], dtype=float)
            vol = vol / (N if regime == "large" else np.sqrt(N))
        slope, icpt = np.polyfit(ld, np.log(vol), 1)
        expected = 2 * n - 2 if regime == "large" else n - 1
        out.append({"kind": kind, "n": n, "regime": regime, "slope": float(slope), "intercept": float(icpt),
                    "expected": expected, "points": len(xs)})
    return out
