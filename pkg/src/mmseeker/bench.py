"""Method-vs-oracle experiments: Recall@K, operation counts, wall-clock, reports.

Ground truth is the exact top-``K_max`` of each trial's target; every
smaller ``K`` uses its prefix. Methods whose ranking does not depend on
``K`` (exact, pq, lsh, rq) run once per trial at ``K_max`` and are scored on
prefixes too. The cascade's first stage depends on ``K`` (``K_stage1``
defaults to ``K``), so it runs once per ``K``.
"""
from __future__ import annotations

import csv
import io as _io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from ._accel import backend_name
from .cascade import LSHIndex, build_indexes, cascade_topk, lsh_topk
from .core import FusionWeights, SequenceStore, TopKResult
from .exact import exact_topk
from .io import dumps_json, read_dataset
from .pq_retrieval import MultiModalPQ, pq_topk
from .rq_retrieval import ResidualIndex, rq_topk
from .synth import SynthConfig, gaussian_targets, generate, generate_targets

logger = logging.getLogger(__name__)

METHODS = ("exact", "pq", "cascade_flat", "cascade_graph", "lsh", "rq")
DEFAULT_KS = (32, 64, 128, 256)

# (name, norm preset, gamma preset) for the three synthetic comparison groups.
GROUPS = (
    ("same_norm_equal_weight", "same", "equal"),
    ("different_norm_equal_weight", "different", "equal"),
    ("same_norm_unequal_weight", "same", "unequal"),
)

DEVIATIONS = {
    "rq": "residual k-means stands in for the neural RQ-VAE quantizer",
}
NOT_REPRODUCIBLE = ("recall figures for the private production datasets are not reproducible; "
                    "synthetic runs are an analog only")
RESULTS_HEADER = ("method", "K", "trial", "recall", "lookups", "query_us")


def recall_at_k(ground_truth: TopKResult, candidate: TopKResult, K: int) -> float:
    """``|top-K(candidate) & top-K(ground truth)| / K``. Short candidates simply recall less."""
    if K <= 0:
        raise ValueError(f"K must be positive, got {K}")
    if len(ground_truth) < K:
        raise ValueError(f"ground truth has {len(ground_truth)} entries, fewer than K={K}")
    if len(candidate) < K:
        logger.debug("%s result is short: %d < K=%d", candidate.method_tag, len(candidate), K)
    gt = ground_truth.prefix(K)
    hit = np.intersect1d(gt, candidate.prefix(K), assume_unique=True)
    return hit.size / K


@dataclass
class ExperimentSpec:
    synth: SynthConfig | None = field(default_factory=SynthConfig)
    dataset_path: str | None = None
    methods: tuple[str, ...] = ("exact", "pq", "cascade_flat", "lsh", "rq")
    ks: tuple[int, ...] = DEFAULT_KS
    trials: int | None = None
    gamma: tuple[float, ...] | None = None
    seed: int = 0
    pq_subvectors: int = 8
    pq_cardinality: int = 512
    pq_half_table: bool = False
    kmeans_iters: int = 25
    rq_stages: int = 4
    rq_cardinality: int = 256
    lsh_bits: int = 128
    k_stage1: int | None = None
    graph_max_neighbors: int = 16
    graph_ef_construction: int = 200
    graph_ef_search: int = 128
    timing_in_results: bool = False

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.ks = tuple(sorted({int(k) for k in self.ks}))
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; expected a subset of {METHODS}")
        if not self.methods:
            raise ValueError("at least one method is required")
        if not self.ks or self.ks[0] < 1:
            raise ValueError("K values must be positive")
        if (self.synth is None) == (self.dataset_path is None):
            raise ValueError("give exactly one of synth config or dataset path")
        if self.k_stage1 is not None and self.k_stage1 < 1:
            raise ValueError("k_stage1 must be positive")

    @property
    def n_trials(self) -> int:
        if self.trials is not None:
            return int(self.trials)
        return self.synth.trials if self.synth is not None else 50

    def to_dict(self) -> dict:
        out = asdict(self)
        out["synth"] = self.synth.to_dict() if self.synth is not None else None
        out["methods"] = list(self.methods)
        out["ks"] = list(self.ks)
        if self.gamma is not None:
            out["gamma"] = list(self.gamma)
        return out


@dataclass
class TrialRow:
    method: str
    K: int
    trial: int
    recall: float
    lookups: int
    query_us: float


@dataclass
class RecallReport:
    spec: dict
    rows: list[TrialRow] = field(default_factory=list)
    build_seconds: dict[str, float] = field(default_factory=dict)
    counters: dict[str, dict[str, float]] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    deviations: list[str] = field(default_factory=list)
    backend: str = field(default_factory=backend_name)

    @property
    def methods(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.rows:
            seen.setdefault(r.method, None)
        return list(seen)

    def recalls(self, method: str, K: int) -> np.ndarray:
        return np.array([r.recall for r in self.rows if r.method == method and r.K == K])

    def mean_recall(self, method: str, K: int) -> float:
        return float(self.recalls(method, K).mean())

    def aggregate(self) -> list[dict]:
        out = []
        for m in self.methods:
            for K in sorted({r.K for r in self.rows if r.method == m}):
                sel = [r for r in self.rows if r.method == m and r.K == K]
                rec = np.array([r.recall for r in sel])
                out.append({"method": m, "K": K, "trials": len(sel),
                            "mean_recall": float(rec.mean()), "std_recall": float(rec.std()),
                            "mean_lookups": float(np.mean([r.lookups for r in sel])),
                            "mean_query_us": float(np.mean([r.query_us for r in sel]))})
        return out

    def mean_query_us(self, method: str) -> float:
        return float(np.mean([r.query_us for r in self.rows if r.method == method]))


def _lookups(method: str, res: TopKResult, L: int) -> int:
    c = res.counters
    if method == "exact":
        return int(c["score_evaluations"])
    if method.startswith("cascade"):
        return int(c["reranks"])
    if method == "lsh":
        return int(c["hamming"])
    return int(c["lookups"])


def load_inputs(spec: ExperimentSpec):
    """Store, targets and fusion weights for a spec."""
    if spec.synth is not None:
        cfg = spec.synth
        store = generate(cfg)
        targets = generate_targets(cfg, spec.n_trials)
        gamma = spec.gamma if spec.gamma is not None else cfg.gamma
    else:
        store, meta = read_dataset(spec.dataset_path)
        if "synth" in meta:
            # generated by this package: replay the exact target streams
            src = SynthConfig(**meta["synth"])
            targets = generate_targets(src, spec.trials if spec.trials is not None else src.trials)
        else:
            targets = gaussian_targets(store, spec.n_trials, spec.seed)
        gamma = spec.gamma or meta.get("gamma") or (1.0 / store.num_channels,) * store.num_channels
    return store, targets, FusionWeights.from_gamma(gamma)


def _build_method(method: str, spec: ExperimentSpec, store: SequenceStore,
                  fw: FusionWeights) -> Callable[[object, int], TopKResult]:
    """Train/index once; return ``query(target, K) -> TopKResult``."""
    seed = spec.seed
    if method == "exact":
        return lambda t, K: exact_topk(store, t, fw, K)
    if method == "pq":
        model = MultiModalPQ.fit(store, spec.pq_subvectors, spec.pq_cardinality, seed=seed,
                                 half=spec.pq_half_table, max_iters=spec.kmeans_iters)
        return lambda t, K: pq_topk(model.table, model.encoded, model.encode(t), fw, K)
    if method in ("cascade_flat", "cascade_graph"):
        kind = method.split("_", 1)[1]
        params = {}
        if kind == "graph":
            params = dict(max_neighbors=spec.graph_max_neighbors,
                          ef_construction=spec.graph_ef_construction,
                          ef_search=spec.graph_ef_search, seed=seed)
        idx = build_indexes(store, kind, **params)
        return lambda t, K: cascade_topk(idx, store, t, fw, K,
                                         None if spec.k_stage1 is None else max(K, spec.k_stage1))
    if method == "lsh":
        lsh = LSHIndex.build(store, fw, spec.lsh_bits, seed=seed)
        return lambda t, K: lsh_topk(lsh, store, t, fw, K)
    if method == "rq":
        rq = ResidualIndex.fit(store, spec.rq_stages, spec.rq_cardinality, seed=seed,
                               max_iters=spec.kmeans_iters)
        return lambda t, K: rq_topk(rq, store, t, fw, K)
    raise ValueError(f"unknown method {method!r}")


def run_experiment(spec: ExperimentSpec, store: SequenceStore | None = None,
                   targets=None, fw: FusionWeights | None = None) -> RecallReport:
    """Run every method against the exact oracle on every trial.

    A method that fails to build or query is dropped from the report and its
    error recorded; the other methods continue.
    """
    if store is None:
        store, targets, fw = load_inputs(spec)
    L = store.length
    if spec.ks[-1] > L:
        raise ValueError(f"K={spec.ks[-1]} exceeds sequence length L={L}")
    kmax = spec.ks[-1]
    report = RecallReport(spec.to_dict())
    report.deviations = [DEVIATIONS[m] for m in spec.methods if m in DEVIATIONS]
    report.deviations.append(NOT_REPRODUCIBLE)

    queries = {}
    for m in spec.methods:
        t0 = time.perf_counter()
        try:
            queries[m] = _build_method(m, spec, store, fw)
        except Exception as exc:  # recorded, not fatal
            logger.error("method %s failed to build: %s", m, exc)
            report.errors[m] = f"build: {type(exc).__name__}: {exc}"
            continue
        report.build_seconds[m] = time.perf_counter() - t0
        logger.info("built %s in %.2fs", m, report.build_seconds[m])

    sums: dict[str, dict[str, float]] = {}
    rows: dict[str, list[TrialRow]] = {m: [] for m in queries}
    for trial, target in enumerate(targets):
        gt = exact_topk(store, target, fw, kmax)
        for m in list(queries):
            try:
                per_k = spec.ks if m.startswith("cascade") else (kmax,)
                for K in per_k:
                    t0 = time.perf_counter()
                    res = queries[m](target, K)
                    us = (time.perf_counter() - t0) * 1e6
                    acc = sums.setdefault(m, {})
                    for key, val in res.counters.items():
                        acc[key] = acc.get(key, 0.0) + val
                    scored = (K,) if len(per_k) > 1 else spec.ks
                    for k in scored:
                        rows[m].append(TrialRow(m, k, trial, recall_at_k(gt, res, k),
                                                _lookups(m, res, L), us))
            except Exception as exc:
                logger.error("method %s failed on trial %d: %s", m, trial, exc)
                report.errors[m] = f"trial {trial}: {type(exc).__name__}: {exc}"
                del queries[m]
                rows.pop(m)
        if trial % 10 == 0:
            logger.debug("trial %d done", trial)

    for m in spec.methods:
        if m in rows:
            report.rows.extend(rows[m])
            calls = len(targets) * (len(spec.ks) if m.startswith("cascade") else 1)
            report.counters[m] = {k: v / calls for k, v in sorted(sums.get(m, {}).items())}
    return report


# ---------------------------------------------------------------- reports

def _fmt(x: float) -> str:
    return repr(float(x))


def _csv_text(header, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def results_csv(report: RecallReport) -> str:
    """Trial rows followed by one ``trial=mean`` row per (method, K)."""
    timed = bool(report.spec.get("timing_in_results"))
    rows = [(r.method, r.K, r.trial, _fmt(r.recall), r.lookups,
             f"{r.query_us:.1f}" if timed else "") for r in report.rows]
    for a in report.aggregate():
        rows.append((a["method"], a["K"], "mean", _fmt(a["mean_recall"]), _fmt(a["mean_lookups"]),
                     f"{a['mean_query_us']:.1f}" if timed else ""))
    return _csv_text(RESULTS_HEADER, rows)


def aggregate_csv(report: RecallReport) -> str:
    rows = [(a["method"], a["K"], a["trials"], _fmt(a["mean_recall"]), _fmt(a["std_recall"]),
             _fmt(a["mean_lookups"])) for a in report.aggregate()]
    return _csv_text(("method", "K", "trials", "mean_recall", "std_recall", "mean_lookups"), rows)


def plot_data(report: RecallReport, title: str = "recall_at_k") -> dict:
    agg = report.aggregate()
    series = []
    for m in report.methods:
        pts = [a for a in agg if a["method"] == m]
        series.append({"name": m, "x": [a["K"] for a in pts],
                       "y": [a["mean_recall"] for a in pts], "std": [a["std_recall"] for a in pts]})
    return {"title": title, "x_label": "K", "y_label": "Recall@K", "series": series}


def timings_csv(report: RecallReport) -> str:
    rows = [("build", m, "", "", f"{s * 1e6:.1f}") for m, s in report.build_seconds.items()]
    rows += [("query", r.method, r.K, r.trial, f"{r.query_us:.1f}") for r in report.rows]
    return _csv_text(("phase", "method", "K", "trial", "us"), rows)


def manifest(report: RecallReport) -> dict:
    return {"version": __version__, "spec": report.spec, "backend": report.backend,
            "methods": report.methods, "errors": report.errors,
            "deviations": report.deviations, "counters_per_query": report.counters,
            "files": ["results.csv", "aggregate.csv", "plot_data.json", "manifest.json",
                      "timings.csv"]}


def emit_report(report: RecallReport, out_dir, formats=("csv", "json"), title: str = "recall_at_k"
                ) -> list[Path]:
    """Write result files; everything except ``timings.csv`` is deterministic."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []

    def put(name: str, text: str):
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    if "csv" in formats:
        put("results.csv", results_csv(report))
        put("aggregate.csv", aggregate_csv(report))
        put("timings.csv", timings_csv(report))
    if "json" in formats:
        put("plot_data.json", json.dumps(plot_data(report, title), indent=2, sort_keys=True) + "\n")
        put("manifest.json", dumps_json(manifest(report)).decode() + "\n")
    return written
