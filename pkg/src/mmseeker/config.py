"""Run-config files (TOML).

Every key has a default; unknown sections or keys are rejected. A
commented example with all defaults is printed by ``mmseeker --print-config``
and reproduced in the README.
"""
from __future__ import annotations

import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .bench import ExperimentSpec, DEFAULT_KS
from .synth import GAMMA_PRESETS, NORM_PRESETS, SynthConfig


class ConfigError(ValueError):
    pass


# section -> key -> (default, doc). ``None`` means "unset"; its type is taken from the doc.
SCHEMA: dict[str, dict[str, tuple[object, str]]] = {
    "run": {
        "out_dir": ("out", "directory for every file a command writes"),
        "seed": (0, "master seed for data, codebooks, hashes and graphs"),
        "threads": (None, "worker threads (int); unset uses MMSEEKER_THREADS or all cores"),
        "log_level": ("INFO", "stderr log level: DEBUG, INFO, WARNING or ERROR"),
    },
    "data": {
        "path": (None, "MMSQ1 dataset file (str); unset generates synthetic data"),
        "L": (10000, "sequence length"),
        "d": (64, "embedding dimension"),
        "M_total": (4, "channels, query first"),
        "norms": ("different", f"mean preset: {' or '.join(sorted(NORM_PRESETS))}, or custom"),
        "mu": (None, "per-channel means (list); required when norms = \"custom\""),
        "sigma": (1.0, "per-channel std: a number or a list"),
        "gamma_preset": ("equal", f"fusion weights: {', '.join(GAMMA_PRESETS)} or custom"),
        "gamma": (None, "per-channel fusion weights (list); required when gamma_preset = \"custom\""),
        "trials": (50, "targets per run"),
    },
    "bench": {
        "methods": (["exact", "pq", "cascade_flat", "lsh", "rq"],
                    "subset of exact, pq, cascade_flat, cascade_graph, lsh, rq"),
        "ks": (list(DEFAULT_KS), "K values"),
        "k_stage1": (None, "cascade per-probe depth (int); unset means K"),
        "lsh_bits": (128, "LSH hash length in bits"),
        "timing_in_results": (False, "fill query_us in results.csv (breaks byte-identical reruns)"),
    },
    "pq": {
        "subvectors": (8, "subvectors per channel vector"),
        "cardinality": (512, "centroids per subvector"),
        "half_table": (False, "store only i <= j table blocks"),
        "kmeans_iters": (25, "maximum Lloyd iterations"),
    },
    "rq": {
        "stages": (4, "residual stages"),
        "cardinality": (256, "centroids per stage"),
    },
    "graph": {
        "max_neighbors": (16, "links per node (twice this on layer 0)"),
        "ef_construction": (200, "beam width while building"),
        "ef_search": (128, "beam width while searching"),
    },
}


def defaults() -> dict:
    return {s: {k: v[0] for k, v in keys.items()} for s, keys in SCHEMA.items()}


def merge(doc: dict) -> dict:
    cfg = defaults()
    for section, body in doc.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, val in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            default = SCHEMA[section][key][0]
            if default is not None and not isinstance(val, type(default)) and not (
                    isinstance(default, float) and isinstance(val, (int, list))):
                raise ConfigError(f"{section}.{key} should be {type(default).__name__}, "
                                  f"got {type(val).__name__}")
            cfg[section][key] = val
    return cfg


def load(path) -> dict:
    p = Path(path)
    try:
        with open(p, "rb") as f:
            doc = tomllib.load(f)
    except FileNotFoundError:
        raise
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return merge(doc)


def _per_channel(val, n: int, name: str) -> tuple[float, ...]:
    if isinstance(val, (int, float)):
        return (float(val),) * n
    if len(val) != n:
        raise ConfigError(f"data.{name} needs {n} entries, got {len(val)}")
    return tuple(float(x) for x in val)


def synth_config(cfg: dict) -> SynthConfig:
    d = cfg["data"]
    M = int(d["M_total"])
    if d["norms"] == "custom":
        if d["mu"] is None:
            raise ConfigError("data.mu is required when data.norms = \"custom\"")
        mu = _per_channel(d["mu"], M, "mu")
    elif d["norms"] in NORM_PRESETS:
        if d["mu"] is not None:
            raise ConfigError("data.mu is only used with data.norms = \"custom\"")
        mu = NORM_PRESETS[d["norms"]]
    else:
        raise ConfigError(f"unknown data.norms {d['norms']!r}")
    if d["gamma_preset"] == "custom":
        if d["gamma"] is None:
            raise ConfigError("data.gamma is required when data.gamma_preset = \"custom\"")
        gamma = _per_channel(d["gamma"], M, "gamma")
    elif d["gamma_preset"] in GAMMA_PRESETS:
        gamma = GAMMA_PRESETS[d["gamma_preset"]]
    else:
        raise ConfigError(f"unknown data.gamma_preset {d['gamma_preset']!r}")
    try:
        return SynthConfig(L=int(d["L"]), d=int(d["d"]), M_total=M, mu=mu,
                           sigma=_per_channel(d["sigma"], M, "sigma"),
                           gamma_preset=d["gamma_preset"], gamma=gamma,
                           seed=int(cfg["run"]["seed"]), trials=int(d["trials"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def experiment_spec(cfg: dict) -> ExperimentSpec:
    b, pq, rq, g = cfg["bench"], cfg["pq"], cfg["rq"], cfg["graph"]
    path = cfg["data"]["path"]
    # file datasets take fusion weights from [data]; synthetic ones carry their own
    gamma = synth_config(cfg).gamma if path else None
    try:
        return ExperimentSpec(
            synth=None if path else synth_config(cfg), dataset_path=path,
            methods=tuple(b["methods"]), ks=tuple(b["ks"]), trials=int(cfg["data"]["trials"]),
            gamma=gamma, seed=int(cfg["run"]["seed"]),
            pq_subvectors=pq["subvectors"], pq_cardinality=pq["cardinality"],
            pq_half_table=pq["half_table"], kmeans_iters=pq["kmeans_iters"],
            rq_stages=rq["stages"], rq_cardinality=rq["cardinality"], lsh_bits=b["lsh_bits"],
            k_stage1=b["k_stage1"], graph_max_neighbors=g["max_neighbors"],
            graph_ef_construction=g["ef_construction"], graph_ef_search=g["ef_search"],
            timing_in_results=b["timing_in_results"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def example_text() -> str:
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (default, doc) in keys.items():
            if default is None:
                lines.append(f"# {key} =  # {doc}")
            else:
                lines.append(f"{key} = {_toml_value(default)}  # {doc}")
        lines.append("")
    return "\n".join(lines)
