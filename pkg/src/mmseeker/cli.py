"""``mmseeker`` command line: gen, train, bench, verify.

Everything a run needs lives in the ``--config`` TOML file; only the seed,
output directory and thread count can be overridden on the command line.
Logs go to stderr, files to the output directory, and stdout carries one
summary line per command.

Exit status: 0 success, 2 bad config or usage, 3 verification failed,
4 missing or malformed input file, 1 anything else.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from ._accel import backend_name, set_threads
from .bench import emit_report, run_experiment
from .core import FusionWeights, SequenceStore
from .exact import decompose, decomposed_score, exact_pair_score
from .io import FormatError, read_codebook, read_dataset, read_table, write_codebook, write_dataset, write_table
from .pq_retrieval import approx_pair_score, build_table, decode_record, encode_record
from .quantizers import train_pq
from .synth import generate

logger = logging.getLogger("mmseeker")

DATASET_FILE = "dataset.mmsq"
TABLE_FILE = "table.mmdt"
VERIFY_PAIRS = 1000

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_VERIFY, EXIT_INPUT = 0, 1, 2, 3, 4


class VerifyFailed(RuntimeError):
    pass


def codebook_file(m: int) -> str:
    return f"codebook_{m}.mmpq"


def _config(args) -> dict:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.defaults()
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    if args.out_dir is not None:
        cfg["run"]["out_dir"] = str(args.out_dir)
    if args.threads is not None:
        cfg["run"]["threads"] = args.threads
    return cfg


def _dataset(cfg: dict) -> tuple[SequenceStore, dict, str]:
    """Configured dataset file, else the one ``gen`` wrote, else fresh synthetic data."""
    out = Path(cfg["run"]["out_dir"])
    path = cfg["data"]["path"]
    if path is not None:
        store, meta = read_dataset(path)
        return store, meta, str(path)
    if (out / DATASET_FILE).exists():
        store, meta = read_dataset(out / DATASET_FILE)
        return store, meta, str(out / DATASET_FILE)
    sc = cfgmod.synth_config(cfg)
    return generate(sc), {"synth": sc.to_dict(), "gamma": list(sc.gamma)}, "synthetic"


def _fusion(cfg: dict, meta: dict, store: SequenceStore) -> FusionWeights:
    if cfg["data"]["path"] is None and "gamma" in meta:
        return FusionWeights.from_gamma(meta["gamma"])
    gamma = cfgmod.synth_config(cfg).gamma
    if len(gamma) != store.num_channels:
        gamma = (1.0 / store.num_channels,) * store.num_channels
    return FusionWeights.from_gamma(gamma)


def cmd_gen(cfg: dict) -> str:
    sc = cfgmod.synth_config(cfg)
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    store = generate(sc)
    meta = {"synth": sc.to_dict(), "seed": sc.seed, "mu": list(sc.mu), "sigma": list(sc.sigma),
            "gamma": list(sc.gamma), "generator": "philox+ziggurat", "version": __version__}
    path = write_dataset(out / DATASET_FILE, store, meta)
    return f"gen: wrote {path} (L={store.length}, M_total={store.num_channels}, d={store.dim})"


def cmd_train(cfg: dict) -> str:
    store, _, src = _dataset(cfg)
    pq = cfg["pq"]
    out = Path(cfg["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    cbs = [train_pq(store, m, pq["subvectors"], pq["cardinality"], seed=cfg["run"]["seed"],
                    max_iters=pq["kmeans_iters"]) for m in range(store.num_channels)]
    for m, cb in enumerate(cbs):
        write_codebook(out / codebook_file(m), cb)
    table = build_table(cbs, half=pq["half_table"])
    write_table(out / TABLE_FILE, table)
    logger.info("trained %d codebooks on %s in %.1fs", len(cbs), src, time.perf_counter() - t0)
    return (f"train: wrote {len(cbs)} codebooks and a {table.n_entries}-entry table to {out}")


def verify_artifacts(store: SequenceStore, codebooks, table, fw: FusionWeights,
                     n_pairs: int = VERIFY_PAIRS, seed: int = 0) -> list[str]:
    """Decomposition identity and table self-consistency on sampled pairs."""
    problems = []
    if table.num_channels != store.num_channels or len(codebooks) != store.num_channels:
        return [f"artifacts cover {len(codebooks)} channels, dataset has {store.num_channels}"]
    for m, cb in enumerate(codebooks):
        if cb.dim != store.dim:
            problems.append(f"codebook {m}: dimension {cb.dim} != dataset {store.dim}")
        if table.cardinalities[m] != cb.cardinality:
            problems.append(f"table cardinality {table.cardinalities[m]} != codebook {m} "
                            f"{cb.cardinality}")
    if problems:
        return problems
    if not table.check_symmetry(0.01, seed=seed):
        problems.append("table symmetry check failed")
    rng = np.random.default_rng(seed)
    a = rng.integers(store.length, size=n_pairs)
    b = rng.integers(store.length, size=n_pairs)
    g = fw.gamma
    for n, (i, j) in enumerate(zip(a, b)):
        x, y = store.vectors[i], store.vectors[j]
        ex = exact_pair_score(x, y, fw)
        de = decomposed_score(decompose(x), decompose(y), fw)
        if abs(de - ex) > 1e-5 * (1 + abs(ex)):
            problems.append(f"pair {n} ({i + 1},{j + 1}): decomposed {de!r} != exact {ex!r}")
        cx, cy = encode_record(codebooks, x), encode_record(codebooks, y)
        ap = approx_pair_score(table, cx, g, cy, g)
        ed = exact_pair_score(decode_record(codebooks, cx), decode_record(codebooks, cy), fw)
        if abs(ap - ed) > 1e-5 * (1 + abs(ed)):
            problems.append(f"pair {n} ({i + 1},{j + 1}): table score {ap!r} != decoded exact {ed!r}")
    return problems


def cmd_verify(cfg: dict) -> str:
    store, meta, _ = _dataset(cfg)
    out = Path(cfg["run"]["out_dir"])
    cbs = [read_codebook(out / codebook_file(m)) for m in range(store.num_channels)]
    table = read_table(out / TABLE_FILE)
    problems = verify_artifacts(store, cbs, table, _fusion(cfg, meta, store),
                                seed=cfg["run"]["seed"])
    for p in problems:
        print(f"violation: {p}", file=sys.stderr)
    if problems:
        raise VerifyFailed(f"{len(problems)} violations")
    return f"verify: pass ({VERIFY_PAIRS} pairs, {store.num_channels} codebooks)"


def cmd_bench(cfg: dict) -> str:
    spec = cfgmod.experiment_spec(cfg)
    report = run_experiment(spec)
    out = Path(cfg["run"]["out_dir"])
    emit_report(report, out)
    status = f"errors in {sorted(report.errors)}" if report.errors else "ok"
    k = spec.ks[0]
    best = ", ".join(f"{m}={report.mean_recall(m, k):.3f}" for m in report.methods)
    return f"bench: {status}; Recall@{k} {best}; files in {out}"


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "bench": cmd_bench, "verify": cmd_verify}
HELP = {
    "gen": "generate a synthetic MMSQ1 dataset",
    "train": "train PQ codebooks and the cross-channel table",
    "bench": "run the Recall@K benchmark and write reports",
    "verify": "check decomposition and table self-consistency on trained artifacts",
}


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False, formatter_class=fmt)
    common.add_argument("--config", type=Path, default=None,
                        help="TOML run config; unset uses built-in defaults")
    common.add_argument("--seed", type=int, default=None, help="override run.seed")
    common.add_argument("--out-dir", type=Path, default=None, help="override run.out_dir")
    common.add_argument("--threads", type=int, default=None,
                        help="worker threads; falls back to run.threads, then MMSEEKER_THREADS")
    p = argparse.ArgumentParser(prog="mmseeker", description=__doc__.splitlines()[0],
                                formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--print-config", action="store_true",
                   help="print a config file with every default and exit")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name],
                       formatter_class=fmt)
    return p


def _fail(category: str, msg: str, code: int) -> int:
    print(f"error[{category}]: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        sys.stdout.write(cfgmod.example_text())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return _fail("usage", "a command is required", EXIT_CONFIG)
    try:
        cfg = _config(args)
    except FileNotFoundError as exc:
        return _fail("input", f"config not found: {exc.filename}", EXIT_INPUT)
    except cfgmod.ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    level = str(cfg["run"]["log_level"]).upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
        return _fail("config", f"run.log_level must be DEBUG, INFO, WARNING or ERROR, got {level}",
                     EXIT_CONFIG)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        threads = set_threads(cfg["run"]["threads"])
        logger.info("backend=%s threads=%d", backend_name(), threads)
        summary = COMMANDS[args.command](cfg)
    except cfgmod.ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except VerifyFailed as exc:
        return _fail("verify", str(exc), EXIT_VERIFY)
    except FileNotFoundError as exc:
        return _fail("input", f"missing file: {exc.filename}", EXIT_INPUT)
    except FormatError as exc:
        return _fail("input", str(exc), EXIT_INPUT)
    except ValueError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except Exception as exc:  # last-resort category
        logger.debug("unhandled error", exc_info=True)
        return _fail("runtime", f"{type(exc).__name__}: {exc}", EXIT_ERROR)
    print(summary)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
