"""Command-line entry point: score, select, stats, and sweep.

Every flag has a config-file equivalent (JSON object keyed by flag name
with underscores); flags override the file. Outputs are deterministic for
a fixed config, so reruns are byte-identical and sweeps are scriptable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import analytics, dataset_io
from .errors import (
    EXIT_CONSISTENCY,
    EXIT_INPUT,
    EXIT_OK,
    EXIT_SCORER,
    EXIT_STALE_CACHE,
    EXIT_UNEXPECTED,
    AlignmentError,
    ConfigError,
    ConsistencyError,
    DatasetError,
    DegenerateInputError,
    GapComputationError,
    IntegrityError,
    NumericError,
    PrefSelectError,
    RecordError,
    SourceError,
    StaleCacheError,
)
from .gaps import DEFAULT_BETA, GapCache, compute_gap_records
from .scorers import RemoteScorer, ToyBigramLM, ToyScorer, default_toy_scorer, load_precomputed
from .selection import (
    SelectionConfig,
    SelectionResult,
    compression_baseline,
    random_baseline,
    rank_by_difficulty,
    select_by_ratio,
    select_by_threshold,
)

_CLI_VARIANTS = {"raw": "raw", "norm": "length_normalized"}


@dataclass
class RunConfig:
    """Declarative description of one run; fully captures score/select/stats."""

    command: str = ""
    input: str | None = None
    backend: str | None = None
    logprob_file: str | None = None
    policy_url: str | None = None
    reference_url: str | None = None
    backend_options: dict | None = None
    beta: float = DEFAULT_BETA
    ratio: float | None = None
    tau: float | None = None
    variant: str = "raw"
    method: str = "gap"
    cache: str | None = None
    output: str | None = None
    out_dir: str | None = None
    ours: str | None = None
    baselines: list[str] | None = None
    ratios: list[float] | None = None
    bins: int = 20
    seed: int = 0
    workers: int = 1
    strict: bool = True
    exclude_inverted: bool = False


def _merge_config(args: argparse.Namespace) -> RunConfig:
    file_values: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc.msg}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must contain a JSON object")

    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    for key, value in file_values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(cfg, key, value)
    for key in known:
        if hasattr(args, key) and getattr(args, key) is not None:
            setattr(cfg, key, getattr(args, key))
    cfg.command = args.command
    if cfg.variant in _CLI_VARIANTS:
        cfg.variant = _CLI_VARIANTS[cfg.variant]
    return cfg


def build_scorer(cfg: RunConfig):
    if cfg.backend in (None, "toy"):
        opts = cfg.backend_options or {}
        if opts:
            policy = ToyBigramLM(
                opts.get("policy_corpus"),
                smoothing=opts.get("policy_smoothing", 1.0),
                seed=cfg.seed,
                alphabet=opts.get("alphabet"),
            )
            reference = ToyBigramLM(
                opts.get("reference_corpus"),
                smoothing=opts.get("reference_smoothing", 1.0),
                seed=cfg.seed + 1,
                alphabet=opts.get("alphabet"),
            )
            return ToyScorer(policy, reference)
        return default_toy_scorer(seed=cfg.seed)
    if cfg.backend == "file":
        if not cfg.logprob_file:
            raise ConfigError("file backend needs --logprob-file")
        return load_precomputed(cfg.logprob_file)
    if cfg.backend == "remote":
        if not (cfg.policy_url and cfg.reference_url):
            raise ConfigError("remote backend needs --policy-url and --reference-url")
        return RemoteScorer(cfg.policy_url, cfg.reference_url)
    raise ConfigError(f"unknown backend {cfg.backend!r} (expected toy, file, or remote)")


def _require(cfg: RunConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) in (None, []):
            raise ConfigError(f"--{name.replace('_', '-')} is required for {cfg.command}")


def _load_cache(cfg: RunConfig, checksum: str) -> GapCache:
    if not cfg.cache or not os.path.exists(cfg.cache):
        raise ConfigError(f"gap cache {cfg.cache!r} not found; run `prefselect score` first")
    cache = GapCache.load(cfg.cache)
    if checksum and cache.dataset_checksum and cache.dataset_checksum != checksum:
        raise StaleCacheError("cache was computed from a different dataset")
    return cache


def cmd_score(cfg: RunConfig) -> str:
    _require(cfg, "input", "cache")
    manifest = dataset_io.scan_dataset(cfg.input)
    scorer = build_scorer(cfg)

    if cfg.backend == "file":
        ids = [p.id for p in dataset_io.open_pairs(cfg.input)]
        scorer.ensure_complete(ids)

    cache = None
    if os.path.exists(cfg.cache):
        cache = GapCache.load(cfg.cache)
        cache.ensure_compatible(cfg.beta, scorer.fingerprint(), manifest.checksum)
    already = len(cache.records) if cache else 0

    cache, failures = compute_gap_records(
        dataset_io.open_pairs(cfg.input),
        scorer,
        beta=cfg.beta,
        cache=cache,
        workers=cfg.workers,
        strict=cfg.strict,
        dataset_checksum=manifest.checksum,
    )
    cache.save(cfg.cache)
    if failures:
        err_path = cfg.cache + ".errors.jsonl"
        with open(err_path, "w", encoding="utf-8") as fh:
            for f in failures:
                fh.write(json.dumps({"pair_id": f.pair_id, "error": f.error}) + "\n")
        print(f"warning: {len(failures)} pair(s) failed; see {err_path}", file=sys.stderr)

    snap = scorer.stats.snapshot()
    fresh = manifest.pair_count - already - len(failures)
    print(f"scored {manifest.pair_count} pairs ({already} cached, {fresh} fresh) -> {cfg.cache}")
    print(f"scorer calls: {snap['total_calls']} (expected {4 * fresh} = 4 x fresh pairs)")
    for key, n in sorted(snap["calls"].items()):
        print(f"  {key}: {n}")
    print(f"total tokens scored: {snap['total_tokens']}")
    return cfg.cache


def _selection_config(cfg: RunConfig, beta: float) -> SelectionConfig:
    if cfg.ratio is not None and cfg.tau is not None:
        raise ConfigError("give either --ratio or --tau, not both")
    if cfg.tau is not None:
        return SelectionConfig(
            beta=beta, mode="threshold", tau=cfg.tau, ratio=None,
            variant=cfg.variant, seed=cfg.seed, exclude_inverted=cfg.exclude_inverted,
        )
    ratio = cfg.ratio if cfg.ratio is not None else 0.10
    return SelectionConfig(
        beta=beta, mode="ratio", ratio=ratio,
        variant=cfg.variant, seed=cfg.seed, exclude_inverted=cfg.exclude_inverted,
    )


def cmd_select(cfg: RunConfig) -> str:
    _require(cfg, "input", "output")
    manifest = dataset_io.scan_dataset(cfg.input)

    if cfg.method == "gap":
        if cfg.cache and not os.path.exists(cfg.cache) and cfg.backend:
            cmd_score(cfg)  # implied scoring pass on a cold cache
        cache = _load_cache(cfg, manifest.checksum)
        sel_cfg = _selection_config(cfg, cache.beta)
        ranked = rank_by_difficulty(cache, variant=sel_cfg.variant, exclude_inverted=sel_cfg.exclude_inverted)
        if sel_cfg.mode == "ratio":
            result = select_by_ratio(ranked, sel_cfg.ratio, config=sel_cfg)
        else:
            result = select_by_threshold(ranked, sel_cfg.tau, config=sel_cfg)
    elif cfg.method == "random":
        sel_cfg = _selection_config(cfg, cfg.beta)
        if sel_cfg.mode != "ratio":
            raise ConfigError("baseline methods select by --ratio")
        ids = [p.id for p in dataset_io.open_pairs(cfg.input)]
        result = random_baseline(ids, sel_cfg.ratio, seed=cfg.seed)
    elif cfg.method == "compression":
        sel_cfg = _selection_config(cfg, cfg.beta)
        if sel_cfg.mode != "ratio":
            raise ConfigError("baseline methods select by --ratio")
        pairs = list(dataset_io.open_pairs(cfg.input))
        result = compression_baseline(pairs, sel_cfg.ratio)
    else:
        raise ConfigError(f"unknown method {cfg.method!r} (expected gap, random, or compression)")

    result.dataset_checksum = manifest.checksum
    count = dataset_io.write_selection(
        result, dataset_io.open_pairs(cfg.input), cfg.output, input_checksum=manifest.checksum
    )
    tau = "n/a" if result.tau_effective is None else f"{result.tau_effective:.6g}"
    print(f"selected {count}/{result.total_count} pairs (method={result.method}, tau={tau}) -> {cfg.output}")
    return cfg.output


def _result_from_files(path: str) -> SelectionResult:
    ids = dataset_io.read_selection_ids(path)
    meta = dataset_io.read_selection_meta(path)
    mode = "ratio" if meta.get("rho") is not None else "threshold"
    sel_cfg = SelectionConfig(
        beta=meta.get("beta", DEFAULT_BETA),
        mode=mode,
        ratio=meta.get("rho"),
        tau=meta.get("tau") if mode == "threshold" else None,
        variant=meta.get("variant", "raw"),
    )
    return SelectionResult(
        selected_ids=ids,
        tau_effective=meta.get("tau"),
        selected_count=meta.get("selected_count", len(ids)),
        total_count=meta.get("total_count", len(ids)),
        config=sel_cfg,
        method=meta.get("method") or Path(path).stem,
        dataset_checksum=meta.get("input_checksum", ""),
    )


def cmd_stats(cfg: RunConfig) -> list[str]:
    _require(cfg, "cache", "ours", "out_dir")
    cache = GapCache.load(cfg.cache)
    our = _result_from_files(cfg.ours)
    baselines = [_result_from_files(p) for p in (cfg.baselines or [])]

    for res in [our, *baselines]:
        if cache.dataset_checksum and res.dataset_checksum and res.dataset_checksum != cache.dataset_checksum:
            raise ConsistencyError(f"selection {res.method!r} was drawn from a different dataset than the cache")

    overlap = analytics.overlap_report(our, baselines)
    length_rows = [analytics.length_stats(cache, None, "full")]
    length_rows.append(analytics.length_stats(cache, our, our.method))
    for b in baselines:
        length_rows.append(analytics.length_stats(cache, b, b.method))
    hist = analytics.gap_histogram(cache, cfg.bins, variant=cfg.variant)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    overlap_path = out_dir / "overlap.jsonl"
    with open(overlap_path, "w", encoding="utf-8") as fh:
        for rec in overlap.to_records():
            fh.write(json.dumps(rec) + "\n")
    paths.append(str(overlap_path))

    lengths_path = out_dir / "length_stats.jsonl"
    with open(lengths_path, "w", encoding="utf-8") as fh:
        for st in length_rows:
            fh.write(json.dumps(st.to_record()) + "\n")
    paths.append(str(lengths_path))

    hist_path = out_dir / "gap_histogram.jsonl"
    with open(hist_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(hist.to_record()) + "\n")
    paths.append(str(hist_path))

    print(overlap.format_table())
    print()
    print(analytics.format_length_table(length_rows))
    print()
    print(hist.format_table())
    print()
    print("reports: " + ", ".join(paths))
    return paths


def cmd_sweep(cfg: RunConfig) -> str:
    _require(cfg, "input", "cache", "ratios", "out_dir")
    manifest = dataset_io.scan_dataset(cfg.input)
    cache = _load_cache(cfg, manifest.checksum)
    manifest_out = analytics.sweep(
        cache, cfg.ratios, cfg.input, cfg.out_dir,
        variant=cfg.variant, exclude_inverted=cfg.exclude_inverted,
    )
    path = str(Path(cfg.out_dir) / "sweep_manifest.json")
    manifest_out.save(path)
    for row in manifest_out.rows:
        print(f"rho={row.ratio:<6} k={row.k:<8} tau={row.tau_effective:.6g} -> {row.path}")
    print(f"manifest -> {path}")
    return path


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--input", help="preference dataset (JSONL)")
    p.add_argument("--cache", help="gap cache file")
    p.add_argument("--beta", type=float, help=f"implicit-reward scale (default {DEFAULT_BETA})")
    p.add_argument("--variant", choices=["raw", "norm"], help="gap variant (default raw)")
    p.add_argument("--seed", type=int, help="seed for baselines / toy backend")
    p.add_argument("--workers", type=int, help="scoring worker threads (never affects outputs)")
    p.add_argument("--exclude-inverted", action="store_true", dest="exclude_inverted", default=None,
                   help="drop pairs with negative gap before ranking")
    strictness = p.add_mutually_exclusive_group()
    strictness.add_argument("--strict", action="store_true", dest="strict", default=None,
                            help="fail the run if any pair fails to score (default)")
    strictness.add_argument("--permissive", action="store_false", dest="strict", default=None,
                            help="keep going on per-pair failures; write an error manifest")


def _add_backend(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=["toy", "file", "remote"], help="logprob source")
    p.add_argument("--logprob-file", dest="logprob_file", help="precomputed logprob file (file backend)")
    p.add_argument("--policy-url", dest="policy_url", help="policy scoring endpoint (remote backend)")
    p.add_argument("--reference-url", dest="reference_url", help="reference scoring endpoint (remote backend)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefselect",
                                     description="Rank preference pairs by implicit-reward gap and select the hardest subset.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="compute and cache reward gaps")
    _add_common(p_score)
    _add_backend(p_score)

    p_select = sub.add_parser("select", help="select a subset from cached gaps")
    _add_common(p_select)
    _add_backend(p_select)
    p_select.add_argument("--ratio", type=float, help="selection ratio rho in (0,1); default 0.10")
    p_select.add_argument("--tau", type=float, help="gap threshold (keep gap <= tau)")
    p_select.add_argument("--method", choices=["gap", "random", "compression"], help="selection method (default gap)")
    p_select.add_argument("--output", help="selection output file")

    p_stats = sub.add_parser("stats", help="overlap, length, and gap-distribution reports")
    _add_common(p_stats)
    p_stats.add_argument("--ours", help="our selection file")
    p_stats.add_argument("--baseline", action="append", dest="baselines", help="baseline selection file (repeatable)")
    p_stats.add_argument("--bins", type=int, help="histogram bins (default 20)")
    p_stats.add_argument("--out-dir", dest="out_dir", help="where report files go")

    p_sweep = sub.add_parser("sweep", help="emit nested selections across ratios")
    _add_common(p_sweep)
    p_sweep.add_argument("--ratios", type=lambda s: [float(x) for x in s.split(",")],
                         help="comma-separated ratios, e.g. 0.05,0.10,0.15")
    p_sweep.add_argument("--out-dir", dest="out_dir", help="where selections and the manifest go")

    return parser


_HANDLERS = {"score": cmd_score, "select": cmd_select, "stats": cmd_stats, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        _HANDLERS[cfg.command](cfg)
        return EXIT_OK
    except (RecordError, DatasetError, ConfigError, IntegrityError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SourceError, DegenerateInputError, AlignmentError, NumericError, GapComputationError) as exc:
        print(f"scorer error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except StaleCacheError as exc:
        print(f"stale cache: {exc}", file=sys.stderr)
        return EXIT_STALE_CACHE
    except ConsistencyError as exc:
        print(f"consistency error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except PrefSelectError as exc:  # anything not mapped above
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
