"""Command-line pipeline: stage-separated commands over shared artifacts.

Stages: synth -> ingest -> split -> subset -> pairs/episodes -> train ->
eval -> matrix/report. Each command is a pure function from (inputs,
config) to output files; reruns with identical inputs and seeds produce
byte-identical artifacts at any worker count. Config files are declarative
JSON documents; command-line flags override config fields. Every JSON
artifact embeds the hash of the effective configuration that produced it;
line-delimited data files carry the same provenance in a ``.meta.json``
sidecar so their record schema stays exactly as documented.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import evaluator as ev
from . import sampler as sp
from . import splitter as st
from . import synth as synth_mod
from .bridge_client import BridgedEncoder
from .encoder import (
    TrainConfig,
    init_toy_encoder,
    load_toy_checkpoint,
    save_toy_checkpoint,
    train_toy,
)
from .errors import FILE_NOT_FOUND_EXIT, FsrcError, NoResults, ProvenanceMismatch, UsageError
from .renderer import MarkerScheme
from .splitter import mix_seed


def _config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )


def _read_json(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


class Ctx:
    """Effective global settings: CLI flags override the config file."""

    def __init__(self, args: argparse.Namespace):
        self.config: dict = {}
        config_path = getattr(args, "config", None)
        if config_path:
            self.config = _read_json(Path(config_path))
            if not isinstance(self.config, dict):
                raise UsageError(f"config file {config_path} must hold a JSON object")
        self.seed = self._pick(getattr(args, "seed", None), "seed", 0)
        self.workers = self._pick(getattr(args, "workers", None), "workers", 1)
        self.out = Path(self._pick(getattr(args, "out", None), "out", "artifacts"))
        self.strict = bool(
            getattr(args, "strict", False) or self.config.get("strict", False)
        )

    def _pick(self, cli_value, key, default):
        if cli_value is not None:
            return cli_value
        return self.config.get(key, default)

    def section(self, name: str) -> dict:
        sec = self.config.get(name, {})
        if not isinstance(sec, dict):
            raise UsageError(f"config section {name!r} must be an object")
        return sec

    def opt(self, args, name: str, section: str, default):
        cli_value = getattr(args, name, None)
        if cli_value is not None:
            return cli_value
        return self.section(section).get(name, default)


def _out_file(ctx: Ctx, args, default_name: str) -> Path:
    if getattr(args, "out_file", None):
        path = Path(args.out_file)
    else:
        path = ctx.out / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _sidecar(path: Path, meta: dict) -> None:
    _write_json(path.with_name(path.name + ".meta.json"), meta)


def _scheme(ctx: Ctx) -> MarkerScheme:
    sec = ctx.section("markers")
    return MarkerScheme(
        head_open=sec.get("head_open", "<s>"),
        head_close=sec.get("head_close", "</s>"),
        tail_open=sec.get("tail_open", "<o>"),
        tail_close=sec.get("tail_close", "</o>"),
        separator=sec.get("separator", " "),
    )


def _load_part(ctx: Ctx, args):
    """Resolve (corpus, part-or-subset, provenance) from manifest flags."""
    corpus_path = Path(args.corpus)
    corp = corpus_mod.load_corpus(corpus_path, strict=ctx.strict, on_skip=None if ctx.strict else (lambda *_: None))
    manifest = st.read_manifest(Path(args.manifest))
    prov = {
        "corpus": str(corpus_path),
        "corpus_hash": _file_hash(corpus_path),
        "manifest": str(args.manifest),
        "manifest_hash": _file_hash(Path(args.manifest)),
    }
    if "relations" in manifest:  # subset manifest
        part = st.subset_from_manifest(corp, manifest)
        prov["rel_types"] = len(part.relations)
        prov["subset_provenance"] = manifest.get("provenance", {})
    else:
        split = st.split_from_manifest(corp, manifest)
        part_name = args.part or "train"
        part = split.part(part_name)
        prov["part"] = part_name
        prov["rel_types"] = len(part.relations)
    return corp, part, prov


def _load_encoder(spec: str):
    if spec == "bridge":
        return BridgedEncoder()
    return load_toy_checkpoint(Path(spec))


# -- commands --


def cmd_synth(ctx: Ctx, args) -> int:
    sec = "synth"
    profile = ctx.opt(args, "profile", sec, None)
    if profile:
        counts = synth_mod.parse_profile(profile)
    else:
        relations = int(ctx.opt(args, "relations", sec, 20))
        per = int(ctx.opt(args, "instances_per_relation", sec, 60))
        counts = (per,) * relations
    config = synth_mod.SynthConfig(
        relation_counts=counts,
        entity_pool=int(ctx.opt(args, "entities", sec, 200)),
        triggers_per_relation=int(ctx.opt(args, "triggers", sec, 6)),
        seed=ctx.seed,
    )
    corp = synth_mod.generate_synthetic_corpus(config)
    path = _out_file(ctx, args, "corpus.jsonl")
    corpus_mod.save_corpus(corp, path)
    effective = {
        "command": "synth",
        "relation_counts": list(counts),
        "entity_pool": config.entity_pool,
        "triggers_per_relation": config.triggers_per_relation,
        "seed": ctx.seed,
    }
    _sidecar(path, {"config": effective, "config_hash": _config_hash(effective)})
    print(f"synth: wrote {len(corp)} instances, {len(corp.relations)} relations -> {path}")
    return 0


def cmd_ingest(ctx: Ctx, args) -> int:
    path = Path(args.corpus)
    skipped: list[tuple[int, str]] = []
    corp = corpus_mod.load_corpus(
        path, strict=ctx.strict, on_skip=lambda n, r: skipped.append((n, r))
    )
    hist = corpus_mod.histogram(corp)
    cache = ctx.out / "corpus.cache.jsonl"
    cache.parent.mkdir(parents=True, exist_ok=True)
    corpus_mod.save_corpus(corp, cache)
    effective = {"command": "ingest", "corpus": str(path), "strict": ctx.strict}
    report = {
        "instances": len(corp),
        "relations": len(corp.relations),
        "skipped": len(skipped),
        "skipped_lines": [[n, r] for n, r in skipped[:20]],
        "histogram": {r: hist.counts[r] for r in sorted(hist.counts)},
        "total": hist.total,
        "corpus_hash": _file_hash(path),
        "config_hash": _config_hash(effective),
    }
    _write_json(ctx.out / "ingest_report.json", report)
    print(
        f"ingest: {len(corp)} instances, {len(corp.relations)} relations, "
        f"{len(skipped)} skipped -> {cache}"
    )
    return 0


def cmd_split(ctx: Ctx, args) -> int:
    sec = "split"
    corpus_path = Path(args.corpus)
    corp = corpus_mod.load_corpus(corpus_path, strict=ctx.strict, on_skip=lambda *_: None)
    config = st.SplitConfig(
        train_min_count=int(ctx.opt(args, "train_min_count", sec, 40)),
        dev_relation_count=int(ctx.opt(args, "dev_relations", sec, 100)),
        seed=ctx.seed,
    )
    split = st.frequency_split(corp, config)
    manifest = st.split_manifest(split, corpus_hash=_file_hash(corpus_path))
    effective = {"command": "split", "corpus": str(corpus_path), "config": manifest["config"]}
    manifest["config_hash"] = _config_hash(effective)
    path = _out_file(ctx, args, "split.json")
    st.write_manifest(manifest, path)
    print(
        f"split: train {len(split.train.relations)} / dev {len(split.dev.relations)} "
        f"/ test {len(split.test.relations)} relations -> {path}"
    )
    return 0


def cmd_subset(ctx: Ctx, args) -> int:
    sec = "subset"
    corpus_path = Path(args.corpus)
    corp = corpus_mod.load_corpus(corpus_path, strict=ctx.strict, on_skip=lambda *_: None)
    split = st.split_from_manifest(corp, st.read_manifest(Path(args.split)))
    method = ctx.opt(args, "method", sec, "threshold")
    value = ctx.opt(args, "value", sec, None)
    if value is None:
        raise UsageError("subset requires --value")
    value = int(value)
    if method == "threshold":
        subset = st.diversity_subset(split, value)
    elif method == "top_n":
        subset = st.top_n_relations(split, value)
    elif method == "random_n":
        subset = st.random_n_relations(split, value, ctx.seed)
    else:
        raise UsageError(f"unknown subset method {method!r}")
    cap = ctx.opt(args, "cap", sec, None)
    if cap is not None:
        subset = st.cap_examples(subset, int(cap), ctx.seed)
    manifest = st.subset_manifest(subset, corpus_hash=_file_hash(corpus_path))
    effective = {
        "command": "subset",
        "corpus": str(corpus_path),
        "split": str(args.split),
        "method": method,
        "value": value,
        "cap": cap,
        "seed": ctx.seed,
    }
    manifest["config_hash"] = _config_hash(effective)
    path = _out_file(ctx, args, "subset.json")
    st.write_manifest(manifest, path)
    print(
        f"subset: {len(subset.relations)} relations, {len(subset.instances)} "
        f"instances -> {path}"
    )
    return 0


def cmd_pairs(ctx: Ctx, args) -> int:
    sec = "pairs"
    _, part, prov = _load_part(ctx, args)
    config = sp.PairDatasetConfig(
        size=int(ctx.opt(args, "size", sec, 1000)),
        negative_fraction=float(ctx.opt(args, "neg_fraction", sec, 0.5)),
        seed=ctx.seed,
        positive_weighting=ctx.opt(args, "positive_weighting", sec, "pairs"),
        negative_sampling=ctx.opt(args, "negative_sampling", sec, "instance"),
        allow_duplicate_pairs=bool(ctx.opt(args, "allow_duplicates", sec, False)),
    )
    pairs = sp.generate_pairs(part, config, _scheme(ctx))
    path = _out_file(ctx, args, "pairs.jsonl")
    sp.write_pairs(pairs, path)
    n_neg = sum(1 for p in pairs if p.label == sp.DIFFERENT)
    effective = {
        "command": "pairs",
        "size": config.size,
        "negative_fraction": config.negative_fraction,
        "seed": ctx.seed,
        "positive_weighting": config.positive_weighting,
        "negative_sampling": config.negative_sampling,
        "source": prov,
    }
    _sidecar(
        path,
        {
            "config": effective,
            "config_hash": _config_hash(effective),
            "counts": {"SAME": len(pairs) - n_neg, "DIFFERENT": n_neg},
        },
    )
    print(f"pairs: {len(pairs) - n_neg} SAME + {n_neg} DIFFERENT -> {path}")
    return 0


def cmd_episodes(ctx: Ctx, args) -> int:
    sec = "episodes"
    _, part, prov = _load_part(ctx, args)
    config = sp.EpisodeConfig(
        m=int(ctx.opt(args, "m", sec, 5)),
        k=int(ctx.opt(args, "k", sec, 1)),
        q=int(ctx.opt(args, "q", sec, 5)),
        nota_rate=float(ctx.opt(args, "nota_rate", sec, 0.5)),
        seed=ctx.seed,
    )
    count = int(ctx.opt(args, "count", sec, 100))
    episodes = sp.generate_episode_batch(
        part, config, count, _scheme(ctx), workers=ctx.workers
    )
    path = _out_file(ctx, args, "episodes.jsonl")
    sp.write_episodes(episodes, path)
    effective = {
        "command": "episodes",
        "m": config.m,
        "k": config.k,
        "q": config.q,
        "nota_rate": config.nota_rate,
        "count": count,
        "seed": ctx.seed,
        "source": prov,
    }
    _sidecar(path, {"config": effective, "config_hash": _config_hash(effective)})
    print(f"episodes: {len(episodes)} episodes ({config.m}-way {config.k}-shot) -> {path}")
    return 0


def _train_config(ctx: Ctx, args, sec: str) -> TrainConfig:
    return TrainConfig(
        batch_size=int(ctx.opt(args, "batch_size", sec, 4)),
        epochs=int(ctx.opt(args, "epochs", sec, 4)),
        learning_rate=float(ctx.opt(args, "learning_rate", sec, 0.01)),
        weight_decay=float(ctx.opt(args, "weight_decay", sec, 0.1)),
        eval_every=int(ctx.opt(args, "eval_every", sec, 1000)),
        seed=ctx.seed,
        optimizer=ctx.opt(args, "optimizer", sec, "sgd"),
    )


def cmd_train(ctx: Ctx, args) -> int:
    sec = "train"
    pairs = sp.read_pairs(Path(args.pairs))
    dev_pairs = sp.read_pairs(Path(args.dev_pairs)) if args.dev_pairs else []
    config = _train_config(ctx, args, sec)
    init = init_toy_encoder(
        hash_dim=int(ctx.opt(args, "hash_dim", sec, 65536)),
        proj_dim=int(ctx.opt(args, "proj_dim", sec, 64)),
        margin=float(ctx.opt(args, "margin", sec, 1.0)),
        seed=mix_seed(ctx.seed, 0x1217),
    )
    encoder, curve = train_toy(pairs, config, init, dev_pairs)
    ckpt = _out_file(ctx, args, "encoder.ckpt")
    save_toy_checkpoint(encoder, ckpt)
    effective = {
        "command": "train",
        "pairs": str(args.pairs),
        "dev_pairs": str(args.dev_pairs) if args.dev_pairs else None,
        "train": {
            "batch_size": config.batch_size,
            "epochs": config.epochs,
            "learning_rate": config.learning_rate,
            "weight_decay": config.weight_decay,
            "eval_every": config.eval_every,
            "optimizer": config.optimizer,
        },
        "encoder": {
            "hash_dim": init.hash_dim,
            "proj_dim": init.proj_dim,
            "margin": init.margin,
        },
        "seed": ctx.seed,
    }
    chash = _config_hash(effective)
    _write_json(
        ctx.out / "curve.json",
        {"curve": curve.to_dict(), "config": effective, "config_hash": chash},
    )
    curve_csv = ctx.out / "curve.csv"
    curve_csv.write_text(
        "step,dev_f1\n" + "".join(f"{s},{f:.6f}\n" for s, f in curve.points),
        encoding="utf-8",
    )
    _write_json(
        ctx.out / "train_report.json",
        {
            "checkpoint": str(ckpt),
            "trained_steps": encoder.metadata.get("trained_steps"),
            "train_pairs": len(pairs),
            "curve_points": len(curve.points),
            "config": effective,
            "config_hash": chash,
        },
    )
    print(
        f"train: {encoder.metadata.get('trained_steps')} steps on {len(pairs)} pairs "
        f"-> {ckpt}"
    )
    return 0


def cmd_eval(ctx: Ctx, args) -> int:
    if args.grid:
        return _run_grid(ctx, args)
    if not args.encoder:
        raise UsageError("eval requires --encoder (checkpoint path or 'bridge')")
    encoder = _load_encoder(args.encoder)
    sec = "eval"
    try:
        if args.episodes:
            episodes = sp.read_episodes(Path(args.episodes))
            nota_threshold = float(ctx.opt(args, "nota_threshold", sec, 0.0))
            provenance = {
                "encoder": args.encoder,
                "episodes": str(args.episodes),
                "nota_threshold": nota_threshold,
                "seed": ctx.seed,
            }
            provenance.update(_input_meta(Path(args.episodes)))
            provenance["config_hash"] = _config_hash(provenance)
            report = ev.evaluate_episodes(
                encoder,
                episodes,
                nota_threshold,
                aggregate=ctx.opt(args, "aggregate", sec, "mean"),
                workers=ctx.workers,
                provenance=provenance,
            )
            path = _out_file(ctx, args, "episode_report.json")
            ev.write_report_json(report, path)
            print(f"eval: accuracy {report.query_accuracy:.4f} over {report.queries} queries -> {path}")
            return 0
        if not args.pairs:
            raise UsageError("eval requires --pairs, --episodes, or --grid")
        pairs = sp.read_pairs(Path(args.pairs))
        if args.threshold is not None:
            threshold = float(args.threshold)
        elif args.dev_pairs:
            dev_pairs = sp.read_pairs(Path(args.dev_pairs))
            threshold = ev.select_threshold(encoder, dev_pairs, workers=ctx.workers)
        else:
            raise UsageError("eval needs --threshold or --dev-pairs for pair mode")
        provenance = {
            "encoder": args.encoder,
            "pairs": str(args.pairs),
            "seed": ctx.seed,
        }
        provenance.update(_input_meta(Path(args.pairs)))
        provenance["config_hash"] = _config_hash(provenance)
        report = ev.evaluate_pairs(
            encoder, pairs, threshold, workers=ctx.workers, provenance=provenance
        )
        path = _out_file(ctx, args, "eval_report.json")
        ev.write_report_json(report, path)
        print(
            f"eval: F1 {report.f1:.4f} P {report.precision:.4f} R {report.recall:.4f} "
            f"(threshold {threshold:.4f}) -> {path}"
        )
        return 0
    finally:
        if isinstance(encoder, BridgedEncoder):
            encoder.close()


def _input_meta(data_path: Path) -> dict:
    """Pull provenance forward from a data file's sidecar, if present."""
    meta_path = data_path.with_name(data_path.name + ".meta.json")
    if not meta_path.exists():
        return {}
    meta = _read_json(meta_path)
    out = {}
    cfg = meta.get("config", {})
    source = cfg.get("source", {})
    if "corpus_hash" in source:
        out["corpus_hash"] = source["corpus_hash"]
    if "rel_types" in source:
        out["rel_types"] = source["rel_types"]
    for key in ("m", "k", "nota_rate"):
        if key in cfg:
            out[key] = cfg[key]
    if "config_hash" in meta:
        out["input_config_hash"] = meta["config_hash"]
    return out


def _run_grid(ctx: Ctx, args) -> int:
    spec = _read_json(Path(args.grid))
    corpus_path = Path(spec["corpus"])
    corp = corpus_mod.load_corpus(corpus_path, strict=ctx.strict, on_skip=lambda *_: None)
    corpus_hash = _file_hash(corpus_path)
    split_cfg = spec.get("split", {})
    split = st.frequency_split(
        corp,
        st.SplitConfig(
            train_min_count=split_cfg.get("train_min_count", 40),
            dev_relation_count=split_cfg.get("dev_relation_count", 100),
            seed=ctx.seed,
        ),
    )
    fractions = [float(f) for f in spec.get("neg_fractions", (0.5, 0.9, 0.99))]
    enc_cfg = spec.get("encoder", {})
    train_cfg = spec.get("train", {})
    scheme = _scheme(ctx)
    seed = int(spec.get("seed", ctx.seed))
    rows = []
    row_reports = []
    for row_idx, row_spec in enumerate(spec.get("rows", [])):
        if "top_n" in row_spec:
            subset = st.top_n_relations(split, int(row_spec["top_n"]))
        else:
            subset = st.diversity_subset(split, int(row_spec["min_count"]))
        if row_spec.get("cap"):
            subset = st.cap_examples(subset, int(row_spec["cap"]), mix_seed(seed, row_idx))
        # the data-size axis: rows may override the pair budget
        row_train_pairs = int(row_spec.get("train_pairs", spec.get("train_pairs", 2000)))
        train_pairs = sp.generate_pairs(
            subset,
            sp.PairDatasetConfig(
                size=row_train_pairs,
                negative_fraction=float(spec.get("train_neg_fraction", 0.5)),
                seed=mix_seed(seed, 1000 + row_idx),
            ),
            scheme,
        )
        init = init_toy_encoder(
            hash_dim=enc_cfg.get("hash_dim", 65536),
            proj_dim=enc_cfg.get("proj_dim", 64),
            margin=enc_cfg.get("margin", 1.0),
            seed=mix_seed(seed, 2000 + row_idx),
        )
        config = TrainConfig(
            batch_size=train_cfg.get("batch_size", 4),
            epochs=train_cfg.get("epochs", 4),
            learning_rate=train_cfg.get("learning_rate", 0.01),
            weight_decay=train_cfg.get("weight_decay", 0.1),
            eval_every=train_cfg.get("eval_every", 1000),
            seed=mix_seed(seed, 3000 + row_idx),
        )
        encoder, _curve = train_toy(train_pairs, config, init, ())
        reports = {}
        for f_idx, fraction in enumerate(fractions):
            pair_seed = mix_seed(seed, 4000 + row_idx * 10 + f_idx)
            dev_sel = sp.generate_pairs(
                split.part(spec.get("dev_part", "dev")),
                sp.PairDatasetConfig(
                    size=int(spec.get("dev_pairs", 200)),
                    negative_fraction=fraction,
                    seed=mix_seed(pair_seed, 1),
                ),
                scheme,
            )
            eval_pairs = sp.generate_pairs(
                split.part(spec.get("eval_part", "test")),
                sp.PairDatasetConfig(
                    size=int(spec.get("eval_pairs", 400)),
                    negative_fraction=fraction,
                    seed=mix_seed(pair_seed, 2),
                ),
                scheme,
            )
            threshold = ev.select_threshold(encoder, dev_sel, workers=ctx.workers)
            provenance = {
                "corpus_hash": corpus_hash,
                "rel_types": len(subset.relations),
                "data_size": len(train_pairs),
                "row": row_spec,
                "seed": seed,
            }
            provenance["config_hash"] = _config_hash(provenance)
            reports[fraction] = ev.evaluate_pairs(
                encoder, eval_pairs, threshold, workers=ctx.workers, provenance=provenance
            )
        rows.append(
            {
                "rel_types": len(subset.relations),
                "data_size": len(train_pairs),
                "reports": reports,
            }
        )
        row_reports.append(
            {
                "rel_types": len(subset.relations),
                "data_size": len(train_pairs),
                "row": row_spec,
                "reports": {str(f): reports[f].to_dict() for f in fractions},
            }
        )
    table_path = ctx.out / "grid.tsv"
    table_path.parent.mkdir(parents=True, exist_ok=True)
    ev.write_grid_tsv(rows, table_path, fractions=fractions)
    effective = {"command": "eval-grid", "grid": spec, "seed": ctx.seed}
    _write_json(
        ctx.out / "grid_report.json",
        {
            "rows": row_reports,
            "corpus_hash": corpus_hash,
            "config": effective,
            "config_hash": _config_hash(effective),
        },
    )
    print(f"eval: grid of {len(rows)} rows x {len(fractions)} fractions -> {table_path}")
    return 0


def cmd_matrix(ctx: Ctx, args) -> int:
    spec = _read_json(Path(args.spec))
    datasets = spec.get("datasets", {})
    if not datasets:
        raise UsageError("matrix spec needs a non-empty 'datasets' object")
    encoders = {}
    suites = {}
    try:
        for name, entry in datasets.items():
            encoders[name] = _load_encoder(entry["encoder"])
            suites[name] = {
                int(k): sp.read_episodes(Path(path))
                for k, path in entry["episodes"].items()
            }
        cells = ev.cross_dataset_matrix(
            encoders,
            suites,
            nota_threshold=float(spec.get("nota_threshold", 0.0)),
            aggregate=spec.get("aggregate", "mean"),
            workers=ctx.workers,
        )
    finally:
        for enc in encoders.values():
            if isinstance(enc, BridgedEncoder):
                enc.close()
    table_path = ctx.out / "matrix.tsv"
    table_path.parent.mkdir(parents=True, exist_ok=True)
    ev.write_matrix_tsv(cells, table_path)
    effective = {"command": "matrix", "spec": spec, "seed": ctx.seed}
    _write_json(
        ctx.out / "matrix_cells.json",
        {
            "cells": [
                {"train": c.train_id, "test": c.test_id, "k": c.k, "score": c.score}
                for c in cells
            ],
            "config": effective,
            "config_hash": _config_hash(effective),
        },
    )
    print(f"matrix: {len(cells)} cells -> {table_path}")
    return 0


def cmd_report(ctx: Ctx, args) -> int:
    inputs = [Path(p) for p in args.results]
    if not inputs:
        raise NoResults("no result files given")
    records = []
    curves = []
    for path in inputs:
        if not path.exists():
            raise FileNotFoundError(f"result file not found: {path}")
        doc = _read_json(path)
        if "curve" in doc:
            curves.append((path, doc))
        elif doc.get("kind") in ("pair_eval", "episode_eval"):
            records.append((path, doc))
        elif "rows" in doc:  # grid report: flatten
            for row in doc["rows"]:
                for frac, rep in row["reports"].items():
                    records.append((path, rep))
        else:
            raise NoResults(f"unrecognized result file: {path}")
    hashes = {
        rec.get("provenance", {}).get("corpus_hash")
        for _, rec in records
        if rec.get("provenance", {}).get("corpus_hash")
    }
    if len(hashes) > 1 and not args.force:
        raise ProvenanceMismatch(
            f"results come from different corpora ({sorted(hashes)}); rerun with --force to merge"
        )

    header = [
        "source", "kind", "rel_types", "data_size", "neg_fraction", "k",
        "threshold", "f1", "precision", "recall", "accuracy",
    ]
    lines = ["\t".join(header)]
    diversity: dict[str, list[tuple[int, float]]] = {}
    for path, rec in records:
        prov = rec.get("provenance", {})
        kind = rec.get("kind", "")
        if kind == "pair_eval":
            row = [
                str(path), kind,
                str(prov.get("rel_types", "")), str(prov.get("data_size", "")),
                f"{rec['negative_fraction']:.4f}", "",
                f"{rec['threshold']:.6f}", f"{rec['f1']:.4f}",
                f"{rec['precision']:.4f}", f"{rec['recall']:.4f}", "",
            ]
            if prov.get("rel_types") is not None:
                tag = f"{rec['negative_fraction']:.2f}"
                diversity.setdefault(tag, []).append((prov["rel_types"], rec["f1"]))
        else:
            row = [
                str(path), kind,
                str(prov.get("rel_types", "")), str(prov.get("data_size", "")),
                "", str(prov.get("k", "")), "", "", "", "",
                f"{rec['query_accuracy']:.4f}",
            ]
        lines.append("\t".join(row))
    ctx.out.mkdir(parents=True, exist_ok=True)
    consolidated = ctx.out / "consolidated.tsv"
    consolidated.write_text("\n".join(lines) + "\n", encoding="utf-8")
    written = [consolidated]

    for tag, points in sorted(diversity.items()):
        series_path = ctx.out / f"diversity_f1_neg{tag.replace('.', '')}.csv"
        body = "rel_types,f1\n" + "".join(
            f"{x},{y:.4f}\n" for x, y in sorted(points)
        )
        series_path.write_text(body, encoding="utf-8")
        written.append(series_path)
    used_names: set[str] = set()
    for path, doc in curves:
        name = f"{path.stem}_series"
        n = 2
        while name in used_names:
            name = f"{path.stem}_series_{n}"
            n += 1
        used_names.add(name)
        series_path = ctx.out / f"{name}.csv"
        pts = doc["curve"]["points"]
        body = "step,dev_f1\n" + "".join(f"{int(s)},{f:.6f}\n" for s, f in pts)
        series_path.write_text(body, encoding="utf-8")
        written.append(series_path)

    if args.plot:
        _render_plots(ctx, diversity, curves)
    print(f"report: {len(records)} results, {len(curves)} curves -> {consolidated}")
    return 0


def _render_plots(ctx: Ctx, diversity: dict, curves: list) -> None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise UsageError("--plot requires matplotlib") from exc
    if diversity:
        fig, ax = plt.subplots()
        for tag, points in sorted(diversity.items()):
            xs, ys = zip(*sorted(points))
            ax.plot(xs, ys, marker="o", label=f"neg={tag}")
        ax.set_xlabel("training relation types")
        ax.set_ylabel("F1")
        ax.legend()
        fig.savefig(ctx.out / "diversity.png", dpi=120)
        plt.close(fig)
    if curves:
        fig, ax = plt.subplots()
        for path, doc in curves:
            pts = doc["curve"]["points"]
            if pts:
                xs, ys = zip(*pts)
                ax.plot(xs, ys, label=path.stem)
        ax.set_xlabel("training step")
        ax.set_ylabel("dev F1")
        ax.legend()
        fig.savefig(ctx.out / "curves.png", dpi=120)
        plt.close(fig)


# -- argument parsing --


def _build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps unset subcommand flags from clobbering values parsed by
    # the root parser, so the globals work on either side of the command.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", default=argparse.SUPPRESS, help="JSON config file providing defaults"
    )
    common.add_argument(
        "--seed", type=int, default=argparse.SUPPRESS, help="global random seed"
    )
    common.add_argument(
        "--workers", type=int, default=argparse.SUPPRESS, help="worker count"
    )
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument(
        "--strict",
        action="store_true",
        default=argparse.SUPPRESS,
        help="abort on invalid corpus records",
    )

    parser = argparse.ArgumentParser(
        prog="fsrcbench",
        description="Few-shot relation classification benchmark toolkit",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--relations", type=int, default=None)
    p.add_argument("--instances-per-relation", dest="instances_per_relation", type=int, default=None)
    p.add_argument("--profile", default=None, help='relation count profile, e.g. "40x130,10x30"')
    p.add_argument("--entities", type=int, default=None)
    p.add_argument("--triggers", type=int, default=None)
    p.add_argument("--out-file", dest="out_file", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common], help="validate and cache a corpus")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", parents=[common], help="frequency-based relation split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train-min-count", dest="train_min_count", type=int, default=None)
    p.add_argument("--dev-relations", dest="dev_relations", type=int, default=None)
    p.add_argument("--out-file", dest="out_file", default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("subset", parents=[common], help="diversity-controlled train subset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", required=True, help="split manifest path")
    p.add_argument("--method", choices=("threshold", "top_n", "random_n"), default=None)
    p.add_argument("--value", type=int, default=None)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--out-file", dest="out_file", default=None)
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("pairs", parents=[common], help="generate a siamese pair dataset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True, help="split or subset manifest")
    p.add_argument("--part", choices=("train", "dev", "test"), default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--neg-fraction", dest="neg_fraction", type=float, default=None)
    p.add_argument("--positive-weighting", dest="positive_weighting", choices=("pairs", "relations"), default=None)
    p.add_argument("--negative-sampling", dest="negative_sampling", choices=("instance", "relation"), default=None)
    p.add_argument("--allow-duplicates", dest="allow_duplicates", action="store_const", const=True, default=None)
    p.add_argument("--out-file", dest="out_file", default=None)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("episodes", parents=[common], help="generate M-way K-shot episodes")
    p.add_argument("--corpus", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--part", choices=("train", "dev", "test"), default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--nota-rate", dest="nota_rate", type=float, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--out-file", dest="out_file", default=None)
    p.set_defaults(func=cmd_episodes)

    p = sub.add_parser("train", parents=[common], help="train the toy encoder")
    p.add_argument("--pairs", required=True)
    p.add_argument("--dev-pairs", dest="dev_pairs", default=None)
    p.add_argument("--hash-dim", dest="hash_dim", type=int, default=None)
    p.add_argument("--proj-dim", dest="proj_dim", type=int, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--eval-every", dest="eval_every", type=int, default=None)
    p.add_argument("--optimizer", choices=("sgd", "adam"), default=None)
    p.add_argument("--out-file", dest="out_file", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate pairs, episodes, or a grid")
    p.add_argument("--encoder", default=None, help="checkpoint path or 'bridge'")
    p.add_argument("--pairs", default=None)
    p.add_argument("--dev-pairs", dest="dev_pairs", default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--episodes", default=None)
    p.add_argument("--nota-threshold", dest="nota_threshold", type=float, default=None)
    p.add_argument("--aggregate", choices=("mean", "max"), default=None)
    p.add_argument("--grid", default=None, help="grid spec JSON (ablation table driver)")
    p.add_argument("--out-file", dest="out_file", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("matrix", parents=[common], help="cross-dataset evaluation matrix")
    p.add_argument("--spec", required=True, help="matrix spec JSON")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("report", parents=[common], help="consolidate result files")
    p.add_argument("results", nargs="*")
    p.add_argument("--force", action="store_true", help="merge results from different corpora")
    p.add_argument("--plot", action="store_true", help="also render static plots")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        ctx = Ctx(args)
        return args.func(ctx, args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FILE_NOT_FOUND_EXIT
    except FsrcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
