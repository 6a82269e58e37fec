"""Command-line pipeline driver.

One JSON configuration document holds every stage's parameters in named
sections; command-line flags override individual fields.  Each subcommand
wraps one pipeline stage, validates its configuration before touching the
filesystem, and writes artifacts that embed the digest of the resolved
configuration and of their upstream inputs so that chained stages can refuse
stale or mismatched files.

On success a command prints one JSON result line to stdout and exits 0; on
failure it prints a JSON error object to stderr and exits 2.  Verbosity is
controlled by the REGIONADAPT_LOG environment variable (debug, info,
warning, error).
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import re
import sys
from pathlib import Path

from .dataset import BuilderConfig, build_dataset, read_manifest, write_manifest
from .embeddings import (
    EmbeddingTable,
    read_embeddings,
    synthetic_class_embeddings,
    synthetic_proposal_embeddings,
    synthetic_region_embeddings,
    write_embeddings,
)
from .evaluation import evaluate, read_ground_truth
from .head import HeadParameters
from .inference import FusionConfig, classify_regions, fuse
from .merging import MergeConfig, interpolate
from .provenance import digest_of, file_digest
from .records import (
    ClassVocabulary,
    DetectionRecord,
    detection_keys,
    partition_background,
    read_detections,
    read_image_metas,
    write_detections,
)
from .training import TrainConfig, load_checkpoint, save_checkpoint, train, write_history_csv

log = logging.getLogger("regionadapt")

_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO,
               "warning": logging.WARNING, "error": logging.ERROR}

# Fully-resolved configuration skeleton; file values and flags merge onto it.
_DEFAULTS: dict = {
    "seed": 0,
    "builder": BuilderConfig().to_dict(),
    "embedding": {"dim": 64, "noise": 0.05, "alignment_gap": 0.5, "match_iou": 0.5},
    "train": TrainConfig().to_dict(),
    "merge": {"alpha": 0.5},
    "fusion": FusionConfig().to_dict(),
    "ablate": {"alphas": [], "sizes": [], "sources": []},
    "paths": {},
}

_PATH_KEYS = (
    "detections", "images", "vocab", "manifest",
    "region_embeddings", "text_embeddings",
    "proposals", "proposal_embeddings",
    "ground_truth", "train_ground_truth",
    "checkpoint", "pretrained_checkpoint", "merged_checkpoint", "history",
    "fused_detections", "report", "ablation", "workdir",
)


class CliError(Exception):
    """Operator-facing failure with machine-readable detail fields."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


# ---------------------------------------------------------------------------
# Configuration plumbing


def _load_config(config_path: str | None) -> dict:
    cfg = copy.deepcopy(_DEFAULTS)
    if config_path is None:
        return cfg
    path = Path(config_path)
    if not path.exists():
        raise CliError("input not found", path=str(path), role="config")
    with open(path, "r", encoding="utf-8") as f:
        loaded = json.load(f)
    if not isinstance(loaded, dict):
        raise CliError("config must be a JSON object", path=str(path))
    for section, value in loaded.items():
        if section not in cfg:
            raise CliError("unknown config section", section=section)
        if section == "seed":
            cfg["seed"] = int(value)
            continue
        if not isinstance(value, dict):
            raise CliError("config section must be an object", section=section)
        known = _PATH_KEYS if section == "paths" else cfg[section]
        for key, field in value.items():
            if key not in known:
                raise CliError("unknown config key", section=section, key=key)
            cfg[section][key] = field
    return cfg


def _apply_overrides(cfg: dict, args: argparse.Namespace, mapping: dict) -> None:
    """Copy any flag the user actually passed onto the resolved config."""
    for dest, (section, key) in mapping.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if section is None:
            cfg[key] = value
        else:
            cfg[section][key] = value


def _config_digest(cfg: dict) -> str:
    """Digest of the parameter sections that shape artifacts (paths excluded)."""
    semantic = {k: v for k, v in cfg.items() if k != "paths"}
    return digest_of(semantic)


def _path(cfg: dict, key: str, *, required: bool = True,
          must_exist: bool = False) -> Path | None:
    value = cfg["paths"].get(key)
    if value is None:
        if required:
            raise CliError(f"no path configured for '{key}'", missing=key)
        return None
    path = Path(value)
    if must_exist and not path.exists():
        raise CliError("input not found", path=str(path), role=key)
    return path


def _read_vocab(path: Path) -> ClassVocabulary:
    with open(path, "r", encoding="utf-8") as f:
        return ClassVocabulary.from_dict(json.load(f))


def _sidecar_path(artifact: Path) -> Path:
    return artifact.with_name(artifact.name + ".provenance.json")


def _write_sidecar(artifact: Path, provenance: dict) -> None:
    """Binary artifacts have no provenance slot; a JSON sidecar carries it."""
    _sidecar_path(artifact).write_text(
        json.dumps(provenance, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8")


def _read_sidecar(artifact: Path) -> dict | None:
    side = _sidecar_path(artifact)
    if not side.exists():
        return None
    with open(side, "r", encoding="utf-8") as f:
        return json.load(f)


def _check_chain(artifact: Path, role: str, expected_inputs: dict[str, str]) -> None:
    """Refuse an artifact whose recorded upstream digests disagree with reality."""
    side = _read_sidecar(artifact)
    if side is None:
        log.debug("no provenance sidecar next to %s; skipping chain check", artifact)
        return
    recorded = side.get("inputs", {})
    for name, actual in expected_inputs.items():
        stored = recorded.get(name)
        if stored is not None and stored != actual:
            raise CliError(
                "chained artifact digest mismatch",
                artifact=str(artifact), role=role, input=name,
                recorded=stored, actual=actual,
                explanation=(f"{artifact} was produced from a different "
                             f"'{name}' file than the one supplied"))


def _emit(result: dict) -> None:
    print(json.dumps(result, sort_keys=True, separators=(",", ":")))


# ---------------------------------------------------------------------------
# Subcommand bodies


def cmd_build_dataset(cfg: dict) -> dict:
    builder = BuilderConfig.from_dict(cfg["builder"])  # validate before any I/O
    det_path = _path(cfg, "detections", must_exist=True)
    img_path = _path(cfg, "images", must_exist=True)
    vocab_path = _path(cfg, "vocab", must_exist=True)
    out_path = _path(cfg, "manifest")

    vocab = _read_vocab(vocab_path)
    detections = read_detections(det_path, vocab)
    images = read_image_metas(img_path)
    log.info("building dataset from %d detections over %d images",
             len(detections), len(images))

    ds = build_dataset(detections, images, vocab, builder)
    ds.provenance = {
        "config_digest": _config_digest(cfg),
        "inputs": {
            "detections": file_digest(det_path),
            "images": file_digest(img_path),
            "vocab": file_digest(vocab_path),
        },
    }
    digest = write_manifest(ds, out_path)
    return {"command": "build-dataset", "manifest": str(out_path),
            "digest": digest, "samples": len(ds.samples),
            "skipped_outside_image": ds.skipped_outside_image}


def cmd_embed_synth(cfg: dict) -> dict:
    emb = cfg["embedding"]
    dim, seed = int(emb["dim"]), int(cfg["seed"])
    noise, gap = float(emb["noise"]), float(emb["alignment_gap"])
    if dim < 2:
        raise CliError(f"embedding dim must be >= 2, got {dim}")

    result: dict = {"command": "embed-synth", "dim": dim, "seed": seed}
    did_anything = False

    manifest_path = _path(cfg, "manifest", required=False)
    if manifest_path is not None:
        if not manifest_path.exists():
            raise CliError("input not found", path=str(manifest_path), role="manifest")
        regions_out = _path(cfg, "region_embeddings")
        text_out = _path(cfg, "text_embeddings")
        ds = read_manifest(manifest_path)
        manifest_dig = file_digest(manifest_path)
        log.info("synthesizing %d region rows and %d text rows at dim %d",
                 len(ds.samples), len(ds.vocabulary), dim)

        region_table = synthetic_region_embeddings(ds, dim, seed, noise)
        write_embeddings(region_table, regions_out)
        _write_sidecar(regions_out, {
            "config_digest": _config_digest(cfg),
            "inputs": {"manifest": manifest_dig},
            "rows": region_table.rows, "dim": dim,
        })

        text_table = synthetic_class_embeddings(ds.vocabulary, dim, seed, gap)
        write_embeddings(text_table, text_out)
        _write_sidecar(text_out, {
            "config_digest": _config_digest(cfg),
            "inputs": {"manifest": manifest_dig},
            "rows": text_table.rows, "dim": dim,
        })
        result["region_embeddings"] = str(regions_out)
        result["text_embeddings"] = str(text_out)
        did_anything = True

    proposals_path = _path(cfg, "proposals", required=False)
    if proposals_path is not None:
        if not proposals_path.exists():
            raise CliError("input not found", path=str(proposals_path), role="proposals")
        gt_path = _path(cfg, "ground_truth", must_exist=True)
        vocab_path = _path(cfg, "vocab", must_exist=True)
        out = _path(cfg, "proposal_embeddings")
        vocab = _read_vocab(vocab_path)
        records = read_detections(proposals_path, vocab)
        gts = read_ground_truth(gt_path, vocab)
        log.info("synthesizing features for %d proposal boxes", len(records))

        table = synthetic_proposal_embeddings(records, gts, dim, seed, noise,
                                              float(emb["match_iou"]))
        write_embeddings(table, out)
        _write_sidecar(out, {
            "config_digest": _config_digest(cfg),
            "inputs": {"proposals": file_digest(proposals_path),
                       "ground_truth": file_digest(gt_path)},
            "rows": table.rows, "dim": dim,
        })
        result["proposal_embeddings"] = str(out)
        did_anything = True

    if not did_anything:
        raise CliError("nothing to embed: configure paths.manifest and/or paths.proposals")
    return result


def cmd_train(cfg: dict) -> dict:
    train_cfg = TrainConfig.from_dict(cfg["train"])  # validate before any I/O
    manifest_path = _path(cfg, "manifest", must_exist=True)
    regions_path = _path(cfg, "region_embeddings", must_exist=True)
    text_path = _path(cfg, "text_embeddings", must_exist=True)
    ckpt_out = _path(cfg, "checkpoint")
    history_out = _path(cfg, "history", required=False)

    manifest_dig = file_digest(manifest_path)
    _check_chain(regions_path, "region_embeddings", {"manifest": manifest_dig})
    _check_chain(text_path, "text_embeddings", {"manifest": manifest_dig})

    ds = read_manifest(manifest_path)
    region_table = read_embeddings(regions_path)
    text_table = read_embeddings(text_path)
    theta_init = HeadParameters.identity_init(region_table.dim, text_table.dim)
    log.info("training head (%d samples, %d steps expected)", len(ds.samples),
             train_cfg.epochs * -(-len(ds.samples) // train_cfg.batch_size))

    theta, history = train(ds, region_table, text_table, theta_init, train_cfg)

    header = {
        "config_digest": _config_digest(cfg),
        "train_config": train_cfg.to_dict(),
        "inputs": {"manifest": manifest_dig,
                   "region_embeddings": file_digest(regions_path),
                   "text_embeddings": file_digest(text_path)},
        "steps": len(history),
    }
    if history:
        header["final_loss"] = history[-1].loss
    save_checkpoint(theta, ckpt_out, header)
    result = {"command": "train", "checkpoint": str(ckpt_out), "steps": len(history)}
    if history:
        result["final_loss"] = history[-1].loss
    if history_out is not None:
        write_history_csv(history, history_out)
        result["history"] = str(history_out)
    return result


def cmd_merge(cfg: dict) -> dict:
    merge_cfg = MergeConfig(alpha=float(cfg["merge"]["alpha"]))  # validate first
    ft_path = _path(cfg, "checkpoint", must_exist=True)
    pre_path = _path(cfg, "pretrained_checkpoint", required=False)
    out = _path(cfg, "merged_checkpoint")

    theta_ft, _ = load_checkpoint(ft_path)
    inputs = {"finetuned": file_digest(ft_path)}
    if pre_path is not None:
        if not pre_path.exists():
            raise CliError("input not found", path=str(pre_path),
                           role="pretrained_checkpoint")
        theta_pre, _ = load_checkpoint(pre_path)
        inputs["pretrained"] = file_digest(pre_path)
    else:
        theta_pre = HeadParameters.identity_init(theta_ft.d_in, theta_ft.d_out)
        inputs["pretrained"] = "identity-init"
    log.info("interpolating checkpoints at alpha=%s", merge_cfg.alpha)

    merged = interpolate(theta_pre, theta_ft, merge_cfg)
    save_checkpoint(merged, out, {
        "config_digest": _config_digest(cfg),
        "merge": {"alpha": merge_cfg.alpha},
        "inputs": inputs,
    })
    return {"command": "merge", "merged_checkpoint": str(out), "alpha": merge_cfg.alpha}


def cmd_infer(cfg: dict) -> dict:
    fusion = FusionConfig.from_dict(cfg["fusion"])  # validate before any I/O
    ckpt_path = _path(cfg, "checkpoint", must_exist=True)
    text_path = _path(cfg, "text_embeddings", must_exist=True)
    proposals_path = _path(cfg, "proposals", must_exist=True)
    feats_path = _path(cfg, "proposal_embeddings", must_exist=True)
    vocab_path = _path(cfg, "vocab", must_exist=True)
    out = _path(cfg, "fused_detections")

    _check_chain(feats_path, "proposal_embeddings",
                 {"proposals": file_digest(proposals_path)})

    vocab = _read_vocab(vocab_path)
    theta, _ = load_checkpoint(ckpt_path)
    text_table = read_embeddings(text_path)
    records = read_detections(proposals_path, vocab)
    feats = read_embeddings(feats_path)

    expected = detection_keys(records)
    if feats.item_ids != expected:
        raise CliError("proposal embedding rows do not align with the proposals file",
                       expected=len(expected), got=feats.rows)

    labeled, background = partition_background(records)
    mask = [r.is_background for r in records]
    bg_rows = feats.data[[i for i, m in enumerate(mask) if m]]
    bg_ids = [k for k, m in zip(expected, mask) if m]
    bg_table = EmbeddingTable(bg_rows, bg_ids, normalized=feats.normalized)
    log.info("classifying %d background proposals against %d classes "
             "(keeping %d closed-set records)", len(background), len(vocab), len(labeled))

    recovered = classify_regions(background, bg_table, text_table, theta, vocab,
                                 use_objectness=fusion.use_objectness)
    fused = fuse(labeled, recovered, fusion)

    write_detections(fused, vocab, out, provenance={
        "config_digest": _config_digest(cfg),
        "fusion": fusion.to_dict(),
        "inputs": {"checkpoint": file_digest(ckpt_path),
                   "text_embeddings": file_digest(text_path),
                   "proposals": file_digest(proposals_path),
                   "proposal_embeddings": file_digest(feats_path)},
    })
    return {"command": "infer", "fused_detections": str(out), "records": len(fused)}


def cmd_eval(cfg: dict) -> dict:
    det_path = _path(cfg, "fused_detections", must_exist=True)
    gt_path = _path(cfg, "ground_truth", must_exist=True)
    vocab_path = _path(cfg, "vocab", must_exist=True)
    report_out = _path(cfg, "report", required=False)

    vocab = _read_vocab(vocab_path)
    dets = read_detections(det_path, vocab)
    gts = read_ground_truth(gt_path, vocab)
    log.info("evaluating %d detections against %d ground-truth boxes",
             len(dets), len(gts))

    report = evaluate(dets, gts, vocab)
    print(report.format_table())
    if report_out is not None:
        report.write_json(report_out, provenance={
            "config_digest": _config_digest(cfg),
            "inputs": {"fused_detections": file_digest(det_path),
                       "ground_truth": file_digest(gt_path)},
        })

    result = {"command": "eval", "gt_count": report.gt_count,
              "det_count": report.det_count}
    for split, metrics in report.splits.items():
        result[split] = metrics.to_dict()
    if report_out is not None:
        result["report"] = str(report_out)
    return result


def _ablation_cells(spec: dict) -> list[dict]:
    """Cross product of the swept axes; unswept axes stay at config defaults."""
    alphas = list(spec["alphas"]) or [None]
    sizes = list(spec["sizes"]) or [None]
    sources = list(spec["sources"]) or [None]
    cells = []
    for source in sources:
        for size in sizes:
            for alpha in alphas:
                parts = []
                if alpha is not None:
                    parts.append(f"alpha={float(alpha)!r}")
                if size is not None:
                    parts.append(f"size={int(size)}")
                if source is not None:
                    parts.append(f"source={source}")
                cells.append({"alpha": alpha, "size": size, "source": source,
                              "variant": ";".join(parts) or "default"})
    return cells


def _run_ablation_cell(cfg: dict, cell: dict, cell_dir: Path,
                       shared: dict) -> tuple[float, float, float]:
    """One full pipeline pass inside an isolated working directory."""
    cell_dir.mkdir(parents=True, exist_ok=True)
    vocab: ClassVocabulary = shared["vocab"]
    images = shared["images"]
    detections = shared["detections"]

    if cell["source"] not in (None, "pseudo", "ground_truth"):
        raise CliError(f"unknown region source {cell['source']!r}")
    if cell["source"] == "ground_truth":
        if shared["train_gts"] is None:
            raise CliError("source=ground_truth requires paths.train_ground_truth")
        # A closed-set detector only ever emits base labels, so ground-truth
        # sourcing keeps base boxes and presents them at full confidence.
        detections = [DetectionRecord(g.image_id, g.box, 1.0, g.class_id)
                      for g in shared["train_gts"] if vocab.is_base(g.class_id)]

    if cell["size"] is not None:
        size = int(cell["size"])
        ids = sorted({m.image_id for m in images})
        if size > len(ids):
            raise CliError(f"size {size} exceeds the {len(ids)} available images")
        keep = set(ids[:size])
        images = [m for m in images if m.image_id in keep]
        detections = [d for d in detections if d.image_id in keep]

    sub = copy.deepcopy(cfg)
    if cell["alpha"] is not None:
        sub["merge"]["alpha"] = float(cell["alpha"])
    sub["paths"] = dict(cfg["paths"])
    sub["paths"].update({
        "manifest": str(cell_dir / "manifest.json"),
        "checkpoint": str(cell_dir / "head.ckpt"),
        "merged_checkpoint": str(cell_dir / "merged.ckpt"),
        "history": str(cell_dir / "history.csv"),
        "fused_detections": str(cell_dir / "fused.json"),
        "report": str(cell_dir / "report.json"),
    })

    builder = BuilderConfig.from_dict(sub["builder"])
    ds = build_dataset(detections, images, vocab, builder)
    ds.provenance = {"config_digest": _config_digest(sub), "variant": cell["variant"]}
    write_manifest(ds, sub["paths"]["manifest"])

    emb = sub["embedding"]
    dim, seed = int(emb["dim"]), int(sub["seed"])
    region_table = synthetic_region_embeddings(ds, dim, seed, float(emb["noise"]))

    train_cfg = TrainConfig.from_dict(sub["train"])
    theta, history = train(ds, region_table, shared["text_table"],
                           HeadParameters.identity_init(dim, dim), train_cfg)
    write_history_csv(history, sub["paths"]["history"])
    save_checkpoint(theta, sub["paths"]["checkpoint"], {"variant": cell["variant"]})

    # Round the merged head through its file form so every cell sees exactly
    # the arithmetic an operator running the stages by hand would see.
    theta_ft, _ = load_checkpoint(sub["paths"]["checkpoint"])
    merged = interpolate(HeadParameters.identity_init(dim, dim), theta_ft,
                         MergeConfig(alpha=float(sub["merge"]["alpha"])))
    save_checkpoint(merged, sub["paths"]["merged_checkpoint"],
                    {"variant": cell["variant"]})
    theta_run, _ = load_checkpoint(sub["paths"]["merged_checkpoint"])

    fusion = FusionConfig.from_dict(sub["fusion"])
    records = shared["proposals"]
    labeled, background = partition_background(records)
    mask = [r.is_background for r in records]
    feats = shared["proposal_table"]
    bg_table = EmbeddingTable(feats.data[[i for i, m in enumerate(mask) if m]],
                              [k for k, m in zip(feats.item_ids, mask) if m],
                              normalized=feats.normalized)
    recovered = classify_regions(background, bg_table, shared["text_table"],
                                 theta_run, vocab,
                                 use_objectness=fusion.use_objectness)
    fused = fuse(labeled, recovered, fusion)
    write_detections(fused, vocab, sub["paths"]["fused_detections"],
                     provenance={"variant": cell["variant"]})

    report = evaluate(fused, shared["eval_gts"], vocab)
    report.write_json(sub["paths"]["report"],
                      provenance={"variant": cell["variant"]})
    return (report.splits["novel"].ap50, report.splits["base"].ap50,
            report.splits["all"].ap50)


def cmd_ablate(cfg: dict) -> dict:
    spec = cfg["ablate"]
    cells = _ablation_cells(spec)
    out = _path(cfg, "ablation")
    workdir = _path(cfg, "workdir", required=False)
    if workdir is None:
        workdir = out.parent / "ablation_cells"

    det_path = _path(cfg, "detections", must_exist=True)
    img_path = _path(cfg, "images", must_exist=True)
    vocab_path = _path(cfg, "vocab", must_exist=True)
    proposals_path = _path(cfg, "proposals", must_exist=True)
    gt_path = _path(cfg, "ground_truth", must_exist=True)
    train_gt_path = _path(cfg, "train_ground_truth", required=False)
    if train_gt_path is not None and not train_gt_path.exists():
        raise CliError("input not found", path=str(train_gt_path),
                       role="train_ground_truth")

    vocab = _read_vocab(vocab_path)
    emb = cfg["embedding"]
    dim, seed = int(emb["dim"]), int(cfg["seed"])
    proposals = read_detections(proposals_path, vocab)
    eval_gts = read_ground_truth(gt_path, vocab)
    shared = {
        "vocab": vocab,
        "images": read_image_metas(img_path),
        "detections": read_detections(det_path, vocab),
        "proposals": proposals,
        "eval_gts": eval_gts,
        "train_gts": (read_ground_truth(train_gt_path, vocab)
                      if train_gt_path is not None else None),
        # Inputs common to every cell are synthesized once.
        "text_table": synthetic_class_embeddings(vocab, dim, seed,
                                                 float(emb["alignment_gap"])),
        "proposal_table": synthetic_proposal_embeddings(
            proposals, eval_gts, dim, seed, float(emb["noise"]),
            float(emb["match_iou"])),
    }

    rows = []
    failed = 0
    for cell in cells:
        slug = re.sub(r"[^A-Za-z0-9._-]+", "_", cell["variant"])
        try:
            novel, base, allv = _run_ablation_cell(cfg, cell, workdir / slug, shared)
            rows.append(f"{cell['variant']},{novel!r},{base!r},{allv!r},ok")
            log.info("cell %s: novel AP50 %.4f base AP50 %.4f", cell["variant"],
                     novel, base)
        except Exception as exc:  # noqa: BLE001 -- cells must not sink the sweep
            failed += 1
            message = str(exc).replace("\n", " ").replace(",", ";")
            rows.append(f"{cell['variant']},,,,error: {message}")
            log.warning("cell %s failed: %s", cell["variant"], exc)

    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        f.write("variant,novel_ap50,base_ap50,all_ap50,status\n")
        f.write("\n".join(rows) + "\n")
    return {"command": "ablate", "ablation": str(out), "cells": len(cells),
            "failed": failed}


# ---------------------------------------------------------------------------
# Argument parsing


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_path_flags(parser: argparse.ArgumentParser, *keys: str) -> dict:
    mapping = {}
    for key in keys:
        flag = "--" + key.replace("_", "-")
        dest = f"path_{key}"
        parser.add_argument(flag, dest=dest, metavar="PATH")
        mapping[dest] = ("paths", key)
    return mapping


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, dict]]:
    parser = argparse.ArgumentParser(
        prog="regionadapt",
        description=("Pseudo-labeled region pipeline: dataset construction, head "
                     "fine-tuning, weight interpolation, cooperative inference "
                     "and AP evaluation."))
    parser.add_argument("--config", metavar="PATH",
                        help="JSON configuration document; flags override its fields")
    sub = parser.add_subparsers(dest="command", required=True)
    overrides: dict[str, dict] = {}

    p = sub.add_parser("build-dataset",
                       help="filter detector outputs into a region dataset manifest")
    m = _add_path_flags(p, "detections", "images", "vocab", "manifest")
    p.add_argument("--tau-conf", type=float, dest="tau_conf")
    p.add_argument("--n-max", type=int, dest="n_max")
    p.add_argument("--crop-size", type=int, dest="crop_size")
    m.update({"tau_conf": ("builder", "tau_conf"), "n_max": ("builder", "n_max"),
              "crop_size": ("builder", "crop_size")})
    overrides["build-dataset"] = m

    p = sub.add_parser("embed-synth",
                       help="write deterministic synthetic embedding tables")
    m = _add_path_flags(p, "manifest", "region_embeddings", "text_embeddings",
                        "proposals", "proposal_embeddings", "ground_truth", "vocab")
    p.add_argument("--dim", type=int, dest="dim")
    p.add_argument("--noise", type=float, dest="noise")
    p.add_argument("--alignment-gap", type=float, dest="alignment_gap")
    p.add_argument("--match-iou", type=float, dest="match_iou")
    p.add_argument("--seed", type=int, dest="seed")
    m.update({"dim": ("embedding", "dim"), "noise": ("embedding", "noise"),
              "alignment_gap": ("embedding", "alignment_gap"),
              "match_iou": ("embedding", "match_iou"), "seed": (None, "seed")})
    overrides["embed-synth"] = m

    p = sub.add_parser("train", help="fine-tune the head on a region dataset")
    m = _add_path_flags(p, "manifest", "region_embeddings", "text_embeddings",
                        "checkpoint", "history")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr0", type=float, dest="lr0")
    p.add_argument("--epochs", type=int, dest="epochs")
    p.add_argument("--train-seed", type=int, dest="train_seed")
    p.add_argument("--full-vocab-negatives", action=argparse.BooleanOptionalAction,
                   dest="full_vocab_negatives", default=None)
    m.update({"batch_size": ("train", "batch_size"), "lr0": ("train", "lr0"),
              "epochs": ("train", "epochs"), "train_seed": ("train", "seed"),
              "full_vocab_negatives": ("train", "full_vocab_negatives")})
    overrides["train"] = m

    p = sub.add_parser("merge", help="interpolate fine-tuned and pre-trained heads")
    m = _add_path_flags(p, "checkpoint", "pretrained_checkpoint", "merged_checkpoint")
    p.add_argument("--alpha", type=float, dest="alpha")
    m.update({"alpha": ("merge", "alpha")})
    overrides["merge"] = m

    p = sub.add_parser("infer",
                       help="classify background proposals and fuse detection streams")
    m = _add_path_flags(p, "checkpoint", "text_embeddings", "proposals",
                        "proposal_embeddings", "vocab", "fused_detections")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")
    p.add_argument("--min-score", type=float, dest="min_score")
    p.add_argument("--use-objectness", action=argparse.BooleanOptionalAction,
                   dest="use_objectness", default=None)
    m.update({"nms_iou": ("fusion", "nms_iou"), "min_score": ("fusion", "min_score"),
              "use_objectness": ("fusion", "use_objectness")})
    overrides["infer"] = m

    p = sub.add_parser("eval", help="score fused detections against ground truth")
    m = _add_path_flags(p, "fused_detections", "ground_truth", "vocab", "report")
    overrides["eval"] = m

    p = sub.add_parser("ablate", help="re-run the pipeline over a parameter sweep")
    m = _add_path_flags(p, "detections", "images", "vocab", "proposals",
                        "ground_truth", "train_ground_truth", "ablation", "workdir")
    p.add_argument("--alphas", type=_float_list, dest="alphas",
                   metavar="A,B,...")
    p.add_argument("--sizes", type=_int_list, dest="sizes", metavar="N,M,...")
    p.add_argument("--sources", type=_str_list, dest="sources",
                   metavar="pseudo,ground_truth")
    m.update({"alphas": ("ablate", "alphas"), "sizes": ("ablate", "sizes"),
              "sources": ("ablate", "sources")})
    overrides["ablate"] = m

    return parser, overrides


_COMMANDS = {
    "build-dataset": cmd_build_dataset,
    "embed-synth": cmd_embed_synth,
    "train": cmd_train,
    "merge": cmd_merge,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    level = _LOG_LEVELS.get(os.environ.get("REGIONADAPT_LOG", "warning").lower(),
                            logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")

    parser, overrides = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        _apply_overrides(cfg, args, overrides[args.command])
        result = _COMMANDS[args.command](cfg)
    except (CliError, ValueError, KeyError, OSError) as exc:
        payload = {"error": str(exc), "type": type(exc).__name__}
        if isinstance(exc, CliError):
            payload.update(exc.details)
        print(json.dumps(payload, sort_keys=True, separators=(",", ":")),
              file=sys.stderr)
        return 2
    _emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
