"""Command-line entry point: generate, postprocess, evaluate, check.

Machine-readable output (JSON, CSV) goes to stdout or files; human messages
go to stderr. Exit codes are stable: 0 success, 1 configuration error, 2 I/O
or data error, 3 empty pairing, 4 failed self-check. Every command is
deterministic given its inputs, flags and master seed, including under the
thread-level parallelism selected with --jobs (the SULCIKIT_JOBS environment
variable overrides the flag).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checks as checks_mod
from .errors import (
    MissingPriorError,
    MissingSubstitutionError,
    NoValidEntriesError,
    SulcikitError,
)
from .metrics import aggregate, evaluate_pair
from .nifti import read_nifti, write_nifti
from .postproc import PostprocConfig, postprocess_cs
from .presets import default_generator_config, default_priors
from .synth import GeneratorConfig, TissuePriors, generate_sample, mix_seed
from .volume import BinaryMask, LabelVolume

__all__ = ["main", "entrypoint", "DatasetManifest", "ManifestEntry", "RunConfig"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_NO_PAIRS = 3
EXIT_CHECK_FAILED = 4

_NIFTI_SUFFIXES = (".nii.gz", ".nii")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


@dataclass(frozen=True)
class ManifestEntry:
    """One subject: id, label map path, optional separate tissue map."""

    id: str
    label_map_path: Path
    tissue_map_path: Path | None = None


@dataclass(frozen=True)
class DatasetManifest:
    """Subject list for generation; ids unique, all paths must exist."""

    root: Path
    entries: tuple[ManifestEntry, ...]

    @classmethod
    def from_json(cls, path) -> "DatasetManifest":
        path = Path(path)
        data = json.loads(path.read_text())
        root = Path(data.get("root", ".")) if isinstance(data, dict) else Path(".")
        if not root.is_absolute():
            root = path.parent / root
        raw_entries = data["entries"] if isinstance(data, dict) else data
        entries = []
        seen = set()
        for raw in raw_entries:
            sid = str(raw["id"])
            if sid in seen:
                raise ValueError(f"duplicate manifest id {sid!r}")
            seen.add(sid)
            label_path = root / raw["label_map_path"]
            tissue = raw.get("tissue_map_path")
            tissue_path = root / tissue if tissue else None
            for p in filter(None, (label_path, tissue_path)):
                if not p.exists():
                    raise ValueError(f"manifest path does not exist: {p}")
            entries.append(ManifestEntry(sid, label_path, tissue_path))
        if not entries:
            raise ValueError("manifest has no entries")
        return cls(root, tuple(entries))


@dataclass(frozen=True)
class RunConfig:
    """Generation run parameters: generator ranges, priors, counts, seed."""

    generator: GeneratorConfig
    priors: TissuePriors
    samples_per_subject: int = 100
    master_seed: int = 0
    output_dir: Path | None = None

    def __post_init__(self):
        if self.samples_per_subject < 1:
            raise ValueError(f"samples_per_subject must be >= 1, got {self.samples_per_subject}")

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        generator = (
            GeneratorConfig.from_dict(data["generator"])
            if "generator" in data
            else default_generator_config()
        )
        priors = (
            TissuePriors.from_entries(data["priors"]) if "priors" in data else default_priors()
        )
        out = data.get("output_dir")
        return cls(
            generator=generator,
            priors=priors,
            samples_per_subject=int(data.get("samples_per_subject", 100)),
            master_seed=int(data.get("master_seed", 0)),
            output_dir=Path(out) if out else None,
        )

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls(generator=default_generator_config(), priors=default_priors())


def _strip_nifti_suffix(name: str) -> str | None:
    for suffix in _NIFTI_SUFFIXES:
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return None


def _read_mask(path) -> BinaryMask:
    labels = read_nifti(path, kind="labels")
    return BinaryMask(labels.grid, labels.voxels != 0)


def _load_subject_labels(entry: ManifestEntry) -> LabelVolume:
    """Combined label map; a separate sulci map overlays the tissue map."""
    labels = read_nifti(entry.label_map_path, kind="labels")
    if entry.tissue_map_path is None:
        return labels
    tissue = read_nifti(entry.tissue_map_path, kind="labels")
    if not tissue.grid.same_geometry(labels.grid):
        raise ValueError(
            f"tissue and label maps disagree on geometry for subject {entry.id!r}"
        )
    combined = np.where(labels.voxels != 0, labels.voxels, tissue.voxels)
    return LabelVolume(labels.grid, combined)


def _resolve_jobs(args) -> int:
    env = os.environ.get("SULCIKIT_JOBS")
    if env is not None:
        return max(1, int(env))
    return max(1, args.jobs)


def cmd_generate(args) -> int:
    try:
        manifest = DatasetManifest.from_json(args.manifest)
        run = RunConfig.from_json(args.config) if args.config else RunConfig.defaults()
        master_seed = run.master_seed if args.seed is None else args.seed
        out_dir = Path(args.out) if args.out else run.output_dir
        if out_dir is None:
            raise ValueError("no output directory: pass --out or set output_dir in the config")
        jobs = _resolve_jobs(args)
    except (KeyError, ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        _log(f"generate: configuration error: {exc}")
        return EXIT_CONFIG

    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    previous = {}
    if manifest_path.exists():
        try:
            for rec in json.loads(manifest_path.read_text())["samples"]:
                previous[(rec["id"], rec["sample"])] = rec
        except (ValueError, KeyError) as exc:
            _log(f"generate: ignoring unreadable manifest {manifest_path}: {exc}")

    records = []
    tasks = []
    cache: dict[str, LabelVolume] = {}
    try:
        for idx, entry in enumerate(manifest.entries):
            subject_seed = mix_seed(master_seed, idx)
            for sample in range(run.samples_per_subject):
                seed = mix_seed(subject_seed, sample)
                stem = f"{entry.id}_{sample:03d}"
                record = {
                    "id": entry.id,
                    "sample": sample,
                    "seed": seed,
                    "source": str(entry.label_map_path),
                    "image": f"{stem}_img.nii.gz",
                    "labels": f"{stem}_seg.nii.gz",
                }
                img_path = out_dir / record["image"]
                seg_path = out_dir / record["labels"]
                if (
                    previous.get((entry.id, sample)) == record
                    and img_path.exists()
                    and seg_path.exists()
                ):
                    records.append(record)
                    continue
                if entry.id not in cache:
                    cache[entry.id] = _load_subject_labels(entry)
                tasks.append((cache[entry.id], seed, img_path, seg_path, record))

        def produce(task):
            labels, seed, img_path, seg_path, record = task
            image, seg = generate_sample(labels, run.priors, run.generator, seed)
            write_nifti(image, img_path)
            write_nifti(seg, seg_path)
            return record

        if jobs <= 1 or len(tasks) <= 1:
            for task in tasks:
                records.append(produce(task))
        else:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                records.extend(pool.map(produce, tasks))
    except (MissingPriorError, MissingSubstitutionError) as exc:
        _write_manifest(manifest_path, records)
        _log(f"generate: configuration error: {exc}")
        return EXIT_CONFIG
    except (SulcikitError, ValueError, OSError) as exc:
        _write_manifest(manifest_path, records)
        _log(f"generate: {exc}")
        return EXIT_IO

    _write_manifest(manifest_path, records)
    _log(f"generate: {len(records)} samples listed in {manifest_path} ({len(tasks)} new)")
    return EXIT_OK


def _write_manifest(path: Path, records: list[dict]) -> None:
    records = sorted(records, key=lambda r: (r["id"], r["sample"]))
    path.write_text(json.dumps({"samples": records}, indent=2, sort_keys=True) + "\n")


def cmd_postprocess(args) -> int:
    try:
        config = PostprocConfig(args.radius, args.connectivity, args.keep)
    except ValueError as exc:
        _log(f"postprocess: configuration error: {exc}")
        return EXIT_CONFIG
    paths = [Path(p) for p in args.inputs]
    for path in paths:
        if not path.exists():
            _log(f"postprocess: no such file: {path}")
            return EXIT_IO
    try:
        for path in paths:
            stem = _strip_nifti_suffix(path.name)
            if stem is None:
                _log(f"postprocess: not a NIfTI path: {path}")
                return EXIT_IO
            mask = _read_mask(path)
            cleaned = postprocess_cs(mask, config)
            out_path = path.with_name(path.name.replace(stem, stem + "_pp", 1))
            write_nifti(cleaned, out_path)
            _log(f"postprocess: {path} -> {out_path} ({cleaned.count} voxels kept)")
    except (SulcikitError, OSError) as exc:
        _log(f"postprocess: {exc}")
        return EXIT_IO
    return EXIT_OK


def _nifti_stems(directory: Path) -> dict[str, Path]:
    stems = {}
    for path in sorted(directory.iterdir()):
        stem = _strip_nifti_suffix(path.name)
        if stem is not None:
            stems[stem] = path
    return stems


def cmd_evaluate(args) -> int:
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    if not pred_dir.is_dir() or not gt_dir.is_dir():
        _log("evaluate: prediction and ground-truth directories must exist")
        return EXIT_IO
    pred = _nifti_stems(pred_dir)
    gt = _nifti_stems(gt_dir)
    matched = sorted(set(pred) & set(gt))
    for stem in sorted(set(pred) - set(gt)):
        _log(f"evaluate: warning: prediction {stem} has no ground truth")
    for stem in sorted(set(gt) - set(pred)):
        _log(f"evaluate: warning: ground truth {stem} has no prediction")
    if not matched:
        _log("evaluate: no matching prediction/ground-truth pairs")
        return EXIT_NO_PAIRS

    try:
        reports = [
            evaluate_pair(_read_mask(pred[stem]), _read_mask(gt[stem]), identifier=stem)
            for stem in matched
        ]
    except (SulcikitError, OSError) as exc:
        _log(f"evaluate: {exc}")
        return EXIT_IO

    try:
        summary = aggregate(reports).to_dict()
    except NoValidEntriesError as exc:
        _log(f"evaluate: warning: {exc}")
        summary = None

    doc = {
        "pairs": [r.to_dict() for r in reports],
        "summary": summary,
        "unmatched": {
            "pred": sorted(set(pred) - set(gt)),
            "gt": sorted(set(gt) - set(pred)),
        },
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        _log(f"evaluate: report written to {args.out}")
    else:
        sys.stdout.write(text)

    if args.csv:
        fields = ["id", "dsc", "hd_mm", "pred_volume_mm3", "gt_volume_mm3",
                  "pred_surface_mm2", "gt_surface_mm2"]
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for report in reports:
                row = report.to_dict()
                writer.writerow({k: ("" if row[k] is None else row[k]) for k in fields})
        _log(f"evaluate: per-pair CSV written to {args.csv}")
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        results = checks_mod.run_checks(args.filter, args.inject_fault)
    except ValueError as exc:
        _log(f"check: {exc}")
        return EXIT_CONFIG
    if not results:
        _log(f"check: no checks match filter {args.filter!r}")
        return EXIT_CONFIG
    for result in results:
        status = "pass" if result.passed else "FAIL"
        _log(f"check: [{status}] {result.name} (observed {result.observed:.3g},"
             f" tolerance {result.tolerance:.3g})")
    passed = all(r.passed for r in results)
    doc = {"passed": passed, "checks": [r.to_dict() for r in results]}
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sulcikit",
        description="Synthetic data generation, post-processing and evaluation "
        "for 3D sulcus segmentation pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="generate synthetic image/label pairs")
    gen.add_argument("--manifest", required=True, help="dataset manifest JSON")
    gen.add_argument("--config", help="run config JSON (generator, priors, counts)")
    gen.add_argument("--seed", type=int, help="master seed (overrides config)")
    gen.add_argument("--out", help="output directory (overrides config)")
    gen.add_argument("--jobs", type=int, default=1, help="worker threads")
    gen.set_defaults(func=cmd_generate)

    post = sub.add_parser("postprocess", help="clean raw binary predictions")
    post.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="PATH",
                      help="input mask NIfTI file(s)")
    post.add_argument("--radius", type=int, default=1, help="dilation radius (voxels)")
    post.add_argument("--connectivity", type=int, choices=(6, 18, 26), default=26)
    post.add_argument("--keep", type=int, default=2, help="components to keep")
    post.set_defaults(func=cmd_postprocess)

    ev = sub.add_parser("evaluate", help="compare predictions against ground truth")
    ev.add_argument("--pred", required=True, help="directory of predicted masks")
    ev.add_argument("--gt", required=True, help="directory of ground-truth masks")
    ev.add_argument("--out", help="write the JSON report here instead of stdout")
    ev.add_argument("--csv", help="also write one CSV row per pair")
    ev.set_defaults(func=cmd_evaluate)

    chk = sub.add_parser("check", help="run the self-check suite")
    chk.add_argument("--filter", help="only run checks whose name contains this")
    chk.add_argument("--inject-fault", dest="inject_fault", help=argparse.SUPPRESS)
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
