"""Command-line front end: config files, experiment orchestration, and
result emission (JSONL logs, Pareto CSVs, weight snapshots, pixmap grids).

Every file this module writes is a pure function of the config and the
platform, so reruns reproduce outputs byte for byte. Wall-clock timings
are deliberately kept out of the serialized records for that reason.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .data import SYNTHETIC_KINDS, load_cifar10, load_idx, preprocess, synthesize
from .evaluator import classifier_probe, evaluate_individual, finetune
from .evolution import SELECTION_STRATEGIES, EvolutionConfig, run
from .genome import GenomeLimits, decode, parse_genome, serialize_genome
from .moo import ObjectivePoint, ReferencePoint, chvi, hypervolume, level_of_compression
from .nn import LOSS_KINDS, evaluate_loss, forward_pass, load_state, save_state

DATASET_KINDS = ("idx", "cifar10", "synthetic")

THREADS_ENV_VAR = "MONCAE_THREADS"


class ConfigError(ValueError):
    """A config file problem, always naming the offending key."""


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    synth_kind: str = "blobs"
    n: int = 512
    size: int = 16
    channels: int = 1
    n_classes: int = 10
    image_path: str | None = None
    label_path: str | None = None
    directory: str | None = None
    downsample_factor: int = 1
    subset_n: int | None = None
    split_fractions: tuple = (0.8, 0.1, 0.1)
    seed: int = 0
    grayscale: bool = False


@dataclass(frozen=True)
class EvolutionSettings:
    population_size: int = 20
    generations: int = 20
    elite_fraction: float = 0.25
    mutation_rate: float = 0.1
    selection_strategy: str = "threshold"
    tournament_size: int = 3
    reference: tuple = (4.0, 12.0)


@dataclass(frozen=True)
class LimitsConfig:
    max_conv_layers: int = 4
    max_filters: int = 32


@dataclass(frozen=True)
class EvaluatorConfig:
    max_epochs: int = 5
    batch_size: int = 256
    loss_kind: str = "bce"


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 20
    enabled: bool = True


@dataclass(frozen=True)
class ProbeConfig:
    enabled: bool = False
    probe_epochs: int = 10


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    evolution: EvolutionSettings = field(default_factory=EvolutionSettings)
    limits: LimitsConfig = field(default_factory=LimitsConfig)
    evaluator: EvaluatorConfig = field(default_factory=EvaluatorConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    output_dir: str = "runs"
    seeds: tuple = (46, 29, 12, 8, 68, 44, 32, 91, 85, 61)

    def evolution_config(self, run_seed):
        e = self.evolution
        return EvolutionConfig(
            population_size=e.population_size,
            generations=e.generations,
            elite_fraction=e.elite_fraction,
            mutation_rate=e.mutation_rate,
            selection_strategy=e.selection_strategy,
            tournament_size=e.tournament_size,
            reference=ReferencePoint(*e.reference),
            run_seed=run_seed,
        )


_SECTIONS = {
    "dataset": DatasetConfig,
    "evolution": EvolutionSettings,
    "limits": LimitsConfig,
    "evaluator": EvaluatorConfig,
    "finetune": FinetuneConfig,
    "probe": ProbeConfig,
}


def _int(path, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}")
    return value


def _number(path, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number")
    return float(value)


def _flag(path, value):
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false")
    return value


def _text(path, value):
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string")
    return value


def _choice(options):
    def check(path, value):
        if value not in options:
            raise ConfigError(f"{path}: must be one of {', '.join(options)}")
        return value

    return check


def _optional(inner):
    def check(path, value):
        return None if value is None else inner(path, value)

    return check


def _number_list(length):
    def check(path, value):
        if not isinstance(value, (list, tuple)) or len(value) != length:
            raise ConfigError(f"{path}: expected a list of {length} numbers")
        return tuple(_number(f"{path}[{i}]", v) for i, v in enumerate(value))

    return check


def _int_list(path, value):
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{path}: expected a non-empty list of integers")
    return tuple(_int(f"{path}[{i}]", v) for i, v in enumerate(value))


_VALIDATORS = {
    "dataset.kind": _choice(DATASET_KINDS),
    "dataset.synth_kind": _choice(SYNTHETIC_KINDS),
    "dataset.n": lambda p, v: _int(p, v, minimum=1),
    "dataset.size": lambda p, v: _int(p, v, minimum=1),
    "dataset.channels": lambda p, v: _int(p, v, minimum=1),
    "dataset.n_classes": lambda p, v: _int(p, v, minimum=1),
    "dataset.image_path": _optional(_text),
    "dataset.label_path": _optional(_text),
    "dataset.directory": _optional(_text),
    "dataset.downsample_factor": lambda p, v: _int(p, v, minimum=1),
    "dataset.subset_n": _optional(lambda p, v: _int(p, v, minimum=1)),
    "dataset.split_fractions": _number_list(3),
    "dataset.seed": _int,
    "dataset.grayscale": _flag,
    "evolution.population_size": lambda p, v: _int(p, v, minimum=1),
    "evolution.generations": lambda p, v: _int(p, v, minimum=1),
    "evolution.elite_fraction": _number,
    "evolution.mutation_rate": _number,
    "evolution.selection_strategy": _choice(SELECTION_STRATEGIES),
    "evolution.tournament_size": lambda p, v: _int(p, v, minimum=1),
    "evolution.reference": _number_list(2),
    "limits.max_conv_layers": lambda p, v: _int(p, v, minimum=1),
    "limits.max_filters": lambda p, v: _int(p, v, minimum=1),
    "evaluator.max_epochs": lambda p, v: _int(p, v, minimum=1),
    "evaluator.batch_size": lambda p, v: _int(p, v, minimum=1),
    "evaluator.loss_kind": _choice(LOSS_KINDS),
    "finetune.epochs": lambda p, v: _int(p, v, minimum=1),
    "finetune.enabled": _flag,
    "probe.enabled": _flag,
    "probe.probe_epochs": lambda p, v: _int(p, v, minimum=1),
    "output_dir": _text,
    "seeds": _int_list,
}


def _merge_section(name, cls, given):
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ConfigError(f"{name}: expected a mapping")
    merged = asdict(cls())
    for key, value in given.items():
        path = f"{name}.{key}"
        if key not in merged:
            raise ConfigError(f"unknown key {path}")
        merged[key] = _VALIDATORS[path](path, value)
    return cls(**merged)


def _build_config(document):
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError("config root: expected a mapping")
    kwargs = {}
    for key, value in document.items():
        if key in _SECTIONS:
            kwargs[key] = _merge_section(key, _SECTIONS[key], value)
        elif key in ("output_dir", "seeds"):
            kwargs[key] = _VALIDATORS[key](key, value)
        else:
            raise ConfigError(f"unknown key {key}")
    config = RunConfig(**kwargs)
    try:
        config.evolution_config(run_seed=0)
    except ValueError as exc:
        raise ConfigError(f"evolution: {exc}") from exc
    ds = config.dataset
    if ds.kind == "idx" and ds.image_path is None:
        raise ConfigError("dataset.image_path: required when dataset.kind is idx")
    if ds.kind == "cifar10" and ds.directory is None:
        raise ConfigError("dataset.directory: required when dataset.kind is cifar10")
    return config


def parse_config(path):
    """Strictly validated config: unknown keys rejected, gaps filled
    with the standard experimental setup."""
    try:
        document = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return _build_config(document)


def build_dataset(ds):
    """Loads or synthesizes the configured dataset, then preprocesses."""
    if ds.kind == "synthetic":
        base = synthesize(
            ds.synth_kind, ds.n, ds.size, ds.channels, ds.seed, n_classes=ds.n_classes
        )
    elif ds.kind == "idx":
        base = load_idx(ds.image_path, ds.label_path)
    else:
        base = load_cifar10(ds.directory)
    return preprocess(
        base,
        downsample_factor=ds.downsample_factor,
        subset_n=ds.subset_n,
        split_fractions=ds.split_fractions,
        seed=ds.seed,
        grayscale=ds.grayscale,
    )


def dataset_config_from_spec(spec_path):
    """Reads a dataset description: either a full config file (its
    ``dataset`` section is used) or a file holding just that section."""
    try:
        document = yaml.safe_load(Path(spec_path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{spec_path}: {exc}") from exc
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError("dataset spec: expected a mapping")
    section = document["dataset"] if "dataset" in document else document
    return _merge_section("dataset", DatasetConfig, section)


def thread_count(population_size):
    """Evaluation concurrency from MONCAE_THREADS; 0 means auto."""
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR}: expected an integer, got {raw!r}")
    if n < 0:
        raise ConfigError(f"{THREADS_ENV_VAR}: must be >= 0")
    if n == 0:
        n = min(os.cpu_count() or 1, population_size)
    return max(1, n)


def _json_text(payload):
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _record_line(record):
    # wall_seconds stays out: log lines must be reproducible
    payload = {
        "generation": record.generation,
        "population_hvi": record.population_hvi,
        "archive_hvi": record.archive_hvi,
        "individuals": [
            {
                "genome_id": ind.genome_id,
                "rec_loss": ind.objectives.rec_loss,
                "loc": ind.objectives.loc,
                "fitness": ind.fitness,
                "epochs_trained": ind.epochs_trained,
                "failed": ind.failed,
            }
            for ind in record.individuals
        ],
    }
    return json.dumps(payload, sort_keys=True)


def _pareto_csv(archive):
    rows = sorted(
        archive.entries,
        key=lambda e: (e.point.rec_loss, e.point.loc, e.genome_id),
    )
    lines = ["rec_loss,loc,genome_id,generation"]
    for entry in rows:
        lines.append(
            f"{entry.point.rec_loss!r},{entry.point.loc!r},{entry.genome_id},{entry.generation}"
        )
    return "\n".join(lines) + "\n"


def write_run_outputs(run_dir, config, seed, limits, population, archive, records):
    run_dir = Path(run_dir)
    genomes_dir = run_dir / "genomes"
    genomes_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "generations.jsonl").write_text(
        "".join(_record_line(r) + "\n" for r in records)
    )
    (run_dir / "pareto.csv").write_text(_pareto_csv(archive))
    by_id = {
        ind.genome_id: ind.genome for record in records for ind in record.individuals
    }
    keep = {e.genome_id for e in archive.entries} | {ind.genome_id for ind in population}
    for genome_id in sorted(keep):
        (genomes_dir / f"{genome_id}.txt").write_text(serialize_genome(by_id[genome_id]))
    reference = config.evolution.reference
    meta = {
        "seed": seed,
        "input_shape": list(limits.input_shape),
        "max_conv_layers": limits.max_conv_layers,
        "max_filters": limits.max_filters,
        "reference": list(reference),
        "population_size": config.evolution.population_size,
        "generations": config.evolution.generations,
        "loss_kind": config.evaluator.loss_kind,
        "batch_size": config.evaluator.batch_size,
        "archive_hvi": archive.hypervolume(ReferencePoint(*reference)),
    }
    (run_dir / "meta.json").write_text(_json_text(meta))


def cmd_evolve(config, output_dir=None):
    """Runs the evolutionary search once per configured seed."""
    out_root = Path(output_dir if output_dir is not None else config.output_dir)
    dataset = build_dataset(config.dataset)
    input_shape = tuple(int(d) for d in dataset.images.shape[1:])
    limits = GenomeLimits(
        max_conv_layers=config.limits.max_conv_layers,
        max_filters=config.limits.max_filters,
        input_shape=input_shape,
    )
    workers = thread_count(config.evolution.population_size)
    ev = config.evaluator

    def evaluator(genome, limits, data, eval_seed):
        return evaluate_individual(
            genome,
            limits,
            data,
            max_epochs=ev.max_epochs,
            batch_size=ev.batch_size,
            loss_kind=ev.loss_kind,
            eval_seed=eval_seed,
        )

    for seed in config.seeds:
        evo = config.evolution_config(run_seed=seed)
        population, archive, records = run(
            evo, limits, evaluator, dataset, max_workers=workers
        )
        run_dir = out_root / f"run_{seed}"
        write_run_outputs(run_dir, config, seed, limits, population, archive, records)
        print(
            f"run_{seed}: archive HVI {archive.hypervolume(evo.reference):.6f} "
            f"({len(archive.entries)} pareto entries)"
        )
    return 0


def _run_meta(run_dir):
    path = Path(run_dir) / "meta.json"
    if path.exists():
        return json.loads(path.read_text())
    return {}


def _load_genome(run_dir, genome_id):
    path = Path(run_dir) / "genomes" / f"{genome_id}.txt"
    if not path.exists():
        raise ConfigError(f"no genome file at {path}")
    return parse_genome(path.read_text())


def cmd_finetune(config, run_dir, genome_id):
    """Trains one evolved genome for the full post-search budget and
    writes its weights plus a metrics file."""
    run_dir = Path(run_dir)
    genome = _load_genome(run_dir, genome_id)
    dataset = build_dataset(config.dataset)
    input_shape = tuple(int(d) for d in dataset.images.shape[1:])
    limits = GenomeLimits(
        max_conv_layers=len(genome.layer_genes) // 2,
        max_filters=max(config.limits.max_filters, *(g.filters for g in genome.layer_genes)),
        input_shape=input_shape,
    )
    seed = int(_run_meta(run_dir).get("seed", 0))
    result = finetune(
        genome,
        limits,
        dataset,
        epochs=config.finetune.epochs,
        batch_size=config.evaluator.batch_size,
        loss_kind=config.evaluator.loss_kind,
        seed=seed,
    )
    train_loss, val_loss = result.history[-1]
    metrics = {
        "genome_id": genome_id,
        "epochs": len(result.history),
        "train_loss": train_loss,
        "val_loss": val_loss,
        "rec_loss": val_loss,
        "loc": level_of_compression(result.spec.bottleneck_shape),
        "bottleneck_shape": list(result.spec.bottleneck_shape),
    }
    if config.probe.enabled:
        probe = classifier_probe(
            result.spec,
            result.state,
            dataset,
            probe_epochs=config.probe.probe_epochs,
            seed=seed,
        )
        metrics["cl_loss"] = probe.cl_loss
        metrics["cl_acc"] = probe.cl_acc
    out_dir = run_dir / "finetuned"
    out_dir.mkdir(parents=True, exist_ok=True)
    save_state(result.state, out_dir / f"{genome_id}.mncw")
    (out_dir / f"{genome_id}.metrics.json").write_text(_json_text(metrics))
    print(f"{genome_id}: train {train_loss:.6f} val {val_loss:.6f}")
    return 0


def _report_samples(dataset, n_examples):
    images = dataset.images_for("test")
    if len(images) == 0:
        images = dataset.images_for("train")
    n = min(n_examples, len(images))
    if n < 1:
        raise ConfigError("dataset has no samples to report on")
    return images[:n]


def _pixmap_bytes(originals, reconstructions):
    n, h, w, c = originals.shape
    if c not in (1, 3):
        raise ConfigError(f"report images need 1 or 3 channels, got {c}")
    top = np.concatenate(list(originals), axis=1)
    bottom = np.concatenate(list(reconstructions), axis=1)
    grid = np.concatenate([top, bottom], axis=0)
    quantized = np.clip(np.rint(grid * 255.0), 0, 255).astype(np.uint8)
    magic = "P5" if c == 1 else "P6"
    header = f"{magic}\n{n * w} {2 * h}\n255\n".encode("ascii")
    if c == 1:
        return header + quantized[..., 0].tobytes(), ".pgm"
    return header + quantized.tobytes(), ".ppm"


def cmd_report(run_dir, dataset_spec, n_examples):
    """Writes original-vs-reconstruction pixmap grids and a summary of
    (rec_loss, loc) for every finetuned genome in a run directory."""
    run_dir = Path(run_dir)
    finetuned_dir = run_dir / "finetuned"
    snapshots = sorted(finetuned_dir.glob("*.mncw"))
    if not snapshots:
        raise ConfigError(f"no finetuned weights under {finetuned_dir}")
    dataset = build_dataset(dataset_config_from_spec(dataset_spec))
    input_shape = tuple(int(d) for d in dataset.images.shape[1:])
    meta = _run_meta(run_dir)
    samples = _report_samples(dataset, n_examples)
    report_dir = run_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    summary_lines = []
    for snapshot_path in snapshots:
        genome_id = snapshot_path.stem
        genome = _load_genome(run_dir, genome_id)
        limits = GenomeLimits(
            max_conv_layers=int(meta.get("max_conv_layers", len(genome.layer_genes) // 2)),
            max_filters=int(meta.get("max_filters", 1024)),
            input_shape=input_shape,
        )
        spec = decode(genome, limits)
        state = load_state(spec, snapshot_path)
        reconstruction, _, _ = forward_pass(spec, state, samples, training=False)
        payload, suffix = _pixmap_bytes(samples, reconstruction)
        (report_dir / f"{genome_id}{suffix}").write_bytes(payload)
        metrics_path = finetuned_dir / f"{genome_id}.metrics.json"
        if metrics_path.exists():
            rec_loss = float(json.loads(metrics_path.read_text())["rec_loss"])
        else:
            rec_loss = evaluate_loss(
                spec,
                state,
                samples,
                batch_size=int(meta.get("batch_size", 256)),
                loss_kind=meta.get("loss_kind", "bce"),
            )
        loc = level_of_compression(spec.bottleneck_shape)
        summary_lines.append(f"{genome_id} rec_loss={rec_loss!r} loc={loc!r}")
    (report_dir / "summary.txt").write_text("\n".join(summary_lines) + "\n")
    print(f"wrote {len(snapshots)} reconstruction grids to {report_dir}")
    return 0


def _parse_points_csv(path):
    points = []
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = raw.strip()
        if not stripped:
            continue
        if line_no == 1 and stripped.lower().startswith("rec_loss"):
            continue
        parts = [p.strip() for p in stripped.split(",")]
        if len(parts) < 2:
            raise ConfigError(f"line {line_no}: expected rec_loss,loc")
        try:
            rec_loss, loc = float(parts[0]), float(parts[1])
        except ValueError:
            raise ConfigError(f"line {line_no}: expected numeric rec_loss,loc")
        try:
            points.append(ObjectivePoint(rec_loss=rec_loss, loc=loc))
        except ValueError as exc:
            raise ConfigError(f"line {line_no}: {exc}")
    return points


def cmd_hv(points_csv, ref_rec_loss, ref_loc):
    """Prints the hypervolume of a point file and each row's exclusive
    contribution, six decimal places."""
    points = _parse_points_csv(points_csv)
    reference = ReferencePoint(rec_loss_ref=ref_rec_loss, loc_ref=ref_loc)
    print(f"HVI {hypervolume(points, reference):.6f}")
    for i in range(len(points)):
        print(f"CHVI {i} {chvi(i, points, reference):.6f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="moncae",
        description="Multi-objective neuroevolution of convolutional autoencoders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_evolve = sub.add_parser("evolve", help="run the evolutionary search")
    p_evolve.add_argument("--config", required=True, help="YAML config file")
    p_evolve.add_argument("--output", default=None, help="override output_dir")

    p_finetune = sub.add_parser("finetune", help="train an evolved genome fully")
    p_finetune.add_argument("--config", required=True, help="YAML config file")
    p_finetune.add_argument("--run", required=True, help="run directory")
    p_finetune.add_argument("--genome", required=True, help="genome id")

    p_report = sub.add_parser("report", help="write reconstruction grids")
    p_report.add_argument("--run", required=True, help="run directory")
    p_report.add_argument(
        "--dataset", required=True, help="config file or dataset-section YAML"
    )
    p_report.add_argument("--n", type=int, default=8, help="examples per grid")

    p_hv = sub.add_parser("hv", help="hypervolume of a rec_loss,loc point file")
    p_hv.add_argument("--points", required=True, help="CSV of rec_loss,loc rows")
    p_hv.add_argument(
        "--ref", nargs=2, type=float, default=[4.0, 12.0], metavar=("REC", "LOC")
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "evolve":
            return cmd_evolve(parse_config(args.config), args.output)
        if args.command == "finetune":
            return cmd_finetune(parse_config(args.config), args.run, args.genome)
        if args.command == "report":
            return cmd_report(args.run, args.dataset, args.n)
        return cmd_hv(args.points, args.ref[0], args.ref[1])
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
