"""Multi-objective neuroevolution of convolutional autoencoders.

Architectures are encoded as fixed-length genomes, decoded into
encoder-decoder networks, trained briefly, and scored on two minimized
objectives: reconstruction loss and level of compression. Fitness is
each individual's exclusive contribution to the population's
hypervolume, and the non-dominated front is kept in a Pareto archive.
"""

from .data import Dataset, FormatError, SplitIndices, load_cifar10, load_idx, preprocess, synthesize
from .evaluator import (
    EvalResult,
    FinetuneResult,
    ProbeResult,
    classifier_probe,
    evaluate_individual,
    finetune,
)
from .evolution import (
    EvolutionConfig,
    GenerationRecord,
    Individual,
    assign_fitness,
    init_population,
    next_generation,
    run,
    select,
)
from .genome import (
    Genome,
    GenomeLimits,
    LayerGene,
    crossover,
    decode,
    mutate,
    parse_genome,
    random_genome,
    repair,
    serialize_genome,
)
from .moo import (
    ArchiveEntry,
    ObjectivePoint,
    ParetoArchive,
    ReferencePoint,
    chvi,
    dominates,
    hypervolume,
    level_of_compression,
)

__all__ = [
    "ArchiveEntry",
    "Dataset",
    "EvalResult",
    "EvolutionConfig",
    "FinetuneResult",
    "FormatError",
    "GenerationRecord",
    "Genome",
    "GenomeLimits",
    "Individual",
    "LayerGene",
    "ObjectivePoint",
    "ParetoArchive",
    "ProbeResult",
    "ReferencePoint",
    "SplitIndices",
    "assign_fitness",
    "chvi",
    "classifier_probe",
    "crossover",
    "decode",
    "dominates",
    "evaluate_individual",
    "finetune",
    "hypervolume",
    "init_population",
    "level_of_compression",
    "load_cifar10",
    "load_idx",
    "mutate",
    "next_generation",
    "parse_genome",
    "preprocess",
    "random_genome",
    "repair",
    "run",
    "select",
    "serialize_genome",
    "synthesize",
]
