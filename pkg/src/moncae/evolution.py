"""The generational loop: fitness by hypervolume contribution, selection,
variation, archive maintenance, and structured per-generation records.

Every random decision draws from a seed derived as a pure function of
(run seed, stream, generation, index), so a run is reproducible bit for
bit regardless of evaluation order or worker count. Individual
evaluations may run on a thread pool; results are collected by index.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from time import perf_counter

import numpy as np

from .genome import crossover, mutate, random_genome
from .moo import ObjectivePoint, ParetoArchive, ReferencePoint, chvi, hypervolume

SELECTION_STRATEGIES = ("threshold", "tournament")

# seed streams: one per kind of random decision, never shared
STREAM_GENOME = 0
STREAM_EVAL = 1
STREAM_SELECT = 2
STREAM_VARIATION = 3


def derive_seed(run_seed, stream, generation, index=0):
    """Stable scalar seed for one random decision in one run."""
    ss = np.random.SeedSequence(run_seed, spawn_key=(stream, generation, index))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class Individual:
    genome_id: str
    genome: "Genome"
    eval_seed: int
    objectives: ObjectivePoint | None = None
    fitness: float | None = None
    epochs_trained: int | None = None
    failed: bool = False


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 20
    generations: int = 20
    elite_fraction: float = 0.25
    mutation_rate: float = 0.1
    selection_strategy: str = "threshold"
    tournament_size: int = 3
    reference: ReferencePoint = field(default_factory=ReferencePoint)
    run_seed: int = 0

    def __post_init__(self):
        if self.population_size < 1 or self.generations < 1:
            raise ValueError("population_size and generations must be >= 1")
        if not 0.0 < self.elite_fraction <= 1.0:
            raise ValueError("elite_fraction must be in (0, 1]")
        if not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in [0, 1]")
        if self.selection_strategy not in SELECTION_STRATEGIES:
            raise ValueError(f"unknown selection strategy {self.selection_strategy!r}")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")

    @property
    def elite_count(self):
        return math.ceil(self.elite_fraction * self.population_size)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    individuals: tuple  # evaluated Individuals, fitness assigned
    population_hvi: float
    archive_hvi: float
    wall_seconds: float  # never serialized: it would break run determinism


def _genome_id(generation, index):
    return f"g{generation:03d}-i{index:02d}"


def init_population(config, limits):
    """Random, repaired genomes with per-individual evaluation seeds."""
    population = []
    for i in range(config.population_size):
        genome = random_genome(limits, derive_seed(config.run_seed, STREAM_GENOME, 0, i))
        population.append(
            Individual(
                genome_id=_genome_id(0, i),
                genome=genome,
                eval_seed=derive_seed(config.run_seed, STREAM_EVAL, 0, i),
            )
        )
    return population


def assign_fitness(population, reference):
    """Fitness = exclusive hypervolume contribution of each individual."""
    for ind in population:
        if ind.objectives is None:
            raise ValueError(f"{ind.genome_id} has no objectives")
    points = [ind.objectives for ind in population]
    return [
        replace(ind, fitness=chvi(i, points, reference)) for i, ind in enumerate(population)
    ]


def _ranked(population):
    return sorted(
        range(len(population)), key=lambda i: (-population[i].fitness, i)
    )


def select(population, config, rng_seed):
    """Survivor selection, deterministic in ``rng_seed``.

    threshold: the elites always survive; every other individual survives
    iff its fitness is at least a uniform draw in [0, generation max].
    tournament: repeated size-k tournaments fill a survivor quota of
    max(elite count, half the population) with distinct winners.
    """
    order = _ranked(population)
    elite_n = min(config.elite_count, len(population))
    rng = np.random.default_rng(rng_seed)
    if config.selection_strategy == "threshold":
        chosen = list(order[:elite_n])
        fmax = population[order[0]].fitness if order else 0.0
        for i in order[elite_n:]:
            if population[i].fitness >= rng.uniform(0.0, fmax):
                chosen.append(i)
    else:
        quota = min(len(population), max(elite_n, math.ceil(len(population) / 2)))
        winners = []
        seen = set()
        max_rounds = 200 * quota
        for _ in range(max_rounds):
            if len(winners) >= quota:
                break
            contenders = rng.integers(0, len(population), size=config.tournament_size)
            best = min(contenders, key=lambda i: (-population[i].fitness, i))
            if best not in seen:
                seen.add(best)
                winners.append(best)
        for i in order:  # deterministic fill if sampling stalled
            if len(winners) >= quota:
                break
            if i not in seen:
                seen.add(i)
                winners.append(i)
        chosen = sorted(winners, key=lambda i: (-population[i].fitness, i))
    return [population[i] for i in chosen]


def next_generation(survivors, config, limits, generation, rng_seed):
    """Elites verbatim, the rest bred from survivor parents.

    Parents are fitness-proportional when any fitness is positive and
    uniform otherwise. ``generation`` stamps ids and evaluation seeds.
    """
    if not survivors:
        raise ValueError("need at least one survivor to breed from")
    ranked = sorted(survivors, key=lambda ind: (-ind.fitness, ind.genome_id))
    elite_n = min(config.elite_count, len(ranked))
    rng = np.random.default_rng(rng_seed)
    total = sum(ind.fitness for ind in ranked)
    if total > 0.0:
        weights = np.array([ind.fitness / total for ind in ranked])
    else:
        weights = np.full(len(ranked), 1.0 / len(ranked))
    population = []
    for idx in range(config.population_size):
        if idx < elite_n:
            genome = ranked[idx].genome
        else:
            pa = ranked[int(rng.choice(len(ranked), p=weights))]
            pb = ranked[int(rng.choice(len(ranked), p=weights))]
            child = crossover(pa.genome, pb.genome, limits, int(rng.integers(2**63)))
            genome = mutate(child, config.mutation_rate, limits, int(rng.integers(2**63)))
        population.append(
            Individual(
                genome_id=_genome_id(generation, idx),
                genome=genome,
                eval_seed=derive_seed(config.run_seed, STREAM_EVAL, generation, idx),
            )
        )
    return population


def _evaluate_population(population, limits, evaluator, dataset, max_workers):
    """Runs the evaluator over a population; exceptions become results."""

    def one(ind):
        return evaluator(ind.genome, limits, dataset, ind.eval_seed)

    if max_workers <= 1:
        out = []
        for ind in population:
            try:
                out.append(one(ind))
            except Exception as exc:
                out.append(exc)
        return out
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(one, ind) for ind in population]
        out = []
        for future in futures:  # collected by index, never by completion order
            try:
                out.append(future.result())
            except Exception as exc:
                out.append(exc)
    return out


def run(config, limits, evaluator, dataset, max_workers=1):
    """Executes the full evolutionary search.

    ``evaluator(genome, limits, dataset, eval_seed) -> EvalResult`` is
    called once per individual per generation. A failing evaluation gives
    that individual the reference-point objectives and zero fitness; its
    point is kept out of the archive and the run continues.

    Returns (final population, pareto archive, generation records).
    """
    reference = config.reference
    worst = ObjectivePoint(rec_loss=reference.rec_loss_ref, loc=reference.loc_ref)
    population = init_population(config, limits)
    archive = ParetoArchive(entries=[])
    records = []
    for gen in range(config.generations):
        started = perf_counter()
        results = _evaluate_population(population, limits, evaluator, dataset, max_workers)
        evaluated = []
        for ind, res in zip(population, results):
            if isinstance(res, Exception):
                evaluated.append(
                    replace(ind, objectives=worst, epochs_trained=0, failed=True)
                )
            else:
                evaluated.append(
                    replace(
                        ind,
                        objectives=res.objectives,
                        epochs_trained=res.epochs_trained,
                    )
                )
        evaluated = assign_fitness(evaluated, reference)
        for ind in evaluated:
            if not ind.failed:
                archive.insert(ind.objectives, ind.genome_id, gen)
        points = [ind.objectives for ind in evaluated]
        records.append(
            GenerationRecord(
                generation=gen,
                individuals=tuple(evaluated),
                population_hvi=hypervolume(points, reference),
                archive_hvi=archive.hypervolume(reference),
                wall_seconds=perf_counter() - started,
            )
        )
        if gen + 1 < config.generations:
            survivors = select(
                evaluated, config, derive_seed(config.run_seed, STREAM_SELECT, gen)
            )
            population = next_generation(
                survivors,
                config,
                limits,
                gen + 1,
                derive_seed(config.run_seed, STREAM_VARIATION, gen + 1),
            )
        else:
            population = evaluated
    return population, archive, records
