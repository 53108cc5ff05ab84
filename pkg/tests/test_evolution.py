import math

import numpy as np
import pytest

from moncae.evaluator import EvalResult
from moncae.evolution import (
    EvolutionConfig,
    GenerationRecord,
    Individual,
    assign_fitness,
    derive_seed,
    init_population,
    next_generation,
    run,
    select,
)
from moncae.genome import GenomeLimits, decode, random_genome, serialize_genome
from moncae.moo import ObjectivePoint, ReferencePoint, chvi, level_of_compression

REF = ReferencePoint(rec_loss_ref=4.0, loc_ref=12.0)
LIMITS = GenomeLimits(max_conv_layers=3, max_filters=16, input_shape=(28, 28, 1))


def individual(idx, fitness=None, objectives=None, genome=None, gen=0):
    if genome is None:
        genome = random_genome(LIMITS, rng_seed=1000 + idx)
    return Individual(
        genome_id=f"g{gen:03d}-i{idx:02d}",
        genome=genome,
        eval_seed=idx,
        objectives=objectives,
        fitness=fitness,
    )


def stub_evaluator(genome, limits, dataset, eval_seed):
    """Deterministic pseudo-evaluation: loss derived from the genome alone."""
    spec = decode(genome, limits)
    active = sum(g.filters for g in genome.layer_genes if g.active)
    rec_loss = 0.2 + 0.15 * ((active % 17) / 17.0)
    return EvalResult(
        objectives=ObjectivePoint(
            rec_loss=rec_loss, loc=level_of_compression(spec.bottleneck_shape)
        ),
        bottleneck_shape=spec.bottleneck_shape,
        epochs_trained=3,
        train_seconds=0.0,
    )


def small_config(**overrides):
    defaults = dict(population_size=8, generations=3, run_seed=46)
    defaults.update(overrides)
    return EvolutionConfig(**defaults)


class TestConfig:
    def test_defaults(self):
        config = EvolutionConfig()
        assert config.population_size == 20
        assert config.generations == 20
        assert config.elite_fraction == 0.25
        assert config.mutation_rate == 0.1
        assert config.selection_strategy == "threshold"
        assert config.tournament_size == 3
        assert config.reference == REF

    def test_elite_count_rounds_up(self):
        assert EvolutionConfig(population_size=20).elite_count == 5
        assert EvolutionConfig(population_size=3, elite_fraction=0.25).elite_count == 1
        assert EvolutionConfig(population_size=10, elite_fraction=0.01).elite_count == 1

    @pytest.mark.parametrize(
        "overrides",
        [
            dict(population_size=0),
            dict(generations=0),
            dict(elite_fraction=0.0),
            dict(elite_fraction=1.5),
            dict(mutation_rate=-0.1),
            dict(selection_strategy="lottery"),
            dict(tournament_size=0),
        ],
    )
    def test_rejects_bad_fields(self, overrides):
        with pytest.raises(ValueError):
            EvolutionConfig(**overrides)


class TestSeedDerivation:
    def test_deterministic(self):
        assert derive_seed(46, 1, 2, 3) == derive_seed(46, 1, 2, 3)

    def test_streams_are_disjoint(self):
        seeds = {
            derive_seed(46, stream, gen, idx)
            for stream in range(4)
            for gen in range(5)
            for idx in range(10)
        }
        assert len(seeds) == 4 * 5 * 10

    def test_run_seed_changes_everything(self):
        assert derive_seed(46, 0, 0, 0) != derive_seed(47, 0, 0, 0)


class TestInitPopulation:
    def test_size_and_ids(self):
        population = init_population(small_config(), LIMITS)
        assert len(population) == 8
        assert [ind.genome_id for ind in population] == [
            f"g000-i{i:02d}" for i in range(8)
        ]

    def test_deterministic_in_run_seed(self):
        a = init_population(small_config(), LIMITS)
        b = init_population(small_config(), LIMITS)
        assert [serialize_genome(x.genome) for x in a] == [
            serialize_genome(y.genome) for y in b
        ]
        assert [x.eval_seed for x in a] == [y.eval_seed for y in b]

    def test_different_run_seed_differs(self):
        a = init_population(small_config(run_seed=46), LIMITS)
        b = init_population(small_config(run_seed=29), LIMITS)
        assert [serialize_genome(x.genome) for x in a] != [
            serialize_genome(y.genome) for y in b
        ]

    def test_genomes_decode(self):
        for ind in init_population(small_config(), LIMITS):
            decode(ind.genome, LIMITS)

    def test_objectives_start_unset(self):
        assert all(ind.objectives is None for ind in init_population(small_config(), LIMITS))


class TestAssignFitness:
    def test_single_individual_gets_own_hypervolume(self):
        pop = [individual(0, objectives=ObjectivePoint(1.0, 6.0))]
        (out,) = assign_fitness(pop, REF)
        assert out.fitness == pytest.approx((4.0 - 1.0) * (12.0 - 6.0))

    def test_two_point_example(self):
        pop = [
            individual(0, objectives=ObjectivePoint(1.0, 6.0)),
            individual(1, objectives=ObjectivePoint(2.0, 2.0)),
        ]
        out = assign_fitness(pop, REF)
        assert out[0].fitness == pytest.approx(6.0)
        assert out[1].fitness == pytest.approx(8.0)

    def test_out_of_box_gets_zero(self):
        pop = [
            individual(0, objectives=ObjectivePoint(1.0, 6.0)),
            individual(1, objectives=ObjectivePoint(5.0, 13.0)),
        ]
        out = assign_fitness(pop, REF)
        assert out[1].fitness == 0.0

    def test_dominated_gets_zero(self):
        pop = [
            individual(0, objectives=ObjectivePoint(1.0, 6.0)),
            individual(1, objectives=ObjectivePoint(2.0, 7.0)),
        ]
        out = assign_fitness(pop, REF)
        assert out[1].fitness == 0.0
        assert out[0].fitness > 0.0

    def test_matches_direct_contribution(self):
        rng = np.random.default_rng(8)
        points = [
            ObjectivePoint(float(rng.uniform(0.1, 3.9)), float(rng.uniform(1.0, 11.0)))
            for _ in range(12)
        ]
        pop = [individual(i, objectives=p) for i, p in enumerate(points)]
        out = assign_fitness(pop, REF)
        for i, ind in enumerate(out):
            assert ind.fitness == pytest.approx(chvi(i, points, REF), abs=1e-12)

    def test_missing_objectives_is_an_error(self):
        with pytest.raises(ValueError, match="objectives"):
            assign_fitness([individual(0)], REF)


def fitness_population(fitnesses):
    return [individual(i, fitness=f) for i, f in enumerate(fitnesses)]


class TestThresholdSelect:
    def test_elites_always_survive(self):
        pop = fitness_population([5.0, 9.0, 1.0, 7.0, 0.5, 3.0, 2.0, 0.0])
        config = small_config(elite_fraction=0.25)  # elite_count 2
        for seed in range(30):
            names = {ind.genome_id for ind in select(pop, config, seed)}
            assert {"g000-i01", "g000-i03"} <= names

    def test_tied_max_fitness_always_survives(self):
        # two individuals share the max; only one fits in the elite slot,
        # the other must still pass every draw from [0, max]
        pop = fitness_population([9.0, 9.0, 1.0, 0.5])
        config = small_config(population_size=4, elite_fraction=0.25)
        for seed in range(50):
            names = {ind.genome_id for ind in select(pop, config, seed)}
            assert {"g000-i00", "g000-i01"} <= names

    def test_zero_fitness_never_survives_against_positive_max(self):
        pop = fitness_population([9.0, 0.0, 0.0, 0.0])
        config = small_config(population_size=4, elite_fraction=0.25)
        for seed in range(100):
            names = {ind.genome_id for ind in select(pop, config, seed)}
            assert names == {"g000-i00"}

    def test_all_zero_fitness_keeps_everyone(self):
        pop = fitness_population([0.0, 0.0, 0.0, 0.0])
        config = small_config(population_size=4, elite_fraction=0.25)
        out = select(pop, config, 46)
        assert len(out) == 4

    def test_deterministic_in_seed(self):
        pop = fitness_population([5.0, 9.0, 1.0, 7.0, 0.5, 3.0, 2.0, 0.25])
        config = small_config()
        a = [ind.genome_id for ind in select(pop, config, 46)]
        b = [ind.genome_id for ind in select(pop, config, 46)]
        assert a == b

    def test_seed_changes_survivor_set(self):
        pop = fitness_population([5.0, 9.0, 1.0, 7.0, 0.5, 3.0, 2.0, 0.25])
        config = small_config()
        sets = {
            tuple(ind.genome_id for ind in select(pop, config, seed))
            for seed in range(40)
        }
        assert len(sets) > 1

    def test_survival_rate_tracks_fitness(self):
        # an individual at half the max fitness should survive about half
        # the time; far more often than one near zero
        pop = fitness_population([10.0, 5.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1])
        config = small_config(elite_fraction=1 / 8)  # elite_count 1
        half = sum(
            any(ind.genome_id == "g000-i01" for ind in select(pop, config, seed))
            for seed in range(400)
        )
        low = sum(
            any(ind.genome_id == "g000-i02" for ind in select(pop, config, seed))
            for seed in range(400)
        )
        assert abs(half / 400 - 0.5) < 0.1
        assert low / 400 < 0.1


class TestTournamentSelect:
    def test_quota(self):
        pop = fitness_population([5.0, 9.0, 1.0, 7.0, 0.5, 3.0, 2.0, 0.25])
        config = small_config(selection_strategy="tournament")
        out = select(pop, config, 46)
        assert len(out) == max(config.elite_count, math.ceil(8 / 2))

    def test_survivors_are_distinct(self):
        pop = fitness_population([5.0, 9.0, 1.0, 7.0, 0.5, 3.0, 2.0, 0.25])
        config = small_config(selection_strategy="tournament")
        out = select(pop, config, 12)
        names = [ind.genome_id for ind in out]
        assert len(names) == len(set(names))

    def test_max_fitness_nearly_always_selected(self):
        pop = fitness_population([5.0, 9.0, 1.0, 7.0, 0.5, 3.0, 2.0, 0.25])
        config = small_config(selection_strategy="tournament")
        hits = sum(
            any(ind.genome_id == "g000-i01" for ind in select(pop, config, seed))
            for seed in range(50)
        )
        assert hits >= 48

    def test_deterministic_in_seed(self):
        pop = fitness_population([5.0, 9.0, 1.0, 7.0, 0.5, 3.0, 2.0, 0.25])
        config = small_config(selection_strategy="tournament")
        a = [ind.genome_id for ind in select(pop, config, 7)]
        b = [ind.genome_id for ind in select(pop, config, 7)]
        assert a == b

    def test_all_zero_fitness_still_fills_quota(self):
        pop = fitness_population([0.0] * 8)
        config = small_config(selection_strategy="tournament")
        out = select(pop, config, 46)
        assert len(out) == max(config.elite_count, 4)


class TestNextGeneration:
    def survivors(self, n=4):
        return [
            individual(i, fitness=f)
            for i, f in enumerate([9.0, 7.0, 3.0, 1.0][:n])
        ]

    def test_restores_population_size(self):
        out = next_generation(self.survivors(), small_config(), LIMITS, 1, 46)
        assert len(out) == 8

    def test_ids_and_eval_seeds_carry_the_generation(self):
        config = small_config()
        out = next_generation(self.survivors(), config, LIMITS, 2, 46)
        assert [ind.genome_id for ind in out] == [f"g002-i{i:02d}" for i in range(8)]
        assert [ind.eval_seed for ind in out] == [
            derive_seed(config.run_seed, 1, 2, i) for i in range(8)
        ]

    def test_elites_copied_verbatim(self):
        survivors = self.survivors()
        out = next_generation(survivors, small_config(), LIMITS, 1, 46)
        assert out[0].genome is survivors[0].genome
        assert out[1].genome is survivors[1].genome

    def test_offspring_are_repaired_and_decodable(self):
        out = next_generation(self.survivors(), small_config(), LIMITS, 1, 46)
        for ind in out:
            decode(ind.genome, LIMITS)

    def test_deterministic_in_seed(self):
        a = next_generation(self.survivors(), small_config(), LIMITS, 1, 46)
        b = next_generation(self.survivors(), small_config(), LIMITS, 1, 46)
        assert [serialize_genome(x.genome) for x in a] == [
            serialize_genome(y.genome) for y in b
        ]

    def test_seed_varies_offspring(self):
        a = next_generation(self.survivors(), small_config(), LIMITS, 1, 46)
        b = next_generation(self.survivors(), small_config(), LIMITS, 1, 47)
        assert [serialize_genome(x.genome) for x in a[2:]] != [
            serialize_genome(y.genome) for y in b[2:]
        ]

    def test_zero_mutation_single_survivor_reproduces_exactly(self):
        # crossover of a genome with itself followed by zero-rate mutation
        # must reduce to repair, which is a no-op on a valid genome
        survivor = individual(0, fitness=2.0)
        out = next_generation(
            [survivor], small_config(mutation_rate=0.0), LIMITS, 1, 46
        )
        expected = serialize_genome(survivor.genome)
        assert all(serialize_genome(ind.genome) == expected for ind in out)

    def test_zero_total_fitness_breeds_uniformly(self):
        survivors = [individual(i, fitness=0.0) for i in range(4)]
        out = next_generation(survivors, small_config(), LIMITS, 1, 46)
        assert len(out) == 8

    def test_empty_survivors_is_an_error(self):
        with pytest.raises(ValueError, match="survivor"):
            next_generation([], small_config(), LIMITS, 1, 46)


class TestRun:
    def test_record_count_and_sizes(self):
        config = small_config(generations=5)
        population, archive, records = run(config, LIMITS, stub_evaluator, None)
        assert len(records) == 5
        assert len(population) == config.population_size
        assert all(len(r.individuals) == config.population_size for r in records)
        assert all(isinstance(r, GenerationRecord) for r in records)

    def test_archive_hvi_is_monotone_and_dominates_population_hvi(self):
        _, _, records = run(small_config(generations=5), LIMITS, stub_evaluator, None)
        hvis = [r.archive_hvi for r in records]
        assert all(b >= a for a, b in zip(hvis, hvis[1:]))
        assert all(r.archive_hvi >= r.population_hvi for r in records)

    def test_fitness_matches_contribution_recomputed(self):
        _, _, records = run(small_config(), LIMITS, stub_evaluator, None)
        for record in records:
            points = [ind.objectives for ind in record.individuals]
            for i, ind in enumerate(record.individuals):
                assert ind.fitness == pytest.approx(
                    chvi(i, points, REF), abs=1e-12
                )

    def test_elite_genomes_reappear_next_generation(self):
        config = small_config()
        _, _, records = run(config, LIMITS, stub_evaluator, None)
        for prev, nxt in zip(records, records[1:]):
            ranked = sorted(
                prev.individuals, key=lambda ind: (-ind.fitness, ind.genome_id)
            )
            for k in range(config.elite_count):
                assert serialize_genome(nxt.individuals[k].genome) == serialize_genome(
                    ranked[k].genome
                )

    def test_archive_entries_come_from_evaluations(self):
        _, archive, records = run(small_config(), LIMITS, stub_evaluator, None)
        seen = {
            (ind.genome_id, ind.objectives.rec_loss, ind.objectives.loc)
            for record in records
            for ind in record.individuals
        }
        assert archive.entries
        for entry in archive.entries:
            key = (entry.genome_id, entry.point.rec_loss, entry.point.loc)
            assert key in seen

    def test_bitwise_deterministic_across_reruns(self):
        config = small_config(generations=4)
        _, _, first = run(config, LIMITS, stub_evaluator, None)
        _, _, second = run(config, LIMITS, stub_evaluator, None)
        for a, b in zip(first, second):
            assert a.population_hvi == b.population_hvi
            assert a.archive_hvi == b.archive_hvi
            for x, y in zip(a.individuals, b.individuals):
                assert x.genome_id == y.genome_id
                assert x.objectives == y.objectives
                assert x.fitness == y.fitness
                assert serialize_genome(x.genome) == serialize_genome(y.genome)

    def test_thread_pool_matches_serial(self):
        config = small_config(generations=3)
        _, _, serial = run(config, LIMITS, stub_evaluator, None, max_workers=1)
        _, _, pooled = run(config, LIMITS, stub_evaluator, None, max_workers=4)
        for a, b in zip(serial, pooled):
            for x, y in zip(a.individuals, b.individuals):
                assert x.objectives == y.objectives
                assert x.fitness == y.fitness

    def test_run_seed_changes_outcome(self):
        _, _, a = run(small_config(run_seed=46), LIMITS, stub_evaluator, None)
        _, _, b = run(small_config(run_seed=29), LIMITS, stub_evaluator, None)
        points_a = [ind.objectives for ind in a[-1].individuals]
        points_b = [ind.objectives for ind in b[-1].individuals]
        assert points_a != points_b

    def test_final_population_is_the_last_evaluated_one(self):
        population, _, records = run(small_config(), LIMITS, stub_evaluator, None)
        assert tuple(population) == records[-1].individuals
        assert all(ind.fitness is not None for ind in population)


class TestRunFailureHandling:
    @staticmethod
    def flaky_evaluator(genome, limits, dataset, eval_seed):
        if eval_seed % 3 == 0:
            raise RuntimeError("simulated blowup")
        return stub_evaluator(genome, limits, dataset, eval_seed)

    def test_failures_get_reference_objectives_and_zero_fitness(self):
        _, _, records = run(small_config(), LIMITS, self.flaky_evaluator, None)
        failed = [
            ind for record in records for ind in record.individuals if ind.failed
        ]
        assert failed
        for ind in failed:
            assert ind.objectives == ObjectivePoint(4.0, 12.0)
            assert ind.fitness == 0.0
            assert ind.epochs_trained == 0

    def test_run_completes_and_archive_excludes_failures(self):
        config = small_config(generations=4)
        _, archive, records = run(config, LIMITS, self.flaky_evaluator, None)
        assert len(records) == 4
        failed_ids = {
            ind.genome_id for r in records for ind in r.individuals if ind.failed
        }
        assert failed_ids
        assert all(entry.genome_id not in failed_ids for entry in archive.entries)

    def test_all_failing_still_finishes(self):
        def doomed(genome, limits, dataset, eval_seed):
            raise RuntimeError("nope")

        population, archive, records = run(
            small_config(generations=2), LIMITS, doomed, None
        )
        assert len(records) == 2
        assert not archive.entries
        assert all(ind.fitness == 0.0 for ind in population)
