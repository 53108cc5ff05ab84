"""Evolvable architecture encoding and its variation operators.

A genome is a fixed-length sequence of layer genes in a strict
conv/pool/conv/pool layout plus two global genes (optimizer, learning
rate). Inactive genes are carried as introns, which keeps positions
aligned so uniform crossover is well defined. Only the encoder is
encoded; decoding derives a mirrored decoder, so the search space stays
symmetric by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .nn import ACTIVATIONS, OPTIMIZERS, LayerDescriptor, NetworkSpec, ShapeError

GENE_KINDS = ("conv", "pool")
DROPOUT_RATES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
LEARNING_RATES = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


@dataclass(frozen=True)
class LayerGene:
    """One layer slot. Pool genes carry filters/activation/batchnorm/dropout
    as inert payload so every slot mutates and crosses over uniformly."""

    active: bool
    kind: str
    filters: int
    activation: str
    batchnorm: bool
    dropout_rate: float

    def __post_init__(self):
        if self.kind not in GENE_KINDS:
            raise ValueError(f"unknown gene kind {self.kind!r}")
        if self.filters < 1:
            raise ValueError("filters must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.dropout_rate not in DROPOUT_RATES:
            raise ValueError(f"dropout_rate must be one of {DROPOUT_RATES}")


@dataclass(frozen=True)
class Genome:
    layer_genes: tuple
    optimizer_id: str
    learning_rate: float

    def __post_init__(self):
        if len(self.layer_genes) < 2 or len(self.layer_genes) % 2 != 0:
            raise ValueError("layer_genes must alternate conv/pool pairs")
        for i, gene in enumerate(self.layer_genes):
            expected = GENE_KINDS[i % 2]
            if gene.kind != expected:
                raise ValueError(f"slot {i} must be a {expected} gene, got {gene.kind}")
        if self.optimizer_id not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer_id!r}")
        if self.learning_rate not in LEARNING_RATES:
            raise ValueError(f"learning_rate must be one of {LEARNING_RATES}")


@dataclass(frozen=True)
class GenomeLimits:
    max_conv_layers: int
    max_filters: int
    input_shape: tuple

    def __post_init__(self):
        if self.max_conv_layers < 1 or self.max_filters < 1:
            raise ValueError("max_conv_layers and max_filters must be >= 1")
        if len(self.input_shape) != 3 or any(d < 1 for d in self.input_shape):
            raise ValueError(f"input_shape must be (H, W, C), got {self.input_shape}")


def _check_length(genome, limits):
    expect = 2 * limits.max_conv_layers
    if len(genome.layer_genes) != expect:
        raise ValueError(f"genome has {len(genome.layer_genes)} genes, limits expect {expect}")


def _pool_cap(limits):
    # the largest pool count that keeps both spatial dims >= 1 under
    # floor-halving: floor(log2(min(H, W)))
    h, w, _ = limits.input_shape
    return min(h, w).bit_length() - 1


def _sample_gene(kind, limits, rng):
    return LayerGene(
        active=bool(rng.integers(2)),
        kind=kind,
        filters=int(rng.integers(1, limits.max_filters + 1)),
        activation=ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))],
        batchnorm=bool(rng.integers(2)),
        dropout_rate=DROPOUT_RATES[int(rng.integers(len(DROPOUT_RATES)))],
    )


def random_genome(limits, rng_seed):
    """Uniformly sampled genome, repaired to a valid architecture."""
    rng = np.random.default_rng(rng_seed)
    genes = tuple(
        _sample_gene(GENE_KINDS[i % 2], limits, rng) for i in range(2 * limits.max_conv_layers)
    )
    genome = Genome(
        layer_genes=genes,
        optimizer_id=OPTIMIZERS[int(rng.integers(len(OPTIMIZERS)))],
        learning_rate=LEARNING_RATES[int(rng.integers(len(LEARNING_RATES)))],
    )
    return repair(genome, limits)


def repair(genome, limits):
    """Makes a genome decodable: caps active pools, guarantees one conv.

    Excess pool genes are deactivated from the tail, so the front of the
    architecture survives. Idempotent.
    """
    _check_length(genome, limits)
    genes = list(genome.layer_genes)
    cap = _pool_cap(limits)
    n_pools = sum(1 for g in genes if g.active and g.kind == "pool")
    for i in range(len(genes) - 1, -1, -1):
        if n_pools <= cap:
            break
        if genes[i].active and genes[i].kind == "pool":
            genes[i] = replace(genes[i], active=False)
            n_pools -= 1
    if not any(g.active for g in genes if g.kind == "conv"):
        genes[0] = replace(genes[0], active=True)
    return replace(genome, layer_genes=tuple(genes))


def decode(genome, limits):
    """Expands a repaired genome into a full autoencoder description.

    Encoder: active genes in order; a conv gene contributes conv2d plus
    optional batchnorm and dropout, a pool gene contributes maxpool2x2.
    Decoder: the active genes mirrored in reverse, pools becoming 2x
    upsamples that restore the exact pre-pool spatial size and convs
    mapping back to the channel count that entered them; the final layer
    is always a sigmoid conv back to the input channel count.
    """
    _check_length(genome, limits)
    h, w, c_in = limits.input_shape
    h_cur, w_cur, c_cur = h, w, c_in
    encoder = []
    mirror = []  # decoder pieces in forward order, built while walking the encoder
    for gene in genome.layer_genes:
        if not gene.active:
            continue
        if gene.kind == "conv":
            encoder.append(
                LayerDescriptor(kind="conv2d", filters_or_units=gene.filters, activation=gene.activation)
            )
            if gene.batchnorm:
                encoder.append(LayerDescriptor(kind="batchnorm"))
            if gene.dropout_rate > 0.0:
                encoder.append(LayerDescriptor(kind="dropout", dropout_rate=gene.dropout_rate))
            mirror.append(
                LayerDescriptor(kind="conv2d", filters_or_units=c_cur, activation=gene.activation)
            )
            c_cur = gene.filters
        else:
            if h_cur < 2 or w_cur < 2:
                raise ShapeError(f"pool gene cannot halve {h_cur}x{w_cur}; repair the genome first")
            mirror.append(LayerDescriptor(kind="upsample2x", target_hw=(h_cur, w_cur)))
            encoder.append(LayerDescriptor(kind="maxpool2x2"))
            h_cur, w_cur = h_cur // 2, w_cur // 2
    decoder = list(reversed(mirror))
    head = LayerDescriptor(kind="output_conv", filters_or_units=c_in, activation="sigmoid")
    if decoder and decoder[-1].kind == "conv2d":
        decoder[-1] = head  # same filter count: the first conv was entered by the input
    else:
        decoder.append(head)
    return NetworkSpec(
        encoder=tuple(encoder),
        decoder=tuple(decoder),
        bottleneck_shape=(h_cur, w_cur, c_cur),
        optimizer_id=genome.optimizer_id,
        learning_rate=genome.learning_rate,
        input_shape=tuple(limits.input_shape),
    )


def crossover(a, b, limits, rng_seed):
    """Uniform crossover: each gene slot and each global gene is copied
    whole from either parent with equal probability; the child is repaired."""
    if len(a.layer_genes) != len(b.layer_genes):
        raise ValueError(
            f"parents disagree on genome length: {len(a.layer_genes)} vs {len(b.layer_genes)}"
        )
    rng = np.random.default_rng(rng_seed)
    genes = tuple(
        (ga if rng.integers(2) == 0 else gb) for ga, gb in zip(a.layer_genes, b.layer_genes)
    )
    child = Genome(
        layer_genes=genes,
        optimizer_id=a.optimizer_id if rng.integers(2) == 0 else b.optimizer_id,
        learning_rate=a.learning_rate if rng.integers(2) == 0 else b.learning_rate,
    )
    return repair(child, limits)


def mutate(genome, mutation_rate, limits, rng_seed):
    """Resamples each mutable field with probability ``mutation_rate``.

    The gene kind is structural (the layout fixes it) and never mutates.
    The result is repaired.
    """
    _check_length(genome, limits)
    rng = np.random.default_rng(rng_seed)

    def maybe(old, draw):
        return draw() if rng.random() < mutation_rate else old

    genes = []
    for gene in genome.layer_genes:
        genes.append(
            LayerGene(
                active=maybe(gene.active, lambda: bool(rng.integers(2))),
                kind=gene.kind,
                filters=maybe(gene.filters, lambda: int(rng.integers(1, limits.max_filters + 1))),
                activation=maybe(
                    gene.activation, lambda: ACTIVATIONS[int(rng.integers(len(ACTIVATIONS)))]
                ),
                batchnorm=maybe(gene.batchnorm, lambda: bool(rng.integers(2))),
                dropout_rate=maybe(
                    gene.dropout_rate, lambda: DROPOUT_RATES[int(rng.integers(len(DROPOUT_RATES)))]
                ),
            )
        )
    mutated = Genome(
        layer_genes=tuple(genes),
        optimizer_id=maybe(
            genome.optimizer_id, lambda: OPTIMIZERS[int(rng.integers(len(OPTIMIZERS)))]
        ),
        learning_rate=maybe(
            genome.learning_rate, lambda: LEARNING_RATES[int(rng.integers(len(LEARNING_RATES)))]
        ),
    )
    return repair(mutated, limits)


def serialize_genome(genome):
    """One line per layer gene, then the global line; booleans as 1/0."""
    lines = [
        f"{int(g.active)},{g.kind},{g.filters},{g.activation},{int(g.batchnorm)},{g.dropout_rate!r}"
        for g in genome.layer_genes
    ]
    lines.append(f"{genome.optimizer_id},{genome.learning_rate!r}")
    return "\n".join(lines) + "\n"


def _parse_bool(token):
    if token == "1":
        return True
    if token == "0":
        return False
    raise ValueError(f"expected 0 or 1, got {token!r}")


def parse_genome(text):
    """Inverse of serialize_genome; raises ValueError naming the bad line."""
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) < 3:
        raise ValueError("genome text needs at least two gene lines and a global line")
    genes = []
    for line_no, line in enumerate(lines[:-1], start=1):
        fields = line.split(",")
        if len(fields) != 6:
            raise ValueError(f"line {line_no}: expected 6 fields, got {len(fields)}")
        try:
            gene = LayerGene(
                active=_parse_bool(fields[0]),
                kind=fields[1],
                filters=int(fields[2]),
                activation=fields[3],
                batchnorm=_parse_bool(fields[4]),
                dropout_rate=float(fields[5]),
            )
        except ValueError as exc:
            raise ValueError(f"line {line_no}: {exc}") from None
        genes.append(gene)
    fields = lines[-1].split(",")
    if len(fields) != 2:
        raise ValueError(f"line {len(lines)}: global line needs optimizer,learning_rate")
    try:
        return Genome(
            layer_genes=tuple(genes),
            optimizer_id=fields[0],
            learning_rate=float(fields[1]),
        )
    except ValueError as exc:
        raise ValueError(f"line {len(lines)}: {exc}") from None
