"""The generational symbolic-regression loop.

Generational replacement with subtree crossover/mutation, a size-1 best-ever
archive appended to the selection pool, and canonical-hash dedup so no two
evaluated programs in a run are structurally identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import DatasetSplit
from .exprtree import (
    INIT_DEPTHS,
    canonical_hash,
    full_tree,
    grow_tree,
    subtree_crossover,
    subtree_mutation,
)
from .fitness import DEFAULT_RIDGE, Individual, evaluate_individual, r2_score
from .selection import EvolutionStatus, SelectionRequest

DEDUP_RETRIES = 10


class ConfigError(ValueError):
    pass


class OperatorEvaluationError(RuntimeError):
    """A selection operator crashed or returned an invalid parent list."""

    def __init__(self, operator_name: str, detail: str):
        self.operator_name = operator_name
        super().__init__(f"selection operator {operator_name!r}: {detail}")


@dataclass
class SRConfig:
    population_size: int = 100
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    ridge_lambda: float = DEFAULT_RIDGE
    seed: int = 0

    def validate(self) -> "SRConfig":
        if self.population_size < 2 or self.population_size % 2:
            raise ConfigError("population_size must be even and >= 2")
        if self.generations < 1:
            raise ConfigError("generations must be >= 1")
        if abs(self.crossover_rate + self.mutation_rate - 1.0) > 1e-9:
            raise ConfigError("crossover_rate + mutation_rate must equal 1")
        return self


@dataclass
class SRResult:
    best: Individual
    history: list[dict]
    validation_r2: float
    operator_name: str = ""


def population_cosine_diversity(population) -> float:
    """Mean pairwise (1 - cosine similarity) of case-error vectors."""
    if len(population) < 2:
        return 0.0
    V = np.vstack([ind.case_values for ind in population])
    norms = np.linalg.norm(V, axis=1, keepdims=True) + 1e-12
    G = (V / norms) @ (V / norms).T
    n = len(population)
    pair_sum = (G.sum() - np.trace(G)) / 2.0
    return float(1.0 - pair_sum / (n * (n - 1) / 2.0))


def _init_population(size: int, n_features: int, rng, seen: set) -> list:
    """Ramped half-and-half init, skipping trees whose hash is already taken."""
    trees = []
    i = 0
    while len(trees) < size:
        depth = INIT_DEPTHS[i % len(INIT_DEPTHS)]
        builder = full_tree if i % 2 == 0 else grow_tree
        i += 1
        tree = builder(depth, n_features, rng)
        key = canonical_hash(tree)
        if key in seen:
            continue
        seen.add(key)
        trees.append(tree)
    return trees


def _admit(first, regen, n_features: int, rng, seen: set):
    """Dedup gate: retry the variation, then fall back to fresh random trees."""
    tree = first
    for _ in range(DEDUP_RETRIES):
        key = canonical_hash(tree)
        if key not in seen:
            seen.add(key)
            return tree
        tree = regen()
    while True:
        tree = grow_tree(int(rng.integers(1, 7)), n_features, rng)
        key = canonical_hash(tree)
        if key not in seen:
            seen.add(key)
            return tree


def _generation_stats(
    generation: int, population, elite, split: DatasetSplit
) -> dict:
    best = min(population, key=lambda ind: ind.loocv_total)
    val_pred = best.predict(split.X_val)
    return {
        "generation": generation,
        "best_train_loocv": best.loocv_total,
        "elite_train_loocv": elite.loocv_total,
        "best_val_r2": r2_score(split.y_val, val_pred),
        "mean_size": float(np.mean([len(ind) for ind in population])),
        "diversity": population_cosine_diversity(population),
    }


def run_sr(split: DatasetSplit, operator, config: SRConfig, operator_name: str = "") -> SRResult:
    """Evolve programs against the split's training half and score the
    best-ever one on the validation half."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n_features = split.n_features
    pop_size = config.population_size
    seen: set = set()

    trees = _init_population(pop_size, n_features, rng, seen)
    population = [
        evaluate_individual(t, split.X_train, split.y_train, config.ridge_lambda)
        for t in trees
    ]
    elite = min(population, key=lambda ind: ind.loocv_total)
    history = [_generation_stats(0, population, elite, split)]

    for gen in range(config.generations):
        status = EvolutionStatus(generation=gen, max_generations=config.generations)
        pool = population if any(ind is elite for ind in population) else population + [elite]
        op_seed = int(rng.integers(2**31 - 1))
        request = SelectionRequest(pool, k=pop_size, status=status, seed=op_seed)
        try:
            selected = operator(request)
        except Exception as exc:
            raise OperatorEvaluationError(operator_name, repr(exc)) from exc
        _check_selection(selected, pool, pop_size, operator_name)

        offspring_trees = []
        for i in range(0, pop_size, 2):
            a, b = selected[i], selected[i + 1]
            if rng.random() < config.crossover_rate:
                children = subtree_crossover(a.genome, b.genome, rng)
                regens = (
                    lambda: subtree_crossover(a.genome, b.genome, rng)[0],
                    lambda: subtree_crossover(a.genome, b.genome, rng)[1],
                )
            else:
                children = (
                    subtree_mutation(a.genome, n_features, rng),
                    subtree_mutation(b.genome, n_features, rng),
                )
                regens = (
                    lambda: subtree_mutation(a.genome, n_features, rng),
                    lambda: subtree_mutation(b.genome, n_features, rng),
                )
            for child, regen in zip(children, regens):
                offspring_trees.append(_admit(child, regen, n_features, rng, seen))

        population = [
            evaluate_individual(t, split.X_train, split.y_train, config.ridge_lambda)
            for t in offspring_trees
        ]
        gen_best = min(population, key=lambda ind: ind.loocv_total)
        if gen_best.loocv_total < elite.loocv_total:
            elite = gen_best
        history.append(_generation_stats(gen + 1, population, elite, split))

    val_r2 = r2_score(split.y_val, elite.predict(split.X_val))
    return SRResult(best=elite, history=history, validation_r2=val_r2, operator_name=operator_name)


def _check_selection(selected, pool, k: int, operator_name: str) -> None:
    if not isinstance(selected, list) or len(selected) != k:
        got = len(selected) if hasattr(selected, "__len__") else type(selected).__name__
        raise OperatorEvaluationError(operator_name, f"returned {got} parents, expected {k}")
    members = {id(ind) for ind in pool}
    for ind in selected:
        if id(ind) not in members:
            raise OperatorEvaluationError(operator_name, "returned a non-member individual")
