"""Shared builders for test populations and requests."""

from __future__ import annotations

import numpy as np

from evosr.selection import EvolutionStatus, PhenotypeRecord, SelectionRequest

STAGE_DENOM = 1000


def status_at(stage: float) -> EvolutionStatus:
    return EvolutionStatus(
        generation=int(round(stage * STAGE_DENOM)), max_generations=STAGE_DENOM
    )


def random_population(rng, n: int = 12, n_cases: int = 10) -> list:
    """Random phenotype records sharing one target vector."""
    y = rng.normal(size=n_cases)
    pop = []
    for _ in range(n):
        pop.append(
            PhenotypeRecord(
                case_values=rng.uniform(0.0, 4.0, size=n_cases),
                predicted_values=rng.normal(size=n_cases),
                y=y,
                nodes=int(rng.integers(1, 30)),
                height=int(rng.integers(0, 8)),
            )
        )
    return pop


def population_from_errors(error_rows, nodes=None, heights=None) -> list:
    """Population whose case_values are given row by row; predictions are
    y - errors so residual structure follows the same matrix."""
    errors = np.asarray(error_rows, dtype=float)
    n, n_cases = errors.shape
    y = np.linspace(1.0, 2.0, n_cases)
    pop = []
    for i in range(n):
        pop.append(
            PhenotypeRecord(
                case_values=errors[i],
                predicted_values=y - errors[i],
                y=y,
                nodes=int(nodes[i]) if nodes is not None else 5,
                height=int(heights[i]) if heights is not None else 2,
            )
        )
    return pop


def make_request(pop, k=8, stage=0.5, seed=0) -> SelectionRequest:
    return SelectionRequest(population=pop, k=k, status=status_at(stage), seed=seed)
