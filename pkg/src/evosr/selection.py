"""Parent-selection operators behind a single request interface.

Every operator maps a SelectionRequest to an ordered list of exactly k
members of the request population.  All randomness flows from the request
seed, so a fixed seed and inputs give identical output.  Index ties from
argmin/argmax/lexsort resolve to the lowest population index.

The omni family (omni, omni_r, omni_zero) are direct transcriptions of
machine-written operators; their quirks, including infinite subset MSE on
empty structured subsets in plain omni, are preserved on purpose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

BOLTZMANN_TAU0 = 0.1
_TAU_FLOOR = 1e-6

TOURNAMENT_SIZE_DEFAULT = 7
RDS_SAMPLE_RATIO = 0.10


class UnknownOperatorError(ValueError):
    """Raised when an operator name is not in the registry."""

    def __init__(self, name: str, available):
        self.available = sorted(available)
        super().__init__(
            f"unknown operator {name!r}; available: {', '.join(self.available)}"
        )


@dataclass(frozen=True)
class EvolutionStatus:
    """Where a run is on its generation axis; stage is 0 first, 1 final."""

    generation: int
    max_generations: int

    @property
    def stage(self) -> float:
        if self.max_generations <= 0:
            return 0.0
        return min(max(self.generation / self.max_generations, 0.0), 1.0)


@dataclass
class SelectionRequest:
    population: list
    k: int
    status: EvolutionStatus
    seed: int

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


class PhenotypeRecord:
    """Individual-shaped record carrying only what selection operators read.

    Used for synthetic gate populations and for rebuilding populations from
    wire payloads; hashes by identity like a real individual.
    """

    __slots__ = ("case_values", "predicted_values", "y", "nodes", "height")

    def __init__(self, case_values, predicted_values, y, nodes, height):
        self.case_values = np.asarray(case_values, dtype=float)
        self.predicted_values = np.asarray(predicted_values, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.nodes = int(nodes)
        self.height = int(height)

    def __len__(self) -> int:
        return self.nodes


def _mean_errors(population) -> np.ndarray:
    return np.array([float(np.mean(ind.case_values)) for ind in population])


def _error_matrix(population) -> np.ndarray:
    return np.vstack([np.asarray(ind.case_values, dtype=float) for ind in population])


# ---------------------------------------------------------------------------
# classic operators


def tournament(req: SelectionRequest, tour_size: int) -> list:
    """k tournaments on mean case error, sampled without replacement."""
    rng = req.rng()
    pop = req.population
    errs = _mean_errors(pop)
    size = min(tour_size, len(pop))
    out = []
    for _ in range(req.k):
        idx = rng.choice(len(pop), size=size, replace=False)
        out.append(pop[int(idx[np.argmin(errs[idx])])])
    return out


def boltzmann_probabilities(population, status: EvolutionStatus, tau0: float = BOLTZMANN_TAU0):
    """Sampling probabilities and temperature used by boltzmann().

    Scores are negated mean case errors, min-max normalized to [0, 1]; the
    temperature follows the cycle tau0 * (1 - (t mod T) / T), floored at 1e-6.
    """
    scores = -_mean_errors(population)
    span = scores.max() - scores.min()
    scores = (scores - scores.min()) / span if span > 0 else np.zeros_like(scores)
    t_max = max(status.max_generations, 1)
    tau = max(tau0 * (1.0 - (status.generation % t_max) / t_max), _TAU_FLOOR)
    logits = scores / tau
    weights = np.exp(logits - logits.max())
    return weights / weights.sum(), tau


def boltzmann(req: SelectionRequest, tau0: float = BOLTZMANN_TAU0) -> list:
    """Sample k parents from the annealed softmax over normalized scores."""
    rng = req.rng()
    pop = req.population
    probs, _ = boltzmann_probabilities(pop, req.status, tau0)
    picks = rng.choice(len(pop), size=req.k, replace=True, p=probs)
    return [pop[int(i)] for i in picks]


def auto_epsilon_lexicase(req: SelectionRequest) -> list:
    """Case-by-case filtering with a median-absolute-deviation threshold.

    For each pick, cases are visited in a fresh random order and candidates
    within best + MAD of the case error survive; remaining ties break
    uniformly at random.
    """
    rng = req.rng()
    pop = req.population
    errors = _error_matrix(pop)
    n_cases = errors.shape[1]
    out = []
    for _ in range(req.k):
        cand = np.arange(len(pop))
        for case in rng.permutation(n_cases):
            col = errors[cand, case]
            med = np.median(col)
            mad = np.median(np.abs(col - med))
            cand = cand[col <= col.min() + mad]
            if cand.size == 1:
                break
        pick = cand[0] if cand.size == 1 else rng.choice(cand)
        out.append(pop[int(pick)])
    return out


def rds_tournament(
    req: SelectionRequest,
    sample_ratio: float = RDS_SAMPLE_RATIO,
    tour_size: int = TOURNAMENT_SIZE_DEFAULT,
) -> list:
    """Tournaments on mean error over one random 10% case sample per call."""
    rng = req.rng()
    pop = req.population
    errors = _error_matrix(pop)
    n_cases = errors.shape[1]
    m = min(max(math.ceil(sample_ratio * n_cases), 1), n_cases)
    cases = rng.choice(n_cases, size=m, replace=False)
    errs = errors[:, cases].mean(axis=1)
    size = min(tour_size, len(pop))
    out = []
    for _ in range(req.k):
        idx = rng.choice(len(pop), size=size, replace=False)
        out.append(pop[int(idx[np.argmin(errs[idx])])])
    return out


def complementary_pairs(
    req: SelectionRequest, tour_size: int = TOURNAMENT_SIZE_DEFAULT
) -> list:
    """Tournament parent plus the mate winning the most cases against it."""
    rng = req.rng()
    pop = req.population
    errors = _error_matrix(pop)
    errs = errors.mean(axis=1)
    size = min(tour_size, len(pop))
    out = []
    for _ in range(req.k // 2):
        idx = rng.choice(len(pop), size=size, replace=False)
        parent = int(idx[np.argmin(errs[idx])])
        wins = (errors < errors[parent]).sum(axis=1)
        mate = int(np.argmax(wins))
        out.extend((pop[parent], pop[mate]))
    return out[: req.k]


def topk_mean_error(req: SelectionRequest) -> list:
    """Deterministic greedy pick: stable sort by mean case error, cycling
    through the ranking when k exceeds the population size."""
    pop = req.population
    order = np.argsort(_mean_errors(pop), kind="stable")
    ranked = [pop[int(i)] for i in order]
    return [ranked[i % len(ranked)] for i in range(req.k)]


# ---------------------------------------------------------------------------
# machine-written operators, transcribed as-is


def omni_comp_factor(stage: float) -> float:
    """Complexity pressure of the omni family: 0.25 early, 0.5 late."""
    return 0.25 + 0.25 * stage


def omni_zero_novelty_weight(stage: float) -> float:
    """Novelty mixing weight: 0.65 at stage 0 decaying to 0.35 at stage 1."""
    return 0.35 + 0.3 * (1 - stage) ** 0.8


def _omni_family(req: SelectionRequest, repair: bool) -> list:
    rng = req.rng()
    population = req.population
    k = req.k
    stage = float(np.clip(req.status.stage, 0, 1))
    n = len(population)
    half_k = k // 2
    y = population[0].y
    n_cases = y.size

    ssize = max(7, n_cases // max(1, 2 * half_k))
    half_struct = half_k // 2
    structured = [
        np.arange(i * ssize, min((i + 1) * ssize, n_cases)) for i in range(half_struct)
    ]
    if repair:
        # The sole repair: dropped empty slices are replaced by extra random
        # subsets so the subset count still comes out at half_k.
        structured = [s for s in structured if s.size > 0]
    random_ = [
        rng.choice(n_cases, ssize, replace=False)
        for _ in range(half_k - len(structured))
    ]
    subsets = structured + random_

    residuals = np.vstack([ind.y - ind.predicted_values for ind in population])
    complexity = np.array([len(ind) + ind.height for ind in population], float)
    complexity /= max(1, complexity.max())
    subset_mse = np.array(
        [
            [((residuals[i, s]) ** 2).mean() if s.size else np.inf for s in subsets]
            for i in range(n)
        ]
    )
    comp_factor = omni_comp_factor(stage)

    parent_a = [
        population[np.lexsort((complexity, subset_mse[:, i]))[0]]
        for i in range(len(subsets))
    ]

    idx_map = {ind: i for i, ind in enumerate(population)}
    norms = np.linalg.norm(residuals, axis=1) + 1e-12

    parent_b = []
    for a in parent_a:
        i_a = idx_map[a]
        res_a = residuals[i_a]
        cors = (residuals @ res_a) / (norms * norms[i_a])
        cors[i_a] = 1
        comp_score = np.abs(cors) + comp_factor * complexity
        b_idx = np.argmin(comp_score)
        parent_b.append(population[b_idx])

    return [ind for pair in zip(parent_a, parent_b) for ind in pair][:k]


def omni(req: SelectionRequest) -> list:
    return _omni_family(req, repair=False)


def omni_r(req: SelectionRequest) -> list:
    return _omni_family(req, repair=True)


def omni_subsets(req: SelectionRequest, repair: bool):
    """The case subsets an omni call would build, replaying the same draws."""
    rng = req.rng()
    k = req.k
    n_cases = req.population[0].y.size
    half_k = k // 2
    ssize = max(7, n_cases // max(1, 2 * half_k))
    half_struct = half_k // 2
    structured = [
        np.arange(i * ssize, min((i + 1) * ssize, n_cases)) for i in range(half_struct)
    ]
    if repair:
        structured = [s for s in structured if s.size > 0]
    random_ = [
        rng.choice(n_cases, ssize, replace=False)
        for _ in range(half_k - len(structured))
    ]
    return structured + random_


def _omni_zero_scores(population, evo_stage: float):
    """Score vectors of the knowledge-free operator: (errs, base_probs,
    novelty, mixed_probs), exposed so the math can be checked directly."""
    errs = np.array([np.mean(ind.case_values) for ind in population], dtype=float)
    sizes = np.array([len(ind) for ind in population], dtype=float)
    heights = np.array([ind.height for ind in population], dtype=float)
    residuals = np.array([ind.y - ind.predicted_values for ind in population])
    preds = np.array([ind.predicted_values for ind in population])

    def safe_norm(arr):
        m = max(arr.max(), 1e-10)
        return arr / m

    norm_size, norm_height = safe_norm(sizes), safe_norm(heights)
    res_vars = np.var(residuals, axis=1)
    res_norms = np.linalg.norm(residuals, axis=1)
    norm_var, norm_resnorm = safe_norm(res_vars), safe_norm(res_norms)
    norm_err = safe_norm(errs)

    complexity = (norm_size + norm_height + norm_var + norm_resnorm) / 4
    alpha, beta = 1 - evo_stage, evo_stage
    base_score = beta * (1 - norm_err) + alpha * (1 - complexity)
    base_score = base_score - base_score.min()
    if base_score.sum() == 0:
        base_score[:] = 1
    base_probs = base_score / base_score.sum()

    def novelty_score(mat):
        centered = mat - mat.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(centered, axis=1, keepdims=True) + 1e-10
        normed = centered / norms
        sim = normed @ normed.T
        nov = 1 - sim.mean(axis=1)
        max_n = nov.max()
        return nov / (max_n if max_n > 0 else 1)

    novelty = 0.5 * (novelty_score(residuals) + novelty_score(preds))
    novelty_weight = omni_zero_novelty_weight(evo_stage)

    mixed_probs = (1 - novelty_weight) * base_probs + novelty_weight * novelty
    mixed_probs = mixed_probs - mixed_probs.min()
    if mixed_probs.sum() == 0:
        mixed_probs[:] = 1
    mixed_probs = mixed_probs / mixed_probs.sum()
    return errs, base_probs, novelty, mixed_probs


def omni_zero(req: SelectionRequest) -> list:
    rng = req.rng()
    population = req.population
    k = req.k
    evo_stage = req.status.stage
    n = len(population)
    if n == 0:
        return []

    errs, base_probs, novelty, mixed_probs = _omni_zero_scores(population, evo_stage)

    # Adaptive tournament: mild pressure early, a little more late.
    tour_size = min(3 + int(evo_stage * 2), n)
    selected = []
    while len(selected) < k:
        chosen = rng.choice(n, size=tour_size, replace=False, p=mixed_probs)
        chosen_errs = errs[chosen]
        chosen_scores = base_probs[chosen]
        min_err_idx = chosen_errs.argmin()
        best_candidates = np.flatnonzero(chosen_errs == chosen_errs[min_err_idx])
        if len(best_candidates) > 1:
            best_scores = chosen_scores[best_candidates] + novelty[chosen][best_candidates]
            winner_idx = best_candidates[np.argmax(best_scores)]
        else:
            winner_idx = min_err_idx
        selected.append(population[chosen[winner_idx]])
    return selected


# ---------------------------------------------------------------------------
# registry

REGISTRY = {
    "tournament3": partial(tournament, tour_size=3),
    "tournament7": partial(tournament, tour_size=7),
    "boltzmann": boltzmann,
    "autolex": auto_epsilon_lexicase,
    "rds_tour": rds_tournament,
    "cps": complementary_pairs,
    "omni": omni,
    "omni_r": omni_r,
    "omni_zero": omni_zero,
    "topk": topk_mean_error,
}

SCRIPTED_PREFIX = "scripted:"


def resolve_operator(name: str, host_command=None):
    """Look up a registry operator, or build a hosted one for scripted:<path>."""
    if name.startswith(SCRIPTED_PREFIX):
        from .hosted import HostedOperator

        return HostedOperator(name[len(SCRIPTED_PREFIX):], command=host_command)
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownOperatorError(name, REGISTRY) from None
