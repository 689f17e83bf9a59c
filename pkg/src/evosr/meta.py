"""Evolving selection operators with an LLM in the outer loop.

Each generation asks the gateway for crossover/mutation offspring, screens
them in a synthetic gate (two fixed phenotype populations catching crashes,
bad output shapes and runaway runtimes), scores survivors by running the
inner symbolic-regression engine on every manifest dataset, and then prunes
the pool with dominance-dissimilarity survival so shorter code that
performs as well as longer near-duplicates wins.
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from .codemetrics import approx_token_count, code_similarity, effective_line_count
from .engine import SRConfig, run_sr
from .hosted import HostError, HostedOperator
from .llm import build_prompt, extract_code, fallback_source
from .selection import REGISTRY, EvolutionStatus, PhenotypeRecord, SelectionRequest

GATE_K = 100
GATE_TIME_LIMIT = 300.0
SLOWNESS_FACTOR = 100.0
# Sub-10ms gate runtimes are dominated by measurement noise; the slowness
# filter compares against at least this baseline so outcomes stay stable
# across runs while still catching order-of-magnitude runaways.
SLOWNESS_FLOOR = 0.01

REJECT_REASONS = ("syntax", "runtime_error", "timeout", "relative_slowness", "bad_output")

# A candidate whose source carries this marker runs as the named registry
# operator instead of being shipped to a script host.  The marker is a
# comment, so it never counts toward code length.
_BUILTIN_DIRECTIVE = re.compile(r"^\s*#\s*builtin:\s*([A-Za-z0-9_]+)\s*$", re.MULTILINE)

CHECKPOINT_FORMAT = "evosr-meta-checkpoint-v1"


class MetaError(RuntimeError):
    pass


class CandidateResolutionError(RuntimeError):
    """The candidate cannot be turned into a runnable operator."""


@dataclass
class OperatorCandidate:
    id: int
    source: str
    provenance: str  # init | crossover | mutation | fallback
    parent_ids: tuple = ()
    generation_born: int = 0
    score_vector: list | None = None
    fitness: float | None = None

    def __post_init__(self):
        m = _BUILTIN_DIRECTIVE.search(self.source)
        self.builtin_name = m.group(1) if m else None
        self.kind = "builtin" if m else "scripted"
        self.code_length = effective_line_count(self.source)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "source": self.source,
            "provenance": self.provenance,
            "parent_ids": list(self.parent_ids),
            "generation_born": self.generation_born,
            "score_vector": self.score_vector,
            "fitness": self.fitness,
            "kind": self.kind,
            "code_length": self.code_length,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "OperatorCandidate":
        return cls(
            id=data["id"],
            source=data["source"],
            provenance=data["provenance"],
            parent_ids=tuple(data["parent_ids"]),
            generation_born=data["generation_born"],
            score_vector=data["score_vector"],
            fitness=data["fitness"],
        )


@dataclass
class MetaConfig:
    pool_size: int = 20
    mutation_count: int = 1
    generations: int = 20
    length_target: int = 30
    inner: SRConfig = field(default_factory=lambda: SRConfig(population_size=100, generations=30))
    survival: str = "dominance_dissimilarity"  # or "replacement_elitism"
    semantic_feedback: str = "vector"  # or "scalar"
    domain_knowledge: bool = True
    seed: int = 0
    gate_time_limit: float = GATE_TIME_LIMIT
    host_request_timeout: float = 300.0
    host_command: list | None = None
    checkpoint_dir: str | None = None

    def validate(self) -> "MetaConfig":
        if self.pool_size < 2:
            raise MetaError("pool_size must be >= 2")
        if not 0 <= self.mutation_count <= self.pool_size:
            raise MetaError("mutation_count must be within [0, pool_size]")
        if self.generations < 0:
            raise MetaError("generations must be >= 0")
        if self.length_target < 1:
            raise MetaError("length_target must be >= 1")
        if self.survival not in ("dominance_dissimilarity", "replacement_elitism"):
            raise MetaError(f"unknown survival mode {self.survival!r}")
        if self.semantic_feedback not in ("vector", "scalar"):
            raise MetaError(f"unknown semantic_feedback {self.semantic_feedback!r}")
        self.inner.validate()
        return self


# ---------------------------------------------------------------------------
# candidate -> runnable operator


@contextmanager
def candidate_operator(candidate: OperatorCandidate, host_command=None, timeout: float = 300.0):
    """Yield a callable for the candidate; scripted ones get a temp file and
    a host subprocess that is torn down on exit."""
    if candidate.kind == "builtin":
        try:
            yield REGISTRY[candidate.builtin_name]
        except KeyError:
            raise CandidateResolutionError(
                f"unknown builtin operator {candidate.builtin_name!r}"
            ) from None
        return
    fd, path = tempfile.mkstemp(suffix=".py", prefix="evosr_op_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(candidate.source)
        with HostedOperator(path, command=host_command, timeout=timeout) as op:
            yield op
    finally:
        os.unlink(path)


# ---------------------------------------------------------------------------
# synthetic gate


@dataclass
class GateCases:
    diverse: list
    constant: list
    k: int
    status: EvolutionStatus
    seed: int


@dataclass
class GateResult:
    candidate_id: int
    passed: bool
    reason: str | None = None
    detail: str = ""
    runtime: float = 0.0


def build_gate_cases(seed: int) -> GateCases:
    """Two fixed screening populations: integer-valued random phenotypes,
    and an all-identical constant population (zero residuals included)."""
    rng = np.random.default_rng(seed)
    y = rng.integers(1, 11, size=100).astype(float)
    diverse = [
        PhenotypeRecord(
            case_values=rng.integers(1, 11, size=100).astype(float),
            predicted_values=rng.integers(1, 11, size=100).astype(float),
            y=y,
            nodes=int(rng.integers(1, 21)),
            height=int(rng.integers(0, 6)),
        )
        for _ in range(100)
    ]
    c = float(rng.integers(1, 11))
    vec = np.full(100, c)
    constant = [
        PhenotypeRecord(case_values=vec, predicted_values=vec, y=vec, nodes=5, height=2)
        for _ in range(100)
    ]
    return GateCases(
        diverse=diverse,
        constant=constant,
        k=GATE_K,
        status=EvolutionStatus(generation=1, max_generations=2),
        seed=seed,
    )


def _call_with_deadline(fn, arg, limit: float):
    box: dict = {}

    def target():
        try:
            box["value"] = fn(arg)
        except BaseException as exc:  # noqa: BLE001 - forwarded to the gate
            box["error"] = exc

    worker = threading.Thread(target=target, daemon=True)
    start = time.perf_counter()
    worker.start()
    worker.join(limit)
    elapsed = time.perf_counter() - start
    if worker.is_alive():
        return "timeout", None, elapsed
    if "error" in box:
        return "error", box["error"], elapsed
    return "ok", box["value"], elapsed


def _validate_selection_output(value, population, k: int) -> str | None:
    if not isinstance(value, list):
        return f"returned {type(value).__name__}, expected list"
    if len(value) != k:
        return f"returned {len(value)} individuals, expected {k}"
    members = {id(ind) for ind in population}
    if any(id(ind) not in members for ind in value):
        return "returned an individual not in the population"
    return None


def synthetic_gate(
    candidate: OperatorCandidate,
    cases: GateCases,
    time_limit: float = GATE_TIME_LIMIT,
    host_command=None,
) -> GateResult:
    """Run the candidate on both screening cases under a wall-clock budget.

    Reject reasons: syntax (cannot load/resolve), runtime_error, timeout,
    bad_output.  The relative_slowness reason is applied afterwards over a
    whole batch by gate_batch.
    """
    result = GateResult(candidate_id=candidate.id, passed=True)
    try:
        with candidate_operator(candidate, host_command, timeout=time_limit) as op:
            for population in (cases.diverse, cases.constant):
                remaining = time_limit - result.runtime
                if remaining <= 0:
                    return _reject(result, "timeout", f"exceeded {time_limit}s")
                request = SelectionRequest(
                    list(population), cases.k, cases.status, seed=cases.seed
                )
                outcome, value, elapsed = _call_with_deadline(op, request, remaining)
                result.runtime += elapsed
                if outcome == "timeout":
                    return _reject(result, "timeout", f"exceeded {time_limit}s")
                if outcome == "error":
                    if isinstance(value, HostError):
                        return _reject(result, value.reason, str(value))
                    return _reject(result, "runtime_error", repr(value))
                problem = _validate_selection_output(value, population, cases.k)
                if problem:
                    return _reject(result, "bad_output", problem)
    except CandidateResolutionError as exc:
        return _reject(result, "syntax", str(exc))
    except HostError as exc:
        return _reject(result, exc.reason, str(exc))
    return result


def _reject(result: GateResult, reason: str, detail: str) -> GateResult:
    result.passed = False
    result.reason = reason
    result.detail = detail
    return result


def gate_batch(
    candidates,
    cases: GateCases,
    time_limit: float = GATE_TIME_LIMIT,
    host_command=None,
    slowness_factor: float = SLOWNESS_FACTOR,
) -> list[GateResult]:
    """Gate every candidate, then re-reject passers slower than
    slowness_factor times the fastest passer."""
    results = [
        synthetic_gate(c, cases, time_limit=time_limit, host_command=host_command)
        for c in candidates
    ]
    passing_times = [r.runtime for r in results if r.passed]
    if passing_times:
        fastest = max(min(passing_times), SLOWNESS_FLOOR)
        for r in results:
            if r.passed and r.runtime > slowness_factor * fastest:
                _reject(
                    r,
                    "relative_slowness",
                    f"runtime {r.runtime:.3f}s > {slowness_factor:g} x fastest {fastest:.3f}s",
                )
    return results


# ---------------------------------------------------------------------------
# candidate fitness


def evaluate_candidate(
    candidate: OperatorCandidate,
    splits,
    inner: SRConfig,
    host_command=None,
    host_request_timeout: float = 300.0,
) -> list[str]:
    """Score the candidate in place: per-dataset validation R^2 clipped to
    [-1, 1], with -1 for any failed run; fitness is the vector mean.
    Returns diagnostic notes for failures."""
    notes: list[str] = []
    scores: list[float] = []
    try:
        with candidate_operator(
            candidate, host_command, timeout=host_request_timeout
        ) as op:
            for j, split in enumerate(splits):
                cfg = replace(inner, seed=inner.seed + j)
                try:
                    outcome = run_sr(split, op, cfg, operator_name=f"candidate:{candidate.id}")
                    score = outcome.validation_r2
                    if not math.isfinite(score):
                        score = -1.0
                    scores.append(float(np.clip(score, -1.0, 1.0)))
                except Exception as exc:  # noqa: BLE001 - scored as failure
                    scores.append(-1.0)
                    notes.append(f"{split.name}: {exc}")
    except Exception as exc:  # resolution/startup failure poisons every dataset
        scores = [-1.0] * len(splits)
        notes.append(f"operator unavailable: {exc}")
    candidate.score_vector = scores
    candidate.fitness = float(np.mean(scores))
    return notes


# ---------------------------------------------------------------------------
# parent selection and survival


def semantic_parent_selection(pool, rng) -> tuple:
    """Uniform first parent, then the mate maximizing the mean elementwise
    max of their score vectors; exact ties break uniformly at random."""
    if len(pool) < 2:
        raise MetaError("semantic parent selection needs a pool of >= 2")
    idx_a = int(rng.integers(len(pool)))
    a = pool[idx_a]
    sa = np.asarray(a.score_vector, dtype=float)
    mus = np.full(len(pool), -np.inf)
    for i, cand in enumerate(pool):
        if i == idx_a:
            continue
        mus[i] = float(np.mean(np.maximum(sa, np.asarray(cand.score_vector, dtype=float))))
    ties = np.flatnonzero(mus == mus.max())
    idx_b = int(ties[rng.integers(ties.size)]) if ties.size > 1 else int(ties[0])
    return a, pool[idx_b]


def dominance_dissimilarity_survival(
    candidates, n: int, similarity=code_similarity
) -> list:
    """Keep the n candidates least shadowed by dominators.

    i weakly dominates j when fitness_i >= fitness_j and length_i <=
    length_j (i != j); each dominator subtracts its source similarity to j
    from j's score.  Ties break by higher fitness, then shorter code, then
    older id.
    """
    scores = []
    for j, cj in enumerate(candidates):
        s = 0.0
        for i, ci in enumerate(candidates):
            if i == j:
                continue
            if ci.fitness >= cj.fitness and ci.code_length <= cj.code_length:
                s -= similarity(ci.source, cj.source)
        scores.append(s)
    order = sorted(
        range(len(candidates)),
        key=lambda j: (
            -scores[j],
            -candidates[j].fitness,
            candidates[j].code_length,
            candidates[j].id,
        ),
    )
    return [candidates[j] for j in order[:n]]


def replacement_elitism_survival(parents, offspring, n: int) -> list:
    """Offspring replace the pool wholesale; the best parent is retained.
    Parents only re-enter (best first) when gate rejections left the
    offspring batch short of n."""
    elite = max(parents, key=lambda c: c.fitness)
    survivors = sorted(list(offspring) + [elite], key=lambda c: (-c.fitness, c.id))[:n]
    if len(survivors) < n:
        chosen = {c.id for c in survivors}
        rest = sorted(
            (p for p in parents if p.id not in chosen),
            key=lambda c: (-c.fitness, c.id),
        )
        survivors.extend(rest[: n - len(survivors)])
    return survivors


# ---------------------------------------------------------------------------
# the outer loop


@dataclass
class MetaResult:
    best: OperatorCandidate
    pool: list
    log: list
    generations_completed: int


class _MetaState:
    def __init__(self, pool, best, next_id, log, rng):
        self.pool = pool
        self.best = best
        self.next_id = next_id
        self.log = log
        self.rng = rng


def checkpoint_state(generation: int, state: _MetaState, gateway=None) -> dict:
    data = {
        "format": CHECKPOINT_FORMAT,
        "generation": generation,
        "pool": [c.to_dict() for c in state.pool],
        "best": state.best.to_dict(),
        "next_id": state.next_id,
        "log": state.log,
        "rng_state": state.rng.bit_generator.state,
    }
    # A replay gateway consumes per-hash response sequences in request
    # order, so resuming mid-run must restore how far each was consumed.
    if gateway is not None and hasattr(gateway, "state_dict"):
        data["gateway_state"] = gateway.state_dict()
    return data


def load_checkpoint(path: str) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != CHECKPOINT_FORMAT:
        raise MetaError(f"{path}: not a meta checkpoint")
    return data


def _thaw(data: dict) -> _MetaState:
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng_state"]
    return _MetaState(
        pool=[OperatorCandidate.from_dict(d) for d in data["pool"]],
        best=OperatorCandidate.from_dict(data["best"]),
        next_id=data["next_id"],
        log=list(data["log"]),
        rng=rng,
    )


def _write_checkpoint(
    config: MetaConfig, generation: int, state: _MetaState, gateway=None
) -> None:
    if not config.checkpoint_dir:
        return
    os.makedirs(config.checkpoint_dir, exist_ok=True)
    payload = json.dumps(checkpoint_state(generation, state, gateway), indent=2)
    for name in (f"checkpoint_gen{generation:03d}.json", "checkpoint_latest.json"):
        path = os.path.join(config.checkpoint_dir, name)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(payload)
        os.replace(tmp, path)


def run_meta(
    config: MetaConfig,
    gateway,
    splits,
    resume_state: dict | None = None,
) -> MetaResult:
    """Drive the full outer loop against pre-split manifest datasets."""
    config.validate()
    if not splits:
        raise MetaError("run_meta needs at least one dataset split")
    cases = build_gate_cases(config.seed + 1)

    if resume_state is not None:
        state = _thaw(resume_state)
        if "gateway_state" in resume_state and hasattr(gateway, "load_state_dict"):
            gateway.load_state_dict(resume_state["gateway_state"])
        start_gen = resume_state["generation"] + 1
    else:
        state = _MetaState(
            pool=[], best=None, next_id=0, log=[], rng=np.random.default_rng(config.seed)
        )
        _initialize_pool(config, gateway, splits, cases, state)
        _write_checkpoint(config, 0, state, gateway)
        start_gen = 1

    for gen in range(start_gen, config.generations + 1):
        _run_generation(config, gateway, splits, cases, state, gen)
        _write_checkpoint(config, gen, state, gateway)

    return MetaResult(
        best=state.best,
        pool=state.pool,
        log=state.log,
        generations_completed=max(config.generations, 0),
    )


def _make_candidate(state: _MetaState, source, provenance, parent_ids, generation):
    candidate = OperatorCandidate(
        id=state.next_id,
        source=source,
        provenance=provenance,
        parent_ids=tuple(parent_ids),
        generation_born=generation,
    )
    state.next_id += 1
    return candidate


def _request_candidate(state, gateway, bundle, provenance, parent_ids, generation):
    source = extract_code(gateway.complete(bundle))
    if source is None:
        return _make_candidate(state, fallback_source(), "fallback", parent_ids, generation)
    return _make_candidate(state, source, provenance, parent_ids, generation)


def _initialize_pool(config, gateway, splits, cases, state) -> None:
    candidates = [
        _request_candidate(
            state,
            gateway,
            build_prompt(
                "init",
                length_target=config.length_target,
                domain_knowledge=config.domain_knowledge,
                feedback=config.semantic_feedback,
            ),
            "init",
            (),
            0,
        )
        for _ in range(config.pool_size)
    ]
    results = gate_batch(
        candidates, cases, config.gate_time_limit, config.host_command
    )
    rejections = []
    pool = []
    for candidate, result in zip(candidates, results):
        if result.passed:
            pool.append(candidate)
            continue
        # Initialization must still deliver a full pool, so a rejected
        # seed candidate is swapped for the fallback operator.
        rejections.append({"id": candidate.id, "reason": result.reason, "detail": result.detail})
        substitute = _make_candidate(state, fallback_source(), "fallback", (), 0)
        sub_result = synthetic_gate(
            substitute, cases, config.gate_time_limit, config.host_command
        )
        if not sub_result.passed:
            raise MetaError(
                f"fallback operator failed the gate: {sub_result.reason} ({sub_result.detail})"
            )
        pool.append(substitute)

    for candidate in pool:
        evaluate_candidate(
            candidate, splits, config.inner, config.host_command, config.host_request_timeout
        )
    state.pool = pool
    state.best = max(pool, key=lambda c: c.fitness)
    state.log.append(_log_record(0, state, rejections))


def _run_generation(config, gateway, splits, cases, state, gen: int) -> None:
    elite = max(state.pool, key=lambda c: c.fitness)
    offspring = []
    for _ in range(config.pool_size - config.mutation_count):
        a, b = semantic_parent_selection(state.pool, state.rng)
        bundle = build_prompt(
            "crossover",
            length_target=config.length_target,
            domain_knowledge=config.domain_knowledge,
            feedback=config.semantic_feedback,
            operator_a=a,
            operator_b=b,
        )
        offspring.append(
            _request_candidate(state, gateway, bundle, "crossover", (a.id, b.id), gen)
        )
    for _ in range(config.mutation_count):
        bundle = build_prompt(
            "mutation",
            length_target=config.length_target,
            domain_knowledge=config.domain_knowledge,
            feedback=config.semantic_feedback,
            baseline_code=elite.source,
        )
        offspring.append(
            _request_candidate(state, gateway, bundle, "mutation", (elite.id,), gen)
        )

    results = gate_batch(offspring, cases, config.gate_time_limit, config.host_command)
    rejections = [
        {"id": c.id, "reason": r.reason, "detail": r.detail}
        for c, r in zip(offspring, results)
        if not r.passed
    ]
    passers = [c for c, r in zip(offspring, results) if r.passed]
    for candidate in passers:
        evaluate_candidate(
            candidate, splits, config.inner, config.host_command, config.host_request_timeout
        )

    if config.survival == "dominance_dissimilarity":
        state.pool = dominance_dissimilarity_survival(
            state.pool + passers, config.pool_size
        )
    else:
        state.pool = replacement_elitism_survival(state.pool, passers, config.pool_size)

    challenger = max(state.pool, key=lambda c: c.fitness)
    if state.best is None or challenger.fitness > state.best.fitness:
        state.best = challenger
    state.log.append(_log_record(gen, state, rejections))


def _log_record(generation: int, state: _MetaState, rejections) -> dict:
    return {
        "generation": generation,
        "pool_best_fitness": max(c.fitness for c in state.pool),
        "best_ever_fitness": state.best.fitness,
        "mean_code_length": float(np.mean([c.code_length for c in state.pool])),
        "mean_approx_tokens": float(
            np.mean([approx_token_count(c.source) for c in state.pool])
        ),
        "fallback_count": sum(1 for c in state.pool if c.provenance == "fallback"),
        "rejections": rejections,
    }
