"""Regenerate the shipped replay transcript for the tiny meta scenario.

Runs the outer loop in record mode against a canned response bank (every
response resolves to a registry-backed operator, so no script host is
needed) and writes data/transcripts/meta_tiny.jsonl.  The acceptance and
CLI tests replay this transcript with the same configuration: pool 4,
5 generations, inner pop 20 x 5 generations, seed 0.
"""

from __future__ import annotations

import os
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
TRANSCRIPT = os.path.join(ROOT, "data", "transcripts", "meta_tiny.jsonl")
MANIFEST = os.path.join(ROOT, "data", "manifests", "tiny.json")

from evosr.dataio import manifest_splits
from evosr.engine import SRConfig
from evosr.llm import ChatGateway, LLMConfig
from evosr.meta import MetaConfig, run_meta


def _wrap(code: str, lead: str = "Here is the operator.") -> str:
    return f"{lead}\n\n```python\n{code.strip()}\n```\n"


RESPONSES = [
    # --- initialization (4) ---
    _wrap("""
# builtin: tournament3
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    n = len(population)
    chosen = []
    for _ in range(k):
        idx = rng.choice(n, size=min(3, n), replace=False)
        chosen.append(population[int(idx[np.argmin(errors[idx])])])
    return chosen
"""),
    _wrap("""
# builtin: tournament7
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    n = len(population)
    size = min(7, n)
    chosen = []
    for _ in range(k):
        idx = rng.choice(n, size=size, replace=False)
        winner = int(idx[np.argmin(errors[idx])])
        chosen.append(population[winner])
    return chosen
"""),
    _wrap("""
# builtin: boltzmann
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    scores = -errors
    span = scores.max() - scores.min()
    if span > 0:
        scores = (scores - scores.min()) / span
    tau = max(0.1 * (1.0 - status["evolutionary_stage"]), 1e-6)
    logits = scores / tau
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    picks = rng.choice(len(population), size=k, replace=True, p=probs)
    return [population[int(i)] for i in picks]
"""),
    _wrap("""
# builtin: topk
import numpy as np

def select(population, k, status, seed):
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    order = np.argsort(errors, kind="stable")
    return [population[int(order[i % len(order)])] for i in range(k)]
"""),
    # --- generation 1: 3 crossovers + 1 mutation ---
    _wrap("""
# builtin: rds_tour
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    n_cases = errs.shape[1]
    m = max(int(np.ceil(0.1 * n_cases)), 1)
    cases = rng.choice(n_cases, size=m, replace=False)
    sub = errs[:, cases].mean(axis=1)
    chosen = []
    for _ in range(k):
        idx = rng.choice(len(population), size=min(7, len(population)), replace=False)
        chosen.append(population[int(idx[np.argmin(sub[idx])])])
    return chosen
""", "Combining the subsample idea with tournaments."),
    _wrap("""
# builtin: autolex
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    chosen = []
    for _ in range(k):
        cand = np.arange(len(population))
        for case in rng.permutation(errs.shape[1]):
            col = errs[cand, case]
            mad = np.median(np.abs(col - np.median(col)))
            cand = cand[col <= col.min() + mad]
            if cand.size == 1:
                break
        chosen.append(population[int(rng.choice(cand))])
    return chosen
""", "Case-by-case filtering with an adaptive threshold."),
    _wrap("""
# builtin: cps
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    means = errs.mean(axis=1)
    pairs = []
    for _ in range(k // 2):
        idx = rng.choice(len(population), size=min(7, len(population)), replace=False)
        a = int(idx[np.argmin(means[idx])])
        wins = (errs < errs[a]).sum(axis=1)
        b = int(np.argmax(wins))
        pairs.extend([population[a], population[b]])
    return pairs[:k]
""", "Pairing each winner with its strongest complement."),
    _wrap("""
# builtin: omni_r
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    stage = status["evolutionary_stage"]
    means = errs.mean(axis=1)
    sizes = np.array([ind["nodes"] + ind["height"] for ind in population], dtype=float)
    comp = sizes / max(sizes.max(), 1.0)
    factor = 0.25 + 0.25 * stage
    chosen = []
    for _ in range(k):
        a = int(np.lexsort((comp, means))[0])
        res = errs - errs[a]
        cors = np.abs((res * res[a]).mean(axis=1))
        cors[a] = 1.0
        b = int(np.argmin(cors + factor * comp))
        chosen.extend([population[a], population[b]])
    return chosen[:k]
""", "Tightening the subset repair path."),
    # --- generation 2 ---
    _wrap("""
# builtin: omni
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    stage = status["evolutionary_stage"]
    half = k // 2
    ssize = max(7, errs.shape[1] // max(1, 2 * half))
    subsets = [rng.choice(errs.shape[1], size=ssize, replace=False) for _ in range(half)]
    sizes = np.array([ind["nodes"] + ind["height"] for ind in population], dtype=float)
    comp = sizes / max(sizes.max(), 1.0)
    factor = 0.25 + 0.25 * stage
    out = []
    for sub in subsets:
        mse = errs[:, sub].mean(axis=1)
        a = int(np.lexsort((comp, mse))[0])
        res = errs - errs.mean(axis=1, keepdims=True)
        cors = np.abs((res @ res[a]) / (np.linalg.norm(res, axis=1) * np.linalg.norm(res[a]) + 1e-12))
        cors[a] = 1.0
        b = int(np.argmin(cors + factor * comp))
        out.extend([population[a], population[b]])
    return out[:k]
""", "Structured subsets plus residual complements."),
    _wrap("""
# builtin: tournament7
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    idx = rng.integers(0, len(population), size=(k, min(7, len(population))))
    winners = idx[np.arange(k), np.argmin(errors[idx], axis=1)]
    return [population[int(i)] for i in winners]
""", "A vectorized tournament sweep."),
    _wrap("""
# builtin: topk
import numpy as np

def select(population, k, status, seed):
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    order = np.argsort(errors, kind="stable")
    return [population[int(order[i % len(order)])] for i in range(k)]
""", "Keeping only the strict elite."),
    "The mutation keeps the same flow but clarifies the comments and "
    "variable names; no code changes are required beyond that.\n",
    # --- generation 3 ---
    _wrap("""
# builtin: omni_zero
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    stage = status["evolutionary_stage"]
    means = errs.mean(axis=1)
    norm_err = means / max(means.max(), 1e-10)
    sizes = np.array([ind["nodes"] for ind in population], dtype=float)
    comp = sizes / max(sizes.max(), 1e-10)
    base = stage * (1.0 - norm_err) + (1.0 - stage) * (1.0 - comp)
    base = base - base.min() + 1e-10
    probs = base / base.sum()
    tour = min(3 + int(2 * stage), len(population))
    chosen = []
    for _ in range(k):
        idx = rng.choice(len(population), size=tour, replace=False, p=probs)
        chosen.append(population[int(idx[np.argmin(means[idx])])])
    return chosen
""", "Blending error, complexity and novelty pressure."),
    _wrap("""
# builtin: cps
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    means = errs.mean(axis=1)
    out = []
    for _ in range(k // 2):
        idx = rng.choice(len(population), size=min(7, len(population)), replace=False)
        a = int(idx[np.argmin(means[idx])])
        out.extend([population[a], population[int(np.argmax((errs < errs[a]).sum(axis=1)))]])
    return out[:k]
""", "A leaner complement pairing."),
    _wrap("""
# builtin: boltzmann
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    scores = -errors
    span = max(scores.max() - scores.min(), 1e-12)
    scores = (scores - scores.min()) / span
    tau = max(0.1 * (1.0 - status["evolutionary_stage"]), 1e-6)
    probs = np.exp(scores / tau - (scores / tau).max())
    probs /= probs.sum()
    return [population[int(i)] for i in rng.choice(len(population), size=k, p=probs)]
""", "Annealed sampling with a hard temperature floor."),
    _wrap("""
# builtin: omni_r
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    means = errs.mean(axis=1)
    sizes = np.array([ind["nodes"] + ind["height"] for ind in population], dtype=float)
    comp = sizes / max(sizes.max(), 1.0)
    factor = 0.25 + 0.25 * status["evolutionary_stage"]
    out = []
    for _ in range(k // 2):
        a = int(np.lexsort((comp, means))[0])
        cors = np.abs(np.corrcoef(errs)[a])
        cors[a] = 1.0
        out.extend([population[a], population[int(np.argmin(cors + factor * comp))]])
    return out[:k]
""", "Repairing empty subsets before scoring."),
    # --- generation 4 ---
    _wrap("""
# builtin: autolex
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    chosen = []
    for _ in range(k):
        cand = np.arange(len(population))
        for case in rng.permutation(errs.shape[1]):
            col = errs[cand, case]
            cand = cand[col <= col.min() + np.median(np.abs(col - np.median(col)))]
            if cand.size == 1:
                break
        chosen.append(population[int(rng.choice(cand))])
    return chosen
""", "Compressing the filter loop."),
    _wrap("""
# builtin: rds_tour
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    cases = rng.choice(errs.shape[1], size=max(errs.shape[1] // 10, 1), replace=False)
    sub = errs[:, cases].mean(axis=1)
    out = []
    for _ in range(k):
        idx = rng.choice(len(population), size=min(7, len(population)), replace=False)
        out.append(population[int(idx[np.argmin(sub[idx])])])
    return out
""", "Sampling one case subset per call."),
    _wrap("""
# builtin: tournament3
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    out = []
    for _ in range(k):
        idx = rng.choice(len(population), size=min(3, len(population)), replace=False)
        out.append(population[int(idx[np.argmin(errors[idx])])])
    return out
""", "Small tournaments keep the pressure gentle."),
    _wrap("""
# builtin: topk
import numpy as np

def select(population, k, status, seed):
    errors = np.array([float(np.mean(ind["case_values"])) for ind in population])
    order = np.argsort(errors, kind="stable")
    picks = [int(order[i % len(order)]) for i in range(k)]
    return [population[i] for i in picks]
""", "Same elite sweep, explicit index cycle."),
    # --- generation 5 ---
    _wrap("""
# builtin: omni_r
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    means = errs.mean(axis=1)
    comp = np.array([ind["nodes"] + ind["height"] for ind in population], dtype=float)
    comp /= max(comp.max(), 1.0)
    f = 0.25 + 0.25 * status["evolutionary_stage"]
    out = []
    for _ in range(k // 2):
        a = int(np.lexsort((comp, means))[0])
        cors = np.abs(np.corrcoef(errs)[a]); cors[a] = 1.0
        out.extend([population[a], population[int(np.argmin(cors + f * comp))]])
    return out[:k]
""", "Trimming the pairing loop further."),
    _wrap("""
# builtin: cps
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    means = errs.mean(axis=1)
    out = []
    for _ in range(k // 2):
        idx = rng.choice(len(population), size=min(7, len(population)), replace=False)
        a = int(idx[np.argmin(means[idx])])
        out += [population[a], population[int(np.argmax((errs < errs[a]).sum(axis=1)))]]
    return out[:k]
""", "Complement pairs, compact form."),
    _wrap("""
# builtin: omni
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    half = k // 2
    ssize = max(7, errs.shape[1] // max(1, 2 * half))
    comp = np.array([ind["nodes"] + ind["height"] for ind in population], dtype=float)
    comp /= max(comp.max(), 1.0)
    f = 0.25 + 0.25 * status["evolutionary_stage"]
    out = []
    for _ in range(half):
        sub = rng.choice(errs.shape[1], size=ssize, replace=False)
        a = int(np.lexsort((comp, errs[:, sub].mean(axis=1)))[0])
        cors = np.abs(np.corrcoef(errs)[a]); cors[a] = 1.0
        out.extend([population[a], population[int(np.argmin(cors + f * comp))]])
    return out[:k]
""", "Structured subsets, condensed."),
    _wrap("""
# builtin: omni_zero
import numpy as np

def select(population, k, status, seed):
    rng = np.random.default_rng(seed)
    errs = np.stack([ind["case_values"] for ind in population])
    stage = status["evolutionary_stage"]
    means = errs.mean(axis=1)
    base = stage * (1.0 - means / max(means.max(), 1e-10))
    base += (1.0 - stage) * (1.0 - np.array([ind["nodes"] for ind in population]) / 50.0)
    base = base - base.min() + 1e-10
    probs = base / base.sum()
    tour = min(3 + int(2 * stage), len(population))
    out = []
    for _ in range(k):
        idx = rng.choice(len(population), size=tour, replace=False, p=probs)
        out.append(population[int(idx[np.argmin(means[idx])])])
    return out
""", "Keeping the novelty blend while shortening setup."),
]


def make_stub_transport(responses):
    state = {"i": 0}

    def transport(config, bundle):
        if state["i"] >= len(responses):
            raise RuntimeError("response bank exhausted")
        out = responses[state["i"]]
        state["i"] += 1
        return out

    return transport


def main() -> int:
    os.makedirs(os.path.dirname(TRANSCRIPT), exist_ok=True)
    if os.path.exists(TRANSCRIPT):
        os.remove(TRANSCRIPT)
    gateway = ChatGateway(
        LLMConfig(mode="record", transcript_path=TRANSCRIPT, model="canned-bank"),
        transport=make_stub_transport(RESPONSES),
    )
    config = MetaConfig(
        pool_size=4,
        mutation_count=1,
        generations=5,
        length_target=30,
        inner=SRConfig(population_size=20, generations=5, seed=0),
        seed=0,
    )
    result = run_meta(config, gateway, manifest_splits(MANIFEST))
    print(f"recorded {len(RESPONSES)} responses -> {TRANSCRIPT}")
    print(f"best fitness {result.best.fitness:.4f} (candidate {result.best.id})")
    for rec in result.log:
        print(
            f"gen {rec['generation']}: best {rec['best_ever_fitness']:.4f} "
            f"mean_len {rec['mean_code_length']:.1f} rejects {len(rec['rejections'])}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
