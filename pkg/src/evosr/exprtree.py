"""Prefix-encoded expression trees and the genetic variation operators.

Trees are immutable tuples of tokens in prefix order.  A token is either a
FunctionSpec, an int (feature index) or a float (constant).  All evaluation
is vectorized over the rows of the input matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# Hard ceiling applied to every intermediate value so downstream linear
# algebra never sees IEEE overflow.
VALUE_CLAMP = 1e30

# Tree shape limits: variation reverts to the parent beyond MAX_DEPTH,
# initial trees are generated with target depths INIT_DEPTHS.
MAX_DEPTH = 10
INIT_DEPTHS = tuple(range(7))
MUTATION_DEPTH = 2

# Terminal sampling: probability that a leaf is an ephemeral constant,
# and the range constants are drawn from.
CONSTANT_PROB = 0.1
CONSTANT_RANGE = (-1.0, 1.0)


class StructureError(ValueError):
    """Raised when a token sequence does not encode a complete tree."""


@dataclass(frozen=True)
class FunctionSpec:
    symbol: str
    arity: int
    fn: Callable


def _aq(x, y):
    # Analytic quotient: smooth protected division.
    return x / np.sqrt(1.0 + y * y)


def _sqrt_abs(x):
    return np.sqrt(np.abs(x))


def _log_abs(x):
    return np.log1p(np.abs(x))


def _square(x):
    return x * x


def _sin_pi(x):
    return np.sin(np.pi * x)


def _cos_pi(x):
    return np.cos(np.pi * x)


FUNCTIONS: dict[str, FunctionSpec] = {
    spec.symbol: spec
    for spec in (
        FunctionSpec("add", 2, np.add),
        FunctionSpec("sub", 2, np.subtract),
        FunctionSpec("mul", 2, np.multiply),
        FunctionSpec("aq", 2, _aq),
        FunctionSpec("max", 2, np.maximum),
        FunctionSpec("min", 2, np.minimum),
        FunctionSpec("sqrt", 1, _sqrt_abs),
        FunctionSpec("log1p", 1, _log_abs),
        FunctionSpec("abs", 1, np.abs),
        FunctionSpec("square", 1, _square),
        FunctionSpec("sinpi", 1, _sin_pi),
        FunctionSpec("cospi", 1, _cos_pi),
        FunctionSpec("neg", 1, np.negative),
    )
}

_FUNCTION_LIST = tuple(FUNCTIONS.values())


class ExpressionTree:
    """An immutable prefix-order program over a fixed feature count."""

    __slots__ = ("nodes", "height")

    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        self.height = self._compute_height()

    def __len__(self) -> int:
        return len(self.nodes)

    def _compute_height(self) -> int:
        # Reverse prefix scan doubles as a structural check: the stack must
        # collapse to exactly one entry.
        stack: list[int] = []
        for tok in reversed(self.nodes):
            if isinstance(tok, FunctionSpec):
                if len(stack) < tok.arity:
                    raise StructureError("truncated token sequence")
                children = [stack.pop() for _ in range(tok.arity)]
                stack.append(max(children) + 1)
            else:
                stack.append(0)
        if len(stack) != 1:
            raise StructureError("dangling tokens after the root")
        return stack[0]

    def subtree_span(self, index: int) -> tuple[int, int]:
        """Half-open [start, end) range of the subtree rooted at ``index``."""
        need = 1
        j = index
        while need > 0:
            tok = self.nodes[j]
            need += (tok.arity if isinstance(tok, FunctionSpec) else 0) - 1
            j += 1
        return index, j

    def canonical(self) -> str:
        """Readable canonical form, e.g. ``mul(x0,add(x1,-0.5))``."""
        stack: list[str] = []
        for tok in reversed(self.nodes):
            if isinstance(tok, FunctionSpec):
                args = [stack.pop() for _ in range(tok.arity)]
                stack.append(f"{tok.symbol}({','.join(args)})")
            elif isinstance(tok, float):
                stack.append(repr(tok))
            else:
                stack.append(f"x{tok}")
        return stack[0]

    def __repr__(self) -> str:
        return f"ExpressionTree({self.canonical()})"


def canonical_hash(tree: ExpressionTree) -> str:
    """Stable dedup key: trees are equal iff their canonical forms are."""
    import hashlib

    return hashlib.sha1(tree.canonical().encode()).hexdigest()


def evaluate(tree: ExpressionTree, X: np.ndarray) -> np.ndarray:
    """Evaluate ``tree`` on every row of ``X``; output is always finite.

    Every node result (leaves included) is clamped to +-VALUE_CLAMP, so no
    product or square of two on-range values can overflow a float64.
    """
    n = X.shape[0]
    stack: list[np.ndarray] = []
    with np.errstate(over="ignore", invalid="ignore"):
        for tok in reversed(tree.nodes):
            if isinstance(tok, FunctionSpec):
                args = [stack.pop() for _ in range(tok.arity)]
                out = tok.fn(*args)
            elif isinstance(tok, float):
                out = np.full(n, tok)
            else:
                out = X[:, tok].astype(float, copy=True)
            stack.append(np.clip(out, -VALUE_CLAMP, VALUE_CLAMP))
    return stack[0]


# ---------------------------------------------------------------------------
# random generation


def _random_leaf(n_features: int, rng) -> float | int:
    if rng.random() < CONSTANT_PROB:
        return float(rng.uniform(*CONSTANT_RANGE))
    return int(rng.integers(n_features))


def _grow_nodes(depth: int, n_features: int, rng, out: list) -> None:
    # Classic grow: below the depth budget each position is a function with
    # probability #functions / (#functions + #features + 1), the +1 standing
    # in for the constant terminal.
    p_function = len(_FUNCTION_LIST) / (len(_FUNCTION_LIST) + n_features + 1)
    if depth > 0 and rng.random() < p_function:
        spec = _FUNCTION_LIST[rng.integers(len(_FUNCTION_LIST))]
        out.append(spec)
        for _ in range(spec.arity):
            _grow_nodes(depth - 1, n_features, rng, out)
    else:
        out.append(_random_leaf(n_features, rng))


def _full_nodes(depth: int, n_features: int, rng, out: list) -> None:
    if depth > 0:
        spec = _FUNCTION_LIST[rng.integers(len(_FUNCTION_LIST))]
        out.append(spec)
        for _ in range(spec.arity):
            _full_nodes(depth - 1, n_features, rng, out)
    else:
        out.append(_random_leaf(n_features, rng))


def grow_tree(depth: int, n_features: int, rng) -> ExpressionTree:
    nodes: list = []
    _grow_nodes(depth, n_features, rng, nodes)
    return ExpressionTree(nodes)


def full_tree(depth: int, n_features: int, rng) -> ExpressionTree:
    nodes: list = []
    _full_nodes(depth, n_features, rng, nodes)
    return ExpressionTree(nodes)


def ramped_half_and_half(count: int, n_features: int, rng) -> list[ExpressionTree]:
    """Alternate full and grow trees with target depths cycling 0..6."""
    trees = []
    for i in range(count):
        depth = INIT_DEPTHS[i % len(INIT_DEPTHS)]
        builder = full_tree if i % 2 == 0 else grow_tree
        trees.append(builder(depth, n_features, rng))
    return trees


# ---------------------------------------------------------------------------
# variation


def _splice(target: ExpressionTree, index: int, donor_nodes: tuple) -> ExpressionTree:
    lo, hi = target.subtree_span(index)
    return ExpressionTree(target.nodes[:lo] + tuple(donor_nodes) + target.nodes[hi:])


def subtree_crossover(
    a: ExpressionTree, b: ExpressionTree, rng
) -> tuple[ExpressionTree, ExpressionTree]:
    """Swap random subtrees; a child deeper than MAX_DEPTH reverts to its parent."""
    i = int(rng.integers(len(a)))
    j = int(rng.integers(len(b)))
    a_lo, a_hi = a.subtree_span(i)
    b_lo, b_hi = b.subtree_span(j)
    child_a = _splice(a, i, b.nodes[b_lo:b_hi])
    child_b = _splice(b, j, a.nodes[a_lo:a_hi])
    if child_a.height > MAX_DEPTH:
        child_a = a
    if child_b.height > MAX_DEPTH:
        child_b = b
    return child_a, child_b


def subtree_mutation(tree: ExpressionTree, n_features: int, rng) -> ExpressionTree:
    """Replace a random subtree with a fresh grown one (depth <= 2)."""
    i = int(rng.integers(len(tree)))
    repl = grow_tree(MUTATION_DEPTH, n_features, rng)
    child = _splice(tree, i, repl.nodes)
    if child.height > MAX_DEPTH:
        return tree
    return child
