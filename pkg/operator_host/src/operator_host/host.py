"""Load one selection script, then serve requests over stdio.

Request lines carry the population phenotypes (case_values,
predicted_values, y, nodes, height), k, a status dict and a seed; the
response is either {"selected_indices": [...]} or {"error": {"type",
"message"}}.  Exactly one response line per request line, in order.  The
script's own stdout is redirected to stderr so nothing but protocol bytes
reaches the response stream.
"""

from __future__ import annotations

import inspect
import json
import random
import sys
from contextlib import redirect_stdout

import numpy as np


class BadOutput(Exception):
    """The script returned something that cannot be mapped to indices."""


class WireRecord:
    """Individual-shaped view of one population entry.

    Exposes exactly the fields scripts are written against: case_values,
    predicted_values, y (arrays), height, and len() for the node count.
    Hashes by identity, so returned objects map back to request indices.
    """

    __slots__ = ("case_values", "predicted_values", "y", "nodes", "height")

    def __init__(self, payload: dict):
        self.case_values = np.asarray(payload["case_values"], dtype=float)
        self.predicted_values = np.asarray(payload["predicted_values"], dtype=float)
        self.y = np.asarray(payload["y"], dtype=float)
        self.nodes = int(payload["nodes"])
        self.height = int(payload["height"])

    def __len__(self) -> int:
        return self.nodes


def load_script(path: str):
    """Execute the script once and return its selection callable."""
    with open(path, "r", encoding="utf-8") as fh:
        source = fh.read()
    namespace = {"__name__": "hosted_operator", "__file__": path}
    code = compile(source, path, "exec")
    with redirect_stdout(sys.stderr):
        exec(code, namespace)
    fn = namespace.get("selection")
    if not callable(fn):
        raise RuntimeError("script defines no callable named 'selection'")
    return fn


def accepts_status(fn) -> bool:
    try:
        params = inspect.signature(fn).parameters
    except (TypeError, ValueError):
        return True
    if "status" in params:
        return True
    return any(p.kind is inspect.Parameter.VAR_KEYWORD for p in params.values())


def handle(fn, wants_status: bool, request: dict) -> dict:
    population = [WireRecord(entry) for entry in request["population"]]
    k = int(request["k"])
    status = dict(request.get("status") or {})
    seed = int(request.get("seed", 0))
    # Both RNGs scripts reach for; numpy's legacy seed is 32-bit.
    random.seed(seed)
    np.random.seed(seed % 2**32)

    with redirect_stdout(sys.stderr):
        if wants_status:
            picked = fn(population, k, status=status)
        else:
            picked = fn(population, k)

    if not isinstance(picked, list):
        raise BadOutput(f"selection returned {type(picked).__name__}, expected a list")
    index_of = {id(ind): i for i, ind in enumerate(population)}
    indices = []
    for item in picked:
        idx = index_of.get(id(item))
        if idx is None:
            raise BadOutput("selection returned an object that is not in the population")
        indices.append(idx)
    if len(indices) != k:
        raise BadOutput(f"selection returned {len(indices)} individuals, expected k={k}")
    return {"selected_indices": indices}


def _emit(stream, document: dict) -> None:
    stream.write(json.dumps(document) + "\n")
    stream.flush()


def main(argv: list | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    out = sys.stdout
    if len(argv) != 1:
        _emit(out, {"error": {"type": "load_error",
                              "message": "usage: python -m operator_host <script.py>"}})
        return 2
    try:
        fn = load_script(argv[0])
        wants_status = accepts_status(fn)
    except Exception as exc:
        _emit(out, {"error": {"type": "load_error",
                              "message": f"{type(exc).__name__}: {exc}"}})
        return 2

    try:
        for line in sys.stdin:
            if not line.strip():
                continue
            try:
                response = handle(fn, wants_status, json.loads(line))
            except BadOutput as exc:
                response = {"error": {"type": "bad_output", "message": str(exc)}}
            except Exception as exc:
                response = {"error": {"type": "runtime_error",
                                      "message": f"{type(exc).__name__}: {exc}"}}
            _emit(out, response)
    except BrokenPipeError:
        return 0
    return 0
