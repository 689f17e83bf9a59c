"""Prompt assembly and the chat-completion gateway.

Prompt text lives in template asset files; placeholders are substituted by
literal replacement so braces inside embedded code never confuse anything.
The gateway runs in one of three modes: live (HTTP chat completion), record
(live plus transcript append) and replay (transcript lookup by prompt hash,
no network at all).
"""

from __future__ import annotations

import ast
import hashlib
import json
import os
import re
import time
import urllib.request
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

GOAL = "selection operator"
GOALS = "selection operators"

MODES = ("live", "record", "replay")


class GatewayError(RuntimeError):
    pass


class ReplayMissError(GatewayError):
    """A replay-mode prompt has no recorded response."""

    def __init__(self, prompt_hash: str):
        self.prompt_hash = prompt_hash
        super().__init__(f"no transcript entry for prompt hash {prompt_hash}")


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    metadata: dict = field(default_factory=dict)


def prompt_hash(bundle: PromptBundle) -> str:
    body = json.dumps({"system": bundle.system, "user": bundle.user}, sort_keys=True)
    return hashlib.sha256(body.encode()).hexdigest()


@lru_cache(maxsize=None)
def _template(name: str) -> str:
    return (resources.files("evosr") / "templates" / name).read_text()


def fallback_source() -> str:
    """Tournament selection used whenever no code can be extracted."""
    return _template("fallback_selection.py")


def _fill(text: str, mapping: dict) -> str:
    # Longest key first so no placeholder is a prefix casualty of another.
    for key in sorted(mapping, key=len, reverse=True):
        text = text.replace("{" + key + "}", str(mapping[key]))
    return text


def format_score(score_vector, feedback: str) -> str:
    """Score string for crossover prompts: the full per-dataset vector by
    default, or its mean when scalar feedback is configured."""
    values = [float(v) for v in score_vector]
    if feedback == "scalar":
        return f"{sum(values) / len(values):.3f}"
    return "[" + ", ".join(f"{v:.3f}" for v in values) + "]"


def build_prompt(
    kind: str,
    *,
    length_target: int,
    domain_knowledge: bool = True,
    feedback: str = "vector",
    baseline_code: str | None = None,
    operator_a=None,
    operator_b=None,
) -> PromptBundle:
    """Assemble the system/user pair for one of: init, mutation, crossover.

    Mutation requires baseline_code (the elite source); crossover requires
    operator_a and operator_b objects exposing source, score_vector and
    code_length.
    """
    system = _fill(_template("system.txt"), {"max_code_lines": length_target})
    properties = _template("properties.txt").rstrip("\n") if domain_knowledge else ""
    signature = _template(
        "signature.txt" if domain_knowledge else "signature_bare.txt"
    ).rstrip("\n")
    metadata: dict = {"kind": kind}

    if kind in ("init", "mutation"):
        if kind == "mutation":
            if baseline_code is None:
                raise ValueError("mutation prompt needs baseline_code")
            baseline = _fill(
                _template("inspiration.txt").rstrip("\n"),
                {"code": baseline_code, "goal": GOAL},
            ) + "\n\n"
        else:
            baseline = ""
        user = _fill(
            _template("init_mutation.txt"),
            {
                "goal": GOAL,
                "goals": GOALS,
                "baseline": baseline,
                "properties": properties,
                "template": signature,
            },
        )
    elif kind == "crossover":
        if operator_a is None or operator_b is None:
            raise ValueError("crossover prompt needs operator_a and operator_b")
        user = _fill(
            _template("crossover.txt"),
            {
                "goal": GOAL,
                "score_a": format_score(operator_a.score_vector, feedback),
                "lines_a": operator_a.code_length,
                "code_a": operator_a.source,
                "score_b": format_score(operator_b.score_vector, feedback),
                "lines_b": operator_b.code_length,
                "code_b": operator_b.source,
                "properties": properties,
                "template": signature,
            },
        )
        metadata["parents"] = (
            getattr(operator_a, "id", None),
            getattr(operator_b, "id", None),
        )
    else:
        raise ValueError(f"unknown prompt kind {kind!r}")
    return PromptBundle(system=system, user=user, metadata=metadata)


# ---------------------------------------------------------------------------
# code extraction

_FENCE_RE = re.compile(r"```[ \t]*[\w+-]*[ \t]*\r?\n(.*?)```", re.DOTALL)


def extract_code(response: str) -> str | None:
    """First fenced code block; else the whole response when it already is a
    bare function definition; else None."""
    m = _FENCE_RE.search(response)
    if m:
        block = m.group(1).strip()
        return block or None
    text = response.strip()
    try:
        tree = ast.parse(text)
    except SyntaxError:
        return None
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            return text
    return None


# ---------------------------------------------------------------------------
# gateway


@dataclass
class LLMConfig:
    mode: str = "replay"
    transcript_path: str | None = None
    model: str = ""
    endpoint: str = ""
    temperature: float | None = None


def _http_transport(config: LLMConfig, bundle: PromptBundle) -> str:
    endpoint = config.endpoint or os.environ.get("EVOSR_LLM_ENDPOINT", "")
    model = config.model or os.environ.get("EVOSR_LLM_MODEL", "")
    if not endpoint or not model:
        raise GatewayError(
            "live mode needs an endpoint and model "
            "(EVOSR_LLM_ENDPOINT / EVOSR_LLM_MODEL or explicit config)"
        )
    payload: dict = {
        "model": model,
        "messages": [
            {"role": "system", "content": bundle.system},
            {"role": "user", "content": bundle.user},
        ],
    }
    if config.temperature is not None:
        payload["temperature"] = config.temperature
    request = urllib.request.Request(
        endpoint.rstrip("/") + "/chat/completions",
        data=json.dumps(payload).encode(),
        headers={
            "Content-Type": "application/json",
            "Authorization": "Bearer " + os.environ.get("EVOSR_LLM_API_KEY", ""),
        },
    )
    with urllib.request.urlopen(request, timeout=300) as resp:
        data = json.load(resp)
    return data["choices"][0]["message"]["content"]


def load_transcript(path: str) -> list[dict]:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


class ChatGateway:
    """complete() routes through live calls, records them, or replays them.

    Replay keeps per-hash response sequences so a prompt asked twice replays
    the recorded order (the last response repeats if asked again); replay
    never touches the transport.  Consumption counters are exposed through
    state_dict/load_state_dict so a checkpointed run can resume mid-transcript.
    """

    def __init__(self, config: LLMConfig, transport=None):
        if config.mode not in MODES:
            raise GatewayError(f"unknown gateway mode {config.mode!r}")
        if config.mode in ("record", "replay") and not config.transcript_path:
            raise GatewayError(f"{config.mode} mode needs a transcript path")
        self.config = config
        self._transport = transport or _http_transport
        self._replay_index: dict[str, list] = {}
        self._consumed: dict[str, int] = {}
        if config.mode == "replay":
            for rec in load_transcript(config.transcript_path):
                self._replay_index.setdefault(rec["prompt_hash"], []).append(
                    rec["response"]
                )

    def state_dict(self) -> dict:
        return {"consumed": dict(self._consumed)}

    def load_state_dict(self, state: dict) -> None:
        self._consumed = dict(state.get("consumed", {}))

    def complete(self, bundle: PromptBundle) -> str:
        key = prompt_hash(bundle)
        if self.config.mode == "replay":
            responses = self._replay_index.get(key)
            if not responses:
                raise ReplayMissError(key)
            position = self._consumed.get(key, 0)
            self._consumed[key] = position + 1
            return responses[min(position, len(responses) - 1)]
        response = self._transport(self.config, bundle)
        if self.config.mode == "record":
            record = {
                "prompt_hash": key,
                "system": bundle.system,
                "user": bundle.user,
                "response": response,
                "model": self.config.model,
                "timestamp": time.time(),
            }
            with open(self.config.transcript_path, "a") as fh:
                fh.write(json.dumps(record) + "\n")
        return response
