"""Wire tests for the script host: every check talks to a real subprocess
over stdio, exactly as the engine side would."""

import json
import subprocess
import sys

import numpy as np
import pytest

from operator_host import reference_script

HOST = [sys.executable, "-m", "operator_host"]


def start(script_path):
    return subprocess.Popen(
        [*HOST, str(script_path)],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
        bufsize=1,
    )


def make_request(seed=3, n=6, cases=4, k=4, stage=0.5):
    rng = np.random.default_rng(seed)
    y = [float(v) for v in rng.integers(0, 9, size=cases)]
    population = [
        {
            "case_values": [float(v) for v in rng.integers(0, 9, size=cases)],
            "predicted_values": [float(v) for v in rng.integers(0, 9, size=cases)],
            "y": y,
            "nodes": int(rng.integers(1, 20)),
            "height": int(rng.integers(0, 6)),
        }
        for _ in range(n)
    ]
    return {
        "population": population,
        "k": k,
        "status": {"evolutionary_stage": stage},
        "seed": seed,
    }


def roundtrip(proc, request):
    proc.stdin.write(json.dumps(request) + "\n")
    proc.stdin.flush()
    line = proc.stdout.readline()
    assert line.endswith("\n"), "host must terminate every response with newline"
    return json.loads(line)


def finish(proc):
    proc.stdin.close()
    rest = proc.stdout.read()
    return rest, proc.wait(timeout=10)


def script(tmp_path, body):
    path = tmp_path / "operator.py"
    path.write_text(body)
    return path


ECHO_CYCLE = """
def selection(population, k=100, status={}):
    return [population[i % len(population)] for i in range(k)]
"""

TOURNAMENT = """
import random
import numpy as np

def selection(individuals, k=100, tour_size=3):
    means = [float(np.mean(ind.case_values)) for ind in individuals]
    out = []
    for _ in range(k):
        idxs = random.sample(range(len(individuals)), tour_size)
        out.append(individuals[min(idxs, key=means.__getitem__)])
    return out
"""

STATUS_READER = """
def selection(population, k=100, status={}):
    pick = int(round(float(status["evolutionary_stage"]) * (len(population) - 1)))
    return [population[pick]] * k
"""

NP_SAMPLER = """
import numpy as np

def selection(population, k=100, status={}):
    idx = np.random.randint(0, len(population), size=k)
    return [population[int(i)] for i in idx]
"""

SURFACE_READER = """
import numpy as np

def selection(population, k=100, status={}):
    def rank(p):
        return (len(p), p.height, float(np.sum((p.y - p.predicted_values) ** 2)))
    return [min(population, key=rank)] * k
"""

MISBEHAVES_BY_K = """
def selection(population, k=100, status={}):
    if k == 1:
        return tuple(population[:1])
    if k == 2:
        return [object(), object()]
    if k == 3:
        return [population[0]] * 2
    if k == 4:
        raise ValueError("deliberate")
    return [population[0]] * k
"""

CHATTY = """
print("loading noise")

def selection(population, k=100, status={}):
    print("call noise", k)
    return [population[0]] * k
"""


def test_template_signature_script_round_trip(tmp_path):
    proc = start(script(tmp_path, ECHO_CYCLE))
    for k in (1, 4, 9):
        response = roundtrip(proc, make_request(n=3, k=k))
        assert response == {"selected_indices": [i % 3 for i in range(k)]}
    rest, code = finish(proc)
    assert rest == "" and code == 0


def test_tournament_script_valid_and_deterministic_across_processes(tmp_path):
    path = script(tmp_path, TOURNAMENT)
    request = make_request(seed=12, n=10, k=100)
    responses = []
    for _ in range(2):
        proc = start(path)
        responses.append(roundtrip(proc, request))
        finish(proc)
    indices = responses[0]["selected_indices"]
    assert len(indices) == 100
    assert all(0 <= i < 10 for i in indices)
    assert responses[0] == responses[1], "same request and seed must replay exactly"


def test_numpy_rng_seeded_from_request_seed(tmp_path):
    proc = start(script(tmp_path, NP_SAMPLER))
    base = make_request(seed=5, n=7, k=12)
    first = roundtrip(proc, base)
    again = roundtrip(proc, base)
    assert first == again, "the host must reseed per request, not per process"
    other = dict(base, seed=6)
    assert roundtrip(proc, other) != first
    finish(proc)


def test_status_dict_reaches_the_script(tmp_path):
    proc = start(script(tmp_path, STATUS_READER))
    early = roundtrip(proc, make_request(n=5, k=2, stage=0.0))
    late = roundtrip(proc, make_request(n=5, k=2, stage=1.0))
    assert early == {"selected_indices": [0, 0]}
    assert late == {"selected_indices": [4, 4]}
    finish(proc)


def test_record_surface_matches_wire_fields(tmp_path):
    request = make_request(seed=21, n=8, cases=5, k=3)
    def rank(entry):
        y = np.asarray(entry["y"])
        pred = np.asarray(entry["predicted_values"])
        return (entry["nodes"], entry["height"], float(np.sum((y - pred) ** 2)))
    expected = min(range(8), key=lambda i: rank(request["population"][i]))
    proc = start(script(tmp_path, SURFACE_READER))
    response = roundtrip(proc, request)
    assert response == {"selected_indices": [expected] * 3}
    finish(proc)


@pytest.mark.parametrize(
    "body",
    [
        "def selection(:\n",               # syntax error
        "x = 1\n",                         # no selection callable
        "selection = 7\n",                 # not callable
        "raise RuntimeError('boom')\n",    # import-time crash
    ],
)
def test_load_failures_report_then_exit_2(tmp_path, body):
    proc = start(script(tmp_path, body))
    line = proc.stdout.readline()
    error = json.loads(line)["error"]
    assert error["type"] == "load_error"
    assert error["message"]
    rest, code = finish(proc)
    assert rest == "" and code == 2


def test_missing_script_path_exits_2(tmp_path):
    proc = start(tmp_path / "nowhere.py")
    assert json.loads(proc.stdout.readline())["error"]["type"] == "load_error"
    assert finish(proc)[1] == 2


def test_usage_error_without_argument_exits_2():
    proc = subprocess.Popen(
        HOST, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL, text=True, bufsize=1,
    )
    assert json.loads(proc.stdout.readline())["error"]["type"] == "load_error"
    assert finish(proc)[1] == 2


def test_per_request_failures_leave_the_host_serving(tmp_path):
    proc = start(script(tmp_path, MISBEHAVES_BY_K))
    reasons = {}
    for k in (1, 2, 3, 4):
        response = roundtrip(proc, make_request(n=6, k=k))
        reasons[k] = response["error"]["type"]
    assert reasons == {1: "bad_output", 2: "bad_output", 3: "bad_output",
                       4: "runtime_error"}
    healthy = roundtrip(proc, make_request(n=6, k=5))
    assert healthy == {"selected_indices": [0] * 5}
    rest, code = finish(proc)
    assert rest == "" and code == 0


def test_malformed_request_line_gets_error_response(tmp_path):
    proc = start(script(tmp_path, ECHO_CYCLE))
    proc.stdin.write("this is not json\n")
    proc.stdin.flush()
    assert json.loads(proc.stdout.readline())["error"]["type"] == "runtime_error"
    assert roundtrip(proc, make_request(n=3, k=2)) == {"selected_indices": [0, 1]}
    finish(proc)


def test_blank_lines_are_ignored(tmp_path):
    proc = start(script(tmp_path, ECHO_CYCLE))
    proc.stdin.write("\n   \n")
    proc.stdin.flush()
    assert roundtrip(proc, make_request(n=3, k=2)) == {"selected_indices": [0, 1]}
    rest, code = finish(proc)
    assert rest == "" and code == 0


def test_stdout_carries_only_protocol_lines(tmp_path):
    proc = start(script(tmp_path, CHATTY))
    for _ in range(5):
        proc.stdin.write(json.dumps(make_request(n=4, k=2)) + "\n")
    proc.stdin.flush()
    proc.stdin.close()
    lines = proc.stdout.read().splitlines()
    assert proc.wait(timeout=10) == 0
    assert len(lines) == 5
    for line in lines:
        assert json.loads(line) == {"selected_indices": [0, 0]}


def test_reference_script_lookup():
    path = reference_script("topk_mean_error")
    assert path.endswith("topk_mean_error.py")
    with pytest.raises(KeyError):
        reference_script("no_such_script")


def test_reference_topk_matches_independent_ranking():
    request = make_request(seed=9, n=5, cases=3, k=8)
    means = [float(np.mean(p["case_values"])) for p in request["population"]]
    # duplicate a mean so the stable tie rule is actually exercised
    request["population"][3]["case_values"] = list(request["population"][1]["case_values"])
    means[3] = means[1]
    ranked = sorted(range(5), key=means.__getitem__)  # python sort is stable
    expected = [ranked[i % 5] for i in range(8)]
    proc = start(reference_script("topk_mean_error"))
    response = roundtrip(proc, request)
    assert response == {"selected_indices": expected}
    rest, code = finish(proc)
    assert rest == "" and code == 0
