"""Acceptance: 200 generated values survive an identity round-trip through
a real worker process without loss."""
import json
import random
import string
import subprocess
import sys
import time


def generated_value(rng: random.Random, depth: int = 0):
    kinds = ["null", "bool", "number", "string"]
    if depth < 3:
        kinds += ["list", "map"]
    kind = rng.choice(kinds)
    if kind == "null":
        return None
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "number":
        return rng.choice([
            0.0, -0.0, 1.0, -1.5, 1e-9, 1e12, float(rng.randint(-2**53, 2**53)),
            rng.uniform(-1e6, 1e6),
        ])
    if kind == "string":
        alphabet = string.printable + "πλ∂✓\n\t\"\\"
        return "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
    if kind == "list":
        return [generated_value(rng, depth + 1) for _ in range(rng.randint(0, 4))]
    return {f"k{i}_{rng.randint(0, 9)}": generated_value(rng, depth + 1)
            for i in range(rng.randint(0, 4))}


def test_worker_protocol_echo_lossless(tmp_path):
    started = time.perf_counter()
    funcs = tmp_path / "funcs"
    funcs.mkdir()
    (funcs / "identity.py").write_text("def identity(value):\n    return value\n")
    proc = subprocess.Popen(
        [sys.executable, "-m", "leap_worker", "--funcs", str(funcs)],
        stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    try:
        rng = random.Random(20260809)
        for rid in range(1, 201):
            value = generated_value(rng)
            frame = {"id": rid, "op": "invoke", "function": "identity",
                     "args": [value], "kwargs": {}}
            proc.stdin.write(json.dumps(frame).encode("utf-8") + b"\n")
            proc.stdin.flush()
            response = json.loads(proc.stdout.readline())
            assert response["id"] == rid
            assert response["ok"], response
            assert response["result"] == value, f"value {rid} was mangled"
        proc.stdin.write(b'{"id": 999, "op": "shutdown"}\n')
        proc.stdin.flush()
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()
    elapsed = time.perf_counter() - started
    assert elapsed < 15.0
    print(f"ACCEPTANCE worker-protocol-echo: PASS ({elapsed:.1f}s)")
