"""Cross-process conformance for the stdio prediction server.

Drives the Node server in bridge/ with the reference client: a barrage
of randomized predict round-trips, then malformed-line fuzz through raw
pipes. Skipped when node or the built server is missing; nothing else
in the suite depends on this component.
"""

import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from segrefine.bridge_client import BridgeSegmentor
from segrefine.masks import Image
from segrefine.points import PromptPoint, PromptSet

BRIDGE_MAIN = Path(__file__).resolve().parents[1] / "bridge" / "dist" / "main.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not BRIDGE_MAIN.exists(),
    reason="bridge server not built (needs node and bridge/dist/main.js)",
)


def _report(name: str, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    assert ok, line


def _server_command():
    return ["node", str(BRIDGE_MAIN), "--transport", "stdio", "--model", "echo"]


def _random_prompts(rng, w: int, h: int) -> PromptSet:
    pts = [PromptPoint(float(rng.uniform(0, w - 1)), float(rng.uniform(0, h - 1)), True)]
    for _ in range(int(rng.integers(0, 3))):
        pts.append(
            PromptPoint(
                float(rng.uniform(0, w - 1)),
                float(rng.uniform(0, h - 1)),
                bool(rng.integers(0, 2)),
            )
        )
    return PromptSet(tuple(pts))


def _garbage_lines(rng, n: int) -> list:
    """Non-blank lines that are not well-formed request objects."""
    handcrafted = [
        '{"id": 1, "op": "predict"',
        '{"op": "predict", "image": null, "points": null}',
        '{"op": "predict", "image": {"w": 4, "h": 4, "enc": "b64f32", "data": "%%%"}, "points": []}',
        '{"op": "predict", "image": {"w": -1, "h": 2, "enc": "b64f32", "data": ""}, "points": []}',
        '{"op": "predict", "image": {"w": 2, "h": 2, "enc": "rle", "data": ""}, "points": []}',
        '{"op": "resize", "id": 2}',
        '{"id": "three", "op": []}',
        "[1, 2, 3]",
        '"just a string"',
        "nul",
    ]
    alphabet = np.array(list('{}[]":,abcdefgh0123456789 \\'))
    lines = list(handcrafted)
    while len(lines) < n:
        length = int(rng.integers(1, 60))
        line = "".join(rng.choice(alphabet, size=length))
        if line.strip() == "":
            continue
        try:
            parsed = json.loads(line)
        except json.JSONDecodeError:
            lines.append(line)
            continue
        # A parseable dict could be a legal request; keep only clearly
        # malformed payloads so every answer must be ok:false.
        if not isinstance(parsed, dict):
            lines.append(line)
    return lines[:n]


def test_bridge_conformance():
    rng = np.random.default_rng(20260817)
    problems = []

    rounds = 500
    with BridgeSegmentor.spawn_stdio(_server_command()) as seg:
        if seg.name != "bridge:echo" or not seg.version:
            problems.append(f"handshake reported {seg.name!r} {seg.version!r}")
        for i in range(rounds):
            w = int(rng.integers(4, 49))
            h = int(rng.integers(4, 49))
            image = Image(rng.random((h, w)))
            prompts = _random_prompts(rng, w, h)
            mask = seg.predict(image, prompts)
            if mask.values.shape != (h, w):
                problems.append(f"round {i}: mask shape {mask.values.shape} != {(h, w)}")
                break
            if mask.values.min() < 0.0 or mask.values.max() > 1.0:
                problems.append(f"round {i}: mask values escape [0, 1]")
                break
            peak_y, peak_x = np.unravel_index(int(np.argmax(mask.values)), mask.values.shape)
            first = prompts[0]
            if abs(peak_x - first.x) > 1.0 or abs(peak_y - first.y) > 1.0:
                problems.append(f"round {i}: peak ({peak_x}, {peak_y}) far from ({first.x}, {first.y})")
                break

    fuzz_n = 100
    proc = subprocess.Popen(
        _server_command(),
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
        bufsize=1,
    )
    try:
        for i, line in enumerate(_garbage_lines(rng, fuzz_n)):
            proc.stdin.write(line + "\n")
            proc.stdin.flush()
            answer = proc.stdout.readline()
            if answer == "":
                problems.append(f"fuzz {i}: server stopped answering")
                break
            try:
                response = json.loads(answer)
            except json.JSONDecodeError:
                problems.append(f"fuzz {i}: unparseable response {answer!r}")
                break
            if response.get("ok") is not False:
                problems.append(f"fuzz {i}: malformed line answered {response}")
                break
        else:
            # The session must still serve real requests after the barrage.
            proc.stdin.write(json.dumps({"id": 9001, "op": "hello"}) + "\n")
            proc.stdin.flush()
            revival = json.loads(proc.stdout.readline())
            if revival.get("ok") is not True or revival.get("id") != 9001:
                problems.append(f"post-fuzz hello answered {revival}")
        proc.stdin.close()
        code = proc.wait(timeout=10)
        if code != 0:
            problems.append(f"server exited with code {code}")
    finally:
        if proc.poll() is None:
            proc.kill()

    _report(
        "bridge-conformance",
        not problems,
        problems[0]
        if problems
        else f"{rounds} randomized round-trips validated; {fuzz_n} fuzz lines answered without a crash",
    )
