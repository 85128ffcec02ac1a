"""Smoke test for the costudy Python extension.

Builds the extension with cargo, loads it from a temporary directory and runs
a short session end to end. Exits non-zero on the first failure.

    python3 python/smoke_test.py [--release] [--skip-build]
"""

import argparse
import importlib
import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

VTT = """WEBVTT

00:00.000 --> 00:06.000
Today we look at bubble sort.

00:06.000 --> 00:14.000
Each pass compares neighbours and swaps them when they are out of order.
"""


def build(release: bool) -> Path:
    cmd = ["cargo", "build", "-p", "costudy-py", "--features", "extension-module"]
    if release:
        cmd.append("--release")
    subprocess.run(cmd, cwd=ROOT, check=True)
    profile = "release" if release else "debug"
    for name in ("libcostudy.so", "libcostudy.dylib", "costudy.dll"):
        path = ROOT / "target" / profile / name
        if path.exists():
            return path
    sys.exit(f"extension not found under target/{profile}")


def load(library: Path):
    workdir = Path(tempfile.mkdtemp(prefix="costudy-py-"))
    suffix = ".pyd" if library.suffix == ".dll" else ".so"
    shutil.copy(library, workdir / f"costudy{suffix}")
    sys.path.insert(0, str(workdir))
    return importlib.import_module("costudy")


def chat(room, text):
    return {"kind": "user_chat", "data": {"room": room, "text": text}}


def run(costudy):
    cues = costudy.parse_transcript(VTT)
    assert cues[0] == (0, 6000, "Today we look at bubble sort."), cues

    assert costudy.parse_action_tag("<explaining> Look at the inner loop.") == (
        "explaining",
        "Look at the inner loop.",
    )
    assert costudy.parse_action_tag("no tag here") == ("chatting", "no tag here")
    try:
        costudy.parse_action_tag("<explaining>   ")
    except costudy.InvalidInput:
        pass
    else:
        raise AssertionError("empty reply accepted")

    draws = costudy.next_passive_transition(7, count=50)
    assert draws == costudy.next_passive_transition(7, count=50)
    assert all(90_000 <= delay <= 180_000 for delay, _ in draws), draws
    assert costudy.continuing_ms(1) == 3_000
    assert costudy.continuing_ms(10_000) == 60_000

    session = costudy.Session(VTT, seed=1, mode="full")
    assert session.mode == "full"
    first = session.ingest(1_000, chat("agent-1", "Why do we need two loops?"))
    assert first == 1
    session.ingest(2_000, json.dumps(chat("group", "Is bubble sort stable?")))
    session.advance(120_000)
    assert session.clock_ms == 120_000

    events = session.events()
    assert [e["seq"] for e in events] == list(range(1, session.last_seq + 1))
    kinds = {e["kind"] for e in events}
    assert "agent_chat" in kinds, kinds

    counters = session.record_usage("brush")
    assert counters["brush_uses"] == 1, counters
    snapshot = session.snapshot()
    assert snapshot["last_seq"] == session.last_seq

    try:
        session.ingest(130_000, chat("agent-9", "hello?"))
    except costudy.InvalidInput:
        pass
    else:
        raise AssertionError("unknown agent accepted")
    try:
        session.ingest(1_500, chat("group", "back in time"))
    except costudy.CostudyError:
        pass
    else:
        raise AssertionError("clock regression accepted")

    log = session.export_log()
    replayed = costudy.Session.replay(VTT, log, seed=1, mode="full")
    assert replayed.export_log() == log, "replay diverged"

    baseline = costudy.Session(VTT, seed=1, mode="baseline")
    baseline.ingest(1_000, chat("agent-1", "Why do we need two loops?"))
    baseline.advance(600_000)
    assert not any(e["kind"].startswith("agent_") for e in baseline.events())

    print(f"ok: {len(events)} events, replay identical, {repr(session)}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--release", action="store_true")
    parser.add_argument("--skip-build", action="store_true")
    args = parser.parse_args()
    profile = "release" if args.release else "debug"
    library = ROOT / "target" / profile / "libcostudy.so" if args.skip_build else build(args.release)
    run(load(library))


if __name__ == "__main__":
    main()
