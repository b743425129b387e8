"""Runs the example scenarios through rgma-harness and checks the outputs."""
import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

harness, scenarios = sys.argv[1], Path(sys.argv[2])
failures = []


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "zero"
    r = subprocess.run([harness, "run", str(scenarios / "zero-producer.json"), "--out", str(out), "--window", "2000"],
                       capture_output=True, text=True)
    check(r.returncode == 0, "zero-producer runs")
    snap = json.loads((out / "snapshot.json").read_text())
    early = snap["consumers"]["early"]
    check(early["noProducersAtStart"], "consumer starts with no producers")
    check(len(early["rows"]) == len(snap["acked"]["late"]) > 0, "consumer receives every acked tuple")
    rows = list(csv.DictReader((out / "summary.csv").open()))
    check(any(row["component"] == "late" for row in rows), "summary lists the producer")

    out = Path(tmp) / "kill"
    r = subprocess.run([harness, "run", str(scenarios / "resilient-kill.json"), "--out", str(out), "--window", "4000"],
                       capture_output=True, text=True)
    check(r.returncode == 0, "resilient-kill runs")
    snap = json.loads((out / "snapshot.json").read_text())
    stored = {json.dumps(t) for t in snap["stores"]["sink-db"]["servicestatus"]}
    check(all(json.dumps(t) in stored for t in snap["acked"]["ral-se"]), "sink holds every acked tuple")
    avail = [float(row["availability"]) for row in csv.DictReader((out / "summary.csv").open())
             if row["component"] == "ral-se" and row["availability"]]
    check(min(avail) < 1.0, "the kill shows in availability")

    r = subprocess.run([harness, "summarize", str(out / "monitor.csv"), "--window", "4000"], capture_output=True, text=True)
    check(r.returncode == 0 and r.stdout == (out / "summary.csv").read_text(), "summarize reproduces summary.csv")

    bad = Path(tmp) / "bad.json"
    bad.write_text(json.dumps({"producers": [{"id": "p", "table": "Nope"}]}))
    r = subprocess.run([harness, "run", str(bad), "--out", str(Path(tmp) / "bad")], capture_output=True, text=True)
    check(r.returncode == 2 and "ScenarioError" in r.stderr, "invalid wiring is a ScenarioError")

sys.exit(1 if failures else 0)
