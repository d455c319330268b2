"""
Model files and the command line
================================

The rectifier also ships as a text model file.  The ``piha`` command runs
``simulate``, ``explore``, ``verify`` and ``ingest`` on such files; here
it is driven in-process through ``run_command``.
"""
import json
import tempfile
from pathlib import Path

from piha.cli import run_command
from piha.modelfile import bundled_model_path, load_model_file, serialize

path = bundled_model_path()
m = load_model_file(path)
print(f"{path.name}: {len(m.piha.modes)} modes, {len(m.piha.transitions)} transitions, "
      f"specs {[s.name for s in m.specs]}")
print("serialized form starts with:\n" + "\n".join(serialize(m).splitlines()[:6]))

out = Path(tempfile.mkdtemp())
trace = out / "trace.csv"
print("simulate ->", run_command(["simulate", "--model", str(path), "--out", str(trace)]))
print("ingest   ->", run_command(["ingest", "--fwr", "--trace", str(trace), "--spec", "P1",
                                  "--out", str(out / "labeled.csv")]))
code = run_command(["verify", "--fwr", "--spec", "P2", "--p2-threshold", "4.8", "--out", str(out)])
print("verify   ->", code, json.loads((out / "result.json").read_text()))
