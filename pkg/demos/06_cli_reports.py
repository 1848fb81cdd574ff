"""
Driving everything from the command line
========================================

The package ships a `simspec` entry point with three commands.
`analyze` runs a pipeline (picked automatically unless pinned) and
writes a JSON report plus optional CSV series and an SVG scatter;
`split` certifies a single eigenvalue; `verify` runs the internal
cross-check battery.  Reports are byte-identical across repeated runs
of the same configuration.

This script drives the same entry point in-process.
"""

import json
import pathlib
import tempfile

from simspec.cli import main

work = pathlib.Path(tempfile.mkdtemp(prefix="simspec-demo-"))
cfg_dir = pathlib.Path(__file__).resolve().parent / "configs"

# -- analyze with CSV and SVG outputs ---------------------------------------------

out1 = work / "analyze"
code = main(["analyze", "--config", str(cfg_dir / "kernel_window.json"),
             "--out", str(out1)])
print(f"\nanalyze exit code {code}")
report = json.loads((out1 / "report.json").read_text())
print(f"pipeline {report['pipeline']} (requested {report['pipeline_requested']})")
print(f"gates: " + ", ".join(
    f"{k}={'ok' if g['satisfied'] else 'FAIL'}"
    for k, g in sorted(report["invariant_gates"].items())))
print("files:", sorted(p.name for p in out1.rglob("*") if p.is_file()))

# -- split against the reference numbers -------------------------------------------

out2 = work / "split"
code = main(["split", "--config", str(cfg_dir / "kernel_sum.json"),
             "--out", str(out2)])
print(f"\nsplit exit code {code}")
rep = json.loads((out2 / "report.json").read_text())
pb = rep["published_bounds"]
print(f"closed-form radii: bound_e {pb['bound_e']:.6f}, "
      f"bound_b2 {pb['bound_b2']:.6f}")
print(f"oracle deviation {rep['oracle']['deviation']:.2e}")

# -- the verification battery --------------------------------------------------------

out3 = work / "verify"
code = main(["verify", "--out", str(out3), "--seed", "11"])
print(f"\nverify exit code {code}")
