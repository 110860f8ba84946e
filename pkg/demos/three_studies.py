"""Run the charging-level, solar and degradation studies on the bundled 33-bus feeder.

Each study prints its comparison table and writes per-variant tables, SVG
plots and solution files under the chosen directory.

    python3 demos/three_studies.py [desk|full] [out_dir]
"""

import sys
import time
from pathlib import Path

from evopf.scenarios import PRESETS, STUDIES, RunSettings, StudyInputs, run_study, study_spec, write_study

preset = sys.argv[1] if len(sys.argv) > 1 else "desk"
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_output")
inputs = StudyInputs.load("33bus")

for kind in STUDIES:
    t0 = time.perf_counter()
    study = run_study(study_spec(kind, preset), inputs, RunSettings.for_preset(PRESETS[preset]))
    write_study(study, inputs, out / kind)
    print(f"== {kind} ({preset}, {time.perf_counter() - t0:.1f} s)")
    print(study.table.to_csv())
    for r in study.results:
        if r.ok:
            print(f"  {r.config.name}: peak charging kW per EV {[round(float(v), 1) for v in r.report.max_charging_kw()]}")
        else:
            print(f"  {r.config.name}: {r.error}")
    print()
print(f"tables and plots under {out}/")
