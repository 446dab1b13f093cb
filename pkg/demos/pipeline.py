"""Generate a synthetic portfolio, run the whole pipeline and print the report.

Run with ``python demos/pipeline.py [out_dir]``. The default generator
settings take roughly half a minute; pass ``--small`` for a quick look.
"""

import sys
from pathlib import Path

from lendgraph.cli import PipelineConfig, render_report, report_ladder, run_pipeline

args = [a for a in sys.argv[1:] if not a.startswith("--")]
out = Path(args[0] if args else "demo_run")
small = "--small" in sys.argv
cfg = PipelineConfig(out_dir=str(out), seed=0,
                     simulate={"n_borrowers": 200, "n_contacts": 5000} if small else None,
                     perturb_trials=20 if small else 100)
manifest = run_pipeline(cfg)
print(f"status {manifest['status']}; row counts {manifest['row_counts']}")
print()
print(render_report(report_ladder(out)), end="")
