"""
Pairing low- and high-resolution thermal frames
===============================================

A cheap 160x120 camera and a 640x512 reference camera see the same plot
from slightly different positions. Scale-swept NCC template matching finds
where the high-resolution frame sits inside the low-resolution one, and
pairs that correlate poorly are discarded.
"""

import json
import tempfile
from pathlib import Path

from thermforge.cli import cmd_pair, cmd_synth
from thermforge.config import PipelineConfig

work = Path(tempfile.mkdtemp(prefix="thermforge-pairing-"))
config = PipelineConfig(seed=3)

# Ten constructed scenes plus three decoys whose lo and hi frames are unrelated
cmd_synth(config, work / "corpus", count=10, decoys=3)
manifest = json.loads((work / "corpus" / "manifest.json").read_text())

# Frames are associated by timestamp, then matched over the scale sweep
print("scales:", ", ".join(f"{s:.4f}" for s in config.scales))
cmd_pair(work / "corpus" / "lo", work / "corpus" / "hi", work / "corpus" / "rgb", config, work / "pairs")
summary = json.loads((work / "pairs" / "summary.json").read_text())

truth = {s["lo"]: tuple(s["true_offset"]) for s in manifest["scenes"]}
print("\nlo frame              found     truth     scale   ncc")
for a in summary["accepted"]:
    m = a["match"]
    print(f"{a['lo']:<20}  {(m['x_star'], m['y_star'])!s:<8}  {truth[a['lo']]!s:<8}  {m['scale']:.4f}  {m['score']:.3f}")
for r in summary["rejected"]:
    print(f"{r['lo']:<20}  rejected (ncc {r['score']:.3f})")
print(f"\nacceptance rate {summary['acceptance_rate']:.2f}; crops written under {work / 'pairs'}")
