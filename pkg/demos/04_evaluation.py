"""
Corpus-level evaluation
=======================

End-to-end run of the command-line pipeline on a synthetic corpus:
generate, enhance every pair with both methods, and tabulate RMSE, R^2,
PSNR and SSIM against ground truth.
"""

import csv
import tempfile
from pathlib import Path

from thermforge.cli import main

work = Path(tempfile.mkdtemp(prefix="thermforge-eval-"))

# Same entry point the shell command uses; exit status 0 means success
assert main(["synth", "--out", str(work / "corpus"), "--count", "8", "--seed", "21"]) == 0
assert main(["enhance", "--pairs", str(work / "corpus"), "--out", str(work / "enhanced")]) == 0

for method in ("bilinear", "guided"):
    out = work / f"{method}.csv"
    main(["evaluate", "--candidates", str(work / "enhanced" / method),
          "--truth", str(work / "enhanced" / "truth"), "--out", str(out)])
    mean = list(csv.DictReader(open(out)))[-1]
    print(f"{method:>9}: RMSE {float(mean['rmse_c']):.3f} degC  R^2 {float(mean['r2']):.4f}  "
          f"PSNR {float(mean['psnr_db']):.2f} dB  SSIM {float(mean['ssim']):.4f}")

print(f"\nper-pair tables in {work}")
