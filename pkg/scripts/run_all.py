"""Run every bundled experiment config, writing results under runs/.

    python3 scripts/run_all.py [--threads N] [--only NAME ...]
"""

import argparse
import sys
import time
from pathlib import Path

from discrete_langevin.cli import main as dlp

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--only", nargs="*", help="config stems to run, e.g. ising_flips")
    p.add_argument("--out-root", default=str(ROOT / "runs"))
    args = p.parse_args()

    worst = 0
    for cfg in sorted((ROOT / "configs").glob("*.yaml")):
        if cfg.stem.startswith("oracle") or (args.only and cfg.stem not in args.only):
            continue
        print(f"== {cfg.stem}", flush=True)
        t0 = time.perf_counter()
        code = dlp(["run", str(cfg), "--threads", str(args.threads),
                    "--out-dir", str(Path(args.out_root) / cfg.stem)])
        print(f"   exit {code} in {time.perf_counter() - t0:.1f}s", flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
