"""Run every shipped config in configs/ and print one line per run.

    python3 scripts/reproduce.py [--only theorem_a] [--out runs]
"""

import argparse
import sys
import time
from pathlib import Path

from maglab.cli import ExperimentConfig, run

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", default="", help="substring filter on config names")
    ap.add_argument("--out", default=None, help="override the output root")
    args = ap.parse_args(argv)
    failed = 0
    for path in sorted((ROOT / "configs").glob("*.json")):
        if args.only not in path.stem:
            continue
        cfg = ExperimentConfig.from_file(path)
        if args.out:
            cfg.output = str(Path(args.out) / path.stem)
        t0 = time.perf_counter()
        rep = run(cfg)
        rep.write(cfg.output)
        status = "REFUSED" if rep.refused else ("PASS" if rep.passed else "FAIL")
        extra = rep.data.get("verdict", "")
        print(f"{path.stem:24s} {status:7s} {len(rep.checks):3d} checks  {time.perf_counter() - t0:7.1f} s  {extra}",
              flush=True)
        failed += rep.exit_code != 0
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
