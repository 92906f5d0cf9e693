"""Run the whole pipeline on a small cohort and print the decoding summary.

Usage: ``python demos/desk_run.py OUT_DIR``. Takes about half a minute.
"""
import sys
from pathlib import Path

from tmrkit import io as tio
from tmrkit import pipeline as pl

SMALL = {
    "master_seed": 1,
    "simulation": {"cohort": {"n_per_group": 2}, "hypnogram": {"duration_epochs": 240}},
    "decoding": {"n_surrogates": 20, "n_permutations": 200, "blocks": ["sw"],
                 "max_trials_per_class": 30},
    "conditions": ["All"],
}


def main(out: str) -> None:
    pl.run_all(pl.RunConfig.from_dict(SMALL), out, force=True)
    summary = tio.read_json(f"{out}/analysis/summary.json")
    for name, stats in summary["conditions"]["All"]["group_stats"].items():
        print(f"{name:>16}: ANOVA F = {stats['anova']['between']['F']:.2f}, "
              f"p = {stats['anova']['between']['p']:.3g}")
    for cond, v in tio.read_json(f"{out}/decoding/summary.json").items():
        for block, res in v["blocks"].items():
            spans = [f"{c['start_s']:.2f}-{c['stop_s']:.2f} s"
                     for c in res["significant_clusters"]]
            print(f"{cond}/{block}: peak accuracy {res['peak_accuracy']:.3f} at "
                  f"{res['peak_time_s']:.2f} s, clusters {spans or 'none'}")
    print(f"manifest problems: {pl.Manifest(Path(out)).verify() or 'none'}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "desk_run")
