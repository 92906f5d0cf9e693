"""Schedule one simulated night under each stimulation policy.

Run with ``python demos/schedule_night.py [seed]``.
"""
import sys

from tmrkit import scheduler as sch
from tmrkit import sim
from tmrkit.core import score_architecture


def main(seed: int = 0) -> None:
    hyp = sim.gen_hypnogram(sim.HypnogramModel(duration_epochs=960, seed=seed))
    arch = score_architecture(hyp)
    print(f"night of {len(hyp)} epochs: TST {arch.tst_min:.0f} min, efficiency "
          f"{arch.se_pct:.1f}%, N2 {arch.stage_min['N2']:.0f} min, N3 {arch.stage_min['N3']:.0f} min")
    pre, _ = sim.gen_behavior(sim.CohortSpec(), seed, "PTMR")
    for name in ("nostim", "fixed", "personalized"):
        plan = sch.compile_plan(sch.Policy.parse(name), pre, seed)
        log = sch.run(hyp, plan)
        first = f"{log.events[0].onset_ms / 60000:.1f} min" if len(log) else "-"
        print(f"{name:>12}: {len(plan):3d} blocks, {plan.cues_per_pass:3d} cues per pass, "
              f"{len(log):4d} cues delivered, first at {first}")
        if len(log):
            print(f"{'':>14}per level {log.summary.get('per_level')}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
