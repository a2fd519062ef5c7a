"""Loss vs number of selected CoVs for the six schedulers (short runs; see the acceptance suite for the full sweep)."""
import time

from cpsim.config import ExperimentConfig
from cpsim.engine import run_experiment

FRAMES = 600
base = ExperimentConfig().with_overrides({"frames": FRAMES, "seed": 0})

alone = run_experiment(base.with_overrides({"n_select": 0}))
print(f"stand-alone: loss {alone.mean_loss:.3f} recall {alone.mean_recall:.3f}")

every = run_experiment(base.with_overrides({"policy.name": "all"}))
print(f"all candidates: loss {every.mean_loss:.3f} recall {every.mean_recall:.3f}")

print("policy     " + " ".join(f"N={n:<5d}" for n in (1, 2, 4, 6, 8)))
for policy in ("closest", "coverage", "etc", "mass", "cmass"):
    t0 = time.perf_counter()
    losses = [run_experiment(base.with_overrides({"policy.name": policy, "n_select": n})).mean_loss
              for n in (1, 2, 4, 6, 8)]
    print(f"{policy:10s} " + " ".join(f"{x:7.3f}" for x in losses) + f"   ({time.perf_counter() - t0:.1f}s)")

# Same seed means same world, channels and detections for every policy,
# so the differences above come from who was asked, not from luck.
