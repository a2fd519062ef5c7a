"""Inside C-MASS: how utilities and per-object indicators evolve while driving."""
from collections import Counter

from cpsim.config import ExperimentConfig
from cpsim.engine import Simulation
from cpsim.scheduling import cmass_scores

cfg = ExperimentConfig().with_overrides({"policy.name": "cmass", "n_select": 4, "seed": 2})
sim = Simulation(cfg)

picks = Counter()
for t in range(300):
    log = sim.step()
    picks.update(log.decision.selected)
    if t % 60 == 0:
        kb = sim.kb
        print(f"frame {t:3d}: selected {log.decision.selected}, delivered {log.delivered}, "
              f"loss {log.loss:.2f}, agents known {len(kb.records)}")

kb = sim.kb
print("\nmost scheduled:", picks.most_common(5))
top = sorted(kb.records.values(), key=lambda r: -r.u_hat)[:5]
for r in top:
    print(f"agent {r.agent}: last utility {r.u_hat:.2f} at frame {r.tau}, scheduled {r.times_scheduled}x, "
          f"{len(kb.active_p_hat(r.agent, sim.world.frame_index))} live indicators")
