"""What a CoV sends: its detections ranked by confidence x importance, cut to what the link carries."""
import numpy as np

from cpsim.config import ExperimentConfig
from cpsim.metrics import frame_metrics
from cpsim.perception import build_topology, fuse, ground_truth, rank_and_truncate
from cpsim.world import build_scenario, candidates_in_range, step_world

cfg = ExperimentConfig()
pp = cfg.perception
w = build_scenario(cfg.scenario, seed=4)
for _ in range(50):
    w = step_world(w)

gt = ground_truth(w, pp)
cov = candidates_in_range(w)[0]
topo = build_topology(w, pp, [w.ego_id, cov], list(gt))
rng = np.random.default_rng(1)
det = rng.random(topo.detect_prob.shape) < topo.detect_prob
ego = frozenset(topo.objects[det[0]].tolist())
mine = frozenset(topo.objects[det[1]].tolist())
conf = dict(zip(topo.objects.tolist(), topo.detect_prob[1]))

print(f"{len(gt)} objects around the ego; ego detects {len(ego)}, CoV {cov} detects {len(mine)}")
print(f"CoV sees {len(mine - ego)} objects the ego missed")
alone = frame_metrics(gt, ego)
print(f"stand-alone: loss {alone.loss:.2f}, recall {alone.recall:.2f}")
for k in (1, 2, 4, 8, 16):
    packets = rank_and_truncate(mine, gt, conf, rate=0, tx_budget=pp.tx_budget, s_rfm=pp.s_rfm, origin=cov, k=k)
    m = frame_metrics(gt, fuse(ego, [packets]))
    new = sum(1 for pk in packets if pk.object_id not in ego)
    print(f"K={k:2d}: {new} of {len(packets)} packets new to the ego -> loss {m.loss:.2f}, recall {m.recall:.2f}")
