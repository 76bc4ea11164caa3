"""Run the three methods on a synthetic logistic task and print final-round medians.

    python demos/compare_methods.py [seeds]
"""
import sys

import numpy as np

from gpfl import engine

seeds = range(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
cfg = engine.RunConfig(P0=0.1, scheduler="full", seeds=tuple(seeds))
rows = {}
for m in engine.run_experiment(cfg):
    last = m.records[-1]
    rows.setdefault(m.method, []).append((last.loss, last.accuracy, last.dist_to_opt))

print(f"{'method':12s} {'loss':>9s} {'acc':>7s} {'dist':>8s}")
for method, vals in rows.items():
    loss, acc, dist = np.median(np.array(vals), axis=0)
    print(f"{method:12s} {loss:9.5f} {acc:7.4f} {dist:8.4f}")
