"""Min-max receiver from the DC program against maximum-ratio combining."""
import numpy as np

from gpfl.receiver import design_receiver, minmax_objective, mrc_baseline

rng = np.random.default_rng(0)
print(f"{'K':>2s} {'dc':>10s} {'mrc':>10s} {'gain':>6s} {'iters':>5s}")
for K in (1, 2, 4, 8, 16):
    h = (rng.standard_normal((K, 5)) + 1j * rng.standard_normal((K, 5))) / np.sqrt(2)
    D = rng.integers(20, 200, K).astype(float)
    out = design_receiver(h, D)
    mrc = minmax_objective(mrc_baseline(h), h, D)
    print(f"{K:2d} {out.objective:10.1f} {mrc:10.1f} {mrc / out.objective:6.2f} {out.iterations:5d}")
