"""Observed distance to the optimum vs the closed-form bound on the quadratic benchmark."""
import numpy as np

from gpfl import analysis, engine, loss_model

cfg = engine.RunConfig(m=20, K=10, T=20, scheduler="full")
runs = []
for seed in range(5):
    world = engine.quadratic_world(cfg, seed)
    runs.append((world, engine.run_method(world, "gpfl")))

delta = max(np.nanmax(m.column("delta_probe")) for _, m in runs)
obs = np.array([m.column("dist_to_opt") for _, m in runs]).mean(axis=0)
bounds = []
for world, m in runs:
    g0 = np.linalg.norm(loss_model.global_gradient(world.specs, world.weights, np.zeros(world.dim)))
    inp = analysis.inputs_from_metrics(m, world.consts, g0, delta=delta,
                                       D_total=world.sizes.sum(), noise_dim=world.dim)
    bounds.append(analysis.bound_trace(inp, cfg.T, obs[0]))
bound = np.mean([b.bound for b in bounds], axis=0)

tr = bounds[0]
print(f"delta = {delta:.3f}  mu = {tr.mu:.3f}  t0 = {tr.t0}  gamma = {tr.gamma:.3f}")
print(f"{'t':>3s} {'observed':>10s} {'bound':>10s}")
for t in range(cfg.T + 1):
    print(f"{t:3d} {obs[t]:10.4f} {bound[t]:10.4f}")
