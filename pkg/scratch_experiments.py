"""Dev scratch: calibrate the desk-scale experiment parameters."""
import time

import numpy as np

from vamplan.grids import Field, constant_field, make_grid
from vamplan.propagation import Propagator, build_matrix, default_sinogram_spec
from vamplan.response import ResponseModel, LINEAR_IDENTITY
from vamplan.loss import ProblemSpec, WeightSchedule, loss
from vamplan.optimizer import FeasibleSet, OptimizerConfig, pgd_step, run
from vamplan.initialization import analytic_init
from vamplan import phantoms, schemes
from vamplan.metrics import error_histogram

t_start = time.time()


def smooth_grayscale(grid, seed=11):
    """Flower-like stand-in: smooth random blobs, well inside (0, 1)."""
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((grid.n_y, grid.n_x))
    from scipy import ndimage
    img = ndimage.gaussian_filter(base, sigma=grid.n_x / 16)
    img = (img - img.min()) / (img.max() - img.min())
    img = 0.1 + 0.8 * img
    return Field(grid, np.broadcast_to(img, grid.shape).copy(), unit="response")


# ---------------- S.13 race: constant vs alternating weights ----------------
print("=== S.13 race ===")
grid = make_grid(128, 128, 1, 1.0 / 128)
spec = default_sinogram_spec(grid, n_theta=180)
prop = Propagator(grid, spec, constant_field(grid, 0.0), constant_field(grid, 1.0))
op = build_matrix(prop)
target = phantoms.binary_gratings(grid)
print(f"target mean {target.values.mean():.3f}")

cw = schemes.osmo_preset(target, 0.8, 0.2, alternating=False)
aw = schemes.osmo_preset(target, 0.8, 0.2, alternating=True)
fs = FeasibleSet()
g0 = analytic_init(cw.problem, op, fs)
f0 = op.backward(g0)
r0 = loss(cw.problem, f0)
print(f"init loss {r0.value:.4g}, viol frac {r0.violation_fraction:.4f}")

t0 = time.time()
iters = 250
rec_cw = run(cw.problem, op, fs, OptimizerConfig(eta=0.5, max_iters=iters, check_convergence=False), g0)
print(f"CW: {rec_cw.termination} after {rec_cw.iterations} steps, final {rec_cw.final_loss:.6g} ({time.time()-t0:.0f}s)")

t0 = time.time()
g_aw = g0
for k in range(iters):
    g_aw, rep = pgd_step(g_aw, aw.problem, op, fs, 0.5, k)
aw_metric = loss(cw.problem, op.backward(g_aw)).value
print(f"AW: 250 steps, CW-metric of final iterate {aw_metric:.6g} ({time.time()-t0:.0f}s)")

hist = np.asarray(rec_cw.loss_history)
reached = np.nonzero(hist <= aw_metric)[0]
if len(reached):
    print(f"CW reaches AW-250 metric at iteration {reached[0]} (ratio {250/max(reached[0],1):.2f})")
else:
    print("CW never reaches AW metric!")

# ---------------- tolerance sweep ----------------
print(f"\n=== tolerance sweep ({time.time()-t_start:.0f}s elapsed) ===")
gray = smooth_grayscale(grid)
model = ResponseModel()
for eta in (5.0, 20.0, 50.0):
    finals = []
    for eps in (0.0, 0.05, 0.1, 0.2):
        pspec = ProblemSpec(target=gray, tolerance=constant_field(grid, eps),
                            weights=WeightSchedule.constant(constant_field(grid, 1.0)),
                            p=2.0, q=1.0, response=model)
        g0 = analytic_init(pspec, op, fs)
        rec = run(pspec, op, fs, OptimizerConfig(eta=eta, max_iters=150), g0)
        finals.append((eps, rec.final_loss, rec.termination, rec.iterations))
    print(f"eta={eta}: " + "; ".join(f"eps={e}: L={l:.4g} {t}@{i}" for e, l, t, i in finals))

# histogram peak check at the best eta (run eps=0.2 and eps=0.1 again)
eta = 20.0
for eps in (0.2, 0.1):
    pspec = ProblemSpec(target=gray, tolerance=constant_field(grid, eps),
                        weights=WeightSchedule.constant(constant_field(grid, 1.0)),
                        p=2.0, q=1.0, response=model)
    g0 = analytic_init(pspec, op, fs)
    rec = run(pspec, op, fs, OptimizerConfig(eta=eta, max_iters=150), g0)
    h = error_histogram(pspec, rec.dose, n_bins=40, value_range=(-eps - 0.1, 0.1))
    centers = 0.5 * (h.bin_edges[:-1] + h.bin_edges[1:])
    inband = centers < 0
    masses = h.masses[inband]
    adj = masses[-1]
    print(f"eps={eps}: {rec.termination}@{rec.iterations} L={rec.final_loss:.4g}; "
          f"bin adjoining 0: {adj:.3g}, max other in-band {masses[:-1].max():.3g}, "
          f"median {np.median(masses):.3g}")

# ---------------- p sweep ----------------
print(f"\n=== p sweep ({time.time()-t_start:.0f}s elapsed) ===")
eps = 0.05
for p_val, etas in [(0.5, (1e-4, 1e-3, 1e-2)), (20.0, (1e3, 1e4, 1e5))]:
    for eta in etas:
        pspec = ProblemSpec(target=gray, tolerance=constant_field(grid, eps),
                            weights=WeightSchedule.constant(constant_field(grid, 1.0)),
                            p=p_val, q=1.0, response=model)
        g0 = analytic_init(pspec, op, fs)
        try:
            rec = run(pspec, op, fs, OptimizerConfig(eta=eta, max_iters=120), g0)
            fr = rec.violation_history[-1]
            print(f"p={p_val} eta={eta:g}: {rec.termination}@{rec.iterations} L={rec.final_loss:.4g} "
                  f"viol_frac {fr:.4f} max_excess {rec.max_excess_history[-1]:.4f}")
        except FloatingPointError as exc:
            print(f"p={p_val} eta={eta:g}: {exc}")

# ---------------- 3D demo ----------------
print(f"\n=== 3D demo ({time.time()-t_start:.0f}s elapsed) ===")
grid3 = make_grid(48, 48, 32, 1.0 / 48)
spec3 = default_sinogram_spec(grid3, n_theta=120)
prop3 = Propagator.with_disk_attenuation(grid3, spec3, alpha=0.001)
op3 = build_matrix(prop3)
t3 = phantoms.binary_3d(grid3)
# clip target into the open response range for the logistic model
t3 = t3.with_values(np.clip(t3.values, 0.02, 0.98))
model3 = ResponseModel(B=25.0)
disk_ind = (prop3.alpha_act.values > 0).astype(float)
pspec3 = ProblemSpec(target=t3, tolerance=constant_field(grid3, 0.1),
                     weights=WeightSchedule.constant(Field(grid3, disk_ind)),
                     p=2.0, q=1.0, response=model3)
t0 = time.time()
g03 = analytic_init(pspec3, op3, fs)
for eta in (1e3, 1e4, 1e5):
    rec3 = run(pspec3, op3, fs, OptimizerConfig(eta=eta, max_iters=110, check_convergence=False), g03)
    d = np.diff(rec3.loss_history[:21])
    print(f"eta={eta:g}: {rec3.termination}@{rec3.iterations} L0={rec3.loss_history[0]:.4g} "
          f"L_end={rec3.final_loss:.4g} monotone20={bool(np.all(d <= 0))} ({time.time()-t0:.0f}s)")
    t0 = time.time()

print(f"\ntotal {time.time()-t_start:.0f}s")
