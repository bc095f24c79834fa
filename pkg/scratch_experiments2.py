"""Dev scratch round 2: Nyquist-satisfying angles, raw-target init."""
import time

import numpy as np
from scipy import ndimage

from vamplan.grids import Field, constant_field, make_grid
from vamplan.propagation import Propagator, build_matrix, SinogramSpec
from vamplan.response import ResponseModel
from vamplan.loss import ProblemSpec, WeightSchedule, loss
from vamplan.optimizer import FeasibleSet, OptimizerConfig, pgd_step, run
from vamplan.initialization import analytic_init
from vamplan import phantoms, schemes

t_start = time.time()


def smooth_grayscale(grid, seed=11):
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((grid.n_y, grid.n_x))
    img = ndimage.gaussian_filter(base, sigma=grid.n_x / 16)
    img = (img - img.min()) / (img.max() - img.min())
    img = 0.1 + 0.8 * img
    return Field(grid, np.broadcast_to(img, grid.shape).copy(), unit="response")


grid = make_grid(128, 128, 1, 1.0 / 128)
spec = SinogramSpec.uniform(128, 202, 1, grid.extent_x, coverage_deg=180.0)
prop = Propagator(grid, spec, constant_field(grid, 0.0), constant_field(grid, 1.0))
op = build_matrix(prop)
fs = FeasibleSet()
model = ResponseModel()

# ---------------- tolerance sweep with good sampling ----------------
print("=== tolerance sweep (202 angles / 180deg) ===")
gray = smooth_grayscale(grid)
for eta in (100.0, 500.0, 2000.0):
    finals = []
    for eps in (0.0, 0.05, 0.1, 0.2):
        pspec = ProblemSpec(target=gray, tolerance=constant_field(grid, eps),
                            weights=WeightSchedule.constant(constant_field(grid, 1.0)),
                            p=2.0, q=1.0, response=model)
        g0 = analytic_init(gray, pspec, op, fs)
        rec = run(pspec, op, fs, OptimizerConfig(eta=eta, max_iters=200), g0)
        finals.append((eps, rec.final_loss, rec.termination, rec.iterations))
    print(f"eta={eta}: " + "; ".join(f"eps={e}: L={l:.4g} {t}@{i}" for e, l, t, i in finals))

# trajectory detail for one eta
pspec = ProblemSpec(target=gray, tolerance=constant_field(grid, 0.2),
                    weights=WeightSchedule.constant(constant_field(grid, 1.0)),
                    p=2.0, q=1.0, response=model)
g0 = analytic_init(gray, pspec, op, fs)
rec = run(pspec, op, fs, OptimizerConfig(eta=500.0, max_iters=200), g0)
print("eps=0.2 eta=500 loss trajectory:", [f"{x:.3g}" for x in rec.loss_history[:12]], "...",
      f"{rec.final_loss:.3g} ({rec.termination}@{rec.iterations})")

# ---------------- p sweep ----------------
print(f"\n=== p sweep ({time.time()-t_start:.0f}s) ===")
eps = 0.05
results = {}
for p_val, etas in [(0.5, (0.01, 0.1, 1.0)), (20.0, (1e4, 1e6, 1e8))]:
    for eta in etas:
        pspec = ProblemSpec(target=gray, tolerance=constant_field(grid, eps),
                            weights=WeightSchedule.constant(constant_field(grid, 1.0)),
                            p=p_val, q=1.0, response=model)
        g0 = analytic_init(gray, pspec, op, fs)
        try:
            rec = run(pspec, op, fs, OptimizerConfig(eta=eta, max_iters=200), g0)
            inband = 1.0 - rec.violation_history[-1]
            print(f"p={p_val} eta={eta:g}: {rec.termination}@{rec.iterations} L={rec.final_loss:.4g} "
                  f"inband {inband:.4f} max_excess {rec.max_excess_history[-1]:.4f}")
            results[(p_val, eta)] = (inband, rec.max_excess_history[-1])
        except FloatingPointError as exc:
            print(f"p={p_val} eta={eta:g}: {exc}")

# ---------------- S.13 race with raw-target init ----------------
print(f"\n=== S.13 race, 180 angles / 180 deg ({time.time()-t_start:.0f}s) ===")
spec13 = SinogramSpec.uniform(128, 180, 1, grid.extent_x, coverage_deg=180.0)
prop13 = Propagator(grid, spec13, constant_field(grid, 0.0), constant_field(grid, 1.0))
op13 = build_matrix(prop13)
target = phantoms.binary_gratings(grid)
cw = schemes.osmo_preset(target, 0.8, 0.2, alternating=False)
aw = schemes.osmo_preset(target, 0.8, 0.2, alternating=True)
g0 = analytic_init(target, cw.problem, op13, fs)
r0 = loss(cw.problem, op13.backward(g0))
print(f"init loss {r0.value:.4g}, viol frac {r0.violation_fraction:.4f}")

iters = 250
rec_cw = run(cw.problem, op13, fs, OptimizerConfig(eta=0.5, max_iters=iters, check_convergence=False), g0)
print(f"CW: {rec_cw.termination}@{rec_cw.iterations}, final {rec_cw.final_loss:.6g}")
g_aw = g0
for k in range(iters):
    g_aw, _ = pgd_step(g_aw, aw.problem, op13, fs, 0.5, k)
aw_metric = loss(cw.problem, op13.backward(g_aw)).value
print(f"AW 250-step CW-metric: {aw_metric:.6g}")
hist = np.asarray(rec_cw.loss_history)
reached = np.nonzero(hist <= aw_metric)[0]
print(f"CW reaches it at iter {reached[0] if len(reached) else 'never'}"
      + (f" (ratio {250/max(reached[0],1):.2f})" if len(reached) else ""))

print(f"\ntotal {time.time()-t_start:.0f}s")
