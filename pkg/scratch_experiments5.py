"""Dev scratch round 5: make eps=0.1 infeasible while eps=0.2 zeroes."""
import time

import numpy as np
from scipy import ndimage

from vamplan.grids import Field, constant_field, make_grid, inscribed_disk_mask
from vamplan.propagation import Propagator, build_matrix, SinogramSpec
from vamplan.response import ResponseModel
from vamplan.loss import ProblemSpec, WeightSchedule
from vamplan.optimizer import FeasibleSet, OptimizerConfig, run
from vamplan.initialization import analytic_init
from vamplan.metrics import error_histogram

t_start = time.time()
grid = make_grid(128, 128, 1, 1.0 / 128)
fs = FeasibleSet()
model = ResponseModel()
disk_w = inscribed_disk_mask(grid)
inside = disk_w.values > 0


def target_with_noise(seed=11, lo=0.15, hi=0.85, texture=0.2, noise=0.0):
    rng = np.random.default_rng(seed)
    coarse = ndimage.gaussian_filter(rng.standard_normal((grid.n_y, grid.n_x)), sigma=grid.n_x / 16)
    fine = ndimage.gaussian_filter(rng.standard_normal((grid.n_y, grid.n_x)), sigma=grid.n_x / 64)
    img = coarse / np.abs(coarse).max() + texture * fine / np.abs(fine).max()
    img = (img - img.min()) / (img.max() - img.min())
    img = lo + (hi - lo) * img
    if noise:
        img = img + noise * (rng.random((grid.n_y, grid.n_x)) - 0.5)
        img = np.clip(img, 0.05, 0.95)
    return Field(grid, np.broadcast_to(img, grid.shape).copy(), unit="response")


def sweep(n_theta, noise, eta, iters=300):
    spec = SinogramSpec.uniform(128, n_theta, 1, grid.extent_x, coverage_deg=180.0)
    prop = Propagator.with_disk_attenuation(grid, spec, alpha=0.001)
    op = build_matrix(prop)
    gray = target_with_noise(noise=noise)
    finals = []
    recs = {}
    for eps in (0.0, 0.05, 0.1, 0.2):
        pspec = ProblemSpec(target=gray, tolerance=constant_field(grid, eps),
                            weights=WeightSchedule.constant(disk_w), p=2.0, q=1.0, response=model)
        g0 = analytic_init(gray, pspec, op, fs)
        rec = run(pspec, op, fs, OptimizerConfig(eta=eta, max_iters=iters), g0)
        finals.append((eps, rec.final_loss, rec.termination, rec.iterations))
        recs[eps] = (pspec, rec)
    dec = all(finals[i][1] > finals[i + 1][1] for i in range(3))
    print(f"ntheta={n_theta} noise={noise} eta={eta:g}: "
          + "; ".join(f"e={e}: {l:.4g} {t[:4]}@{i}" for e, l, t, i in finals)
          + f"  dec={dec} zero@0.2={finals[3][1] == 0.0}")
    return recs


for n_theta, noise, eta in [
    (202, 0.12, 200.0),
    (202, 0.12, 500.0),
    (202, 0.2, 500.0),
    (120, 0.0, 500.0),
    (120, 0.12, 200.0),
]:
    recs = sweep(n_theta, noise, eta)
    # histogram profile near the edge for eps=0.2 and 0.1
    for eps in (0.2, 0.1):
        pspec, rec = recs[eps]
        h = error_histogram(pspec, rec.dose, n_bins=48, value_range=(-eps - 0.05, 0.05))
        centers = 0.5 * (h.bin_edges[:-1] + h.bin_edges[1:])
        ib = np.nonzero(centers < 0)[0]
        m = h.masses[ib]
        prof = "|".join(f"{x:.1e}" for x in m[-6:])
        print(f"   eps={eps} ({rec.termination[:4]}@{rec.iterations}): last-6-in-band {prof}")
    print(f"   ({time.time()-t_start:.0f}s)")
