"""Dev scratch: find an OSMO-equivalence configuration where both correction
parities are active yet the sinogram clamp never bites on updated rays."""
import numpy as np

from vamplan.grids import constant_field, make_grid, Field
from vamplan.propagation import Propagator, build_matrix, default_sinogram_spec
from vamplan.optimizer import FeasibleSet, pgd_step
from vamplan import phantoms, schemes

grid = make_grid(64, 64, 1, 1.0 / 64)
spec = default_sinogram_spec(grid, n_theta=90)
prop = Propagator(grid, spec, constant_field(grid, 0.0), constant_field(grid, 1.0))
op = build_matrix(prop)

target = phantoms.disk(grid, 0.22)
ip = target.values > 0
st0 = schemes.OsmoState.from_target(target, 1.0, 0.5, normalize=False)
g0 = schemes.osmo_sinogram(st0, op)
f0 = op.backward(g0).values
print(f"f0 IP: [{f0[ip].min():.3f}, {f0[ip].max():.3f}]  OFP: [{f0[~ip].min():.3f}, {f0[~ip].max():.3f}]")

fs = FeasibleSet()


def trial(D_h, D_l, iters=6, verbose=False):
    preset = schemes.osmo_preset(target, D_h, D_l, alternating=True)
    state = schemes.OsmoState.from_target(target, D_h, D_l, normalize=False)
    g_pgd = schemes.osmo_sinogram(state, op)
    worst = 0.0
    even_active = odd_active = 0
    for k in range(iters):
        state = schemes.osmo_reference_step(state, op)
        g_osmo = schemes.osmo_sinogram(state, op)
        g_pgd, rep = pgd_step(g_pgd, preset.problem, op, fs, preset.eta, k)
        if k % 2 == 0:
            even_active += rep.violation_fraction > 0
        else:
            odd_active += rep.violation_fraction > 0
        den = np.linalg.norm(g_osmo.flat)
        rel = np.linalg.norm(g_pgd.flat - g_osmo.flat) / den if den else 0.0
        worst = max(worst, rel)
        if verbose:
            neg = np.sum(op.forward(state.model).values < 0)
            print(f"  k={k}: rel {rel:.2e} viol {rep.violation_fraction:.4f} negs {neg}")
    return worst, even_active, odd_active


# f0 on OFP maxes just under the IP range; put D_l just under OFP max so a
# thin shell violates; D_h above IP min so the IP rim violates.
ofp_max = f0[~ip].max()
ip_min, ip_max = f0[ip].min(), f0[ip].max()
for dl_frac, dh_frac in [(0.97, 0.3), (0.95, 0.2), (0.98, 0.4), (0.9, 0.1), (0.99, 0.5)]:
    D_l = dl_frac * ofp_max
    D_h = ip_min + dh_frac * (ip_max - ip_min)
    w, ev, od = trial(D_h, D_l)
    print(f"D_l={D_l:.3f} ({dl_frac}) D_h={D_h:.3f} ({dh_frac}): worst rel {w:.2e}, even active {ev}, odd active {od}")
