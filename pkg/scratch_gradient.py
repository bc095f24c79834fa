"""Dev scratch: gradient FD check, OSMO equivalence, scale preservation."""
import numpy as np

from vamplan.grids import Field, constant_field, make_grid
from vamplan.propagation import Propagator, Sinogram, build_matrix, default_sinogram_spec, sinogram_inner
from vamplan.response import ResponseModel, LINEAR_IDENTITY
from vamplan.loss import ProblemSpec, WeightSchedule, loss, loss_gradient
from vamplan.optimizer import FeasibleSet, OptimizerConfig, pgd_step, run
from vamplan import phantoms, schemes

rng = np.random.default_rng(42)

# ---------- gradient vs central finite differences ----------
grid = make_grid(16, 16, 1, 1.0 / 16)
spec = default_sinogram_spec(grid, n_theta=24)
one = constant_field(grid, 1.0)
at = constant_field(grid, 0.05)
prop = Propagator(grid, spec, at, one)
model = ResponseModel()

def fd_check(p, q, eps_val, seed):
    r = np.random.default_rng(seed)
    g0 = Sinogram(spec, 0.5 + 0.1 * r.random(spec.shape))
    f = prop.backward(g0)
    target = Field(grid, model.respond(f.values) - 0.15 + 0.3 * r.random(grid.shape))
    pspec = ProblemSpec(target=target, tolerance=constant_field(grid, eps_val),
                        weights=WeightSchedule.constant(one), p=p, q=q, response=model)
    # band-edge margin check
    E = np.abs(model.respond(f.values) - target.values) - eps_val
    margin = np.min(np.abs(E))
    grad, rep = loss_gradient(pspec, f, prop)
    if rep.value == 0:
        return None, margin
    h = 1e-5
    worst = 0.0
    for _ in range(5):
        u = r.standard_normal(spec.shape)
        u /= np.linalg.norm(u)
        us = Sinogram(spec, u)
        lp = loss(pspec, prop.backward(g0.with_values(g0.values + h * u))).value
        lm = loss(pspec, prop.backward(g0.with_values(g0.values - h * u))).value
        fd = (lp - lm) / (2 * h)
        an = sinogram_inner(grad, us, grid)
        rel = abs(fd - an) / max(abs(fd), 1e-300)
        worst = max(worst, rel)
    return worst, margin

for (p, q, e) in [(0.5, 1, 0.05), (1, 1, 0.0), (2, 1, 0.05), (3, 2, 0.05), (2, 2, 0.0), (0.5, 2, 0.05)]:
    res, margin = fd_check(p, q, e, seed=hash((p, q, e)) % 2**32)
    print(f"p={p} q={q} eps={e}: worst FD rel {res}, band margin {margin:.2e}")

# ---------- OSMO equivalence ----------
print("\n--- OSMO equivalence ---")
grid_o = make_grid(64, 64, 1, 1.0 / 64)
spec_o = default_sinogram_spec(grid_o, n_theta=90)
zero_o = constant_field(grid_o, 0.0)
one_o = constant_field(grid_o, 1.0)
prop_o = Propagator(grid_o, spec_o, zero_o, one_o)
op_o = build_matrix(prop_o)

target = phantoms.disk(grid_o, 0.22)
# probe the dose scale from the OSMO init
st0 = schemes.OsmoState.from_target(target, 1.0, 0.5, normalize=False)
g0 = schemes.osmo_sinogram(st0, op_o)
f0 = op_o.backward(g0)
ip = target.values > 0
print(f"f0: min {f0.values.min():.3f} max {f0.values.max():.3f} | IP mean {f0.values[ip].mean():.3f} OFP mean {f0.values[~ip].mean():.3f}")

# choose thresholds around the natural scale
D_h = float(np.quantile(f0.values[ip], 0.3))
D_l = float(np.quantile(f0.values[~ip], 0.7))
if D_h <= D_l:
    D_h = D_l * 1.5
print(f"D_h={D_h:.3f} D_l={D_l:.3f}")

preset = schemes.osmo_preset(target, D_h, D_l, alternating=True)
fs = FeasibleSet()
state = schemes.OsmoState.from_target(target, D_h, D_l, normalize=False)
g_pgd = schemes.osmo_sinogram(state, op_o)
for k in range(8):
    state = schemes.osmo_reference_step(state, op_o)
    g_osmo = schemes.osmo_sinogram(state, op_o)
    g_pgd, rep = pgd_step(g_pgd, preset.problem, op_o, fs, preset.eta, k)
    den = np.linalg.norm(g_osmo.flat)
    rel = np.linalg.norm(g_pgd.flat - g_osmo.flat) / den if den > 0 else 0.0
    neg = np.sum((op_o.forward(state.model).values) < 0)
    print(f"iter {k+1}: rel diff {rel:.3e}, loss {rep.value:.4g}, pre-clamp negatives {neg}")

# ---------- scale preservation ----------
print("\n--- scale preservation ---")
grid_s = make_grid(32, 32, 1, 1.0 / 32)
spec_s = default_sinogram_spec(grid_s, n_theta=48)
prop_s = Propagator(grid_s, spec_s, constant_field(grid_s, 0.0), constant_field(grid_s, 1.0))
op_s = build_matrix(prop_s)
ident = ResponseModel(variant=LINEAR_IDENTITY)
tgt = phantoms.disk(grid_s, 0.3, value=2.0)
base = ProblemSpec(target=tgt, tolerance=constant_field(grid_s, 0.1),
                   weights=WeightSchedule.constant(constant_field(grid_s, 1.0)),
                   p=2.0, q=1.0, response=ident)
from vamplan.initialization import analytic_init
c = 3.0
eta = 0.05
fs0 = FeasibleSet(h_min=0.0, h_max=5.0)
fs1 = FeasibleSet(h_min=0.0, h_max=5.0 * c)
g0a = analytic_init(base, op_s, fs0)
rec_a = run(base, op_s, fs0, OptimizerConfig(eta=eta, max_iters=40, check_convergence=False), g0a)
scaled = ProblemSpec(target=tgt.with_values(tgt.values * c),
                     tolerance=constant_field(grid_s, 0.1 * c),
                     weights=base.weights, p=2.0, q=1.0, response=ident)
g0b = analytic_init(scaled, op_s, fs1)
# eta scales as c^(2-q) = c for q=1
rec_b = run(scaled, op_s, fs1, OptimizerConfig(eta=eta * c, max_iters=40, check_convergence=False), g0b)
rel = np.linalg.norm(rec_b.dose.flat - c * rec_a.dose.flat) / np.linalg.norm(c * rec_a.dose.flat)
print(f"dose scaling rel err: {rel:.3e}")
print(f"loss histories scale check: {rec_b.loss_history[-1] / rec_a.loss_history[-1]:.6f} (expect {c**1})")
