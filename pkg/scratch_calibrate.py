"""Dev scratch: validate core numerics before freezing tests. Not shipped."""
import time

import numpy as np

from vamplan.grids import Field, constant_field, make_grid, inscribed_disk_mask
from vamplan.propagation import (
    Propagator, SinogramSpec, Sinogram, build_matrix, memory_estimate,
    tomogram_inner, sinogram_inner, default_sinogram_spec, disk_attenuation_fields,
)
from vamplan.initialization import ram_lak_filter, fbp_calibration
from vamplan import phantoms

rng = np.random.default_rng(0)

# --- 1. adjoint identity, 64x64, 90 angles, disk attenuation 0.001
grid = make_grid(64, 64, 1, 1.0 / 64)
prop = Propagator.with_disk_attenuation(grid, n_theta=90)
t0 = time.time()
worst = 0.0
for _ in range(5):
    a = Field(grid, rng.standard_normal(grid.shape))
    g = Sinogram(prop.sino_spec, rng.standard_normal(prop.sino_spec.shape))
    pa = prop.forward(a)
    pg = prop.backward(g)
    lhs = sinogram_inner(pa, g, grid)
    rhs = tomogram_inner(a, pg)
    denom = np.linalg.norm(pa.flat) * np.linalg.norm(g.flat)
    rel = abs(lhs - rhs) / denom
    worst = max(worst, rel)
print(f"adjoint worst rel: {worst:.3e}  ({time.time()-t0:.2f}s for 5 pairs)")

# --- 2. disk Radon analytic, alpha_act=1, no attenuation
grid2 = make_grid(128, 128, 1, 1.0 / 128)
spec2 = default_sinogram_spec(grid2, n_theta=60)
one = constant_field(grid2, 1.0)
zero = constant_field(grid2, 0.0)
prop2 = Propagator(grid2, spec2, zero, one)
R = 0.35
dsk = phantoms.disk(grid2, R)
sino = prop2.forward(dsk)
rho = spec2.rho_centers
analytic = 2.0 * np.sqrt(np.maximum(R**2 - rho**2, 0.0))
ana = np.broadcast_to(analytic, sino.values.shape)
rel_rms = np.sqrt(np.mean((sino.values - ana) ** 2)) / np.sqrt(np.mean(ana**2))
print(f"disk radon rel RMS: {rel_rms:.4f}")

# --- 3. FBP consistency: N=128, 202 angles over 180 deg, zero attenuation
spec3 = SinogramSpec.uniform(128, 202, 1, grid2.extent_x, coverage_deg=180.0)
prop3 = Propagator(grid2, spec3, zero, one)
t0 = time.time()
proj = prop3.forward(dsk)
filt = ram_lak_filter(proj)
rec = prop3.backward(filt)
cal = fbp_calibration(spec3)
print(f"fbp calibration constant: {cal:.4f}")
inside = dsk.values > 0
err = rec.values / cal - dsk.values
rel = np.sqrt(np.mean(err[inside] ** 2)) / np.sqrt(np.mean(dsk.values[inside] ** 2))
print(f"fbp disk rel RMS inside: {rel:.4f}  ({time.time()-t0:.2f}s)")
# also check the overall scale: mean of rec/cal inside disk should be ~1
print(f"mean rec/cal inside: {np.mean(rec.values[inside])/cal:.4f}")

# --- 4. matrix agreement + nnz factor (SE.7-style disk attenuation)
grid4 = make_grid(64, 64, 1, 1.0 / 64)
prop4 = Propagator.with_disk_attenuation(grid4, n_theta=90)
t0 = time.time()
op = build_matrix(prop4)
print(f"matrix build: {time.time()-t0:.2f}s, logical nnz {op.nnz}")
heuristic = prop4.sino_spec.n_samples * 64
print(f"nnz / heuristic(N_S*N_T_line): {op.nnz/heuristic:.3f}")
g = Sinogram(prop4.sino_spec, rng.random(prop4.sino_spec.shape))
f_ray = prop4.backward(g)
f_mat = op.backward(g)
rel = np.linalg.norm(f_mat.flat - f_ray.flat) / np.linalg.norm(f_ray.flat)
print(f"matrix-vs-ray backward rel: {rel:.3e}")
a = Field(grid4, rng.random(grid4.shape))
s_ray = prop4.forward(a)
s_mat = op.forward(a)
rel = np.linalg.norm(s_mat.flat - s_ray.flat) / np.linalg.norm(s_ray.flat)
print(f"matrix-vs-ray forward rel: {rel:.3e}")

# adjoint identity through the matrix
pa = op.forward(a)
pg = op.backward(g)
lhs = sinogram_inner(pa, g, grid4)
rhs = tomogram_inner(a, pg)
print(f"matrix adjoint rel: {abs(lhs-rhs)/(np.linalg.norm(pa.flat)*np.linalg.norm(g.flat)):.3e}")

# --- 5. memory estimate checks
class P:  # tiny stand-in namespace
    pass
# 3D published case: N_S = 512*512*180 with 512 voxel line
spec_big = SinogramSpec.uniform(512, 180, 512, 1.024)
grid_big = make_grid(512, 512, 512, 1.0 / 500)
p_big = P(); p_big.sino_spec = spec_big; p_big.grid = grid_big
est = memory_estimate(p_big)
print(f"3D estimate: {est/1e9:.1f} GB (expect 241.6)")
spec_sl = SinogramSpec.uniform(512, 180, 1, 1.024)
grid_sl = make_grid(512, 512, 1, 1.0 / 500)
p_sl = P(); p_sl.sino_spec = spec_sl; p_sl.grid = grid_sl
print(f"single-slice estimate: {memory_estimate(p_sl)/1e6:.1f} MB (expect 471.9)")

# --- 6. attenuation limit: alpha_total 1e-9 vs 0
mask = inscribed_disk_mask(grid4)
aa = mask.with_values(mask.values * 1.0)
at_tiny = mask.with_values(mask.values * 1e-9)
at_zero = mask.with_values(mask.values * 0.0)
p_t = Propagator(grid4, prop4.sino_spec, at_tiny, aa)
p_z = Propagator(grid4, prop4.sino_spec, at_zero, aa)
f_t = p_t.backward(g)
f_z = p_z.backward(g)
print(f"attenuation-limit rel diff: {np.linalg.norm(f_t.flat-f_z.flat)/np.linalg.norm(f_z.flat):.3e}")

# --- 7. timing at 128x128, 180 angles for the optimization loop budget
grid7 = make_grid(128, 128, 1, 1.0 / 128)
prop7 = Propagator.with_disk_attenuation(grid7, n_theta=180)
t0 = time.time(); op7 = build_matrix(prop7); t_build = time.time() - t0
g7 = Sinogram(prop7.sino_spec, rng.random(prop7.sino_spec.shape))
t0 = time.time()
for _ in range(5):
    f7 = op7.backward(g7)
    s7 = op7.forward(f7)
t_iter = (time.time() - t0) / 5
print(f"128^2/180: build {t_build:.2f}s, fwd+bwd {t_iter*1000:.0f} ms, nnz {op7.nnz}")
t0 = time.time(); prop7.backward(g7); print(f"  ray backward: {time.time()-t0:.2f}s")
t0 = time.time(); prop7.forward(f7); print(f"  ray forward: {time.time()-t0:.2f}s")
