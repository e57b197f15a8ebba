"""CCG against brute-force enumeration on the small fixtures."""
from gridplan.ccg import CcgParams, run_ccg
from gridplan.grid import bundled
from gridplan.oracle import exact_plan

for name in ("tiny2", "ring4", "twin7"):
    for T in (1, 2):
        for nz in (1, 2):
            inst = bundled(name).with_periods(T).replace(n_z=nz)
            for mode in ("dr", "ro"):
                exact = exact_plan(inst, mode=mode).objective
                got = run_ccg(inst, params=CcgParams(epsilon=1e-6, mode=mode))
                flag = "ok" if abs(got.objective - exact) <= 1e-5 * max(1.0, exact) else "MISMATCH"
                print(f"{name:6} T={T} N_z={nz} {mode}: oracle {exact:10.4f}  ccg {got.objective:10.4f}"
                      f"  iters {got.state.iteration:2d}  {flag}")
