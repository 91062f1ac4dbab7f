"""Wave equation with distributed control and a two-frequency internal model.

The reference ``sin(pi t) + cos(2 pi t)/4`` is generated by two frequency
pairs, so a real controller with four states suffices.  The stabilized
string is only strongly stable: its resolvent grows like ``omega^2``, and
the error decays slowly rather than exponentially.

Run ``python demos/wave_distributed.py [OUT_DIR]``.
"""

import os
import sys

import numpy as np

from passreg.closed_loop import assemble
from passreg.pde_models import example_wave_distributed
from passreg.regulation import pointwise_error_decay, simulate, sliding_error_integral
from passreg.stability import fit_growth_exponent, scan_resolvent, stabilized_plant
from passreg.svg import line_chart


def main(out="demo_out/wave_distributed"):
    os.makedirs(out, exist_ok=True)
    ex = example_wave_distributed()
    cl = assemble(ex.plant, ex.ctrl)

    traj = simulate(cl, ex.signal, cl.stack(ex.x0, ex.z0), ex.t_final, ex.dt, store_states=False)
    starts, values = sliding_error_integral(traj, 1.0)
    early = values[starts <= 2].max()
    for t in (2, 6, 12, 18, 23):
        print(f"error integral at t={t:>2}: {values[np.argmin(abs(starts - t))]:.4f} "
              f"({values[np.argmin(abs(starts - t))] / early:.3f} of the early maximum)")
    for a, b, m in pointwise_error_decay(traj):
        print(f"max |e| on [{a:g}, {b:g}]: {m:.4f}")

    A = stabilized_plant(ex.plant, ex.ctrl).A
    top = np.max(np.abs(np.linalg.eigvals(A).imag))
    scan = scan_resolvent(A, 1.0, 100.0, samples=400)
    fit = fit_growth_exponent(scan, (2.0, 0.5 * top))
    print(f"resolvent growth of the stabilized plant: omega^{fit.alpha:.2f}")

    line_chart(os.path.join(out, "error.svg"), [(traj.times, traj.error_norms, "|e(t)|")],
               title="Distributed wave loop: tracking error", xlabel="t", ylabel="|e|")
    line_chart(os.path.join(out, "error_integral.svg"), [(starts, values, "int |e|")],
               title="Sliding error integral", xlabel="t", ylabel="integral")
    line_chart(os.path.join(out, "resolvent.svg"), [(scan.grid, scan.norms, "|R(i w, A_S)|")],
               title="Resolvent of the stabilized plant", xlabel="omega", ylabel="norm", logx=True, logy=True)
    print(f"plots written to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
