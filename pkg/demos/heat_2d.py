"""Two-dimensional heat equation tracking a nonsmooth periodic reference.

The reference is an alternating parabola with Fourier coefficients of order
``k^-3``; a disturbance ``0.5 sin(pi t)`` acts on part of the top edge.  A
diagonal controller with weights ``c (1 + |k|)^(-1/2 - eps)`` contains the
first 31 harmonics.  Weak weights on the high modes make the closed loop
polynomially rather than exponentially stable.

Run ``python demos/heat_2d.py [OUT_DIR]``.
"""

import os
import sys

import numpy as np

from passreg.closed_loop import assemble
from passreg.pde_models import example_heat_2d
from passreg.regulation import (
    check_regulation_conditions,
    compute_pi_ext,
    fit_error_rate,
    simulate,
    sliding_error_integral,
)
from passreg.stability import (
    check_exp_necessity,
    check_nonuniform_hypotheses,
    diagonal_example_laws,
    stabilized_plant,
)
from passreg.svg import line_chart


def main(out="demo_out/heat_2d"):
    os.makedirs(out, exist_ok=True)
    ex = example_heat_2d()
    cl = assemble(ex.plant, ex.ctrl)
    plant_S = stabilized_plant(ex.plant, ex.ctrl)

    nec = check_exp_necessity(plant_S, np.pi * np.arange(1, 16), ex.ctrl.D_c2)
    print(f"|P_S(i w_k)^-1| grows like omega^{nec.growth_exponent:.2f}: "
          f"exponential regulation is impossible ({nec.exponential_impossible})")

    gamma, g = diagonal_example_laws(ex.ctrl.meta["c"], ex.ctrl.meta["eps"])
    rep, table = check_nonuniform_hypotheses(plant_S, ex.ctrl, ex.ctrl.meta["eps"], gamma, g)
    alpha = np.polyfit(np.log(table.omegas), np.log(table.values), 1)[0]
    print(f"non-uniform hypotheses hold: {rep.passed}; predicted resolvent growth omega^{alpha:.2f}")

    for row in check_regulation_conditions(compute_pi_ext(ex.plant, ex.ctrl, ex.signal)):
        print(f"{row.name:>13}: tail slope {row.tail_slope:6.2f}, summable {row.summable}")

    traj = simulate(cl, ex.signal, cl.stack(ex.x0, ex.z0), ex.t_final, ex.dt, store_states=False)
    starts, values = sliding_error_integral(traj, 1.0)
    print(f"error integral: early maximum {values[starts <= 2].max():.4f}, final {values[-1]:.4f}")
    print(f"fitted decay law: {fit_error_rate(starts, values).to_json()}")

    line_chart(os.path.join(out, "error.svg"), [(traj.times, traj.error_norms, "|e(t)|")],
               title="Heat loop: tracking error", xlabel="t", ylabel="|e|")
    line_chart(os.path.join(out, "error_integral.svg"), [(starts, values, "int |e|")],
               title="Sliding error integral", xlabel="t", ylabel="integral")
    print(f"plots written to {out}")


if __name__ == "__main__":
    main(*sys.argv[1:])
