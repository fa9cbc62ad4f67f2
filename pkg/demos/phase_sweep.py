"""Matrix phases and a phase response along the indented imaginary axis.

Run:  python3 demos/phase_sweep.py
"""

import numpy as np

from phasesync import benchmarks, ltisys, phasecore


def main():
    for name, C in [("rotation", np.diag(np.exp([0.4j, -0.2j]))),
                    ("Jordan block", np.array([[1.0, 2.0], [0.0, 1.0]])),
                    ("rank one", np.diag([0.0, 1.0 + 1.0j]))]:
        p = phasecore.phases(C)
        flag = " (boundary)" if p.boundary_detected else ""
        print(f"{name:>12}: {p.kind.value}, phases {np.round(p.phases, 4)}{flag}")

    P1 = benchmarks.five_agents()[0]
    r = ltisys.phase_response(P1)
    ax = r.axis & ~np.isnan(r.upper)
    print(f"agent 1: {r.kind.value}; {ax.sum()} on-axis samples, "
          f"max phase {np.nanmax(r.upper[ax]):.3f}, min phase {np.nanmin(r.lower[ax]):.3f}")
    for w in (0.1, 0.5, 2.0, 10.0):
        k = np.argmin(np.where(ax, np.abs(r.omega - w), np.inf))
        print(f"  w={r.omega[k]:7.3f}: phases {np.round(r.profiles[k].phases, 3)}")


if __name__ == "__main__":
    main()
