"""Branch-and-bound against brute force on a tiny feeder.

One EV on a two-bus network, a slow and a fast charger, two hours. Every
charger-level pattern is solved with its binaries fixed; the best of them must
equal the branch-and-bound optimum.

    python3 demos/oracle_check.py
"""

import numpy as np

from evopf.bnb import BnBSettings, solve_mip
from evopf.builder import BuildOptions, Scenario, build
from evopf.conic import solve
from evopf.fleet import ChargerLevel, EvSpec, FleetModel, enumerate_level_patterns
from evopf.network import Branch, Bus, Load, NetworkCase

KWH = 1e5  # kW per p.u. on the 100 MVA base
T = 2

net = NetworkCase("two-bus", (Bus(1, is_slack=True), Bus(2)), (Branch(1, 2, 0.05, 0.05, 1.0),),
                  (Load(2, 0.01, 0.005, np.ones(T)),))
menu = (ChargerLevel("slow", 20.0, 1.0), ChargerLevel("fast", 60.0, 3.0))
ev = EvSpec(bus=2, e_min=10.0 / KWH, e_max=60.0 / KWH, eta_c=0.9, eta_d=0.9, levels=(0, 1),
            p_travel=np.full(T, 40.0 / KWH))
fleet = FleetModel(menu, (ev,), np.ones(T), np.full(T, 0.5), 100.0)
sc = Scenario(np.array([30.0, 40.0]), degradation_cost=0.05)

mip = solve_mip(build(net, fleet, sc), BnBSettings(rel_gap_tol=1e-9))
print(f"branch-and-bound: {mip.objective:.9f} ({mip.status.value}, {mip.nodes} nodes)")

for pat in enumerate_level_patterns(ev, T):
    out = solve(build(net, fleet, sc, BuildOptions(fix_binaries=np.array([pat]))))
    label = "/".join(menu[j].name if j >= 0 else "off" for j in pat)
    value = f"{out.objective:.9f}" if out.optimal else "infeasible"
    print(f"  {label:10s} {value}")
