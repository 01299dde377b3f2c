#!/usr/bin/env python3
"""Generate one instance, solve it with every algorithm, and compare.

A quick end-to-end sanity run that prints, per algorithm, the objective, the
bound where one exists, wall time, and the queue audit.

Usage:
    python scripts/solve_one.py [preset] [seed] [b]
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from chargeplan.approx import approximate
from chargeplan.bp import branch_and_price, BpLimits
from chargeplan.evcec import build_evcec, decode_deployment, objective_value
from chargeplan.heuristic import best_greedy, local_search
from chargeplan.instance import PRESETS, generate, with_queue
from chargeplan.milp import MipLimits, solve_mip
from chargeplan.report import queue_report


def main() -> int:
    preset = sys.argv[1] if len(sys.argv) > 1 else "tiny"
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    b = int(sys.argv[3]) if len(sys.argv) > 3 else 0
    inst = with_queue(generate(PRESETS[preset], seed), b=b)
    print(f"instance: preset={preset} seed={seed} b={b} "
          f"({inst.n_zones} zones, {inst.n_locations} locations, {len(inst.tree)} nodes)")

    t0 = time.monotonic()
    heur = local_search(inst, best_greedy(inst))
    print(f"heuristic+ls   z={objective_value(inst, heur):10.2f}  "
          f"t={time.monotonic() - t0:6.2f}s")

    t0 = time.monotonic()
    res = approximate(inst, MipLimits(time_limit_s=600))
    print(f"approx         z={res.z_appr:10.2f}  lb={res.lb:10.2f}  "
          f"gap_lb={res.gap_lb:6.3f}  t={time.monotonic() - t0:6.2f}s")

    t0 = time.monotonic()
    em = build_evcec(inst)
    mip = solve_mip(em.model, MipLimits(time_limit_s=1200))
    print(f"mip            z={mip.objective:10.2f}  bound={mip.bound:10.2f}  "
          f"[{mip.status}, {mip.nodes} nodes]  t={time.monotonic() - t0:6.2f}s")

    t0 = time.monotonic()
    bp = branch_and_price(inst, BpLimits(time_limit_s=1200))
    print(f"bp             z={bp.z:10.2f}  bound={bp.bound:10.2f}  "
          f"[{bp.status}, {bp.stats['branch_nodes']} nodes, "
          f"{bp.stats['cg_rounds']} cg rounds]  t={time.monotonic() - t0:6.2f}s")

    if mip.values:
        dep = decode_deployment(em, mip.values)
        rep = queue_report(inst, dep)
        print(f"queue audit (mip optimum): avg wait {rep.avg_wait_min:.3f} min, "
              f"avg queue {rep.avg_queue_len:.3f}, service_ok={rep.service_ok}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
