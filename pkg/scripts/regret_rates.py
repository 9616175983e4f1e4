"""Regret against horizon under the horizon-tuned schedule, with fitted log-log slopes."""

import math
import os

import numpy as np

from _common import parser, seeds, write_rows

from oadm.experiments import loglog_slope
from oadm.ledger import comparator, comparator_round_values
from oadm.online import OadmConfig, StepSchedule, run_online
from oadm.problem import CyclicStream, DataGenConfig, estimate_gradient_bound, generate_lasso


def main():
    p = parser(__doc__, "out/regret")
    p.add_argument("--max-exp", type=int, default=14, help="largest horizon is 2**max_exp")
    args = p.parse_args()
    horizons = [2**j for j in range(3, args.max_exp + 1)]
    rows = []
    for seed in seeds(args.seeds):
        inst = generate_lasso(DataGenConfig(N=1000, n=50, k=5, seed=seed, noise_sigma=0.1), q=0.5)
        stream, g, cons = CyclicStream(inst), inst.regularizer(), inst.constraint()
        comps = {T: comparator(stream, g, cons, T) for T in horizons}
        radius = 5 * np.linalg.norm(comps[horizons[-1]].x)
        G = estimate_gradient_bound(inst, radius)
        r1 = []
        for T in horizons:
            run = run_online(stream, g, cons, OadmConfig(StepSchedule.horizon_tuned(G, radius / math.sqrt(2), T)), T)
            comp = comps[T]
            run.ledger.set_comparator(comp, comparator_round_values(stream, g, comp, T))
            r1.append(run.ledger.R1)
            rows.append({"seed": seed, "T": T, "R1": run.ledger.R1, "Rc": run.ledger.Rc})
        print(f"seed {seed}: R1 slope {loglog_slope(horizons, r1):.3f}")
    write_rows(os.path.join(args.out_dir, "regret.csv"), ("seed", "T", "R1", "Rc"), rows)


if __name__ == "__main__":
    main()
