"""Objective, sparsity and residual traces of OADM, batch ADM, FOBOS and RDA on sparse regression.

Writes one metrics CSV per seed plus a summary of final NNZ counts.
"""

import os

from _common import parser, seeds, write_rows

from oadm.experiments import METRIC_COLUMNS, ExperimentConfig, SolverSpec, run_experiment
from oadm.problem import DataGenConfig


def main():
    p = parser(__doc__.splitlines()[0], "out/lasso")
    p.add_argument("--passes", type=int, default=100)
    p.add_argument("--every", type=int, default=50)
    args = p.parse_args()
    solvers = (
        SolverSpec("oadm", eta=1.0, eta_mode="linear", rho=1.0),
        SolverSpec("admm", rho=1.0),
        SolverSpec("fobos", tau=1.0, tau_decay="sqrt"),
        SolverSpec("rda", gamma=1.0),
    )
    summary = []
    for seed in seeds(args.seeds):
        cfg = ExperimentConfig("lasso", DataGenConfig(N=50, n=200, k=20, seed=seed, noise_sigma=0.01),
                               solvers, passes=args.passes, loss_scale=0.5, every=args.every)
        inst, results = run_experiment(cfg, regret=False)
        rows = [r for res in results for r in res.rows]
        write_rows(os.path.join(args.out_dir, f"metrics_seed{seed}.csv"), METRIC_COLUMNS, rows)
        for res in results:
            summary.append({"seed": seed, "solver": res.name, "final_nnz": res.final["nnz"],
                            "final_objective": res.final["objective"],
                            "relative_mse": inst.relative_mse(res.estimate)})
    write_rows(os.path.join(args.out_dir, "summary.csv"),
               ("seed", "solver", "final_nnz", "final_objective", "relative_mse"), summary)


if __name__ == "__main__":
    main()
