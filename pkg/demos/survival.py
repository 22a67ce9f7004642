"""The spectral survival criterion, including a reducible case where one colour gets no guarantee."""

import numpy as np

from gwgames.fixedpoint import solve_outcomes
from gwgames.model import ModelSpec, TableLaw, monochrome_sets, spec_from_dict
from gwgames.theorems import survival_criterion

REDUCIBLE = {
    "m": 3,
    "root_law": [0.2, 0.3, 0.5],
    "permissible": [[2], [2], [1, 3]],
    "offspring": [
        {"table": [{"counts": [1, 0, 1], "prob": 0.31}, {"counts": [1, 1, 0], "prob": 0.24},
                   {"counts": [2, 1, 0], "prob": 0.45}]},
        {"table": [{"counts": [1, 0, 1], "prob": 0.17}, {"counts": [2, 0, 0], "prob": 0.83}]},
        {"table": [{"counts": [1, 0, 0], "prob": 0.9}, {"counts": [1, 0, 1], "prob": 0.05},
                   {"counts": [2, 0, 1], "prob": 0.05}]},
    ],
}


def show(name, spec):
    sc = survival_criterion(spec)
    out = solve_outcomes(spec)
    print(f"{name}: rho = {sc.rho:.4f} ({sc.status}), irreducible = {sc.irreducible}")
    for j in range(spec.m):
        print(f"  colour {j + 1}: guaranteed = {sc.guaranteed[j]!s:5}  eew = {out.eew[j]:.4f}")


def main():
    blue = TableLaw(np.array([[1, 2], [0, 2]]), np.array([0.8, 0.2]))
    red = TableLaw(np.array([[2, 1], [2, 0]]), np.array([0.8, 0.2]))
    show("two colours", ModelSpec(np.array([0.5, 0.5]), (blue, red), monochrome_sets(2)))
    show("reducible", spec_from_dict(REDUCIBLE))


if __name__ == "__main__":
    main()
