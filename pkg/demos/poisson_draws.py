"""Normal-game draw probability on the bi-type Poisson tree against the total mean."""

from gwgames.casestudies import BLUE, PoissonParams, poisson_conditions, poisson_scalar_fixed_points, poisson_to_spec
from gwgames.fixedpoint import solve_outcomes


def main():
    print(f"{'lambda':>7}  {'cond13':>6}  {'scalar nd1_b':>12}  {'vector nd1_b':>12}  {'md1_b':>8}")
    for lam in (1, 2, 3, 4, 5, 7.5, 10, 20, 40, 80):
        p = PoissonParams(lam, 0.5, 0.5)
        out = solve_outcomes(poisson_to_spec(p))
        scalar = poisson_scalar_fixed_points(p).draw
        cond = poisson_conditions(p, outcomes=out, on_violation="record").cond13
        print(f"{lam:>7}  {str(cond):>6}  {scalar:>12.6f}  {out.nd1[BLUE]:>12.6f}  {out.md1[BLUE]:>8.4f}")


if __name__ == "__main__":
    main()
