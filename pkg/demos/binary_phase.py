"""Draw probabilities on the bi-type binary tree as the mixed-birth probability approaches 1."""

from gwgames.casestudies import BinaryParams, binary_to_spec
from gwgames.fixedpoint import solve_outcomes


def main():
    print(f"{'p_br = q_br':>12}  {'nd1_b':>10}  {'md1_b':>10}  {'esl_b':>10}  iterations")
    for x in (0.5, 0.9, 0.99, 0.999, 0.9999, 1.0):
        p = BinaryParams(p0=1 - x, pbr=x, q0=1 - x, qbr=x)
        out = solve_outcomes(binary_to_spec(p))
        its = max(g.iterations for g in out)
        print(f"{x:>12}  {out.nd1[0]:>10.3g}  {out.md1[0]:>10.3g}  {out.esl[0]:>10.3g}  {its}")


if __name__ == "__main__":
    main()
