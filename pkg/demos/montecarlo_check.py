"""Monte Carlo estimates on sampled trees against the truncated recursions."""

from gwgames.casestudies import PoissonParams, poisson_to_spec
from gwgames.fixedpoint import FirstMover, GameKind, truncated_values
from gwgames.simulate import monte_carlo

DEPTH, SAMPLES, SEED = 30, 10**5, 1


def main():
    spec = poisson_to_spec(PoissonParams(3.0, 0.6, 0.4))
    exact = truncated_values(spec, DEPTH)
    est = monte_carlo(spec, GameKind.NORMAL, FirstMover.ONE, 0, DEPTH, SAMPLES, SEED)
    for name, value, se, truth in (("win", est.win, est.win_stderr, exact.nw1[0]),
                                   ("lose", est.lose, est.lose_stderr, exact.nl1[0])):
        print(f"{name:>5}: {value:.5f} +- {se:.5f}   truncated {truth:.5f}   z {(value - truth) / se:+.2f}")


if __name__ == "__main__":
    main()
