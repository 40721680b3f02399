"""Two models, one covariance: a confounded model with a cancelling path.

Scenario (f) has a direct effect X1 -> X3 and a hidden confounder between X2
and X3 whose contributions cancel, so X1 and X3 look independent given X2.
An unconfounded chain with b32 = 2 produces the same covariance. Classical
estimators can only report 2; the posterior also favours 2 but keeps a small
mass on the true value 1.

    python demos/faithfulness_violation.py
"""

import numpy as np

from slabcausal import (SCENARIOS, PriorConfig, SamplerConfig, SemParameters, implied_covariance, iv_estimate,
                        lcd_estimate, partial_correlation, sample_causal_posterior, summarize)


def main():
    left = SCENARIOS["f"].params
    right = SemParameters.from_entries(3, b={(1, 0): 1.0, (2, 1): 2.0}, v=np.array([1.0, 2.0, 3.0]))
    S = implied_covariance(left)
    print("confounded model covariance\n", S)
    print("max difference to the chain with b32 = 2:", np.abs(S - implied_covariance(right)).max())
    print(f"rho(X1, X3 | X2) = {partial_correlation(S, 0, 2, 1):.2e}")
    print(f"IV = {iv_estimate(S, 0, 1, 2):.3f}, LCD = {lcd_estimate(S, 1, 2):.3f}")

    post = sample_causal_posterior(S, PriorConfig(), SamplerConfig(seed=0), [(1, 2)])
    s = summarize(post, "b32", intervals=[(0.9, 1.1), (1.9, 2.1)])
    for (lo, hi), m in s.interval_masses:
        print(f"P({lo} <= b32 <= {hi}) = {m:.4f}")
    print("posterior modes of b32:", ", ".join(f"{x:.3f}" for x in s.highest_modes(3)))


if __name__ == "__main__":
    main()
