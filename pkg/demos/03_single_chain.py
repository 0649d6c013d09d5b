"""Run two data-augmentation chains on one simulated GBM dataset.

Compares the left-conditioned proposal against the modified bridge with
Milstein proposal and likelihood at m = 2, where the acceptance ratio is
identically one. Prints acceptance rates, posterior summaries, and the
closed-form ML estimate for reference.
"""

import numpy as np

from sdemcmc import (MethodCombo, McmcConfig, gbm_model,
                     generate_gbm_observations, ml_estimate_gbm,
                     multivariate_ess, point_estimates, run_chain,
                     study_priors)

theta_true = (1.0, 2.0)
obs = generate_gbm_observations(theta_true, 100.0, 50, 1.0,
                                np.random.SeedSequence(11))
a_ml, s2_ml = ml_estimate_gbm(obs)
print(f"true theta {theta_true}, ML estimate "
      f"alpha={a_ml:.4f} sigma2={s2_ml:.4f}\n")

model = gbm_model()
priors = study_priors("gbm")
config = McmcConfig(iterations=12000, m=2, burn_in_fraction=0.1, lam=5.0,
                    rw_variances=(0.25, 0.25), theta_init=(1.0, 2.0),
                    seed=2026)

for combo in (MethodCombo("lc", "euler", "euler"),
              MethodCombo("mb", "milstein", "milstein")):
    chain = run_chain(combo, model, priors, obs, config)
    burn = int(0.1 * chain.samples.shape[0])
    ess = multivariate_ess(chain.samples[burn:]).multivariate_ess
    mean, mode = point_estimates(chain, 0.1)
    print(f"{combo.label}  (m=2, {config.iterations} iterations, "
          f"{chain.wall_time_s:.1f}s)")
    print(f"  param acceptance {chain.param_accept_rate:.3f}, "
          f"path acceptance {chain.path_accept_rate:.3f}, "
          f"max |log ratio| {chain.path_logratio_max:.2e}")
    print(f"  posterior mean  alpha={mean[0]:.4f} sigma2={mean[1]:.4f}")
    print(f"  posterior mode  alpha={mode[0]:.4f} sigma2={mode[1]:.4f}")
    print(f"  multivariate ESS {ess:.0f} "
          f"({100 * ess / (chain.samples.shape[0] - burn):.1f}% of "
          f"post-burn-in draws)\n")

print("the mb/mil/mil chain accepts every path update exactly: its ratio is")
print("a telescoping identity, so 'max |log ratio|' above is floating-point 0")
