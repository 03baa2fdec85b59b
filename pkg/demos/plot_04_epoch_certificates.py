"""
Learning the certificate from data
==================================

Without a certificate, the epoch variant rebuilds one at times 1, 2, 4, ...
from the gap between the online and offline ridge estimates.  Its metric is
the parallel sum of the two Gram matrices, which grows as online data
arrives.
"""

import numpy as np

from transfer_bandit.environment import BanditInstance, OfflineSpec, RunStreams, generate_offline
from transfer_bandit.offline import fit_ridge
from transfer_bandit.policies import PolicyConfig, make_policy
from transfer_bandit.simulation import simulate
from transfer_bandit.spd import elliptic_norm, gen_eig_max

theta_star = np.array([2.0, 1, 1, 1, 1])
theta_dag = np.array([1.0, 2, 1, 1, 1])
S = float(np.linalg.norm(theta_star))
inst = BanditInstance(theta_star, K=5, sigma=0.1, S=S)

streams = RunStreams(0)
ridge = fit_ridge(generate_offline(OfflineSpec(theta_dag, 2000, S=S), 0.1, streams.offline))
pol = make_policy(PolicyConfig(2048, 0.1, S, "epoch_minucb"), ridge)
simulate(inst, pol, 2048, 0, streams=streams)

gap = theta_star - theta_dag
print(" tau   rho_hat   true gap in M_hat   c_hat")
for c in pol.epoch_certs:
    true = elliptic_norm(gap, c.M_hat)
    print(f"{c.tau:4d}  {c.rho_hat:8.3f}  {true:18.3f}  {gen_eig_max(ridge.G_off, c.M_hat):6.2f}")

# the certificate stays valid (true gap <= rho_hat) while M_hat grows
