"""
Diagnostics of a single run
===========================

After a run, the trace is enough to recompute the layerwise log-determinant
gains, the routed bias sum and its Cauchy-Schwarz bound, the spectral
envelope, and the pooled-better test.
"""

import json

import numpy as np

from transfer_bandit.diagnostics import (
    diagnostics_report,
    potential_check,
    psi_bound_check,
    spectral_envelope_check,
)
from transfer_bandit.environment import BanditInstance, OfflineSpec, RunStreams, generate_offline
from transfer_bandit.offline import BiasCertificate, fit_ridge
from transfer_bandit.policies import PolicyConfig, make_policy
from transfer_bandit.simulation import TrajectoryMonitor, simulate
from transfer_bandit.spd import SpdMatrix

theta_star = np.array([2.0, 1, 1, 1, 1])
theta_dag = np.array([1.0, 2, 1, 1, 1])
S = float(np.linalg.norm(theta_star))
inst = BanditInstance(theta_star, K=5, sigma=0.1, S=S)
cert = BiasCertificate(SpdMatrix.identity(5), float(np.linalg.norm(theta_star - theta_dag)))

streams = RunStreams(3)
ridge = fit_ridge(generate_offline(OfflineSpec(theta_dag, 2000, S=S), 0.1, streams.offline))
cfg = PolicyConfig(1000, 0.1, S, "minucb", delta_total=0.01)
pol = make_policy(cfg, ridge, cert)

# the monitor checks widths, elimination and the routed factor every round
trace = simulate(inst, pol, 1000, 3, streams=streams, monitor=TrajectoryMonitor(theta_star, pol.L))
print("pulls per layer:", trace.layer_counts().tolist())

for row in potential_check(trace, ridge):
    print(f"layer {row['layer']}: potential {row['potential']:.3f} <= {row['bound']:.3f}")
print("routed sum vs bound:", psi_bound_check(trace, ridge, cert))
print("spectral envelope:", spectral_envelope_check(trace, ridge))

report = diagnostics_report(trace, ridge, cfg, cert)
print(json.dumps({k: v for k, v in report.items() if k != "lambda_per_layer"}, indent=2))
