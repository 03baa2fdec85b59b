"""
Directional bias certificates
=============================

A certificate ``(M_bias, rho)`` says the online parameter lies within
``rho`` of the offline one in the ``M_bias`` norm.  The bias it allows
along a direction ``x`` is ``rho * ||x||_{M_bias^-1}``, so a matrix that is
large along some axis makes offline data nearly free there.
"""

import numpy as np

from transfer_bandit.offline import BiasCertificate, OfflineDataset, fit_ridge, support_function
from transfer_bandit.spd import SpdMatrix, inv_norm

rng = np.random.default_rng(0)

# offline data: 400 unit covariates, parameter (1, 1, 0)
Z = rng.standard_normal((400, 3))
Z /= np.linalg.norm(Z, axis=1, keepdims=True)
y = Z @ np.array([1.0, 1.0, 0.0]) + 0.1 * rng.standard_normal(400)
ridge = fit_ridge(OfflineDataset(Z, y))
print("offline estimate:", np.round(ridge.theta_hat, 3))

# an isotropic certificate and one that trusts the first two axes
iso = BiasCertificate(SpdMatrix.identity(3), 0.5)
skew = BiasCertificate(SpdMatrix.diag([100.0, 100.0, 0.01]), 0.5)

for name, x in [("e1", np.eye(3)[0]), ("e3", np.eye(3)[2])]:
    for label, cert in [("isotropic", iso), ("directional", skew)]:
        budget = cert.rho * inv_norm(x, cert.M_bias)
        top = support_function(ridge, cert, 0.3, x)
        print(f"{name} {label:11s}: bias budget {budget:7.3f}, largest x.theta {top:7.3f}")

# the directional certificate buys a tight bound on e1 and pays for it on e3
