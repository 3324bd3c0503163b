"""Walk through the matrix substrate: the PSD cone, the jump cutoff, and
structured operators with their exponentials.

Run:  python3 demos/01_cone_and_operators.py
"""

import numpy as np
import scipy.linalg

from affinehs.symcone import (
    CongruenceSum,
    LyapunovOperator,
    VecBasis,
    chi,
    cone_leq,
    expm_action,
    frob_norm,
    inner,
    min_eigenvalue,
    random_psd,
)

rng = np.random.default_rng(0)

# --- the cone order -------------------------------------------------------
x = random_psd(rng, 3)
y = x + random_psd(rng, 3)
print("x is PSD:", min_eigenvalue(x) >= 0)
print("x <= y in the Loewner order:", cone_leq(x, y, 1e-12))
print("monotonicity ||x|| <= ||y||:", frob_norm(x) <= frob_norm(y))

# --- the small-jump cutoff -------------------------------------------------
small = 0.5 * np.eye(2) / np.sqrt(2)
large = 3.0 * np.eye(2)
print("\ncutoff keeps small jumps:", np.array_equal(chi(small), small))
print("cutoff removes large jumps:", np.array_equal(chi(large), 0 * large))

# --- orthonormal coordinates ----------------------------------------------
basis = VecBasis(3)
a, b = random_psd(rng, 3), random_psd(rng, 3)
print("\nvec is an isometry: <a,b> - vec(a).vec(b) =",
      inner(a, b) - basis.vec(a) @ basis.vec(b))

# --- operators and their exponentials ---------------------------------------
beta = -0.4 * np.eye(3) + 0.2 * rng.standard_normal((3, 3))
lyap = LyapunovOperator(beta)          # x -> beta x + x beta^T
cong = CongruenceSum((0.3 * rng.standard_normal((3, 3)),))  # x -> G x G^T

v = random_psd(rng, 3)
propagated = expm_action(lyap, 1.5, v)
e_mat = scipy.linalg.expm(1.5 * beta)
print("\nLyapunov semigroup vs closed form e^{tb} v e^{tb'}:",
      frob_norm(propagated - e_mat @ v @ e_mat.T))
print("the flow stays on the cone: min eig =", min_eigenvalue(propagated))

combined = lyap + cong
z = combined.apply(v)
print("adjoint pairing gap:",
      inner(combined.apply(v), x) - inner(v, combined.apply_adjoint(x)))
