"""
The polynomial embedding landscape
==================================

Embeddings y -> sum_r beta_r A^r y reduce matching to a quotient of
quadratic forms in beta, built from Krylov moments. On Wigner matrices
those moments concentrate, and the mean-field problem is solved by a
generalized eigenvector.
"""
import numpy as np

from qapm import landscape as ls

rng = np.random.default_rng(0)

# Spectral moments of a large Wigner matrix approach the Catalan numbers.
A = ls.sample_wigner(ls.WignerSpec(1500), rng)
mom = ls.spectral_moments(A, 8)
for m in range(1, 5):
    print(f"moment {2 * m}: sample {mom[2 * m]:.3f}, semicircle {ls.semicircle_moment(2 * m):.3f}")

# Moment matrices of a noisy pair, and the loss at a random degree-3 beta.
A, B = ls.sample_pair(ls.WignerSpec(400, noise_level=0.2), rng)
mm = ls.krylov_moments(A, B, rng.standard_normal(400), d=3)
beta = ls.random_unit_vectors(rng, 1, 4)[0]
print(f"\nloss at a random beta: {ls.loss_beta(mm, beta):.4f} (never below -0.5)")

# The mean-field maximizer uses expected moments; no random direction beats it.
R = ls.expected_cross_moments(A, B, 3)
S = ls.expected_moments(A, 3) + ls.expected_moments(B, 3)
opt = ls.meanfield_opt(S, R)
best_random = max(ls.quotient(R, S, b) for b in ls.random_unit_vectors(rng, 2000, 4))
print(f"mean-field optimum {opt.value:.5f}, best of 2000 random directions {best_random:.5f}")
print("optimal beta:", np.round(opt.beta, 3))

# Concentration of the sampled moments improves with n.
for row in ls.concentration_sweep(ls.WignerSpec(), d=3, k=1, sizes=(100, 400), trials=10, seed=1):
    print(f"n={row.n}: eps_hat {row.mean:.3f} +- {row.std:.3f}")
