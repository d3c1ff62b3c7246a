"""
Higher orders concentrate the estimate
======================================

On a 2-D Gaussian cloud the spread of the Gride estimate shrinks as
(n1, n2) grows. Two measures are shown: the sd of a parametric bootstrap and
the width of the grid posterior.
"""

from idratio import generic_ratios, gride_mle, gride_posterior, knn_table
from idratio.synthgen import gaussian_orthonoise

cloud = gaussian_orthonoise(10_000, 2, 0, seed=0)
table = knn_table(cloud, 16)

print(" n1  n2   d_hat   boot sd   post width")
for n1 in (1, 2, 4, 8):
    mu = generic_ratios(table, n1, 2 * n1)
    est = gride_mle(mu, uncertainty="bootstrap", bootstrap_reps=200, seed=0, d_max=20)
    post = gride_posterior(mu, d_max=20)
    print(f"{n1:3d} {2 * n1:3d}  {est.d_hat:.4f}   {est.std_error:.4f}    {post.width:.4f}")
