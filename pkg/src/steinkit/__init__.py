"""steinkit: particle inference with Stein discrepancies.

Subpackages group by algorithm family: ``kernels`` and ``models`` hold the
shared primitives; ``svgd``/``gfsvgd`` the particle updates; ``steinis`` the
adaptive importance sampler; ``ksd`` the discrepancy statistics and black-box
importance weights; ``discrete`` and ``gof`` the discrete-distribution
sampling and testing layers; ``aggregation`` the one-shot distributed
estimators; ``cli`` the experiment runner.
"""

__version__ = "0.1.0"
