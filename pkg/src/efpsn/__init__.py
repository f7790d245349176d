"""EFPSN: encrypted functional perturbation with structured noise.

A desk-scale, fully deterministic simulator for private decentralized
optimization: agents mask their cost functions with zero-sum polynomial
perturbations negotiated over Paillier-encrypted channels, then run
standard decentralized gradient descent on the masked problem.
"""

__version__ = "0.1.0"
