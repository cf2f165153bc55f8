"""Barrier estimates for critical Galton-Watson processes and cover times of binary trees.

Modules
-------
special     scaled modified Bessel functions and Chernoff rate functions
sampler     offspring, Poisson/Gamma, Bessel(-1) and BESQ^0 samplers
gw          Galton-Watson paths, exact multi-step jumps, extinction
chain       interleaved local-time / traversal-count chain
barrier     barrier geometry, kernels, bridge and barrier-event estimators
tree        tree walks, cover times and the branching edge-count sampler
stats       estimates, tests, envelope fits and deterministic replication
experiments barrier-grid sweeps and fitted constants
validation  the acceptance suite
cli         command-line runner
"""

__version__ = "0.1.0"
