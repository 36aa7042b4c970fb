"""Harmonic measure, aggregation, and growth on the upper half plane lattice.

Subpackage map:

* ``rng``       counter-based random streams
* ``lattice``   sites, clusters, and named site families
* ``walk``      random-walk kernels and stopping rules
* ``measure``   exact and Monte Carlo stationary harmonic measure
* ``kernel``    full-plane potential kernel and classical-walk experiments
* ``dla``       aggregation driven by the measure, discrete and continuous time
* ``growth``    the dominating pure growth system and its slowed variant
* ``lab``       statistical reproductions of the quantitative bounds
* ``artifacts`` reproducible CSV/JSON emission and run manifests
* ``cli``       command-line entry points
"""

__version__ = "0.1.0"
