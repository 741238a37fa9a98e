"""Schwarz domain decomposition with offline-learned local solution manifolds.

Offline, each (buffered) patch gets a dictionary of random boundary
conditions paired with their local PDE solutions; online, a Schwarz sweep
replaces every local solve by nearest-neighbor tangent-plane interpolation in
that dictionary.  Ships two problem instances (a semilinear elliptic equation
with oscillatory media and a 1D nonlinear radiative transfer system) plus a
benchmark CLI.
"""

from . import bench, cli, config, dictionary, elliptic, geometry, problems, rte, sampler, schwarz
from .dictionary import DictionarySet, build_all, load, save
from .problems import EllipticProblem, RteProblem, make_problem
from .schwarz import OnlineOpts, run_classical, run_online

__all__ = [
    "bench", "cli", "config", "dictionary", "elliptic", "geometry", "problems",
    "rte", "sampler", "schwarz",
    "DictionarySet", "build_all", "load", "save",
    "EllipticProblem", "RteProblem", "make_problem",
    "OnlineOpts", "run_classical", "run_online",
]
