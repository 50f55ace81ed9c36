"""Application-centric benchmarking of quantum workloads.

Typed pipelines compose problem generators, QUBO mappers, solvers and
simulators; every stage emits metric records into a per-run log.
"""

__version__ = "0.1.0"
