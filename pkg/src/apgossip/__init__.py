"""Decentralized average-precision maximization over gossip topologies.

Library layout:

  data       datasets: LIBSVM I/O, synthetic generation, partitioning
  model      bounded scoring models with hand-written gradients
  surrogate  pairwise ranking surrogate and its biased gradient
  topology   mixing matrices, schedules, spectral gap, gossip operator
  optimizer  slate / slate_m / dpsgd round steps
  metrics    exact average precision, PR curves, consensus error
  sim        experiment runner and metrics CSV
  cli        command-line front end
"""

__version__ = "0.1.0"
