"""kpzlab: a Monte-Carlo and numerical-analysis lab for the KPZ fixed
point from Brownian initial data, built on an exponential
last-passage-percolation approximation of the directed landscape."""

__version__ = "0.1.0"
