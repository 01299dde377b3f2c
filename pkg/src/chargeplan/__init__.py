"""chargeplan: multistage EV charging-network expansion planning with congestion.

Plans where to open charging stations and how many posts to install at each
node of a demand scenario tree, so that every station keeps the probability of
an arriving vehicle finding at most b others in queue above a service level
alpha.  Ships an exact MILP formulation on an embedded LP/MIP kernel, a
relax-and-round approximation, a greedy heuristic with local search, and a
Dantzig-Wolfe branch-and-price solver.
"""

__version__ = "0.1.0"
