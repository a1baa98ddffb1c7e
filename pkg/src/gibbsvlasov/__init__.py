"""Desk-scale numerical laboratory for Gibbs partition functions, cluster
expansions, Hoeffding correlations and the linearized Vlasov equation."""

__version__ = "0.1.0"
