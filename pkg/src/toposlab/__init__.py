"""Finite-dimensional checks for composite systems in topos quantum theory.

Contexts and product contexts, positive-over-pure-tensor (POPT) states and
their contextual integrals, a commutative-monad Markov-chain engine with the
finite distribution monad, and numerical monogamy / triviality demonstrations.
"""

__version__ = "0.1.0"
