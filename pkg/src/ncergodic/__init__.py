"""Random sparse ergodic averages on finite-dimensional tracial algebras.

The package models a tracial algebra as a weighted direct sum of matrix
blocks and provides

* positive Dunford-Schwartz operators built from a small grammar, their
  superoperator matrices and mean ergodic projections (:mod:`.operators`);
* the Bernoulli sampling model ``P(X_n = 1) = n^-alpha`` (:mod:`.sampling`);
* random, hitting-time, weighted and Cesaro averages with their exact
  finite identities (:mod:`.averages`);
* domination and bilateral uniform certificates for sequences of
  self-adjoint elements (:mod:`.maximal`);
* circle suprema, Chernoff tallies and operator-norm checks for the
  centered sums (:mod:`.concentration`);
* scikit-learn style estimators (:mod:`.estimators`) and an experiment
  runner (:mod:`.cli`).
"""
from .algebra import DEFAULT_TOL, AlgebraSpec, Element, ElementStack, Tolerance, p_norm, trace
from .operators import DSOperator, ergodic_projection
from .sampling import RandomPath, sample_path

__version__ = "0.1.0"

__all__ = [
    "AlgebraSpec",
    "DEFAULT_TOL",
    "DSOperator",
    "Element",
    "ElementStack",
    "RandomPath",
    "Tolerance",
    "ergodic_projection",
    "p_norm",
    "sample_path",
    "trace",
]
