"""Estimator-style wrappers around the functional API.

Elements enter and leave as rows of an ``(n_samples, D)`` complex array of
:meth:`Element.vec` vectors, so the classes compose with scikit-learn
pipelines and parameter tools (``get_params``, ``clone``).  Each estimator
learns a linear map on the algebra in ``fit`` and applies it row by row in
``transform``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_alpha, check_element_array, check_positive_int
from .algebra import DEFAULT_TOL, AlgebraSpec, ElementStack
from .maximal import STRATEGIES, bau_certificate
from .operators import ergodic_projection
from .sampling import sample_path

__all__ = ["ErgodicProjector", "RandomErgodicAverager", "BauCertifier", "averaging_matrix"]

_SCHEMES = ("random", "fluctuation", "weighted", "cesaro", "hitting")


def averaging_matrix(S: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    """``sum_{n>=1} coeff[n-1] S^n`` by Horner's rule; zero tails of ``coeff`` are skipped."""
    coeff = np.asarray(coeff)
    nz = np.flatnonzero(coeff)
    I = np.eye(S.shape[0])
    A = np.zeros_like(S, dtype=complex)
    if nz.size == 0:
        return A
    if nz.size < coeff.size // 4:
        # sparse coefficients: accumulate powers hit by hit
        P, prev = I.astype(complex), 0
        for n in nz + 1:
            P = np.linalg.matrix_power(S, int(n - prev)) @ P
            prev = n
            A += coeff[n - 1] * P
        return A
    for c in coeff[: nz[-1] + 1][::-1]:
        A = S @ (A + c * I)
    return A


class ErgodicProjector(TransformerMixin, BaseEstimator):
    """Mean ergodic projection ``Q_T`` as a transformer.

    Parameters
    ----------
    operator : DSOperator
        The operator ``T``.
    rtol : float
        Relative cut for the singular values of ``I - T``.
    """

    def __init__(self, operator=None, rtol: float = 1e-9):
        self.operator = operator
        self.rtol = rtol

    def fit(self, X=None, y=None):
        if self.operator is None:
            raise ValueError("an operator is required")
        self.projection_ = ergodic_projection(self.operator, self.rtol)
        self.spec_ = self.operator.spec
        self.n_features_in_ = self.spec_.D
        self.rank_ = self.projection_.rank
        return self

    def transform(self, X):
        check_is_fitted(self, "projection_")
        X = check_element_array(X, self.spec_)
        return X @ self.projection_.matrix.T


class RandomErgodicAverager(TransformerMixin, BaseEstimator):
    """Average of ``T^n x`` along one Bernoulli path, evaluated at a fixed index.

    ``scheme="random"`` gives ``(1/W_N) sum X_n T^n x``, ``"fluctuation"``
    the centered version with ``Y_n``, ``"weighted"`` the deterministic
    ``n^-alpha`` weights, ``"cesaro"`` the plain mean and ``"hitting"``
    ``(1/m) sum_{k<=m} T^{n_k} x``, where ``n`` is then the number of hits
    ``m``.  ``n=None`` means ``n_max`` (or every available hit).
    """

    def __init__(self, operator=None, alpha: float = 0.5, n_max: int = 10_000, seed: int = 0, scheme: str = "random", n=None):
        self.operator = operator
        self.alpha = alpha
        self.n_max = n_max
        self.seed = seed
        self.scheme = scheme
        self.n = n

    def fit(self, X=None, y=None):
        if self.operator is None:
            raise ValueError("an operator is required")
        if self.scheme not in _SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {_SCHEMES}")
        alpha = check_alpha(self.alpha)
        n_max = check_positive_int(self.n_max, "n_max")
        self.path_ = sample_path(alpha, n_max, self.seed)
        self.spec_ = self.operator.spec
        self.n_features_in_ = self.spec_.D
        S = self.operator.superop().matrix
        path = self.path_
        if self.scheme == "hitting":
            m = path.hits.size if self.n is None else check_positive_int(self.n, "n")
            if m > path.hits.size or m == 0:
                raise ValueError(f"the path has {path.hits.size} hits, {m} requested")
            N = int(path.hits[m - 1])
            coeff, norm = path.X[:N].astype(float), float(m)
        else:
            N = n_max if self.n is None else check_positive_int(self.n, "n")
            if N > n_max:
                raise ValueError(f"n = {N} exceeds n_max = {n_max}")
            if self.scheme == "random":
                coeff, norm = path.X[:N].astype(float), path.weight(N)
            elif self.scheme == "fluctuation":
                coeff, norm = path.Y[:N], path.weight(N)
            elif self.scheme == "weighted":
                coeff, norm = path.probabilities[:N], path.weight(N)
            else:
                coeff, norm = np.ones(N), float(N)
        self.index_ = N
        self.averaging_matrix_ = averaging_matrix(S, coeff) / norm
        self.projection_ = ergodic_projection(self.operator)
        return self

    def transform(self, X):
        check_is_fitted(self, "averaging_matrix_")
        X = check_element_array(X, self.spec_)
        return X @ self.averaging_matrix_.T

    def residual(self, X, p: float = 2.0) -> np.ndarray:
        """``||A x - L x||_p`` for every row of ``X``.

        ``L = Q_T`` except for the fluctuation scheme, whose limit is zero.
        """
        check_is_fitted(self, "averaging_matrix_")
        X = check_element_array(X, self.spec_)
        limit = 0.0 if self.scheme == "fluctuation" else self.projection_.matrix
        diff = X @ (self.averaging_matrix_ - limit).T
        return ElementStack.from_vectors(self.spec_, diff).p_norms(p)


class BauCertifier(BaseEstimator):
    """Bilateral uniform certificate for a window of self-adjoint residuals.

    ``fit`` takes the window as rows of vectorized elements (``u_n - u``);
    ``transform`` compresses rows by the certified projection, ``x -> e x e``.
    """

    def __init__(self, spec: AlgebraSpec | None = None, eps: float = 0.05, p: float = 2.0, strategies=STRATEGIES, start: int = 1):
        self.spec = spec
        self.eps = eps
        self.p = p
        self.strategies = strategies
        self.start = start

    def fit(self, X, y=None):
        if self.spec is None:
            raise ValueError("an algebra spec is required")
        X = check_element_array(X, self.spec)
        stack = ElementStack.from_vectors(self.spec, X)
        self.certificate_ = bau_certificate(stack, None, self.eps, self.p, tuple(self.strategies), self.start, DEFAULT_TOL)
        self.n_features_in_ = self.spec.D
        self.projection_ = self.certificate_.e
        self.sup_bound_ = self.certificate_.sup_bound
        self.trace_defect_ = self.certificate_.trace_defect
        return self

    def transform(self, X):
        check_is_fitted(self, "certificate_")
        X = check_element_array(X, self.spec)
        return np.stack([(self.projection_ @ self.spec.unvec(v) @ self.projection_).vec() for v in X])

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)
