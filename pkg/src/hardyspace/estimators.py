"""
scikit-learn style wrappers.

Rows of ``X`` are grid functions flattened in row-major lattice order. The
operator is built (and diagonalized) in ``fit``; ``transform`` maps each row
to a maximal function or to the synthesis of its atomic decomposition.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .decomposition import atomic_decompose, default_M
from .exceptions import PreconditionError
from .grid import Field, GridSpec, lp_quasinorm
from .harness import ExperimentConfig, default_dictionary, make_operator
from .maximal import (ScaleGrid, area_function, grand_maximal, nt_maximal,
                      peetre_maximal, radial_maximal, script_M)
from .operator import gaussian_symbol
from .symbols import default_seminorm_order, make_calderon_bundle
from .validation import check_p, check_positive, check_samples

_KINDS = ("nontangential", "radial", "area", "peetre", "grand", "script")


class _OperatorMixin:
    def _build(self):
        cfg = ExperimentConfig(dim=self.dim, points=self.points_per_side,
                               boundary=self.boundary, operator=self.operator,
                               potential_seed=self.potential_seed)
        self.grid_ = cfg.grid
        self.operator_ = make_operator(cfg)


class MaximalFunctionTransformer(_OperatorMixin, TransformerMixin, BaseEstimator):
    """Pointwise maximal or square function of each sample.

    Parameters
    ----------
    kind : {'nontangential', 'radial', 'area', 'peetre', 'grand', 'script'}
    alpha : float
        Cone aperture for ``nontangential``.
    p : float
        Used by ``peetre`` (``lambda = n/p + 1``), ``grand`` (seminorm order)
        and :meth:`score_norms`.
    per_decade : int
        Scale-grid density on ``[h, side/2]``.
    """

    def __init__(self, kind="nontangential", dim=1, points_per_side=128,
                 boundary="periodic", operator="laplacian", potential_seed=0,
                 alpha=1.0, p=1.0, per_decade=64):
        self.kind = kind
        self.dim = dim
        self.points_per_side = points_per_side
        self.boundary = boundary
        self.operator = operator
        self.potential_seed = potential_seed
        self.alpha = alpha
        self.p = p
        self.per_decade = per_decade

    def fit(self, X=None, y=None):
        if self.kind not in _KINDS:
            raise PreconditionError(f"unknown kind {self.kind!r}")
        check_positive("alpha", self.alpha)
        check_p(self.p)
        self._build()
        if X is not None:
            check_samples(X, self.grid_)
        if self.kind == "script":
            self.scales_ = ScaleGrid.for_reconstruction(self.operator_)
        else:
            self.scales_ = ScaleGrid.for_grid(self.grid_, self.per_decade)
        return self

    def _one(self, f: Field) -> Field:
        op, s, n = self.operator_, self.scales_, self.grid_.dim
        if self.kind == "nontangential":
            return nt_maximal(op, gaussian_symbol, f, s, self.alpha)
        if self.kind == "radial":
            return radial_maximal(op, f, s)
        if self.kind == "area":
            return area_function(op, f, s)
        if self.kind == "peetre":
            return peetre_maximal(op, gaussian_symbol, f, s, n / self.p + 1)
        if self.kind == "grand":
            N = default_seminorm_order(n, self.p)
            return grand_maximal(op, default_dictionary(N), f, s, N)
        return script_M(op, make_calderon_bundle(default_M(n, self.p)), f, s)

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = check_samples(X, self.grid_)
        return np.stack([self._one(Field(self.grid_, row)).values for row in X])

    def score_norms(self, X) -> np.ndarray:
        """``L^p`` quasi-norm of the transformed rows."""
        M = self.transform(X)
        return np.array([lp_quasinorm(m, self.p, self.grid_) for m in M])


class AtomicDecomposition(_OperatorMixin, TransformerMixin, BaseEstimator):
    """Atomic decomposition of each sample; ``transform`` returns the
    synthesis ``sum lam a`` and the fitted attributes hold the details.

    Attributes
    ----------
    decompositions_ : list of Decomposition
        Filled by :meth:`transform` (one per row of the last call).
    """

    def __init__(self, p=1.0, M=None, dim=1, points_per_side=128,
                 boundary="periodic", operator="laplacian", potential_seed=0,
                 per_e=64, validate=True):
        self.p = p
        self.M = M
        self.dim = dim
        self.points_per_side = points_per_side
        self.boundary = boundary
        self.operator = operator
        self.potential_seed = potential_seed
        self.per_e = per_e
        self.validate = validate

    def fit(self, X=None, y=None):
        p = check_p(self.p)
        self._build()
        self.M_ = default_M(self.grid_.dim, p) if self.M is None else int(self.M)
        self.bundle_ = make_calderon_bundle(self.M_)
        self.scales_ = ScaleGrid.for_reconstruction(self.operator_, self.per_e)
        if X is not None:
            check_samples(X, self.grid_)
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = check_samples(X, self.grid_)
        self.decompositions_ = [
            atomic_decompose(self.operator_, Field(self.grid_, row), self.p, self.M_,
                             self.scales_, self.bundle_, validate=self.validate)
            for row in X]
        return np.stack([d.synthesis.values for d in self.decompositions_])

    @property
    def budgets_(self) -> np.ndarray:
        check_is_fitted(self, "decompositions_")
        return np.array([d.budget for d in self.decompositions_])

    @property
    def residuals_(self) -> np.ndarray:
        check_is_fitted(self, "decompositions_")
        return np.array([d.relative_residual for d in self.decompositions_])
