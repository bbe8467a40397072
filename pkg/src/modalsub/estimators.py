"""Scikit-learn style estimator facade over subspace training.

NonlinearSubspace follows the fit/transform contract: fit() trains the
network (self-supervised by default, supervised L2 when targets are
given), transform() decodes latent coordinates to mesh positions, and
inverse_transform() projects displacements back to latent coordinates.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .energy import build_energy_model
from .errors import ConfigError
from .mesh import MaterialParams, Mesh
from .modes import linear_modes
from .sampling import box_from_half_width
from .subspace import TrainConfig, train, train_supervised_l2
from .validation import check_modal_coords, check_position_batch


class NonlinearSubspace(BaseEstimator, TransformerMixin):
    """Learn an energy-minimizing nonlinear extension of linear modes.

    Parameters mirror TrainConfig; the mesh and material are constructor
    arguments rather than fit data because the model is self-supervised:
    fit(X=None) needs only the rest shape. Passing X (latent coords) and
    y (equilibrium positions) switches to the supervised L2 baseline.
    """

    def __init__(
        self,
        mesh: Mesh = None,
        material: MaterialParams = None,
        num_modes: int = 3,
        half_width: float = 0.625,
        hidden: tuple = (64, 64, 64, 64, 64),
        mode: str = "grid",
        epochs: int = 1000,
        batch_size: int = 512,
        grid_resolution: int = 9,
        lambda_ortho: float = 1.0e8,
        eta_origin: float = 1.0e7,
        early_stop: str = "none",
        seed: int = 0,
    ):
        self.mesh = mesh
        self.material = material
        self.num_modes = num_modes
        self.half_width = half_width
        self.hidden = hidden
        self.mode = mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.grid_resolution = grid_resolution
        self.lambda_ortho = lambda_ortho
        self.eta_origin = eta_origin
        self.early_stop = early_stop
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            mode=self.mode,
            epochs=self.epochs,
            batch_size=self.batch_size,
            grid_resolution=self.grid_resolution,
            lambda_ortho=self.lambda_ortho,
            eta_origin=self.eta_origin,
            early_stop=self.early_stop,
            seed=self.seed,
        )

    def fit(self, X=None, y=None, val_set=None, test_set=None):
        """Train the subspace network.

        X=None runs self-supervised energy minimization. With X (latent
        coordinates, shape (b, m)) and y (equilibrium positions,
        shape (b, 3n)) the supervised L2 baseline is trained instead.
        """
        if self.mesh is None:
            raise ConfigError("NonlinearSubspace requires a mesh")
        material = self.material if self.material is not None else MaterialParams()
        energy_model = build_energy_model(self.mesh, material)
        basis = linear_modes(
            energy_model.hessian(self.mesh.rest_positions), self.num_modes
        )
        box = box_from_half_width(self.num_modes, self.half_width)
        cfg = self._train_config()
        if X is None:
            model, history = train(
                energy_model, basis, box, cfg, hidden=self.hidden,
                val_set=val_set, test_set=test_set,
            )
        else:
            if y is None:
                raise ConfigError("supervised fit needs target positions y")
            zs = check_modal_coords(X, self.num_modes)
            targets = check_position_batch(y, basis.num_dofs, "y")
            displacements = targets - self.mesh.rest_positions
            model, history = train_supervised_l2(
                energy_model, basis, box, (zs, displacements), cfg,
                hidden=self.hidden, val_set=val_set, test_set=test_set,
            )
        self.model_ = model
        self.history_ = history
        self.basis_ = basis
        self.n_features_in_ = self.num_modes
        return self

    def transform(self, X) -> np.ndarray:
        """Decode latent coordinates to deformed positions, shape (b, 3n)."""
        check_is_fitted(self, "model_")
        zs = check_modal_coords(X, self.num_modes)
        return self.model_.decode(zs)

    def inverse_transform(self, X) -> np.ndarray:
        """Project positions back to latent coordinates via the basis."""
        check_is_fitted(self, "model_")
        xs = check_position_batch(X, self.basis_.num_dofs, "X")
        return self.basis_.project(xs - self.mesh.rest_positions)

    def score(self, X=None, y=None) -> float:
        """Negative mean elastic energy over latent samples (higher better)."""
        check_is_fitted(self, "model_")
        if X is None:
            rows = [r for r in self.history_.rows if r.get("mean_energy") is not None]
            if not rows:
                raise NotFittedError("no training history to score from")
            return -rows[-1]["mean_energy"]
        material = self.material if self.material is not None else MaterialParams()
        energy_model = build_energy_model(self.mesh, material)
        return -float(np.mean(energy_model.energy_batch(self.transform(X))))
