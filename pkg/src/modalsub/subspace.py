"""Energy-minimizing modal subspaces: model, losses, training, checkpoints.

A SubspaceModel decodes modal coordinates z to positions
X + l(z) + y[theta](z), where l = sum_i z_i e_i is the linear-mode
displacement and y is an MLP correction. Training minimizes mean elastic
energy over the modal domain plus two penalties (orthogonality of y to l,
and y(0) = 0) with no simulation data; an L2-supervised variant fits
oracle displacements directly for baseline comparisons.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModalSubError, NumericalError
from .lbfgs import LbfgsSolver, wolfe_step
from .mesh import MaterialParams, Mesh, mesh_from_dict, mesh_to_dict
from .modes import LinearModeBasis, linear_displacement
from .network import (
    MlpParams,
    mlp_backward,
    mlp_forward,
    mlp_forward_cached,
    mlp_init,
    pack_gradients,
    pack_params,
    unpack_params,
)
from .sampling import grid_coords, random_coords
from .validation import check_box, check_modal_coords

CHECKPOINT_FORMAT = "neural-subspace-checkpoint"
CHECKPOINT_VERSION = 1
DEFAULT_HIDDEN = (64, 64, 64, 64, 64)


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for both training variants; defaults mirror the sheet benchmark."""

    mode: str = "grid"  # grid | stochastic
    epochs: int = 1000
    batch_size: int = 512  # stochastic mode only
    grid_resolution: int = 9
    lambda_ortho: float = 1.0e8
    eta_origin: float = 1.0e7
    seed: int = 0
    early_stop: str = "none"  # none | l2 | energy
    patience: int = 10  # evaluations without improvement before stopping
    eval_every: int = 10
    lbfgs_history: int = 10
    max_line_search: int = 30

    def __post_init__(self):
        if self.mode not in ("grid", "stochastic"):
            raise ConfigError(f"unknown sampling mode {self.mode!r}")
        if self.early_stop not in ("none", "l2", "energy"):
            raise ConfigError(f"unknown early-stop metric {self.early_stop!r}")
        if self.lambda_ortho < 0 or self.eta_origin < 0:
            raise ConfigError("penalty weights must be non-negative")
        if self.mode == "grid" and self.grid_resolution < 2:
            raise ConfigError("grid resolution must be >= 2 per axis")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "grid_resolution": self.grid_resolution,
            "lambda_ortho": self.lambda_ortho,
            "eta_origin": self.eta_origin,
            "seed": self.seed,
            "early_stop": self.early_stop,
            "patience": self.patience,
            "eval_every": self.eval_every,
            "lbfgs_history": self.lbfgs_history,
            "max_line_search": self.max_line_search,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (str, int)):
        return str(v)
    return repr(float(v))


@dataclass
class TrainingHistory:
    """Per-epoch loss rows plus periodic validation/test metric rows."""

    rows: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    aborted: bool = False
    stopped_epoch: int | None = None
    restored_epoch: int | None = None

    def eval_series(self, split: str, key: str):
        pts = [(r["epoch"], r[key]) for r in self.evals
               if r["split"] == split and r.get(key) is not None]
        return [p[0] for p in pts], [p[1] for p in pts]

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "evals": self.evals,
            "aborted": self.aborted,
            "stopped_epoch": self.stopped_epoch,
            "restored_epoch": self.restored_epoch,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainingHistory":
        return TrainingHistory(
            rows=list(d.get("rows", [])),
            evals=list(d.get("evals", [])),
            aborted=bool(d.get("aborted", False)),
            stopped_epoch=d.get("stopped_epoch"),
            restored_epoch=d.get("restored_epoch"),
        )

    def write_csv(self, path) -> None:
        cols = ["epoch", "loss", "mean_energy", "mean_ortho_sq", "origin_norm"]
        lines = [",".join(cols)]
        for r in self.rows:
            lines.append(",".join(_csv_cell(r.get(c)) for c in cols))
        Path(path).write_text("\n".join(lines) + "\n")

    def write_evals_csv(self, path) -> None:
        cols = ["epoch", "split", "l2", "energy", "stress_avg"]
        lines = [",".join(cols)]
        for r in self.evals:
            lines.append(",".join(_csv_cell(r.get(c)) for c in cols))
        Path(path).write_text("\n".join(lines) + "\n")


def normalize_coords(z: np.ndarray, box: np.ndarray) -> np.ndarray:
    """Map box coordinates to [-1, 1] per axis (network conditioning)."""
    center = 0.5 * (box[:, 0] + box[:, 1])
    half = 0.5 * (box[:, 1] - box[:, 0])
    return (z - center) / half


class SubspaceModel:
    """Immutable decoder z -> X + l(z) + y(z) with its provenance."""

    def __init__(
        self,
        mesh: Mesh,
        material: MaterialParams,
        basis: LinearModeBasis,
        params: MlpParams,
        box,
        aux_spec: tuple = (),
        fingerprint: str = "",
        train_config: TrainConfig | None = None,
        history: TrainingHistory | None = None,
    ):
        self.mesh = mesh
        self.material = material
        self.basis = basis
        self.params = params
        self.box = check_box(box, basis.num_modes)
        self.aux_spec = tuple(aux_spec)
        self.fingerprint = fingerprint
        self.train_config = train_config
        self.history = history
        expected_in = basis.num_modes + len(self.aux_spec)
        if params.widths[0] != expected_in:
            raise ModalSubError(
                f"network input width {params.widths[0]} != modes+aux {expected_in}"
            )
        if params.widths[-1] != mesh.num_dofs:
            raise ModalSubError(
                f"network output width {params.widths[-1]} != 3n {mesh.num_dofs}"
            )

    # -- decoding ----------------------------------------------------------

    @property
    def num_modes(self) -> int:
        return self.basis.num_modes

    @property
    def num_dofs(self) -> int:
        return self.mesh.num_dofs

    def network_input(self, z: np.ndarray, aux=None) -> np.ndarray:
        zin = normalize_coords(z, self.box)
        if not self.aux_spec:
            return zin
        if aux is None:
            raise ModalSubError("model expects auxiliary parameters")
        aux = np.asarray(aux, dtype=np.float64)
        aux_box = np.array([[a["lo"], a["hi"]] for a in self.aux_spec])
        aux_in = normalize_coords(np.broadcast_to(aux, zin.shape[:-1] + (len(self.aux_spec),)), aux_box)
        return np.concatenate([zin, aux_in], axis=-1)

    def nonlinear(self, z, aux=None) -> np.ndarray:
        """Network correction y(z); accepts (m,) or (batch, m)."""
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        zs = check_modal_coords(z, self.num_modes)
        y = mlp_forward(self.params, self.network_input(zs, aux))
        return y[0] if single else y

    def displacement(self, z, aux=None) -> np.ndarray:
        """l(z) + y(z)."""
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim == 1
        zs = check_modal_coords(z, self.num_modes)
        d = linear_displacement(self.basis, zs) + mlp_forward(
            self.params, self.network_input(zs, aux)
        )
        return d[0] if single else d

    def decode(self, z, aux=None) -> np.ndarray:
        """Full positions n(z) = X + l(z) + y(z)."""
        return self.mesh.rest_positions + self.displacement(z, aux)

    def displacement_vjp(self, z, cotangent, aux=None) -> np.ndarray:
        """Exact d(cotangent . displacement)/dz for a single z."""
        z = np.asarray(z, dtype=np.float64)
        zs = check_modal_coords(z, self.num_modes)
        zin = self.network_input(zs, aux)
        _, cache = mlp_forward_cached(self.params, zin)
        _, _, gin = mlp_backward(self.params, cache, cotangent[None, :],
                                 with_input_grad=True)
        half = 0.5 * (self.box[:, 1] - self.box[:, 0])
        g = self.basis.project(cotangent) + gin[0, : self.num_modes] / half
        return g

    def ortho_stats(self, zs, aux=None) -> dict:
        """Raw (l.y)^2 values and the normalized ratio used by diagnostics."""
        zs = check_modal_coords(zs, self.num_modes)
        l = linear_displacement(self.basis, zs)
        y = mlp_forward(self.params, self.network_input(zs, aux))
        ly = np.einsum("bi,bi->b", l, y)
        ln = np.einsum("bi,bi->b", l, l)
        yn = np.einsum("bi,bi->b", y, y)
        denom = ln * yn
        ok = denom > 0.0
        ratios = np.zeros_like(ly)
        ratios[ok] = ly[ok] ** 2 / denom[ok]
        return {
            "sq_values": ly**2,
            "ratios": ratios[ok],
            "mean_sq": float(np.mean(ly**2)),
            "mean_ratio": float(np.mean(ratios[ok])) if np.any(ok) else 0.0,
        }

    def jacobian_at_origin(self, rel_step: float = 1.0e-4, aux=None) -> np.ndarray:
        """Latent directions at z=0: e_i plus a forward difference of y.

        Columns are unit-normalized; a column already unit to within 1e-12
        is returned unchanged, which keeps the zero-network case bit-exact
        (columns equal the basis vectors).
        """
        m = self.num_modes
        widths = self.box[:, 1] - self.box[:, 0]
        y0 = self.nonlinear(np.zeros(m), aux)
        cols = []
        for i in range(m):
            h = rel_step * widths[i]
            z = np.zeros(m)
            z[i] = h
            col = self.basis.modes[:, i] + (self.nonlinear(z, aux) - y0) / h
            nrm = float(np.linalg.norm(col))
            if nrm == 0.0:
                raise NumericalError(f"latent direction {i} vanished")
            if abs(nrm - 1.0) > 1.0e-12:
                col = col / nrm
            cols.append(col)
        return np.stack(cols, axis=1)

    def with_zero_network(self) -> "SubspaceModel":
        """Copy whose correction is exactly zero (final layer zeroed)."""
        params = self.params.copy()
        params.weights[-1][:] = 0.0
        params.biases[-1][:] = 0.0
        return SubspaceModel(
            mesh=self.mesh,
            material=self.material,
            basis=self.basis,
            params=params,
            box=self.box,
            aux_spec=self.aux_spec,
            fingerprint=self.fingerprint,
            train_config=self.train_config,
            history=self.history,
        )


# -- loss functions ---------------------------------------------------------


def _self_supervised_loss(theta, widths, energy_model, basis, box, zs,
                          lam, eta, rest, stats=None, strict=True):
    """Loss and flat parameter gradient of the energy-minimization objective.

    L = mean_b [ E(X + l_b + y_b) + lam * (l_b . y_b)^2 ] + eta * |y(0)|^2

    With strict=False a diverged trial point (non-finite positions or
    energies) yields (+inf, None) so a line search can backtrack past it.
    """
    params = unpack_params(theta, widths)
    zin = normalize_coords(zs, box)
    y, cache = mlp_forward_cached(params, zin)
    l = linear_displacement(basis, zs)
    x = rest + l + y
    if not np.all(np.isfinite(x)):
        if strict:
            raise NumericalError("network output is non-finite")
        return np.inf, None
    e, grad_e = energy_model.energy_and_gradient_batch(x)
    if not np.all(np.isfinite(e)):
        if strict:
            bad = int(np.argmax(~np.isfinite(e)))
            raise NumericalError(
                f"non-finite energy at batch sample {bad}, z={zs[bad]}"
            )
        return np.inf, None
    ly = np.einsum("bi,bi->b", l, y)
    bsz = zs.shape[0]
    loss = float(np.mean(e + lam * ly**2))
    cot = (grad_e + (2.0 * lam) * ly[:, None] * l) / bsz
    w_grads, b_grads = mlp_backward(params, cache, cot)
    grad = pack_gradients(w_grads, b_grads)

    z0 = normalize_coords(np.zeros((1, zs.shape[1])), box)
    y0, cache0 = mlp_forward_cached(params, z0)
    origin_sq = float(y0[0] @ y0[0])
    loss += eta * origin_sq
    w0, b0 = mlp_backward(params, cache0, (2.0 * eta) * y0)
    grad += pack_gradients(w0, b0)

    if stats is not None:
        stats.update(
            loss=loss,
            mean_energy=float(np.mean(e)),
            mean_ortho_sq=float(np.mean(ly**2)),
            origin_norm=float(np.sqrt(origin_sq)),
        )
    return loss, grad


def _l2_loss(theta, widths, basis, box, zs, targets, rest, stats=None):
    """Geometric baseline: L = mean_b |l_b + y_b - u*_b|^2."""
    params = unpack_params(theta, widths)
    zin = normalize_coords(zs, box)
    y, cache = mlp_forward_cached(params, zin)
    l = linear_displacement(basis, zs)
    r = l + y - targets
    bsz = zs.shape[0]
    loss = float(np.einsum("bi,bi->", r, r) / bsz)
    if not np.isfinite(loss):
        return np.inf, None
    w_grads, b_grads = mlp_backward(params, cache, (2.0 / bsz) * r)
    grad = pack_gradients(w_grads, b_grads)
    if stats is not None:
        stats.update(loss=loss)
    return loss, grad


def loss_batch(model: SubspaceModel, energy_model, zs,
               lambda_ortho: float = 1.0e8, eta_origin: float = 1.0e7):
    """Public self-supervised loss: (value, flat parameter gradient)."""
    zs = check_modal_coords(zs, model.num_modes)
    theta = pack_params(model.params)
    return _self_supervised_loss(
        theta, model.params.widths, energy_model, model.basis,
        model.box, zs, lambda_ortho, eta_origin, model.mesh.rest_positions,
    )


# -- training loops ----------------------------------------------------------


def _eval_splits(theta, widths, basis, box, rest, energy_model, splits, epoch,
                 history):
    """Record validation/test metrics; returns {split: metrics} for this pass."""
    out = {}
    for split, data in splits.items():
        if data is None:
            continue
        zs, targets = data
        y = mlp_forward(unpack_params(theta, widths), normalize_coords(zs, box))
        d = linear_displacement(basis, zs) + y
        row = {"epoch": epoch, "split": split, "l2": None, "energy": None,
               "stress_avg": None}
        if targets is not None:
            r = d - targets
            row["l2"] = float(np.einsum("bi,bi->", r, r) / zs.shape[0])
        x = rest + d
        row["energy"] = float(np.mean(energy_model.energy_batch(x)))
        stresses = energy_model.element_stress_batch(x)
        w = energy_model.element_weights()
        row["stress_avg"] = float(np.mean(stresses @ w / w.sum()))
        history.evals.append(row)
        out[split] = row
    return out


def _run_training(fun_for_batch, next_batch, theta0, cfg: TrainConfig,
                  eval_hook, history: TrainingHistory):
    """One L-BFGS iteration per epoch with persistent curvature memory.

    fun_for_batch(zs) -> fun_grad(theta) closure; next_batch(epoch) -> batch.
    In grid mode the batch (hence the objective) is fixed, so this is plain
    full-batch L-BFGS; in stochastic mode the memory is retained across
    batches and non-productive curvature pairs are dropped by the solver.
    """
    theta = np.array(theta0, dtype=np.float64)
    solver = LbfgsSolver(cfg.lbfgs_history)
    stats: dict = {}
    best_metric = None
    best_theta = None
    best_epoch = None
    stall = 0
    fixed_batch = cfg.mode == "grid"
    f0 = g0 = None
    for epoch in range(1, cfg.epochs + 1):
        zs = next_batch(epoch)
        fun_grad = fun_for_batch(zs, stats)
        if f0 is None or not fixed_batch:
            f0, g0 = fun_grad(theta)
        if not np.isfinite(f0):
            # Can only happen on the very first evaluation: accepted points
            # always have finite loss.
            history.aborted = True
            history.stopped_epoch = epoch
            break
        row_stats = dict(stats)
        d = solver.direction(g0)
        if float(d @ g0) >= 0.0:
            solver.reset()
            d = -g0
        gnorm = float(np.linalg.norm(g0))
        if gnorm == 0.0:
            history.rows.append({"epoch": epoch, **row_stats})
            continue
        alpha0 = 1.0 if solver.num_pairs > 0 else min(1.0, 1.0 / gnorm)
        alpha, f1, g1, _, _ = wolfe_step(
            fun_grad, theta, f0, g0, d,
            max_steps=cfg.max_line_search, alpha0=alpha0,
        )
        if alpha == 0.0 or g1 is None:
            # Stalled line search: drop stale memory and try again next epoch.
            solver.reset()
            history.rows.append({"epoch": epoch, **row_stats})
            f0 = g0 = None
            continue
        solver.push(alpha * d, g1 - g0)
        theta = theta + alpha * d
        f0, g0 = f1, g1
        history.rows.append({"epoch": epoch, **stats})

        if eval_hook and (epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            metrics = eval_hook(theta, epoch)
            if cfg.early_stop != "none" and metrics is not None:
                current = metrics.get(cfg.early_stop)
                if current is not None:
                    if best_metric is None or current < best_metric:
                        best_metric, best_theta, best_epoch = current, theta.copy(), epoch
                        stall = 0
                    else:
                        stall += 1
                    if stall > cfg.patience:
                        history.stopped_epoch = epoch
                        if best_theta is not None:
                            theta = best_theta
                            history.restored_epoch = best_epoch
                        break
    return theta


def train(
    energy_model,
    basis: LinearModeBasis,
    box,
    cfg: TrainConfig,
    hidden=DEFAULT_HIDDEN,
    val_set=None,
    test_set=None,
    init_params: MlpParams | None = None,
) -> tuple[SubspaceModel, TrainingHistory]:
    """Self-supervised training: no simulation data, only the energy model.

    val_set/test_set are optional (zs, displacements-or-None) tuples used
    for periodic metric logging and early stopping.
    """
    box = check_box(box, basis.num_modes)
    rest = energy_model.mesh.rest_positions
    m = basis.num_modes
    widths = [m, *hidden, energy_model.num_dofs]
    params = init_params if init_params is not None else mlp_init(widths, cfg.seed)
    if params.widths != widths:
        raise ConfigError(f"init_params widths {params.widths} != {widths}")
    history = TrainingHistory()
    rng = np.random.default_rng(cfg.seed + 1)
    fixed = grid_coords(box, cfg.grid_resolution) if cfg.mode == "grid" else None

    def next_batch(_epoch):
        if fixed is not None:
            return fixed
        return random_coords(box, cfg.batch_size, rng)

    def fun_for_batch(zs, stats):
        def fun_grad(theta):
            return _self_supervised_loss(
                theta, widths, energy_model, basis, box, zs,
                cfg.lambda_ortho, cfg.eta_origin, rest, stats, strict=False,
            )
        return fun_grad

    splits = {"validation": val_set, "test": test_set}

    def eval_hook(theta, epoch):
        rows = _eval_splits(theta, widths, basis, box, rest, energy_model,
                            splits, epoch, history)
        return rows.get("validation")

    theta = _run_training(fun_for_batch, next_batch, pack_params(params), cfg,
                          eval_hook if (val_set or test_set) else None, history)
    model = SubspaceModel(
        mesh=energy_model.mesh,
        material=energy_model.material,
        basis=basis,
        params=unpack_params(theta, widths),
        box=box,
        fingerprint=energy_model.fingerprint(),
        train_config=cfg,
        history=history,
    )
    return model, history


def train_supervised_l2(
    energy_model,
    basis: LinearModeBasis,
    box,
    dataset,
    cfg: TrainConfig,
    hidden=DEFAULT_HIDDEN,
    val_set=None,
    test_set=None,
    init_params: MlpParams | None = None,
) -> tuple[SubspaceModel, TrainingHistory]:
    """Geometric-supervision baseline on oracle displacements.

    dataset is (zs, displacements); each epoch is one L-BFGS iteration on
    the full dataset (the energy model is only used for metric logging).
    """
    box = check_box(box, basis.num_modes)
    zs_all, targets_all = dataset
    zs_all = check_modal_coords(zs_all, basis.num_modes)
    targets_all = np.asarray(targets_all, dtype=np.float64)
    if targets_all.shape != (zs_all.shape[0], energy_model.num_dofs):
        raise ConfigError(
            f"targets shape {targets_all.shape} does not match dataset"
        )
    rest = energy_model.mesh.rest_positions
    m = basis.num_modes
    widths = [m, *hidden, energy_model.num_dofs]
    params = init_params if init_params is not None else mlp_init(widths, cfg.seed)
    history = TrainingHistory()

    def next_batch(_epoch):
        return zs_all

    def fun_for_batch(zs, stats):
        def fun_grad(theta):
            return _l2_loss(theta, widths, basis, box, zs, targets_all, rest, stats)
        return fun_grad

    splits = {"validation": val_set, "test": test_set}

    def eval_hook(theta, epoch):
        rows = _eval_splits(theta, widths, basis, box, rest, energy_model,
                            splits, epoch, history)
        return rows.get("validation")

    theta = _run_training(fun_for_batch, next_batch, pack_params(params), cfg,
                          eval_hook if (val_set or test_set) else None, history)
    model = SubspaceModel(
        mesh=energy_model.mesh,
        material=energy_model.material,
        basis=basis,
        params=unpack_params(theta, widths),
        box=box,
        fingerprint=energy_model.fingerprint(),
        train_config=cfg,
        history=history,
    )
    return model, history


# -- checkpoint IO ------------------------------------------------------------


def checkpoint_dict(model: SubspaceModel) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "fingerprint": model.fingerprint,
        "widths": model.params.widths,
        "weights": [[[float(v) for v in row] for row in w] for w in model.params.weights],
        "biases": [[float(v) for v in b] for b in model.params.biases],
        "box": [[float(lo), float(hi)] for lo, hi in model.box],
        "aux_spec": list(model.aux_spec),
        "basis": model.basis.to_dict(),
        "mesh": mesh_to_dict(model.mesh),
        "material": model.material.to_dict(),
        "train_config": model.train_config.to_dict() if model.train_config else None,
        "history": model.history.to_dict() if model.history else None,
    }


def save_checkpoint(model: SubspaceModel, path) -> None:
    """Versioned JSON checkpoint; float repr makes the round trip bit-exact."""
    Path(path).write_text(json.dumps(checkpoint_dict(model)))


def load_checkpoint(path) -> SubspaceModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path} is not a subspace checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {d.get('version')}")
    params = MlpParams(
        weights=tuple(np.array(w, dtype=np.float64) for w in d["weights"]),
        biases=tuple(np.array(b, dtype=np.float64) for b in d["biases"]),
    )
    cfg = d.get("train_config")
    hist = d.get("history")
    return SubspaceModel(
        mesh=mesh_from_dict(d["mesh"]),
        material=MaterialParams.from_dict(d["material"]),
        basis=LinearModeBasis.from_dict(d["basis"]),
        params=params,
        box=np.array(d["box"], dtype=np.float64),
        aux_spec=tuple(d.get("aux_spec", ())),
        fingerprint=d.get("fingerprint", ""),
        train_config=TrainConfig.from_dict(cfg) if cfg else None,
        history=TrainingHistory.from_dict(hist) if hist else None,
    )
