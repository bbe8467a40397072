"""Subspace model and training: loss gradients, penalties, checkpoints."""

import numpy as np
import pytest

from modalsub import (
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
    train_supervised_l2,
)
from modalsub.errors import ConfigError, ModalSubError
from modalsub.modes import linear_displacement
from modalsub.network import mlp_init, pack_params, unpack_params
from modalsub.subspace import (
    SubspaceModel,
    _self_supervised_loss,
    loss_batch,
    normalize_coords,
)

from _fd import fd_gradient, rel_error


def small_model(sheet_energy, sheet_basis, box, seed=0, perturb=0.05):
    """Untrained model with a non-zero network for derivative tests."""
    widths = [3, 12, sheet_energy.num_dofs]
    params = mlp_init(widths, seed)
    rng = np.random.default_rng(seed + 1)
    theta = pack_params(params) + perturb * rng.standard_normal(
        pack_params(params).size)
    return SubspaceModel(
        mesh=sheet_energy.mesh,
        material=sheet_energy.material,
        basis=sheet_basis,
        params=unpack_params(theta, widths),
        box=box,
        fingerprint=sheet_energy.fingerprint(),
    )


class TestNormalize:
    def test_maps_box_to_unit_cube(self, box):
        assert np.allclose(normalize_coords(box[:, 0], box), -1.0)
        assert np.allclose(normalize_coords(box[:, 1], box), 1.0)
        assert np.allclose(normalize_coords(np.zeros(3), box), 0.0)

    def test_asymmetric_box(self):
        b = np.array([[0.0, 2.0]])
        assert normalize_coords(np.array([0.5]), b)[0] == pytest.approx(-0.5)


class TestDecoding:
    def test_displacement_decomposition(self, sheet_energy, sheet_basis, box):
        model = small_model(sheet_energy, sheet_basis, box)
        z = np.array([0.2, -0.3, 0.1])
        d = model.displacement(z)
        l = linear_displacement(sheet_basis, z)
        y = model.nonlinear(z)
        assert np.allclose(d, l + y, atol=1e-15)
        assert np.allclose(model.decode(z),
                           sheet_energy.mesh.rest_positions + d, atol=1e-15)

    def test_batch_matches_single(self, sheet_energy, sheet_basis, box):
        model = small_model(sheet_energy, sheet_basis, box)
        zs = np.random.default_rng(0).uniform(-0.5, 0.5, size=(6, 3))
        batch = model.displacement(zs)
        for i in range(6):
            assert np.allclose(batch[i], model.displacement(zs[i]), atol=1e-15)

    def test_displacement_vjp_matches_fd(self, sheet_energy, sheet_basis, box):
        model = small_model(sheet_energy, sheet_basis, box)
        rng = np.random.default_rng(2)
        z = rng.uniform(-0.5, 0.5, size=3)
        cot = rng.standard_normal(model.num_dofs)

        def scalar(zz):
            return float(model.displacement(zz) @ cot)

        analytic = model.displacement_vjp(z, cot)
        assert rel_error(analytic, fd_gradient(scalar, z, eps=1e-7)) < 1e-6

    def test_zero_network_control(self, sheet_energy, sheet_basis, box):
        model = small_model(sheet_energy, sheet_basis, box)
        control = model.with_zero_network()
        z = np.array([0.3, 0.1, -0.2])
        assert np.all(control.nonlinear(z) == 0.0)
        assert np.allclose(control.displacement(z),
                           linear_displacement(sheet_basis, z), atol=1e-15)
        # original untouched
        assert np.any(model.nonlinear(z) != 0.0)

    def test_zero_network_jacobian_is_basis(self, sheet_energy, sheet_basis,
                                            box):
        control = small_model(sheet_energy, sheet_basis, box).with_zero_network()
        j = control.jacobian_at_origin()
        assert np.array_equal(j, sheet_basis.modes)
        corr = j.T @ j
        assert np.max(np.abs(corr - np.eye(3))) < 1e-12

    def test_ortho_stats_zero_for_orthogonal_parts(self, sheet_energy,
                                                   sheet_basis, box):
        control = small_model(sheet_energy, sheet_basis, box).with_zero_network()
        zs = np.random.default_rng(3).uniform(-0.5, 0.5, size=(10, 3))
        stats = control.ortho_stats(zs)
        assert stats["mean_sq"] == 0.0
        assert stats["mean_ratio"] == 0.0

    def test_rejects_mismatched_widths(self, sheet_energy, sheet_basis, box):
        params = mlp_init([4, 8, sheet_energy.num_dofs], 0)
        with pytest.raises(ModalSubError):
            SubspaceModel(mesh=sheet_energy.mesh,
                          material=sheet_energy.material,
                          basis=sheet_basis, params=params, box=box)


class TestSelfSupervisedLoss:
    def test_gradient_matches_fd(self, sheet_energy, sheet_basis, box):
        widths = [3, 6, sheet_energy.num_dofs]
        rng = np.random.default_rng(4)
        theta = pack_params(mlp_init(widths, 0))
        theta += 0.05 * rng.standard_normal(theta.size)
        zs = rng.uniform(-0.4, 0.4, size=(4, 3))
        rest = sheet_energy.mesh.rest_positions

        def fun(t):
            val, _ = _self_supervised_loss(
                t, widths, sheet_energy, sheet_basis, box, zs,
                lam=10.0, eta=5.0, rest=rest)
            return val

        _, grad = _self_supervised_loss(
            theta, widths, sheet_energy, sheet_basis, box, zs,
            lam=10.0, eta=5.0, rest=rest)
        assert rel_error(grad, fd_gradient(fun, theta, eps=1e-6)) < 1e-6

    def test_loss_decomposition(self, sheet_energy, sheet_basis, box):
        model = small_model(sheet_energy, sheet_basis, box)
        zs = np.random.default_rng(5).uniform(-0.4, 0.4, size=(5, 3))
        val0, _ = loss_batch(model, sheet_energy, zs, lambda_ortho=0.0,
                             eta_origin=0.0)
        energies = sheet_energy.energy_batch(
            sheet_energy.mesh.rest_positions
            + model.displacement(zs))
        assert val0 == pytest.approx(float(np.mean(energies)), rel=1e-12)

        # lambda term adds mean (l.y)^2 scaled by lambda
        stats = model.ortho_stats(zs)
        val1, _ = loss_batch(model, sheet_energy, zs, lambda_ortho=100.0,
                             eta_origin=0.0)
        assert val1 == pytest.approx(val0 + 100.0 * stats["mean_sq"], rel=1e-10)

        # eta term adds eta |y(0)|^2
        y0 = model.nonlinear(np.zeros(3))
        val2, _ = loss_batch(model, sheet_energy, zs, lambda_ortho=0.0,
                             eta_origin=50.0)
        assert val2 == pytest.approx(val0 + 50.0 * float(y0 @ y0), rel=1e-10)

    def test_penalty_pressure_increases_with_lambda(self, sheet_energy,
                                                    sheet_basis, box):
        # training with a larger lambda must end with a smaller ortho term
        results = {}
        for lam in (1.0e2, 1.0e6):
            cfg = TrainConfig(mode="grid", epochs=30, grid_resolution=3,
                              seed=0, lambda_ortho=lam, eta_origin=1.0e4)
            model, _ = train(sheet_energy, sheet_basis, box, cfg,
                             hidden=(12,))
            zs = np.random.default_rng(6).uniform(-0.5, 0.5, size=(20, 3))
            results[lam] = model.ortho_stats(zs)["mean_sq"]
        assert results[1.0e6] < results[1.0e2]


class TestTraining:
    def test_loss_decreases(self, sheet_energy, sheet_basis, box):
        cfg = TrainConfig(mode="grid", epochs=25, grid_resolution=3, seed=0)
        model, hist = train(sheet_energy, sheet_basis, box, cfg, hidden=(12,))
        assert not hist.aborted
        losses = [r["loss"] for r in hist.rows if "loss" in r]
        assert losses[-1] < losses[0]
        assert model.fingerprint == sheet_energy.fingerprint()

    def test_grid_mode_deterministic(self, sheet_energy, sheet_basis, box):
        cfg = TrainConfig(mode="grid", epochs=10, grid_resolution=3, seed=0)
        a, _ = train(sheet_energy, sheet_basis, box, cfg, hidden=(8,))
        b, _ = train(sheet_energy, sheet_basis, box, cfg, hidden=(8,))
        assert np.array_equal(pack_params(a.params), pack_params(b.params))

    def test_stochastic_mode_runs(self, sheet_energy, sheet_basis, box):
        cfg = TrainConfig(mode="stochastic", epochs=12, batch_size=16, seed=1)
        model, hist = train(sheet_energy, sheet_basis, box, cfg, hidden=(8,))
        assert len(hist.rows) == 12
        assert np.isfinite(hist.rows[-1]["loss"])

    def test_eval_rows_logged(self, sheet_energy, sheet_basis, box, tiny_model):
        rng = np.random.default_rng(7)
        zs = rng.uniform(-0.5, 0.5, size=(8, 3))
        targets = tiny_model.displacement(zs)
        cfg = TrainConfig(mode="grid", epochs=10, grid_resolution=3, seed=0,
                          eval_every=5)
        _, hist = train(sheet_energy, sheet_basis, box, cfg, hidden=(8,),
                        val_set=(zs, targets), test_set=(zs, None))
        val_epochs, val_l2 = hist.eval_series("validation", "l2")
        test_epochs, test_energy = hist.eval_series("test", "energy")
        assert val_epochs == [5, 10]
        assert test_epochs == [5, 10]
        assert all(np.isfinite(v) for v in val_l2)
        assert all(np.isfinite(v) for v in test_energy)
        # test split has no targets, so no l2 series
        assert hist.eval_series("test", "l2")[0] == []

    def test_early_stopping_restores_best(self, sheet_energy, sheet_basis,
                                          box, tiny_model):
        zs = np.random.default_rng(8).uniform(-0.5, 0.5, size=(8, 3))
        targets = tiny_model.displacement(zs)
        cfg = TrainConfig(mode="grid", epochs=200, grid_resolution=3, seed=0,
                          eval_every=2, early_stop="l2", patience=2)
        model, hist = train(sheet_energy, sheet_basis, box, cfg, hidden=(8,),
                            val_set=(zs, targets))
        if hist.stopped_epoch is not None:
            assert hist.restored_epoch is not None
            assert hist.restored_epoch <= hist.stopped_epoch
            assert len(hist.rows) < 200

    def test_resume_from_params(self, sheet_energy, sheet_basis, box):
        cfg = TrainConfig(mode="grid", epochs=5, grid_resolution=3, seed=0)
        first, _ = train(sheet_energy, sheet_basis, box, cfg, hidden=(8,))
        resumed, hist = train(sheet_energy, sheet_basis, box, cfg,
                              hidden=(8,), init_params=first.params)
        assert hist.rows[0]["loss"] <= pytest.approx(
            first.history.rows[-1]["loss"], rel=1e-6)

    def test_rejects_mismatched_init_params(self, sheet_energy, sheet_basis,
                                            box):
        cfg = TrainConfig(mode="grid", epochs=2, grid_resolution=3, seed=0)
        wrong = mlp_init([3, 5, sheet_energy.num_dofs], 0)
        with pytest.raises(ConfigError):
            train(sheet_energy, sheet_basis, box, cfg, hidden=(8,),
                  init_params=wrong)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(mode="minibatch")
        with pytest.raises(ConfigError):
            TrainConfig(early_stop="loss")
        with pytest.raises(ConfigError):
            TrainConfig(lambda_ortho=-1.0)
        with pytest.raises(ConfigError):
            TrainConfig(mode="grid", grid_resolution=1)


class TestSupervisedL2:
    def test_fits_reachable_targets(self, sheet_energy, sheet_basis, box,
                                    tiny_model):
        # targets generated by another network are (nearly) reachable
        zs = np.random.default_rng(9).uniform(-0.5, 0.5, size=(27, 3))
        targets = tiny_model.displacement(zs)
        cfg = TrainConfig(mode="grid", epochs=60, grid_resolution=3, seed=3)
        model, hist = train_supervised_l2(sheet_energy, sheet_basis, box,
                                          (zs, targets), cfg, hidden=(16, 16))
        losses = [r["loss"] for r in hist.rows if "loss" in r]
        assert losses[-1] < 0.1 * losses[0]

    def test_rejects_mismatched_targets(self, sheet_energy, sheet_basis, box):
        zs = np.zeros((4, 3))
        bad = np.zeros((4, 7))
        cfg = TrainConfig(mode="grid", epochs=2, grid_resolution=3, seed=0)
        with pytest.raises(ConfigError):
            train_supervised_l2(sheet_energy, sheet_basis, box, (zs, bad),
                                cfg, hidden=(8,))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tiny_model, tmp_path):
        path = tmp_path / "model.json"
        save_checkpoint(tiny_model, path)
        back = load_checkpoint(path)
        assert back.fingerprint == tiny_model.fingerprint
        for a, b in zip(back.params.weights, tiny_model.params.weights):
            assert np.array_equal(a, b)
        for a, b in zip(back.params.biases, tiny_model.params.biases):
            assert np.array_equal(a, b)
        assert np.array_equal(back.basis.modes, tiny_model.basis.modes)
        assert np.array_equal(back.box, tiny_model.box)
        z = np.array([0.11, -0.37, 0.2])
        assert np.array_equal(back.decode(z), tiny_model.decode(z))
        assert back.train_config.to_dict() == tiny_model.train_config.to_dict()
        assert len(back.history.rows) == len(tiny_model.history.rows)

    def test_rejects_foreign_json(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ConfigError):
            load_checkpoint(path)
        path.write_text("not json at all")
        with pytest.raises(ConfigError):
            load_checkpoint(path)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent.json")

    def test_history_csv(self, tiny_model, tmp_path):
        path = tmp_path / "history.csv"
        tiny_model.history.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,loss,mean_energy,mean_ortho_sq,origin_norm"
        assert len(lines) == 1 + len(tiny_model.history.rows)
        first = lines(1) if callable(lines) else lines[1]
        assert float(first.split(",")[1]) > 0.0
