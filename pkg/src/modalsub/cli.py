"""Command line interface.

Subcommands:
  init      write a starter experiment config
  modes     linear modal basis of the rest-state Hessian
  oracle    constrained-minimization ground-truth datasets
  train     self-supervised or L2-baseline subspace training
  eval      quantitative report against oracle datasets
  simulate  implicit subspace dynamics
  keyframe  piecewise-linear latent interpolation
  serve     HTTP service for interactive exploration

Exit codes: 0 on success, 1 on usage or configuration problems, 2 on
numeric failures (divergence, tolerance, fingerprint mismatch).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .config import ExperimentConfig
from .dynamics import sample_keyframe_path, simulate
from .energy import build_energy_model
from .errors import ConfigError, MeshFormatError, ModalSubError
from .mesh import sheet_reflection_map
from .modes import linear_modes
from .oracle import (
    export_csv,
    generate_oracle_dataset,
    load_dataset,
    save_dataset,
)
from .sampling import box_from_half_width
from .service import serve_forever
from .subspace import load_checkpoint, save_checkpoint, train, train_supervised_l2


class UsageError(Exception):
    """Bad invocation; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _resolve_out(path) -> Path:
    """Relative output paths land under $MODALSUB_OUTPUT_DIR when set."""
    path = Path(path)
    base = os.environ.get("MODALSUB_OUTPUT_DIR")
    if base and not path.is_absolute():
        return Path(base) / path
    return path


def _build_problem(cfg: ExperimentConfig):
    """Mesh, energy model, modal basis, and latent box for a config."""
    mesh = cfg.build_mesh()
    energy_model = cfg.build_energy_model(mesh)
    basis = linear_modes(energy_model.hessian(mesh.rest_positions), cfg.num_modes)
    box = box_from_half_width(cfg.num_modes, cfg.half_width)
    return mesh, energy_model, basis, box


def _checkpoint_problem(args):
    """Model plus a rebuilt energy model from a checkpoint (and config)."""
    model = load_checkpoint(args.checkpoint)
    if getattr(args, "config", None):
        cfg = ExperimentConfig.load(args.config)
        energy_model = cfg.build_energy_model(model.mesh)
    else:
        energy_model = build_energy_model(model.mesh, model.material)
    return model, energy_model


def _parse_vector(text: str, m: int) -> np.ndarray:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != m:
        raise UsageError(f"expected {m} coordinates, got {len(parts)}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise UsageError(f"bad coordinate list {text!r}: {exc}") from exc


def _dataset_split(model, path):
    """(zs, displacements) from an oracle file, fingerprint-checked."""
    ds = load_dataset(path)
    if model.fingerprint and ds.manifest.get("fingerprint") not in (
        None, "", model.fingerprint,
    ):
        raise ModalSubError(
            f"dataset {path} does not match the configured problem"
        )
    return ds.zs, ds.displacements(model.mesh.rest_positions)


def cmd_init(args) -> int:
    cfg = ExperimentConfig()
    if args.modes:
        cfg = ExperimentConfig(num_modes=args.modes)
    out = _resolve_out(args.out)
    cfg.save(out)
    print(f"wrote starter config to {out}")
    return 0


def cmd_modes(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    num = args.num_modes or cfg.num_modes
    mesh = cfg.build_mesh()
    energy_model = cfg.build_energy_model(mesh)
    basis = linear_modes(energy_model.hessian(mesh.rest_positions), num)
    out = _resolve_out(args.out)
    out.write_text(json.dumps(basis.to_dict(), indent=2))
    vals = ", ".join(f"{v:.6g}" for v in basis.eigenvalues)
    print(f"kept {basis.num_modes} modes, filtered "
          f"{basis.num_filtered_rigid} rigid; eigenvalues [{vals}]")
    print(f"wrote basis to {out}")
    return 0


def cmd_oracle(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if not cfg.datasets:
        raise UsageError("config defines no datasets")
    _, energy_model, basis, box = _build_problem(cfg)
    names = [args.split] if args.split else sorted(cfg.datasets)
    out_dir = _resolve_out(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def _save(name, ds):
        path = out_dir / f"{name}.npz"
        save_dataset(ds, path)
        if args.csv:
            export_csv(ds, out_dir / f"{name}.csv")
        print(f"{name}: {len(ds)} samples, "
              f"{int(ds.converged.sum())} converged, wrote {path}")

    for name in names:
        if name not in cfg.datasets:
            raise UsageError(f"config has no dataset named {name!r}")
        spec = cfg.datasets[name]
        last = [0]

        def progress(i, total, sample):
            if i + 1 == total or (i + 1) - last[0] >= max(total // 10, 1):
                last[0] = i + 1
                print(f"  {name}: {i + 1}/{total} solved", flush=True)

        ds = generate_oracle_dataset(
            energy_model, basis, spec.to_dict(), box,
            progress=progress if not args.quiet else None,
        )
        if spec.splits:
            start = 0
            for part, size in spec.splits:
                _save(f"{name}-{part}", ds.subset(slice(start, start + size)))
                start += size
        else:
            _save(name, ds)
    return 0


def cmd_train(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.epochs:
        cfg = cfg.with_train(epochs=args.epochs)
    if args.stochastic:
        cfg = cfg.with_train(mode="stochastic")
    _, energy_model, basis, box = _build_problem(cfg)

    init_params = None
    if args.resume:
        init_params = load_checkpoint(args.resume).params

    val_set = test_set = None
    probe_model = None
    if args.val or args.test or args.supervision == "l2":
        # Fingerprint checks need a model-shaped object; build a light probe.
        class _Probe:
            fingerprint = energy_model.fingerprint()
            mesh = energy_model.mesh
        probe_model = _Probe()
    if args.val:
        val_set = _dataset_split(probe_model, args.val)
    if args.test:
        test_set = _dataset_split(probe_model, args.test)

    if args.supervision == "l2":
        if not args.dataset:
            raise UsageError("--supervision l2 requires --dataset")
        dataset = _dataset_split(probe_model, args.dataset)
        model, history = train_supervised_l2(
            energy_model, basis, box, dataset, cfg.train,
            hidden=cfg.hidden, val_set=val_set, test_set=test_set,
            init_params=init_params,
        )
    else:
        model, history = train(
            energy_model, basis, box, cfg.train,
            hidden=cfg.hidden, val_set=val_set, test_set=test_set,
            init_params=init_params,
        )

    out = _resolve_out(args.out)
    save_checkpoint(model, out)
    if args.history:
        hist_path = _resolve_out(args.history)
        history.write_csv(hist_path)
        history.write_evals_csv(hist_path.with_suffix(".evals.csv"))
    final = history.rows[-1] if history.rows else {}
    print(f"trained {cfg.train.epochs} epochs "
          f"({'aborted' if history.aborted else 'ok'}), "
          f"final loss {final.get('loss', float('nan')):.6g}")
    if history.stopped_epoch is not None:
        print(f"early stop at epoch {history.stopped_epoch}, "
              f"restored epoch {history.restored_epoch}")
    print(f"wrote checkpoint to {out}")
    return 0


def cmd_eval(args) -> int:
    model, energy_model = _checkpoint_problem(args)
    datasets = {}
    for item in args.dataset:
        name, _, path = item.partition("=")
        if not path:
            name, path = Path(item).stem, item
        datasets[name] = load_dataset(path)
    if args.oracle_self:
        # Sanity mode: each dataset scored against itself, all deltas zero.
        for name, ds in datasets.items():
            blocks = evaluation.oracle_self_metrics(energy_model, ds)
            print(f"[{name}] oracle-vs-oracle  dE_avg "
                  f"{blocks['energy']['delta_avg']:.3e}  dE_max "
                  f"{blocks['energy']['delta_max']:.3e}")
        return 0
    reflection = None
    if args.symmetry:
        try:
            reflection = sheet_reflection_map(model.mesh)
        except (MeshFormatError, ConfigError) as exc:
            raise UsageError(f"--symmetry unavailable: {exc}") from exc
    report = evaluation.build_report(
        model, energy_model, datasets,
        reflection=reflection,
        num_subintervals=args.subintervals,
        subinterval_split=args.subinterval_split,
        checkpoint_hash=_file_hash(args.checkpoint),
    )
    print(report.to_text())
    if args.out:
        out = _resolve_out(args.out)
        report.write_json(out)
        print(f"wrote report to {out}")
    if args.csv:
        report.write_csv(_resolve_out(args.csv))
    if not report.metadata["valid"]:
        return 2
    return 0


def _file_hash(path) -> str:
    import hashlib

    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_simulate(args) -> int:
    model, energy_model = _checkpoint_problem(args)
    if args.linear_baseline:
        model = model.with_zero_network()
    z0 = (_parse_vector(args.z0, model.num_modes)
          if args.z0 else np.zeros(model.num_modes))
    traj = simulate(
        model, energy_model, num_steps=args.steps, h=args.h, z0=z0,
        include_rigid=args.rigid, keep_frames=bool(args.frames),
    )
    if args.out:
        out = _resolve_out(args.out)
        traj.write_csv(out)
        print(f"wrote trajectory to {out}")
    if args.frames:
        frames = _resolve_out(args.frames)
        traj.save_frames(frames)
        print(f"wrote frames to {frames}")
    n_bad = sum(1 for info in traj.infos if not info.converged)
    e_last = traj.infos[-1].energy if traj.infos else float("nan")
    print(f"{args.steps} steps, {n_bad} unconverged, final energy {e_last:.6g}")
    return 0


def cmd_keyframe(args) -> int:
    model, energy_model = _checkpoint_problem(args)
    try:
        keys_raw = json.loads(Path(args.keys).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read keyframes {args.keys}: {exc}") from exc
    keys = []
    for item in keys_raw:
        z = np.asarray(item["z"], dtype=float)
        if z.shape != (model.num_modes,):
            raise UsageError("keyframe z has wrong length")
        keys.append((float(item["t"]), z))
    ts, zs, positions, energies = sample_keyframe_path(
        model, energy_model, keys, num_samples=args.samples
    )
    lines = ["t," + ",".join(f"z{i}" for i in range(model.num_modes)) + ",energy"]
    for t, z, e in zip(ts, zs, energies):
        ztxt = ",".join(repr(float(v)) for v in z)
        lines.append(f"{float(t)!r},{ztxt},{float(e)!r}")
    out = _resolve_out(args.out)
    out.write_text("\n".join(lines) + "\n")
    if args.frames:
        np.savez_compressed(_resolve_out(args.frames), times=ts, positions=positions)
    print(f"sampled {len(ts)} points over [{ts[0]:.4g}, {ts[-1]:.4g}], "
          f"peak energy {float(np.max(energies)):.6g}")
    print(f"wrote path to {out}")
    return 0


def cmd_serve(args) -> int:
    model, energy_model = _checkpoint_problem(args)
    serve_forever(model, energy_model, host=args.host, port=args.port,
                  quiet=args.quiet)
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="modalsub",
                description="self-supervised nonlinear modal subspaces")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("init", help="write a starter experiment config")
    q.add_argument("--out", required=True)
    q.add_argument("--modes", type=int, default=0)
    q.set_defaults(fn=cmd_init)

    q = sub.add_parser("modes", help="compute the linear modal basis")
    q.add_argument("--config", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--num-modes", type=int, default=0)
    q.set_defaults(fn=cmd_modes)

    q = sub.add_parser("oracle", help="generate ground-truth datasets")
    q.add_argument("--config", required=True)
    q.add_argument("--out-dir", required=True)
    q.add_argument("--split", help="only this named dataset")
    q.add_argument("--csv", action="store_true", help="also export CSV")
    q.add_argument("--quiet", action="store_true")
    q.set_defaults(fn=cmd_oracle)

    q = sub.add_parser("train", help="train a subspace network")
    q.add_argument("--config", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--supervision", choices=("self", "l2"), default="self")
    q.add_argument("--dataset", help="oracle npz (targets for --supervision l2)")
    q.add_argument("--val", help="oracle npz used as validation split")
    q.add_argument("--test", help="oracle npz used as test split")
    q.add_argument("--epochs", type=int, default=0, help="override config")
    q.add_argument("--stochastic", action="store_true",
                   help="override config to stochastic batches")
    q.add_argument("--resume", help="checkpoint to continue from")
    q.add_argument("--history", help="write per-epoch CSV here")
    q.set_defaults(fn=cmd_train)

    q = sub.add_parser("eval", help="evaluate a checkpoint against datasets")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--config", help="rebuild attachments from this config")
    q.add_argument("--dataset", action="append", required=True,
                   metavar="NAME=PATH", help="repeatable; bare PATH uses stem")
    q.add_argument("--out", help="write JSON report")
    q.add_argument("--csv", help="write flat CSV")
    q.add_argument("--subintervals", type=int, default=5)
    q.add_argument("--subinterval-split", default="test")
    q.add_argument("--symmetry", action="store_true",
                   help="include the sheet reflection check")
    q.add_argument("--oracle-self", action="store_true",
                   help="sanity mode: score each dataset against itself")
    q.set_defaults(fn=cmd_eval)

    q = sub.add_parser("simulate", help="run implicit subspace dynamics")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--config")
    q.add_argument("--steps", type=int, required=True)
    q.add_argument("--h", type=float, default=0.04)
    q.add_argument("--z0", help="comma-separated initial latent coords")
    q.add_argument("--rigid", action="store_true",
                   help="compose with rigid translation and rotation")
    q.add_argument("--linear-baseline", action="store_true",
                   help="zero the network (pure linear modes)")
    q.add_argument("--out", help="trajectory CSV")
    q.add_argument("--frames", help="positions npz")
    q.set_defaults(fn=cmd_simulate)

    q = sub.add_parser("keyframe", help="interpolate a latent keyframe path")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--config")
    q.add_argument("--keys", required=True,
                   help="JSON list of {t, z} keyframes")
    q.add_argument("--samples", type=int, default=60)
    q.add_argument("--out", required=True)
    q.add_argument("--frames", help="positions npz")
    q.set_defaults(fn=cmd_keyframe)

    q = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    q.add_argument("--checkpoint", required=True)
    q.add_argument("--config")
    q.add_argument("--host", default="127.0.0.1")
    q.add_argument("--port", type=int, default=8765)
    q.add_argument("--quiet", action="store_true")
    q.set_defaults(fn=cmd_serve)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 1
    except ModalSubError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
