"""Quantitative evaluation against oracle datasets.

Energy errors (dE = E(n(z)) - e*), per-element stress statistics (weighted
average and maximum of the second Piola-Kirchhoff Frobenius norm), nodal
force residuals, the latent correlation diagnostic, and origin/symmetry/
smoothness structure checks. All statistics run over converged oracle
samples only; every report carries the checkpoint and dataset hashes that
produced it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FingerprintMismatchError
from .mesh import apply_vertex_map
from .modes import linear_displacement
from .oracle import OracleDataset
from .sampling import random_coords
from .subspace import SubspaceModel

COLLAPSE_EIGENVALUE = 0.1


def _converged_subset(model: SubspaceModel, dataset: OracleDataset):
    if model.fingerprint and dataset.manifest.get("fingerprint"):
        if model.fingerprint != dataset.manifest["fingerprint"]:
            raise FingerprintMismatchError(
                "checkpoint and dataset were built from different problems"
            )
    mask = dataset.converged.astype(bool)
    return dataset.subset(mask), int((~mask).sum())


def energy_metrics(model: SubspaceModel, energy_model, dataset: OracleDataset) -> dict:
    """dE statistics of the decoded states against oracle energies."""
    ds, discarded = _converged_subset(model, dataset)
    x = model.decode(ds.zs)
    e = energy_model.energy_batch(x)
    delta = e - ds.energies
    return {
        "delta_avg": float(np.mean(delta)),
        "delta_max": float(np.max(delta)),
        "delta_std": float(np.std(delta)),
        "delta_min": float(np.min(delta)),
        "energy_avg": float(np.mean(e)),
        "oracle_energy_avg": float(np.mean(ds.energies)),
        "num_samples": int(len(ds)),
        "num_discarded": discarded,
    }


def _stress_reductions(energy_model, xs) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample (weighted average, maximum) of per-element |S|."""
    s = energy_model.element_stress_batch(xs)
    w = energy_model.element_weights()
    return s @ w / w.sum(), s.max(axis=1)


def stress_metrics(model: SubspaceModel, energy_model, dataset: OracleDataset) -> dict:
    """|S| statistics (area/volume weighted and max) vs the oracle states."""
    ds, discarded = _converged_subset(model, dataset)
    avg_m, max_m = _stress_reductions(energy_model, model.decode(ds.zs))
    avg_o, max_o = _stress_reductions(energy_model, ds.positions)
    return {
        "delta_avg": float(np.mean(np.abs(avg_m - avg_o))),
        "delta_max": float(np.mean(np.abs(max_m - max_o))),
        "stress_avg": float(np.mean(avg_m)),
        "stress_max": float(np.mean(max_m)),
        "oracle_stress_avg": float(np.mean(avg_o)),
        "oracle_stress_max": float(np.mean(max_o)),
        "num_samples": int(len(ds)),
        "num_discarded": discarded,
    }


def force_metrics(model: SubspaceModel, energy_model, dataset: OracleDataset) -> dict:
    """Batch-normalized L1/L2 norms of nodal forces and their residuals."""
    ds, discarded = _converged_subset(model, dataset)
    f_model = energy_model.gradient_batch(model.decode(ds.zs))
    f_oracle = energy_model.gradient_batch(ds.positions)
    diff = f_model - f_oracle
    return {
        "delta_l1": float(np.mean(np.abs(diff).sum(axis=1))),
        "delta_l2": float(np.mean(np.linalg.norm(diff, axis=1))),
        "force_l1": float(np.mean(np.abs(f_model).sum(axis=1))),
        "force_l2": float(np.mean(np.linalg.norm(f_model, axis=1))),
        "oracle_force_l1": float(np.mean(np.abs(f_oracle).sum(axis=1))),
        "oracle_force_l2": float(np.mean(np.linalg.norm(f_oracle, axis=1))),
        "num_samples": int(len(ds)),
        "num_discarded": discarded,
    }


def correlation_diagnostic(model: SubspaceModel, rel_step: float = 1.0e-4) -> dict:
    """Correlation matrix of the unit latent directions at the origin."""
    j = model.jacobian_at_origin(rel_step=rel_step)
    corr = j.T @ j
    eigenvalues = np.linalg.eigvalsh(corr)
    num_collapsed = int(np.sum(eigenvalues < COLLAPSE_EIGENVALUE))
    effective = model.num_modes - num_collapsed
    verdict = (
        "no collapse"
        if num_collapsed == 0
        else f"effectively {effective}-dimensional"
    )
    return {
        "matrix": corr,
        "eigenvalues": eigenvalues,
        "num_collapsed": num_collapsed,
        "verdict": verdict,
    }


def structure_checks(
    model: SubspaceModel,
    reflection: tuple | None = None,
    num_samples: int = 64,
    seed: int = 0,
    smoothness_points: int = 9,
) -> dict:
    """Origin, orthogonality, symmetry, and latent-smoothness diagnostics."""
    rng = np.random.default_rng(seed)
    scale = model.mesh.scale()
    m = model.num_modes

    origin = float(np.linalg.norm(model.displacement(np.zeros(m)))) / scale

    zs = random_coords(model.box, num_samples, rng)
    ortho = model.ortho_stats(zs)

    symmetry = None
    if reflection is not None:
        perm, q = reflection
        modes = model.basis.modes
        sigma_modes = np.stack(
            [apply_vertex_map(modes[:, i], perm, q) for i in range(m)], axis=1
        )
        # Induced latent action; valid when the mode span is reflection
        # invariant (checked by the span residual below).
        s_z = modes.T @ sigma_modes
        span_residual = float(np.max(np.abs(sigma_modes - modes @ s_z.T)))
        vals = []
        for z in zs:
            lhs = apply_vertex_map(model.decode(z), perm, q)
            rhs = model.decode(s_z.T @ z)
            vals.append(np.linalg.norm(lhs - rhs))
        symmetry = {
            "residual_rel": float(np.mean(vals)) / scale,
            "span_residual": span_residual,
        }

    # Max second difference of the decoded shape along random latent chords.
    widths = model.box[:, 1] - model.box[:, 0]
    second = 0.0
    for _ in range(8):
        a = random_coords(model.box, 1, rng)[0]
        b = random_coords(model.box, 1, rng)[0]
        ts = np.linspace(0.0, 1.0, smoothness_points)
        pts = model.decode(a + np.outer(ts, b - a))
        dd = pts[2:] - 2.0 * pts[1:-1] + pts[:-2]
        second = max(second, float(np.max(np.linalg.norm(dd, axis=1))))
    dt = 1.0 / (smoothness_points - 1)
    smoothness = second / (dt * dt) / (float(np.max(widths)) ** 2)

    return {
        "origin_residual_rel": origin,
        "ortho_ratio_mean": ortho["mean_ratio"],
        "ortho_sq_mean": ortho["mean_sq"],
        "symmetry": symmetry,
        "smoothness_second_derivative": smoothness,
    }


def subinterval_metrics(
    model: SubspaceModel, energy_model, dataset: OracleDataset, num_bins: int = 5
) -> list[dict]:
    """dE statistics over contiguous index ranges of the dataset ordering."""
    ds, _ = _converged_subset(model, dataset)
    n = len(ds)
    edges = np.linspace(0, n, num_bins + 1).astype(int)
    x = model.decode(ds.zs)
    e = energy_model.energy_batch(x)
    delta = e - ds.energies
    out = []
    for k in range(num_bins):
        lo, hi = edges[k], edges[k + 1]
        chunk = delta[lo:hi]
        out.append({
            "range": [int(lo), int(hi)],
            "fraction": [k / num_bins, (k + 1) / num_bins],
            "delta_avg": float(np.mean(chunk)) if len(chunk) else None,
            "delta_max": float(np.max(chunk)) if len(chunk) else None,
        })
    return out


@dataclass
class MetricsReport:
    """Everything the quantitative comparisons need, JSON/CSV-exportable."""

    splits: dict = field(default_factory=dict)  # name -> {energy, stress, force}
    correlation: dict | None = None
    structure: dict | None = None
    subintervals: list | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "splits": self.splits,
            "correlation": None,
            "structure": self.structure,
            "subintervals": self.subintervals,
            "metadata": self.metadata,
        }
        if self.correlation is not None:
            out["correlation"] = {
                "matrix": [[float(v) for v in row]
                           for row in self.correlation["matrix"]],
                "eigenvalues": [float(v) for v in self.correlation["eigenvalues"]],
                "num_collapsed": self.correlation["num_collapsed"],
                "verdict": self.correlation["verdict"],
            }
        return out

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def write_csv(self, path) -> None:
        lines = ["split,block,metric,value"]
        for split, blocks in self.splits.items():
            for block, metrics in blocks.items():
                for key, val in metrics.items():
                    lines.append(f"{split},{block},{key},{float(val)!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    def to_text(self) -> str:
        lines = []
        for split, blocks in self.splits.items():
            lines.append(f"[{split}]")
            e = blocks.get("energy")
            if e:
                lines.append(
                    f"  energy   dE_avg {e['delta_avg']:.6g}   dE_max "
                    f"{e['delta_max']:.6g}   dE_std {e['delta_std']:.6g}   "
                    f"E_avg {e['energy_avg']:.6g}"
                )
            s = blocks.get("stress")
            if s:
                lines.append(
                    f"  stress   d|S|_avg {s['delta_avg']:.6g}   d|S|_max "
                    f"{s['delta_max']:.6g}   |S|_avg {s['stress_avg']:.6g}"
                )
            f = blocks.get("force")
            if f:
                lines.append(
                    f"  force    dF_l1 {f['delta_l1']:.6g}   dF_l2 "
                    f"{f['delta_l2']:.6g}   F_l2 {f['force_l2']:.6g}"
                )
            n = (e or s or f or {}).get("num_samples")
            d = (e or s or f or {}).get("num_discarded")
            if n is not None:
                lines.append(f"  samples  {n} used, {d} discarded")
        if self.correlation is not None:
            ev = ", ".join(f"{v:.3g}" for v in self.correlation["eigenvalues"])
            lines.append(f"[correlation]  eigenvalues [{ev}]  "
                         f"{self.correlation['verdict']}")
        if self.structure is not None:
            st = self.structure
            lines.append(
                f"[structure]  origin {st['origin_residual_rel']:.3g}  "
                f"ortho-ratio {st['ortho_ratio_mean']:.3g}"
            )
        if self.subintervals:
            for row in self.subintervals:
                fr = row["fraction"]
                lines.append(
                    f"[subinterval {fr[0]:.0%}-{fr[1]:.0%}]  "
                    f"dE_avg {row['delta_avg']:.6g}  dE_max {row['delta_max']:.6g}"
                )
        if self.metadata.get("valid") is False:
            lines.append("[WARNING] report marked invalid "
                         f"({self.metadata.get('invalid_reason')})")
        return "\n".join(lines)


def build_report(
    model: SubspaceModel,
    energy_model,
    datasets: dict,
    reflection=None,
    num_subintervals: int | None = 5,
    subinterval_split: str = "test",
    checkpoint_hash: str = "",
) -> MetricsReport:
    """Full evaluation over named dataset splits."""
    report = MetricsReport()
    max_discard_fraction = 0.0
    oracle_tol = 0.0
    for name, ds in datasets.items():
        blocks = {
            "energy": energy_metrics(model, energy_model, ds),
            "stress": stress_metrics(model, energy_model, ds),
            "force": force_metrics(model, energy_model, ds),
        }
        report.splits[name] = blocks
        total = blocks["energy"]["num_samples"] + blocks["energy"]["num_discarded"]
        if total:
            max_discard_fraction = max(
                max_discard_fraction, blocks["energy"]["num_discarded"] / total
            )
        oracle_tol = max(oracle_tol, float(np.max(ds.grad_norms, initial=0.0)))
    report.correlation = correlation_diagnostic(model)
    report.structure = structure_checks(model, reflection=reflection)
    if num_subintervals and subinterval_split in datasets:
        report.subintervals = subinterval_metrics(
            model, energy_model, datasets[subinterval_split], num_subintervals
        )
    valid = max_discard_fraction <= 0.01
    # dE may only dip below zero by solver slack; flag anything worse.
    energy_floor = -10.0 * oracle_tol * max(energy_model.mesh.scale(), 1.0)
    reasons = []
    if not valid:
        reasons.append(f"{max_discard_fraction:.1%} samples discarded")
    for name, blocks in report.splits.items():
        if blocks["energy"]["delta_min"] < energy_floor:
            valid = False
            reasons.append(
                f"{name}: dE_min {blocks['energy']['delta_min']:.3g} below "
                f"oracle slack {energy_floor:.3g}"
            )
    report.metadata = {
        "checkpoint_hash": checkpoint_hash,
        "dataset_hashes": {k: v.content_hash() for k, v in datasets.items()},
        "model_fingerprint": model.fingerprint,
        "stress_tensor": "second Piola-Kirchhoff (Frobenius norm)",
        "valid": valid,
        "invalid_reason": "; ".join(reasons) if reasons else None,
    }
    return report


def oracle_self_metrics(energy_model, dataset: OracleDataset) -> dict:
    """Sanity blocks for a dataset evaluated against itself (all deltas 0)."""
    mask = dataset.converged.astype(bool)
    ds = dataset.subset(mask)
    discarded = int((~mask).sum())
    e = energy_model.energy_batch(ds.positions)
    avg_s, max_s = _stress_reductions(energy_model, ds.positions)
    f = energy_model.gradient_batch(ds.positions)
    return {
        "energy": {
            "delta_avg": float(np.mean(e - ds.energies)),
            "delta_max": float(np.max(np.abs(e - ds.energies))),
            "delta_std": float(np.std(e - ds.energies)),
            "delta_min": float(np.min(e - ds.energies)),
            "energy_avg": float(np.mean(e)),
            "oracle_energy_avg": float(np.mean(ds.energies)),
            "num_samples": int(len(ds)),
            "num_discarded": discarded,
        },
        "stress": {
            "delta_avg": 0.0,
            "delta_max": 0.0,
            "stress_avg": float(np.mean(avg_s)),
            "stress_max": float(np.mean(max_s)),
            "oracle_stress_avg": float(np.mean(avg_s)),
            "oracle_stress_max": float(np.mean(max_s)),
            "num_samples": int(len(ds)),
            "num_discarded": discarded,
        },
        "force": {
            "delta_l1": 0.0,
            "delta_l2": 0.0,
            "force_l1": float(np.mean(np.abs(f).sum(axis=1))),
            "force_l2": float(np.mean(np.linalg.norm(f, axis=1))),
            "oracle_force_l1": float(np.mean(np.abs(f).sum(axis=1))),
            "oracle_force_l2": float(np.mean(np.linalg.norm(f, axis=1))),
            "num_samples": int(len(ds)),
            "num_discarded": discarded,
        },
    }


def compare_reports(primary: MetricsReport, baseline: MetricsReport,
                    split: str = "test") -> dict:
    """Headline ratios primary/baseline used by the benchmark comparisons."""
    p = primary.splits[split]
    b = baseline.splits[split]

    def ratio(a, c):
        return a / c if c else float("inf")

    return {
        "energy_delta_ratio": ratio(p["energy"]["delta_avg"], b["energy"]["delta_avg"]),
        "stress_delta_ratio": ratio(p["stress"]["delta_avg"], b["stress"]["delta_avg"]),
        "force_delta_l2_ratio": ratio(p["force"]["delta_l2"], b["force"]["delta_l2"]),
    }
