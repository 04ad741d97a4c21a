"""Plot-data CSV emitters and matplotlib figure rendering.

Each report writes a flat CSV any plotting tool can consume, plus a rendered
PNG next to it.  CSV writes go through a temporary file and a rename so a
crashed run never leaves a valid-looking partial file.
"""
from __future__ import annotations

import csv
import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.special import ndtr

from .dependence import trajectory
from .estimation import FitResult
from .model import COVARIATE, JointModel, pair_order

QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


def _write_csv(path, header, rows):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _savefig(fig, path):
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def marginal_quantiles(model: JointModel, year, days=None, quantiles=QUANTILES):
    """Conditional count quantiles on the log(count + 1) scale by day.

    Returns ``{species: (days, q_matrix)}`` with one row per quantile.
    """
    if days is None:
        days = np.arange(1, 366)
    days = np.asarray(days)
    out = {}
    for j, name in enumerate(model.species_names):
        basis = model.bases[j]
        grid = np.arange(0, int(basis.hi) + 1, dtype=float)
        alpha = basis.rows(grid) @ model.marginals[j].theta
        eta = model.shift(j, np.full(days.shape, year), days)
        cdf = ndtr(alpha[None, :] - eta[:, None])  # (D, grid)
        qm = np.empty((len(quantiles), days.shape[0]))
        for qi, q in enumerate(quantiles):
            idx = np.argmax(cdf >= q, axis=1)
            idx = np.where(cdf[np.arange(days.shape[0]), idx] >= q, idx, grid.shape[0] - 1)
            qm[qi] = np.log1p(grid[idx])
        out[name] = (days, qm)
    return out


def write_marginal_report(model: JointModel, year, out_dir, prefix="marginal_quantiles"):
    data = marginal_quantiles(model, year)
    rows = []
    for name, (days, qm) in data.items():
        for qi, q in enumerate(QUANTILES):
            for d, v in zip(days, qm[qi]):
                rows.append([name, int(d), q, repr(float(v))])
    csv_path = os.path.join(out_dir, f"{prefix}.csv")
    _write_csv(csv_path, ["species", "day", "quantile", "log1p_count"], rows)

    fig, axes = plt.subplots(1, len(data), figsize=(4 * len(data), 3), squeeze=False)
    for ax, (name, (days, qm)) in zip(axes[0], data.items()):
        for qi, q in enumerate(QUANTILES):
            ax.plot(days, qm[qi], label=f"q={q:g}")
        ax.set_title(name)
        ax.set_xlabel("day of year")
        ax.set_ylabel("log(count + 1)")
    axes[0][-1].legend(fontsize=7)
    _savefig(fig, os.path.join(out_dir, f"{prefix}.png"))
    return csv_path


def write_trajectory_report(fit: FitResult, out_dir, level=0.95, seed=0,
                            prefix="spearman_trajectory"):
    model = fit.model
    pairs = pair_order(model.n_species)
    rows = []
    curves = []
    for p, (r, c) in enumerate(pairs):
        days, point, lo, hi = trajectory(fit, p, level=level, seed=seed)
        label = f"{model.species_names[c]}-{model.species_names[r]}"
        curves.append((label, days, point, lo, hi))
        for d, v, a, b in zip(days, point, lo, hi):
            rows.append([label, int(d), repr(float(v)), repr(float(a)), repr(float(b))])
    csv_path = os.path.join(out_dir, f"{prefix}.csv")
    _write_csv(csv_path, ["pair", "day", "spearman", "ci_lo", "ci_hi"], rows)

    fig, axes = plt.subplots(1, len(pairs), figsize=(4 * len(pairs), 3), squeeze=False)
    for ax, (label, days, point, lo, hi) in zip(axes[0], curves):
        ax.fill_between(days, lo, hi, alpha=0.3)
        ax.plot(days, point)
        ax.set_title(label)
        ax.set_xlabel("day of year")
        ax.set_ylabel("rank correlation")
    _savefig(fig, os.path.join(out_dir, f"{prefix}.png"))
    return csv_path


def write_bootstrap_report(boot, species_names, out_dir, truth=None,
                           prefix="bootstrap_spearman"):
    pairs = pair_order(len(species_names))
    labels = [f"{species_names[c]}-{species_names[r]}" for r, c in pairs]
    rows = []
    for i, rep in enumerate(boot.replicate_index):
        for p, label in enumerate(labels):
            rows.append([label, int(rep), repr(float(boot.spearman[i, p]))])
    csv_path = os.path.join(out_dir, f"{prefix}.csv")
    _write_csv(csv_path, ["pair", "replicate", "spearman"], rows)

    fig, ax = plt.subplots(figsize=(1.6 * len(labels) + 2, 3))
    ax.boxplot([boot.spearman[:, p] for p in range(len(labels))], tick_labels=labels)
    if truth is not None:
        for p, t in enumerate(truth):
            ax.plot([p + 0.75, p + 1.25], [t, t], color="red")
    ax.set_ylabel("rank correlation")
    _savefig(fig, os.path.join(out_dir, f"{prefix}.png"))

    if boot.trajectories is not None:
        rows = []
        for i, rep in enumerate(boot.replicate_index):
            for p, label in enumerate(labels):
                for d, day in enumerate(boot.trajectory_days):
                    rows.append(
                        [label, int(rep), int(day), repr(float(boot.trajectories[i, p, d]))]
                    )
        _write_csv(
            os.path.join(out_dir, f"{prefix}_trajectories.csv"),
            ["pair", "replicate", "day", "spearman"],
            rows,
        )
        fig, axes = plt.subplots(1, len(labels), figsize=(4 * len(labels), 3), squeeze=False)
        for p, (ax, label) in enumerate(zip(axes[0], labels)):
            for i in range(boot.trajectories.shape[0]):
                ax.plot(boot.trajectory_days, boot.trajectories[i, p],
                        color="grey", alpha=0.25, linewidth=0.7)
            ax.set_title(label)
            ax.set_xlabel("day of year")
            ax.set_ylabel("rank correlation")
        _savefig(fig, os.path.join(out_dir, f"{prefix}_trajectories.png"))
    return csv_path


def write_compare_report(scatter, out_dir, prefix="approximation_scatter"):
    rows = [
        [k, int(s), repr(float(a)), repr(float(e))]
        for k, s, a, e in scatter.rows()
    ]
    csv_path = os.path.join(out_dir, f"{prefix}.csv")
    _write_csv(csv_path, ["kind", "sample", "approx_loglik", "exact_loglik"], rows)

    kinds = sorted(set(scatter.kind))
    fig, axes = plt.subplots(1, max(len(kinds), 1), figsize=(4.5 * max(len(kinds), 1), 4),
                             squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        a = np.array([x for k, x in zip(scatter.kind, scatter.approx_ll) if k == kind])
        e = np.array([x for k, x in zip(scatter.kind, scatter.exact_ll) if k == kind])
        ax.scatter(e, a, s=12)
        lims = [min(e.min(), a.min()), max(e.max(), a.max())]
        ax.plot(lims, lims, color="red", linewidth=1)
        ax.set_title(kind)
        ax.set_xlabel("exact log-likelihood")
        ax.set_ylabel("approximate log-likelihood")
    _savefig(fig, os.path.join(out_dir, f"{prefix}.png"))
    return csv_path


def write_permutation_report(report, out_dir, prefix="ordering_sensitivity"):
    rows = []
    for ordering, ll, fail in zip(report.orderings, report.logliks, report.failures):
        rows.append([
            "|".join(ordering),
            repr(float(ll)) if ll is not None else "",
            fail or "",
        ])
    csv_path = os.path.join(out_dir, f"{prefix}.csv")
    _write_csv(csv_path, ["ordering", "loglik", "failure"], rows)
    return csv_path
