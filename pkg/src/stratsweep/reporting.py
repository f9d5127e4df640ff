"""CSV emitters and matplotlib figure rendering for experiment reports.

CSV files are written with shortest round-trip float formatting so reruns
with identical configs reproduce them byte for byte. Figures are rendered
headlessly to PNG next to the delimited output.
"""

import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def write_residuals(path, history):
    return write_csv(path, ["iter", "relres"],
                     [(k, float(r)) for k, r in enumerate(history)])


def write_modal_table(path, rows):
    return write_csv(path, ["ell", "lambda", "re_dtn", "im_dtn"], rows)


def write_modal_errors(path, rows):
    return write_csv(path, ["ell", "lambda", "relerr_free_or_current", "guided"], rows)


def write_sensitivity(path, rows):
    return write_csv(path, ["omega", "delta_T", "delta_R"], rows)


SUMMARY_HEADER = ["omega", "J", "dtn", "bc", "epsilon", "iterations",
                  "converged", "final_relres", "setup_seconds", "solve_seconds"]


def write_summary(path, rows):
    return write_csv(path, SUMMARY_HEADER, rows)


def plot_residuals(path, histories, labels=None, title="GMRES residual history"):
    fig, ax = plt.subplots(figsize=(6, 4))
    for k, h in enumerate(histories):
        lab = labels[k] if labels else None
        ax.semilogy(range(len(h)), h, label=lab)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative residual")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    if labels:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_modal_errors(path, lam, err_sets, labels, guided_cut=None,
                      title="Relative DtN error per transverse mode"):
    fig, ax = plt.subplots(figsize=(6.5, 4))
    order = np.argsort(lam)
    for err, lab in zip(err_sets, labels):
        e = np.asarray(err)[order]
        finite = np.isfinite(e)
        ax.semilogy(np.arange(1, lam.size + 1)[finite], e[finite], label=lab)
    if guided_cut is not None:
        n_guided = int(np.sum(np.asarray(lam)[order] <= guided_cut))
        ax.axvline(n_guided + 0.5, color="gray", ls="--", lw=1,
                   label="guided | evanescent")
    ax.set_xlabel("mode (ascending eigenvalue)")
    ax.set_ylabel("relative DtN error")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_sensitivity(path, omegas, delta_t, delta_r,
                     title="Analytic DtN sensitivity"):
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.semilogy(omegas, delta_r, label="reflecting", lw=0.9)
    ax.semilogy(omegas, delta_t, label="transparent", lw=1.2)
    ax.set_xlabel("omega")
    ax.set_ylabel("relative DtN error")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_iterations(path, xs, series, labels, xlabel,
                    title="GMRES iterations"):
    fig, ax = plt.subplots(figsize=(6, 4))
    for ys, lab in zip(series, labels):
        ax.plot(xs, ys, "o-", label=lab)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("iterations")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_wavefield(path, system, u, polar_axis="vertical",
                   title="Re(u)"):
    """Render the real part of a solution on the deformed (r, theta) grid."""
    r = system.space_r.node_coords
    t = system.space_t.node_coords
    from .assembly import function_grid
    U = np.real(function_grid(system, np.asarray(u)))
    R, T = np.meshgrid(r, t, indexing="ij")
    if polar_axis == "vertical":  # SH slice: theta measured from the pole
        X, Y = R * np.sin(T), R * np.cos(T)
    else:
        X, Y = R * np.cos(T), R * np.sin(T)
    lim = np.max(np.abs(U)) or 1.0
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    pc = ax.pcolormesh(X, Y, U, cmap="RdBu_r", vmin=-lim, vmax=lim,
                       shading="gouraud")
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.colorbar(pc, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
