"""Matplotlib figures for inequality reports and convergence studies.

Figures are rendered with the non-interactive Agg backend and written
straight to disk; nothing here opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import IoFailure  # noqa: E402

__all__ = ["plot_inequality", "plot_convergence"]

_RC = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    # fixed metadata keeps repeated renders identical
    "svg.hashsalt": "biharm",
}


def _save(fig, path) -> Path:
    path = Path(path)
    try:
        fig.savefig(path, metadata={"Software": None} if path.suffix.lower() == ".png" else None)
    except OSError as exc:
        raise IoFailure(f"cannot write figure {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def plot_inequality(report, path) -> Path:
    """Two panels: ``lambda_k`` against ``mu_{k+s}``, and the margins.

    Parameters
    ----------
    report : InequalityReport
        Output of :func:`biharm.verify.check_inequality`.
    path : path-like
        Destination; the format follows the suffix (``.png``, ``.pdf``, ``.svg``).
    """
    k = np.array([r.k for r in report.rows], dtype=int)
    lam = np.array([r.lam for r in report.rows])
    mu = np.array([r.mu for r in report.rows])
    margin = np.array([r.margin for r in report.rows])
    ok = np.array([r.verdict for r in report.rows], dtype=bool)
    with plt.rc_context(_RC):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        ax0.plot(k, lam, "o-", label=r"$\lambda_k$ (clamped)")
        ax0.plot(k, mu, "s--", label=rf"$\mu_{{k+{report.shift}}}$ (free)")
        ax0.set_xlabel("k")
        ax0.set_ylabel("eigenvalue")
        ax0.legend(loc="upper left")
        ax1.bar(k[ok], margin[ok], color="tab:green", label="pass")
        if np.any(~ok):
            ax1.bar(k[~ok], margin[~ok], color="tab:red", label="fail")
        ax1.axhline(0.0, color="k", lw=0.8)
        ax1.set_xlabel("k")
        ax1.set_ylabel(r"margin $\lambda_k - \mu_{k+s}$")
        ax1.legend(loc="upper left")
        fig.suptitle(f"{report.theorem}, shift {report.shift}, refinement {report.refinement}")
        return _save(fig, path)


def plot_convergence(record, path) -> Path:
    """Eigenvalue against refinement, with the distance to the last Richardson limit."""
    r = np.asarray(record.ladder, dtype=float)
    v = np.asarray(record.values)
    with plt.rc_context(_RC):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        ax0.plot(r, v, "o-")
        ax0.axhline(record.limit, color="k", ls=":", label="Richardson limit")
        ax0.set_xscale("log", base=2)
        ax0.set_xlabel("refinement r")
        ax0.set_ylabel(f"{record.bc} eigenvalue {record.index}")
        ax0.legend()
        err = np.abs(v - record.limit)
        keep = err > 0
        ax1.loglog(r[keep], err[keep], "o-", base=2, label=f"observed order {record.order:.2f}")
        if np.any(keep):
            ref = err[keep][0] * (r[keep] / r[keep][0]) ** -4.0
            ax1.loglog(r[keep], ref, "k--", base=2, label=r"$h^4$")
        ax1.set_xlabel("refinement r")
        ax1.set_ylabel("|value - limit|")
        ax1.legend()
        return _save(fig, path)
