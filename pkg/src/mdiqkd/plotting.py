"""Report figures for a finished run directory."""
from __future__ import annotations

import csv
import json
from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .config import N_INTENSITIES, Basis  # noqa: E402
from .tally import rates, read_csv  # noqa: E402

REPORT_CSV = "report.csv"
REPORT_COLUMNS = ("k", "l", "mu", "nu", "Q_Z", "E_Z", "Q_X", "E_X", "R_kl")

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


@contextmanager
def figure(path: Path, **kwargs):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(**kwargs)
        try:
            yield fig, ax
            fig.tight_layout()
            fig.savefig(path)
        finally:
            plt.close(fig)


def _labels(mu, nu):
    return [f"{mu[k]:g},{nu[l]:g}" for k in range(N_INTENSITIES) for l in range(N_INTENSITIES)]


def plot_sifted_rates(table, mu, nu, path: Path) -> Path:
    """Gain and error rate per intensity pair in both bases."""
    r = rates(table)
    x = np.arange(N_INTENSITIES * N_INTENSITIES)
    with figure(path, nrows=2, ncols=1, figsize=(8, 6), sharex=True) as (fig, axes):
        for ax, basis in zip(axes, Basis):
            b = int(basis)
            q = r.Q[:, :, b].ravel()
            e = r.E[:, :, b].ravel()
            ax.bar(x, np.where(q > 0, q, np.nan), color="0.6", label="gain Q")
            ax.set_yscale("log")
            ax.set_ylabel("gain per pulse pair")
            ax.set_title(f"{basis.name} basis")
            twin = ax.twinx()
            twin.plot(x, 100 * e, "o-", color="tab:red", ms=3, label="error rate E")
            twin.set_ylabel("error rate (%)", color="tab:red")
        axes[-1].set_xticks(x)
        axes[-1].set_xticklabels(_labels(mu, nu), rotation=60)
        axes[-1].set_xlabel("(mu, nu)")
    return path


def plot_key_contributions(keyrate: dict, mu, nu, path: Path) -> Path:
    """Per-pair privacy term against error-correction cost, and R_kl."""
    q11 = np.asarray(keyrate["q11"]).ravel()
    i_ec = np.asarray(keyrate["i_ec"]).ravel()
    contrib = np.asarray(keyrate["contributions"]).ravel()
    e11 = min(keyrate["e11_used"], 0.5)
    h = 0.0 if e11 in (0.0, 1.0) else -e11 * np.log2(e11) - (1 - e11) * np.log2(1 - e11)
    x = np.arange(len(q11))
    with figure(path, nrows=2, ncols=1, figsize=(8, 6), sharex=True) as (fig, axes):
        width = 0.4
        axes[0].bar(x - width / 2, q11 * (1 - h), width, label="Q11 [1 - H(e11)]")
        axes[0].bar(x + width / 2, i_ec, width, label="I_ec")
        axes[0].set_ylabel("bits per pulse of setting")
        axes[0].legend(frameon=False)
        axes[1].bar(x, contrib, color="tab:green")
        axes[1].set_ylabel("R_kl (bits per pulse)")
        axes[1].set_title(f"total R = {keyrate['total_bits_per_pulse']:.3e} bits/pulse")
        axes[1].set_xticks(x)
        axes[1].set_xticklabels(_labels(mu, nu), rotation=60)
        axes[1].set_xlabel("(mu, nu)")
    return path


def render_report(run_dir: str | Path) -> list[Path]:
    """Write figures and ``report.csv`` into ``run_dir``; returns written paths."""
    run = Path(run_dir)
    manifest = json.loads((run / "manifest.json").read_text())
    cfg = manifest["config"]
    mu, nu = cfg["intensities_alice"], cfg["intensities_bob"]
    table = read_csv(run / "tallies.csv")
    keyrate = json.loads((run / "keyrate.json").read_text())
    r = rates(table)
    contrib = np.asarray(keyrate["contributions"])

    out_csv = run / REPORT_CSV
    with out_csv.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for k in range(N_INTENSITIES):
            for l in range(N_INTENSITIES):
                writer.writerow([k, l, mu[k], nu[l],
                                 repr(float(r.Q[k, l, 0])), repr(float(r.E[k, l, 0])),
                                 repr(float(r.Q[k, l, 1])), repr(float(r.E[k, l, 1])),
                                 repr(float(contrib[k, l]))])
    return [
        out_csv,
        plot_sifted_rates(table, mu, nu, run / "sifted_rates.png"),
        plot_key_contributions(keyrate, mu, nu, run / "key_contributions.png"),
    ]
