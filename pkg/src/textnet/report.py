"""Report emission: machine-readable delimited files plus rendered figures.

Every evaluation and training artifact is written twice: a TSV with one
line per repetition (or epoch) and a summary block, and a PNG figure of
the same numbers.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def write_link_report(prefix: str, report, figure: bool = True) -> None:
    """`<prefix>.tsv` with one row per repetition and a summary block,
    `<prefix>.png` with the per-repetition AUCs and their mean."""
    with open(prefix + ".tsv", "w") as f:
        f.write("repetition\tauc\n")
        for rep, auc in enumerate(report.aucs):
            f.write(f"{rep}\t{auc:.6f}\n")
        f.write(f"# mode={report.mode} ratio={report.ratio} seed={report.seed}\n")
        f.write(f"# mean={report.mean:.6f} std={report.std:.6f} "
                f"repetitions={report.repetitions}\n")
    if figure:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        reps = range(len(report.aucs))
        ax.plot(reps, report.aucs, "o-", label="AUC per repetition")
        ax.axhline(report.mean, color="tab:red", ls="--",
                   label=f"mean = {report.mean:.4f}")
        ax.set_xlabel("repetition")
        ax.set_ylabel("AUC")
        ax.set_title(f"link prediction ({report.mode}, {report.ratio:g}% train)")
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        fig.savefig(prefix + ".png", dpi=120)
        plt.close(fig)


def write_classify_report(prefix: str, report, figure: bool = True) -> None:
    with open(prefix + ".tsv", "w") as f:
        f.write("repetition\tmacro_f1\n")
        for rep, score in enumerate(report.f1_scores):
            f.write(f"{rep}\t{score:.6f}\n")
        f.write(f"# labeled_ratio={report.labeled_ratio} seed={report.seed}\n")
        f.write(f"# mean={report.mean:.6f} std={report.std:.6f} "
                f"repetitions={report.repetitions}\n")
    if figure:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.bar(range(len(report.f1_scores)), report.f1_scores,
               color="tab:blue", label="macro-F1 per repetition")
        ax.axhline(report.mean, color="tab:red", ls="--",
                   label=f"mean = {report.mean:.4f}")
        ax.set_xlabel("repetition")
        ax.set_ylabel("macro-F1")
        ax.set_title(f"node classification ({report.labeled_ratio:g}% labeled)")
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        fig.savefig(prefix + ".png", dpi=120)
        plt.close(fig)


def write_loss_curves(prefix: str, history: list, figure: bool = True) -> None:
    if not history:
        return
    keys = sorted({k for entry in history for k in entry} - {"epoch"})
    with open(prefix + ".tsv", "w") as f:
        f.write("epoch\t" + "\t".join(keys) + "\n")
        for entry in history:
            cells = [f"{entry.get(k, float('nan')):.6f}" for k in keys]
            f.write(f"{entry['epoch']}\t" + "\t".join(cells) + "\n")
    if figure:
        fig, axes = plt.subplots(1, len(keys), figsize=(4 * len(keys), 3.0),
                                 squeeze=False)
        epochs = [entry["epoch"] for entry in history]
        for ax, key in zip(axes[0], keys):
            ax.plot(epochs, [entry.get(key, float("nan")) for entry in history])
            ax.set_xlabel("epoch")
            ax.set_title(key)
        fig.tight_layout()
        fig.savefig(prefix + ".png", dpi=120)
        plt.close(fig)


def format_table(title: str, col_names: list, rows: list) -> str:
    """Plain text table in the mode x ratio layout of the result tables."""
    header = [title] + [str(c) for c in col_names]
    body = [[str(r[0])] + [f"{v:.1f}" if isinstance(v, float) else str(v)
                           for v in r[1:]] for r in rows]
    widths = [max(len(line[k]) for line in [header] + body)
              for k in range(len(header))]
    def fmt(line):
        return "  ".join(c.ljust(w) for c, w in zip(line, widths))
    rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([fmt(header), rule] + [fmt(line) for line in body])


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
