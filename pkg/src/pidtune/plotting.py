"""Matplotlib setup for report figures (SVG, reproducible output)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

SERIES_COLORS = {"bo": "tab:blue", "de": "tab:red"}

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.8, 3.0),
    "svg.fonttype": "none",   # keep text as text, no glyph paths
    "svg.hashsalt": "pidtune",  # stable element ids across runs
}


def plot_kdes(curves, path, title="", xlabel="Settling time (ms)"):
    """Draw one KDE line per series with a dashed line at the sample mean.

    ``curves`` maps a series name (``"bo"``, ``"de"``) to a ``KdeCurve``.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, curve in curves.items():
            color = SERIES_COLORS.get(name, None)
            ax.plot(curve.grid, curve.density, color=color, label=name.upper())
            ax.axvline(curve.mean, color=color, linestyle="--", linewidth=1)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("Density")
        if title:
            ax.set_title(title)
        if curves:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
