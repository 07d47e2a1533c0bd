"""Figures written next to the CSV/JSON outputs of the CLI."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "savefig.dpi": 150,
}

# setup groups in the order the comparison panels are drawn
PANELS = [
    ("effect of lambda", (1, 2, 3)),
    ("effect of r", (1, 4, 5)),
    ("parallel OC patterns", (6, 7)),
    ("perpendicular OC patterns", (8, 9)),
]


def figsize(ncols=1, nrows=1, width=3.2):
    golden = (math.sqrt(5) - 1) / 2
    return (width * ncols, width * golden * nrows + 0.4)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def arl_curves(results, path, setups=None):
    """OC ARL against s^2; solid lines ISVD, dashed lines the dense benchmark."""
    labels = {s.id: f"setup {s.id} (lam={s.lam}, r={s.r})" for s in (setups or [])}
    present = {r.setup_id for r in results}
    panels = [(t, [i for i in ids if i in present]) for t, ids in PANELS]
    panels = [(t, ids) for t, ids in panels if ids]
    leftover = sorted(present - {i for _, ids in panels for i in ids})
    if leftover:
        panels.append(("other setups", leftover))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=figsize(len(panels)), squeeze=False)
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        for ax, (title, ids) in zip(axes[0], panels):
            for k, sid in enumerate(ids):
                for method, ls in (("isvd", "-"), ("baseline", "--")):
                    rows = sorted((r for r in results
                                   if r.setup_id == sid and r.method == method),
                                  key=lambda r: r.s_sq)
                    if not rows:
                        continue
                    ax.errorbar([r.s_sq for r in rows], [r.oc_arl for r in rows],
                                yerr=[2 * r.std_error for r in rows], ls=ls, marker="o",
                                color=colors[k % len(colors)], capsize=2,
                                label=f"{labels.get(sid, f'setup {sid}')} {method}")
            ax.set_yscale("log")
            ax.set_xlabel("shift size $s^2$")
            ax.set_ylabel("OC ARL")
            ax.set_title(title)
            ax.legend(frameon=False)
        return _save(fig, path)


def control_chart(statistics, H, path, t0=1, tau=None, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(width=5.0))
        t = range(t0, t0 + len(statistics))
        ax.plot(t, statistics, color="k", lw=0.9, label="$T_t$")
        ax.axhline(H, color="tab:red", ls="--", label=f"H = {H:.3g}")
        if tau is not None:
            ax.axvline(tau, color="tab:blue", ls=":", label=f"change at t = {tau}")
        alarms = [ti for ti, s in zip(t, statistics) if s > H]
        if alarms:
            ax.plot([alarms[0]], [statistics[alarms[0] - t0]], "v", color="tab:red",
                    label=f"first alarm t = {alarms[0]}")
        ax.set_xlabel("subgroup t")
        ax.set_ylabel("largest singular value of $D_t$")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        return _save(fig, path)


def timing(rows, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(width=4.0))
        for method, marker in (("isvd", "o"), ("baseline", "s")):
            sel = sorted((r for r in rows if r.method == method), key=lambda r: r.p * r.q)
            if sel:
                ax.loglog([r.p * r.q for r in sel], [r.median_seconds for r in sel],
                          marker=marker, label=method)
        ax.set_xlabel("p x q")
        ax.set_ylabel("median seconds per step")
        ax.legend(frameon=False)
        return _save(fig, path)


def run_length_histogram(run_lengths, tau, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(width=4.0))
        ax.hist(run_lengths, bins=40, color="0.6")
        ax.axvline(tau, color="tab:blue", ls=":", label=f"change at t = {tau}")
        ax.set_xlabel("alarm time")
        ax.set_ylabel("replications")
        ax.legend(frameon=False)
        return _save(fig, path)
