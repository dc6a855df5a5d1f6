"""Figure builders for the seven experiment kinds.

Each kind maps to one axes layout: an x column, one errorbar curve per
(value, stderr) column pair, and a y scale.  Mean-SMSE sweeps span
decades, so they get a log y-axis; power, fraction, and balancing
figures stay linear.  Points are plotted exactly as read, in file
order, with no sorting or filtering.
"""

from dataclasses import dataclass

from matplotlib.figure import Figure

from .data import EmptyDataError, MissingColumnError

FIGURE_KINDS = (
    "sweep-power",
    "sweep-sigma",
    "sweep-delta",
    "power-vs-eta",
    "feasibility",
    "convergence",
    "balance",
)


@dataclass(frozen=True)
class AxesSpec:
    x: str
    series: tuple          # ((y_column, stderr_column), ...)
    log_y: bool
    xlabel: str
    ylabel: str
    group_by: str = None   # one curve per distinct value of this column


_AXES = {
    "sweep-power": AxesSpec(
        x="power_db",
        series=(("robust_smse", "robust_stderr"),
                ("nonrobust_smse", "nonrobust_stderr")),
        log_y=True, xlabel="transmit power limit (dB)", ylabel="mean SMSE"),
    "sweep-sigma": AxesSpec(
        x="error_var",
        series=(("robust_smse", "robust_stderr"),
                ("nonrobust_smse", "nonrobust_stderr")),
        log_y=True, xlabel="channel error variance", ylabel="mean SMSE"),
    "sweep-delta": AxesSpec(
        x="delta",
        series=(("robust_wc_smse", "robust_stderr"),
                ("nonrobust_wc_smse", "nonrobust_stderr")),
        log_y=True, xlabel="uncertainty radius", ylabel="worst-case SMSE"),
    "power-vs-eta": AxesSpec(
        x="eta",
        series=(("power", "power_stderr"),),
        log_y=False, xlabel="MSE target", ylabel="transmit power"),
    "feasibility": AxesSpec(
        x="delta",
        series=(("infeasible_fraction", "stderr"),),
        log_y=False, xlabel="uncertainty radius", ylabel="infeasible fraction"),
    "convergence": AxesSpec(
        x="iteration",
        series=(("mean_power", "power_stderr"),),
        log_y=False, xlabel="iteration", ylabel="mean transmit power",
        group_by="eta"),
    "balance": AxesSpec(
        x="power_db",
        series=(("minmax_mse", "stderr"),),
        log_y=False, xlabel="transmit power limit (dB)", ylabel="min-max MSE"),
}

_MARKERS = ("o", "s", "^", "v", "d", "x", "+", "*")


def required_columns(kind):
    """Columns a CSV must provide to render the given kind."""
    ax = _axes_spec(kind)
    cols = [ax.x]
    if ax.group_by:
        cols.append(ax.group_by)
    for ycol, ecol in ax.series:
        cols.extend((ycol, ecol))
    return tuple(cols)


def _axes_spec(kind):
    if kind not in _AXES:
        raise ValueError(f"unknown figure kind {kind!r}; expected one of "
                         + ", ".join(FIGURE_KINDS))
    return _AXES[kind]


def _fmt(value):
    return "%.12g" % value


def build_figure(data, kind):
    """Build the figure for one result file; pure, no file output."""
    spec = _axes_spec(kind)
    for col in required_columns(kind):
        if col not in data.columns:
            raise MissingColumnError(col, kind)
    if not data.rows:
        raise EmptyDataError(f"no data rows for kind '{kind}'")

    fig = Figure(figsize=(6.4, 4.4), dpi=100)
    ax = fig.add_subplot(111)
    marker = iter(_MARKERS)
    for group, rows in _grouped_rows(data.rows, spec.group_by):
        for ycol, ecol in spec.series:
            label = ycol if group is None else f"{ycol} ({spec.group_by}={_fmt(group)})"
            ax.errorbar([r[spec.x] for r in rows],
                        [r[ycol] for r in rows],
                        yerr=[r[ecol] for r in rows],
                        marker=next(marker), capsize=3, label=label)
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(spec.xlabel)
    ax.set_ylabel(spec.ylabel)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    return fig


def _grouped_rows(rows, group_by):
    """Split rows into curves: one group per distinct key, file order kept."""
    if group_by is None:
        return [(None, list(rows))]
    groups = {}
    for row in rows:
        groups.setdefault(row[group_by], []).append(row)
    return list(groups.items())


def plotted_series(fig):
    """Label -> (x, y, yerr) arrays actually drawn on the figure's axes.

    Reads back the errorbar artists, so tests can check the rendered
    coordinates against the source file rather than trusting the builder.
    """
    out = {}
    for container in fig.axes[0].containers:
        line = container[0]
        segments = container.lines[2][0].get_segments()
        yerr = [(seg[1][1] - seg[0][1]) / 2.0 for seg in segments]
        out[container.get_label()] = (list(line.get_xdata()),
                                      list(line.get_ydata()),
                                      yerr)
    return out
