"""Figure rendering for simulation runs.

Produces the three stacked panels a closed-loop run is judged by:
states against their references, the applied input, and the geodesic
length to the active reference at each step.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_trajectory(log, dest):
    """Render a TrajectoryLog to a static image file (format by suffix)."""
    k = range(log.num_steps)
    n = log.x.shape[1]
    m = log.u.shape[1]
    fig, axes = plt.subplots(3, 1, figsize=(7.0, 7.5), sharex=True)

    ax = axes[0]
    for i in range(n):
        line, = ax.plot(k, log.x[:, i], label=f"x{i + 1}")
        ax.plot(k, log.x_star[:, i], linestyle="--", linewidth=1.0,
                color=line.get_color(), label=f"x{i + 1}*")
    ax.set_ylabel("state")
    ax.legend(loc="best", ncol=2, fontsize="small")

    ax = axes[1]
    for j in range(m):
        line, = ax.plot(k, log.u[:, j], label=f"u{j + 1}")
        ax.plot(k, log.u_star[:, j], linestyle="--", linewidth=1.0,
                color=line.get_color(), label=f"u{j + 1}*")
    ax.set_ylabel("input")
    ax.legend(loc="best", fontsize="small")

    ax = axes[2]
    ax.plot(k, log.length, color="tab:red")
    ax.set_ylabel("geodesic length")
    ax.set_xlabel("step")

    for ax in axes:
        ax.grid(True, alpha=0.3)
    fig.align_ylabels(axes)
    fig.tight_layout()
    # Dropping the date stamp keeps repeat renders of the same run identical.
    meta = {"Date": None} if str(dest).endswith(".svg") else None
    fig.savefig(dest, metadata=meta)
    plt.close(fig)
