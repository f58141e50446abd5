//! Matplotlib scripts written next to the CSV outputs.

pub const SWEEP: &str = r#"#!/usr/bin/env python3
"""Heatmaps for every sweep grid CSV in this directory."""
import csv
import glob
import os

import matplotlib.pyplot as plt
import numpy as np

here = os.path.dirname(os.path.abspath(__file__))
for path in sorted(glob.glob(os.path.join(here, "*.csv"))):
    with open(path) as f:
        rows = list(csv.reader(f))
    phi2 = np.array([float(v) for v in rows[0][1:]])
    phi1 = np.array([float(r[0]) for r in rows[1:]])
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    fig, ax = plt.subplots(figsize=(5, 4.2))
    # phi1 upward, phi2 to the right
    im = ax.imshow(values, origin="lower", cmap="viridis",
                   extent=[phi2[0], phi2[-1], phi1[0], phi1[-1]], aspect="equal")
    ax.set_xlabel("phi2 (deg)")
    ax.set_ylabel("phi1 (deg)")
    ax.set_title(os.path.splitext(os.path.basename(path))[0])
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(os.path.splitext(path)[0] + ".png", dpi=150)
    plt.close(fig)
"#;

pub const TRACE: &str = r#"#!/usr/bin/env python3
"""Path, heading and actuator plots for trace.csv in this directory."""
import csv
import os

import matplotlib.pyplot as plt
import numpy as np

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "trace.csv")) as f:
    reader = csv.reader(f)
    header = next(reader)
    data = np.array([[float(v) for v in row] for row in reader])
col = {name: i for i, name in enumerate(header)}
t = data[:, col["time"]]

fig, axes = plt.subplots(1, 3, figsize=(14, 4))
axes[0].plot(data[:, col["px"]], data[:, col["py"]], label="executed")
if "xd_px" in col:
    axes[0].plot(data[:, col["xd_px"]], data[:, col["xd_py"]], "--", label="reference")
axes[0].set_aspect("equal")
axes[0].set_xlabel("x (m)")
axes[0].set_ylabel("y (m)")
axes[0].legend()
for name in ("theta", "phi1", "phi2"):
    axes[1].plot(t, np.degrees(data[:, col[name]]), label=name)
axes[1].set_xlabel("t (s)")
axes[1].set_ylabel("deg")
axes[1].legend()
for k in range(1, 7):
    axes[2].plot(t, data[:, col["u%d" % k]], label="u%d" % k)
if "beta" in col:
    axes[2].plot(t, data[:, col["beta"]], "k:", label="beta")
axes[2].set_xlabel("t (s)")
axes[2].legend(fontsize=7)
fig.tight_layout()
fig.savefig(os.path.join(here, "trace.png"), dpi=150)
"#;
