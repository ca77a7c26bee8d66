"""Plot V(b0) and controller sizes from a ``decpi solve`` log.csv.

Usage: python scripts/plot_log.py OUT/log.csv [figure.png]

Needs matplotlib, which is not a package dependency.
"""

import csv
import sys


def read_log(path):
    with open(path) as fh:
        rows = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(rows))


def main(argv):
    if not argv:
        print(__doc__)
        return 2
    import matplotlib.pyplot as plt

    rows = read_log(argv[0])
    t = [int(r["t"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(t, [float(r["value_b0"]) for r in rows], marker="o")
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("V(b0)")
    for key in (k for k in rows[0] if k.startswith("size_")):
        ax2.plot(t, [int(r[key]) for r in rows], marker="o", label=key)
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("nodes")
    ax2.legend()
    fig.tight_layout()
    if len(argv) > 1:
        fig.savefig(argv[1])
    else:
        plt.show()
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
