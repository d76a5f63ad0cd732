"""Plot the two-column data files written by a run directory (needs matplotlib)."""
import argparse
from pathlib import Path

import numpy as np


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("run_dir", type=Path)
    p.add_argument("--out", type=Path, default=None)
    args = p.parse_args()
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = args.out or args.run_dir
    for f in sorted(args.run_dir.glob("*.dat")):
        data = np.loadtxt(f, ndmin=2)
        fig, ax = plt.subplots()
        ax.plot(data[:, 0], data[:, 1], "o-")
        ax.set_title(f.stem)
        fig.savefig(out / f"{f.stem}.png", dpi=120)
        plt.close(fig)
        print(out / f"{f.stem}.png")


if __name__ == "__main__":
    main()
