#!/usr/bin/env python3
"""Plot mean latency against arrival rate from a `pisim sweep` CSV.

    python3 scripts/plot_sweep.py results/fig4_c100_sweep.csv -o fig4.png

Needs matplotlib. One line per (protocol, capacity); saturated cells are drawn hollow.
"""
import argparse
import csv
from collections import defaultdict


def load(path, statistic):
    series = defaultdict(list)
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            if row["statistic"] != statistic or not row["value"]:
                continue
            key = (row["protocol"], int(row["client_capacity_bytes"]))
            series[key].append((float(row["rate"]), float(row["value"]), row["saturated"] == "true"))
    return series


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("csv")
    ap.add_argument("-o", "--output", default="sweep.png")
    ap.add_argument("--statistic", default="mean_latency")
    args = ap.parse_args()

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for (protocol, cap), pts in sorted(load(args.csv, args.statistic).items()):
        pts.sort()
        rates = [p[0] for p in pts]
        values = [p[1] for p in pts]
        (line,) = ax.plot(rates, values, label=f"{protocol.upper()} {cap / 1e9:g} GB")
        sat = [p for p in pts if p[2]]
        if sat:
            ax.scatter([p[0] for p in sat], [p[1] for p in sat], facecolors="none", edgecolors=line.get_color())
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("arrival rate (req/s)")
    ax.set_ylabel(f"{args.statistic} (s)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)


if __name__ == "__main__":
    main()
