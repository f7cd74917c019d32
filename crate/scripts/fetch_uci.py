#!/usr/bin/env python3
"""Download Concrete-Slump and Yacht from the UCI archive into data/ as headered CSV.

Needs outbound HTTPS to archive.ics.uci.edu. Run from the repository root.
"""
import csv
import urllib.request

BASE = "https://archive.ics.uci.edu/ml/machine-learning-databases"

SLUMP_URL = f"{BASE}/concrete/slump/slump_test.data"
SLUMP_HEADER = ["no", "cement", "slag", "fly_ash", "water", "sp", "coarse_aggr",
                "fine_aggr", "slump", "flow", "compressive_strength"]

YACHT_URL = f"{BASE}/00243/yacht_hydrodynamics.data"
YACHT_HEADER = ["longitudinal_position", "prismatic_coefficient",
                "length_displacement_ratio", "beam_draught_ratio",
                "length_beam_ratio", "froude_number", "residuary_resistance"]


def fetch(url):
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read().decode("ascii", errors="replace")


def write(path, header, rows):
    with open(path, "w", newline="") as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path}: {len(rows)} rows")


def main():
    slump = [line.split(",") for line in fetch(SLUMP_URL).splitlines()[1:] if line.strip()]
    write("data/slump.csv", SLUMP_HEADER, [[c.strip() for c in r] for r in slump])

    yacht = [line.split() for line in fetch(YACHT_URL).splitlines() if line.strip()]
    write("data/yacht.csv", YACHT_HEADER, yacht)


if __name__ == "__main__":
    main()
