#!/usr/bin/env python3
"""Extract the 392-row auto-mpg table bundled with the mlxtend wheel into data/autompg.csv.

Usage: pip download --no-deps mlxtend -d /tmp/w && python3 scripts/import_autompg.py /tmp/w/mlxtend-*.whl
"""
import csv
import gzip
import sys
import zipfile

HEADER = ["cylinders", "displacement", "horsepower", "weight", "acceleration",
          "model_year", "origin", "mpg"]

wheel = zipfile.ZipFile(sys.argv[1])
text = gzip.decompress(wheel.read("mlxtend/data/data/autompg.csv.gz")).decode()
rows = list(csv.reader(text.splitlines()))
with open("data/autompg.csv", "w", newline="") as out:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        # car name (column 7) is an identifier, not a feature
        w.writerow(r[:7] + [r[8]])
