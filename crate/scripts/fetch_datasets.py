#!/usr/bin/env python3
"""Write the public example datasets as plain CSV files for the CLI.

Sources (pip packages, imported directly or via PYTHONPATH):
  turtles  - pycircstat2, data/fisher/B3.csv (76 headings in degrees)
  faithful - rdatasets, datasets/faithful (eruptions, waiting)
  iris     - rdatasets, datasets/iris (four measurements)

Usage: fetch_datasets.py OUT_DIR [--check]
With --check the files in OUT_DIR are compared against SHA256SUMS.
"""

import csv
import hashlib
import io
import pathlib
import sys


def turtles():
    import pycircstat2

    path = pathlib.Path(pycircstat2.__file__).parent / "data" / "fisher" / "B3.csv"
    rows = list(csv.reader(io.open(path, encoding="utf-8")))
    angles = [r[1] for r in rows[1:]]
    return "# turtle headings, degrees\n" + "".join(f"{a}\n" for a in angles)


def rdata(name, columns):
    import rdatasets

    df = rdatasets.data("datasets", name)
    out = ["# " + ",".join(columns)]
    for _, row in df.iterrows():
        out.append(",".join(format(float(row[c]), "g") for c in columns))
    return "\n".join(out) + "\n"


def main():
    out = pathlib.Path(sys.argv[1])
    files = {
        "turtles.csv": turtles,
        "faithful.csv": lambda: rdata("faithful", ["eruptions", "waiting"]),
        "iris.csv": lambda: rdata("iris", ["Sepal.Length", "Sepal.Width", "Petal.Length", "Petal.Width"]),
    }
    if "--check" in sys.argv:
        sums = dict(line.split()[::-1] for line in (out / "SHA256SUMS").read_text().splitlines())
        bad = [f for f, h in sums.items() if hashlib.sha256((out / f).read_bytes()).hexdigest() != h]
        print("mismatch: " + " ".join(bad) if bad else "all checksums match")
        sys.exit(1 if bad else 0)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for name, make in files.items():
        text = make()
        (out / name).write_text(text)
        lines.append(f"{hashlib.sha256(text.encode()).hexdigest()}  {name}")
    (out / "SHA256SUMS").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
