"""
Lookup time against reduction size and read width
=================================================

Small reads scale with the number of lookups; wide reads flatten once the
tasklets keep enough reads in flight. Uses the ``sweep`` command's
defaults (a 2.36M x 32 table on 256 DPUs, batch 64).
"""

# %%
import csv
import tempfile
from pathlib import Path

from pimemb.cli import main

out = Path(tempfile.mkdtemp())
main(["sweep", "--out", str(out), "--quiet"])

with open(out / "sweep.csv") as fh:
    rows = list(csv.DictReader(fh))

# %%
sizes = sorted({int(r["read_bytes"]) for r in rows})
reds = sorted({float(r["avg_red"]) for r in rows})
table = {(float(r["avg_red"]), int(r["read_bytes"])): float(r["stage2_ns"]) for r in rows}
print("avg_red " + "".join(f"{s:>9d}B" for s in sizes))
for a in reds:
    print(f"{a:7.0f} " + "".join(f"{table[a, s] / 1e3:9.2f}u" for s in sizes))

# %%
print("8 B growth 50->300:", round(table[300, 8] / table[50, 8], 2))
print("64 B growth 200->300:", round(table[300, 64] / table[200, 64], 3))
