"""
Rejection rates on synthetic scenarios
======================================

A reduced version of the rejection-rate table: fewer replications and
cells, same harness. Pass reps=200 and the full cell list for the real thing
(see ``relmon table1``).
"""

from relmon.simlab import run_table, table_csv

cells = [
    ("IID", 100, 0.3, "Interior"),
    ("IID", 100, 0.3, "Boundary"),
    ("IID", 100, 0.3, "AltI"),
    ("IID", 100, 0.3, "AltIII"),
    ("AR", 100, 0.45, "AltII"),
]
results = run_table(cells, reps=30, seed=2024, mc_reps=200)
print(table_csv(results))
