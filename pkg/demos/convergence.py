"""
Mesh refinement and the interface conditions
============================================

The discrete interface conditions hold only weakly. Here we watch the
tangential residuals shrink as the mesh is refined, using the same config the
command line tool reads.
"""
from pathlib import Path

from freeporous.config import load_config
from freeporous.suites import run_convergence

rc = load_config(Path(__file__).with_name("channel.ini"))
res = run_convergence(rc)

columns, rows = res.tables["convergence"]
print(" ".join(f"{c:>13}" for c in columns))
for row in rows:
    print(" ".join(f"{float(v):13.4e}" if i else f"{v:>13}" for i, v in enumerate(row)))

# %%
# Observed orders between successive levels.
o3, o4 = res.extras["orders"]
print("\nr3 orders:", " ".join(f"{o:.2f}" for o in o3))
print("r4 orders:", " ".join(f"{o:.2f}" for o in o4))
for c in res.checks:
    print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (tol {c.tolerance:g})")
print(f"elapsed {res.elapsed:.1f} s")
