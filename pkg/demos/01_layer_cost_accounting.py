"""Layer cost accounting: parameters, MACs, sizes and BOPS.

Builds both reference models and walks through the analytic cost model:
per-layer tables, the separable/traditional MAC ratio, and how weight
payload and bit operations respond to a per-layer bit assignment.

Run: python demos/01_layer_cost_accounting.py
"""
from fractions import Fraction

from tinymm import (
    bops,
    build_reference,
    cost_report,
    ds_conv_cost,
    model_size_bits,
    traditional_conv_cost,
)
from tinymm.costs import format_table

# ---------------------------------------------------------------------------
# Cost tables for the two built-in architectures
# ---------------------------------------------------------------------------
for name in ("covid", "battlefield"):
    graph = build_reference(name)
    report = cost_report(graph)
    print(f"=== {name} ===")
    print(format_table(report))
    print()

# ---------------------------------------------------------------------------
# Why depthwise-separable layers are cheap: the MAC ratio is 1/N + 1/Dk^2
# ---------------------------------------------------------------------------
m, d_k, n, d_p = 32, 3, 64, 16
trad = traditional_conv_cost(m, d_k, n, d_p, d_p)
sep = ds_conv_cost(m, d_k, n, d_p, d_p)
ratio = Fraction(sep.macs, trad.macs)
print(f"traditional conv ({m} -> {n} channels, {d_k}x{d_k}): {trad.macs:,} MACs")
print(f"separable conv, same shape:                 {sep.macs:,} MACs")
print(f"ratio {ratio} == 1/{n} + 1/{d_k * d_k} =",
      Fraction(1, n) + Fraction(1, d_k * d_k))
print()

# ---------------------------------------------------------------------------
# What a bit assignment does to size and compute
# ---------------------------------------------------------------------------
report = cost_report(build_reference("covid"))
names = [l.name for l in report.layers]
for label, bits in (("float32", 32), ("all 8-bit", 8), ("all 4-bit", 4)):
    assn = {n_: bits for n_ in names}
    size_kb = model_size_bits(report, assn) / 8 / 1024
    print(f"{label:>9}: weight payload {size_kb:8.1f} KiB, "
          f"BOPS {bops(report, assn):,}")
mixed = {n_: (4 if "fc" in n_ else 8) for n_ in names}
print(f"    mixed: weight payload {model_size_bits(report, mixed) / 8 / 1024:8.1f} KiB "
      f"(dense layers at 4 bits), BOPS {bops(report, mixed):,}")
