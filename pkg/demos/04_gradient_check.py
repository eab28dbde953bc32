"""Finite-difference validation of the analytic gradients.

Builds a tiny model on random data and compares every parameter tensor's
reverse-mode gradient against central differences in float64.
"""

from gimirec.train import gradient_check

result = gradient_check(seed=0, n_items=8, d=4, k=2, l_rec=4, l_time=5,
                        n_heads=2, n_layers=2)
width = max(len(n) for n in result.per_tensor)
for name, err in sorted(result.per_tensor.items(), key=lambda kv: -kv[1]):
    print(f"{name:<{width}}  max rel err {err:.3e}")
print(f"\noverall max {result.max_rel_err:.3e} "
      f"{'<=' if result.passed else '>'} {result.tolerance:g} "
      f"-> {'PASS' if result.passed else 'FAIL'}")
