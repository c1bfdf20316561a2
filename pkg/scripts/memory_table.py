"""Sparse against dense connectivity memory for a square network at several out-degrees.

Usage: python scripts/memory_table.py [--n 1000]
"""

import argparse

from snnscale.connectivity import mem_dense, mem_sparse

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=1000)
    a = p.parse_args()
    n = a.n
    print(" nConn      sparse       dense  winner")
    for frac in (0.01, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0):
        k = max(1, round(frac * n))
        s, d = mem_sparse(n * k, n), mem_dense(n, n)
        print(f"{k:6d} {s:11d} {d:11d}  {'sparse' if s < d else 'dense'}")
