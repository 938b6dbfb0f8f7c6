"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 64] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from sgwave import kernels
from sgwave.fem import AssemblyPattern, assemble_stiffness
from sgwave.kle import kle_exponential, lognormal_pce
from sgwave.mesh import build_unit_square_mesh
from sgwave.pce import PceBasis, triple_products
from sgwave.sg import common_pattern


def cases(n, L, p_in, p_out):
    mesh = build_unit_square_mesh(n, n)
    coeff = np.linspace(0.5, 2.0, mesh.n_elements)
    yield "p1_element_stiffness", (mesh.node_coords, mesh.elements, coeff)

    kle = kle_exponential(0.1, 1.0, 1.0, L, mesh)
    pat = AssemblyPattern(mesh)
    terms = [assemble_stiffness(mesh, c, pattern=pat) for c in lognormal_pce(kle, PceBasis(L, p_in)).coeffs]
    indptr, indices, data = common_pattern(terms)
    G = triple_products(L, p_in, p_out)
    X = np.random.default_rng(0).standard_normal((G.n_out, mesh.n_nodes))
    yield "sg_block_matvec", (indptr, indices, data, G.i, G.j, G.k, G.v, X)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64, help="cells per side")
    ap.add_argument("--L", type=int, default=3)
    ap.add_argument("--p-in", type=int, default=2)
    ap.add_argument("--p-out", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled_impl is None:
        print("compiled extension not available; only the fallback is timed")
    rows = []
    for name, a in cases(args.n, args.L, args.p_in, args.p_out):
        row = {"kernel": name}
        impls = [("python", kernels.python_impl), ("compiled", kernels.compiled_impl)]
        outs = {}
        for label, mod in impls:
            if mod is None:
                continue
            fn = getattr(mod, name)
            outs[label] = fn(*a)
            row[f"{label}_ms"] = 1e3 * min(timeit.repeat(lambda: fn(*a), number=1, repeat=args.repeat))
        if len(outs) == 2:
            row["max_abs_diff"] = float(np.abs(outs["python"] - outs["compiled"]).max())
            row["speedup"] = row["python_ms"] / row["compiled_ms"]
        rows.append(row)
        print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return rows


if __name__ == "__main__":
    main()
