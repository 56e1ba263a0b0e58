"""Compiled kernels vs the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints the median wall time per call for eigh, contract and a full
``run_block`` pass, and the speedup of the compiled extension.
"""

import argparse
import statistics
import time

import numpy as np

from qmmw import _pykernels
from qmmw import game as qg
from qmmw import learning as lrn
from qmmw._backend import compiled_available, get_kernels
from qmmw.fixtures import get_fixture
from qmmw.hermitian import digits_table, pack_profile, random_density, random_hermitian
from qmmw.seeding import run_rng


def timeit(fn, repeat, inner):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        times.append((time.perf_counter() - t0) / inner)
    return statistics.median(times)


def cases(ker):
    rng = np.random.default_rng(0)
    h4 = random_hermitian(rng, 4)
    dims = [2, 2]
    w = random_hermitian(rng, 4)
    xs = pack_profile([random_density(rng, 2) for _ in dims], dims)
    digits = digits_table(dims)
    game = get_fixture("skewed-pennies")
    consts = qg.constants(game)

    def run(algo, T):
        sched = lrn.theorem_tuning(algo, T, consts, game.dims)
        return lambda: lrn.run(game, algo, sched, T, run_rng(0, 0), stride=T, backend=ker)

    return [
        ("eigh 4x4", lambda: ker.eigh(h4), 200),
        ("contract 2x2 players", lambda: ker.contract(w, xs, dims, digits, 0), 200),
        ("run mmw T=2000", run("mmw", 2_000), 1),
        ("run 3mw-2pe T=2000", run("3mw-2pe", 2_000), 1),
        ("run 3mw-1pe T=2000", run("3mw-1pe", 2_000), 1),
    ]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if not compiled_available():
        print("compiled extension not built; timing the fallback only")
    py = {name: timeit(fn, args.repeat, inner) for name, fn, inner in cases(_pykernels)}
    comp = {}
    if compiled_available():
        comp = {name: timeit(fn, args.repeat, inner)
                for name, fn, inner in cases(get_kernels("compiled"))}
    print(f"{'case':<24}{'python':>14}{'compiled':>14}{'speedup':>10}")
    for name, t in py.items():
        if name in comp:
            print(f"{name:<24}{t * 1e6:>12.1f}us{comp[name] * 1e6:>12.1f}us{t / comp[name]:>9.1f}x")
        else:
            print(f"{name:<24}{t * 1e6:>12.1f}us{'-':>14}{'-':>10}")


if __name__ == "__main__":
    main()
